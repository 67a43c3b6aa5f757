//! The fundamental solution `Gamma_0` of the frozen operator and the barrier
//! kernels `Gamma_{s,beta}`, their derivatives, the action of `L_A` on them
//! and both sides of the pointwise kernel bounds.
//!
//! Every evaluation goes through the logarithm of the kernel so that bounds
//! like `(b_B r^2)^{-sQ/2} exp(-c_1 K^2 / b_B)` can be compared without
//! overflow or underflow.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{eig_extremes, CovariancePoly};
use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::geometry::{Cylinder, NamedCylinders};
use crate::group::{BlockStructure, Point};
use crate::par::{self, Exec};

/// Parameters `(s, beta, A_0)` of `Gamma_{s,beta}`.
#[derive(Debug, Clone)]
pub struct KernelParams {
    s: f64,
    beta: f64,
    cp: CovariancePoly,
}

impl KernelParams {
    pub fn new(s: f64, beta: f64, cp: CovariancePoly) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel needs s > 0 and beta > 0, got s = {s}, beta = {beta}"
            )));
        }
        Ok(Self { s, beta, cp })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cp(&self) -> &CovariancePoly {
        &self.cp
    }

    pub fn structure(&self) -> &BlockStructure {
        self.cp.structure()
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        self.cp.a0()
    }

    /// `1 + 2/Q`, the exponent bound needed for potentials.
    pub fn exponent_threshold(&self) -> f64 {
        1.0 + 2.0 / self.structure().qf()
    }

    pub fn check_potential_exponent(&self) -> Result<()> {
        let threshold = self.exponent_threshold();
        if self.s >= threshold {
            return Err(Error::ExponentTooLarge { s: self.s, threshold });
        }
        Ok(())
    }

    /// `<C_0^{-1}(1) D_{1/sqrt t} x, D_{1/sqrt t} x>` for `t > 0`.
    pub fn quad_form(&self, x: &[f64], t: f64) -> f64 {
        let st = self.structure();
        let n = x.len();
        let isq = 1.0 / t.sqrt();
        let mut y = [0.0f64; 16];
        let mut yv;
        let y: &mut [f64] = if n <= 16 {
            &mut y[..n]
        } else {
            yv = vec![0.0; n];
            &mut yv
        };
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = x[k] * isq.powi(st.coordinate_degree(k));
        }
        let m = self.cp.inv_c1();
        let mut q = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += m[(i, j)] * y[j];
            }
            q += row * y[i];
        }
        q
    }

    /// `ln Gamma_{s,beta}(x, t)` on slices; `-inf` for `t <= 0`.
    pub fn ln_gamma_xt(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -0.5 * self.s * self.structure().qf() * t.ln() - self.quad_form(x, t) / (4.0 * self.beta)
    }

    pub fn ln_gamma(&self, z: &Point) -> f64 {
        self.ln_gamma_xt(z.x.as_slice(), z.t)
    }

    pub fn gamma(&self, z: &Point) -> f64 {
        self.ln_gamma(z).exp()
    }

    /// `ln Gamma_{s,beta}(zeta^{-1} o z)`, evaluated through
    /// `(x - E(t - tau) xi, t - tau)`.
    pub fn ln_gamma_translated(&self, zeta: &Point, z: &Point) -> f64 {
        if z.t <= zeta.t {
            return f64::NEG_INFINITY;
        }
        let w = self.structure().relative(zeta, z);
        self.ln_gamma(&w)
    }

    pub fn gamma_translated(&self, zeta: &Point, z: &Point) -> f64 {
        self.ln_gamma_translated(zeta, z).exp()
    }

    /// Closed-form value, gradient, Hessian and time derivative at `t > 0`.
    pub fn derivatives(&self, z: &Point) -> Result<KernelDerivatives> {
        if !(z.t > 0.0) {
            return Err(Error::OutsideSupport(z.t));
        }
        let t = z.t;
        let value = self.gamma(z);
        let cinv = self.cp.inv_scaled(t)?;
        let w = &cinv * &z.x;
        let k = 1.0 / (2.0 * self.beta);
        let grad = &w * (-k * value);
        let hess = (-&cinv + &w * w.transpose() * k) * (k * value);
        let st = self.structure();
        let d = st.dilation_matrix(t.sqrt());
        let c_t = &d * self.cp.eval(1.0) * &d;
        let b = st.b_matrix();
        let c_prime = self.a0() - b.transpose() * &c_t - &c_t * b;
        let tr = (self.a0() * &cinv).trace();
        let dt = k * value * (-self.s * self.beta * tr + 0.5 * w.dot(&(&c_prime * &w)));
        Ok(KernelDerivatives { value, grad, hess, dt })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDerivatives {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub dt: f64,
}

/// `ln c_0` with `c_0 = (4 pi)^{-N/2} det C_0(1)^{-1/2}`.
pub fn ln_c0(cp: &CovariancePoly) -> f64 {
    let n = cp.structure().dim() as f64;
    -0.5 * n * (4.0 * std::f64::consts::PI).ln() - 0.5 * cp.det_c1().ln()
}

/// Fundamental solution of the frozen operator with pole at the origin.
pub fn gamma0(cp: &CovariancePoly, z: &Point) -> f64 {
    if z.t <= 0.0 {
        return 0.0;
    }
    let kp = KernelParams {
        s: 1.0,
        beta: 1.0,
        cp: cp.clone(),
    };
    (ln_c0(cp) + kp.ln_gamma(z)).exp()
}

/// `Gamma_0` through `det C_0(t)` and `C_0^{-1}(t)` directly, without the
/// scaling identity. Used as a second evaluation path.
pub fn gamma0_direct(cp: &CovariancePoly, z: &Point) -> Result<f64> {
    if z.t <= 0.0 {
        return Ok(0.0);
    }
    let (inv, det) = cp.invert(z.t)?;
    let n = cp.structure().dim() as f64;
    let q = z.x.dot(&(&inv * &z.x));
    Ok((4.0 * std::f64::consts::PI).powf(-0.5 * n) * det.powf(-0.5) * (-0.25 * q).exp())
}

/// `L_A Gamma_{s,beta}(zeta^{-1} o z)` by the closed form and by direct
/// assembly from the derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaEvaluation {
    pub closed: f64,
    pub direct: f64,
    /// `Gamma_{s,beta}(zeta^{-1} o z)`, the local scale.
    pub gamma: f64,
    /// Largest magnitude among the assembled terms.
    pub term_scale: f64,
    /// The bracket `tr(M_2 C^{-1}) + <M_1 w, w>/2`, i.e. `closed / (gamma / 2 beta)`.
    pub bracket: f64,
}

/// Evaluates `L_A Gamma` at `z` for the pole `zeta`, with `a` the full
/// `N x N` matrix `A(z)`.
pub fn apply_la_with_matrix(a: &DMatrix<f64>, kp: &KernelParams, zeta: &Point, z: &Point) -> Result<LaEvaluation> {
    if !(z.t > zeta.t) {
        return Err(Error::OutsideSupport(z.t - zeta.t));
    }
    let st = kp.structure();
    let w = st.relative(zeta, z);
    apply_la_local(a, kp, &w)
}

/// Same as [`apply_la_with_matrix`] with the translated point `w = zeta^{-1} o z` given.
pub fn apply_la_local(a: &DMatrix<f64>, kp: &KernelParams, w: &Point) -> Result<LaEvaluation> {
    let der = kp.derivatives(w)?;
    let st = kp.structure();
    let cinv = kp.cp.inv_scaled(w.t)?;
    let v = &cinv * &w.x;
    let beta = kp.beta;
    let m2 = kp.a0() * (kp.s * beta) - a;
    let m1 = a / beta - kp.a0();
    let bracket = (&m2 * &cinv).trace() + 0.5 * v.dot(&(&m1 * &v));
    let closed = der.value / (2.0 * beta) * bracket;
    let t_a = (a * &der.hess).trace();
    let t_b = w.x.dot(&(st.b_matrix() * &der.grad));
    let direct = t_a + t_b - der.dt;
    Ok(LaEvaluation {
        closed,
        direct,
        gamma: der.value,
        term_scale: t_a.abs().max(t_b.abs()).max(der.dt.abs()),
        bracket,
    })
}

/// `L_A Gamma_{s,beta}(zeta^{-1} o z)` with `A(z)` taken from the field.
pub fn apply_la_to_kernel(field: &CoefficientField, kp: &KernelParams, zeta: &Point, z: &Point) -> Result<f64> {
    Ok(apply_la_with_matrix(&field.eval_full(z), kp, zeta, z)?.closed)
}

/// Random relative point `w = (y, u)` with `u` log-uniform in `[1e-3, 1]`
/// and `y` spread over a few kernel widths.
fn sample_relative<R: Rng + ?Sized>(st: &BlockStructure, rng: &mut R) -> Point {
    let u = 10f64.powf(-3.0 * rng.random::<f64>());
    let spread = 3.0 * rng.random::<f64>();
    let x = DVector::from_fn(st.dim(), |k, _| {
        let g: f64 = rng.sample(rand_distr::StandardNormal);
        spread * g * u.sqrt().powi(st.coordinate_degree(k))
    });
    Point { x, t: u }
}

/// Summary of a sign campaign for `L_A Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub samples: usize,
    /// Samples with `L_A Gamma < -tol * Gamma`.
    pub violations: usize,
    /// Minimum of `L_A Gamma / Gamma` over the samples.
    pub min_relative: f64,
    /// Largest `|closed - direct| / term_scale`.
    pub max_cross_check: f64,
}

/// Relative sign tolerance for `L_A Gamma >= -tol * Gamma`.
pub const SIGN_TOL: f64 = 1e-12;

/// Samples `z` in `region` and relative points `zeta^{-1} o z`, and records the
/// sign of `L_A Gamma_{s,beta}(zeta^{-1} o z)`.
pub fn sign_campaign(
    field: &CoefficientField,
    kp: &KernelParams,
    region: &Cylinder,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<SignReport> {
    let st = kp.structure().clone();
    let counts = par::split_counts(samples, par::SAMPLING_CHUNKS);
    let parts = par::map_indexed(exec, counts.len(), |c| -> Result<(usize, f64, f64)> {
        let mut rng = par::stream_rng(seed, c as u64);
        let mut viol = 0;
        let mut min_rel = f64::INFINITY;
        let mut cross: f64 = 0.0;
        for _ in 0..counts[c] {
            let z = region.sample_interior(&st, &mut rng);
            let w = sample_relative(&st, &mut rng);
            let ev = apply_la_local(&field.eval_full(&z), kp, &w)?;
            if ev.gamma == 0.0 {
                continue;
            }
            let rel = ev.closed / ev.gamma;
            if rel < -SIGN_TOL {
                viol += 1;
            }
            min_rel = min_rel.min(rel);
            if ev.term_scale > 0.0 {
                cross = cross.max((ev.closed - ev.direct).abs() / ev.term_scale);
            }
        }
        Ok((viol, min_rel, cross))
    });
    let mut rep = SignReport {
        samples,
        violations: 0,
        min_relative: f64::INFINITY,
        max_cross_check: 0.0,
    };
    for p in parts {
        let (v, m, c) = p?;
        rep.violations += v;
        rep.min_relative = rep.min_relative.min(m);
        rep.max_cross_check = rep.max_cross_check.max(c);
    }
    Ok(rep)
}

/// Report of the subsolution check for the continuity hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub s0: f64,
    pub eps0: f64,
    pub omega_eps0: f64,
    pub bound: f64,
    pub signs: SignReport,
    pub min_eig_m1: f64,
    pub min_eig_m2: f64,
}

/// Kernel of the continuity hypothesis frozen at `z0`:
/// `s = 1 + s0`, `beta = 2 / (2 + s0)`, `A_0 = A(z0)`.
pub fn h2_kernel(field: &CoefficientField, s0: f64, z0: &Point, st: &BlockStructure) -> Result<KernelParams> {
    let cp = CovariancePoly::new(st, &field.eval_full(z0))?;
    KernelParams::new(1.0 + s0, 2.0 / (2.0 + s0), cp)
}

/// Checks the subsolution property of the frozen kernel on
/// `Q_{eps0}^{-eps0^2, eps0^2}(z0)`.
#[allow(clippy::too_many_arguments)]
pub fn check_subsolution_h2(
    field: &CoefficientField,
    st: &BlockStructure,
    s0: f64,
    z0: &Point,
    eps0: f64,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<H2Report> {
    let q = st.qf();
    if !(s0 > 0.0 && s0 < 2.0 / q) {
        return Err(Error::InvalidParameter(format!("s0 = {s0} must lie in (0, 2/Q)")));
    }
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps0 = {eps0} must lie in (0, 1]")));
    }
    let modulus = field
        .modulus()
        .ok_or_else(|| Error::InvalidParameter("field has no modulus of continuity".into()))?;
    let bound = s0 / (2.0 + s0) * field.lambda();
    let omega = modulus.eval(eps0);
    if omega > bound * (1.0 + 1e-12) {
        return Err(Error::ModulusTooLarge { omega, bound });
    }
    let kp = h2_kernel(field, s0, z0, st)?;
    let region = Cylinder::new(z0.clone(), eps0, -eps0 * eps0, eps0 * eps0)?;
    let signs = sign_campaign(field, &kp, &region, samples, seed, exec)?;
    let a0 = field.eval_block(z0);
    let beta = kp.beta();
    let sb = kp.s() * beta;
    let mut rng = par::stream_rng(seed ^ 0xA5A5, 0);
    let mut m1min = f64::INFINITY;
    let mut m2min = f64::INFINITY;
    for _ in 0..samples.clamp(1, 1000) {
        let z = region.sample_interior(st, &mut rng);
        let a = field.eval_block(&z);
        m1min = m1min.min(eig_extremes(&(&a / beta - &a0)).0);
        m2min = m2min.min(eig_extremes(&(&a0 * sb - &a)).0);
    }
    Ok(H2Report {
        s0,
        eps0,
        omega_eps0: omega,
        bound,
        signs,
        min_eig_m1: m1min,
        min_eig_m2: m2min,
    })
}

/// Kernel value against a bound, in natural and logarithmic form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub lhs: f64,
    pub rhs: f64,
    pub ln_lhs: f64,
    pub ln_rhs: f64,
}

impl BoundSample {
    fn new(ln_lhs: f64, ln_rhs: f64) -> Self {
        Self {
            lhs: ln_lhs.exp(),
            rhs: ln_rhs.exp(),
            ln_lhs,
            ln_rhs,
        }
    }

    /// `lhs <= rhs` up to relative `1e-12` in the logarithm.
    pub fn upper_holds(&self) -> bool {
        self.ln_lhs <= self.ln_rhs + 1e-12 * self.ln_rhs.abs().max(1.0)
    }

    /// `lhs >= rhs` up to relative `1e-12` in the logarithm.
    pub fn lower_holds(&self) -> bool {
        self.ln_lhs >= self.ln_rhs - 1e-12 * self.ln_rhs.abs().max(1.0)
    }
}

/// Constants entering the two kernel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub b_b: f64,
    pub k: f64,
    pub sigma_0: f64,
    pub c1: f64,
    pub c2: f64,
    pub n: usize,
}

fn ln_prefactor(kp: &KernelParams, b_b: f64, r: f64) -> f64 {
    -0.5 * kp.s() * kp.structure().qf() * (b_b * r * r).ln()
}

/// `Gamma(zeta^{-1} o z)` against `(b_B r^2)^{-sQ/2} exp(-c_1 K^2 / b_B)` for
/// `z` on `S^1_r` and `zeta` in `Q^3_r`, both around `z0`.
pub fn kernel_upper_bound(
    kp: &KernelParams,
    bc: &BoundConstants,
    z0: &Point,
    r: f64,
    z: &Point,
    zeta: &Point,
) -> Result<BoundSample> {
    let st = kp.structure();
    let nc = NamedCylinders::new(z0, r, bc.k, bc.sigma_0, bc.b_b)?;
    if !nc.s1.contains(st, z, 1e-9) {
        return Err(Error::Membership("z is not on the lateral shell S^1_r".into()));
    }
    if !nc.q3.contains(st, zeta) {
        return Err(Error::Membership("zeta is not in Q^3_r".into()));
    }
    let ln_rhs = ln_prefactor(kp, bc.b_b, r) - bc.c1 * bc.k * bc.k / bc.b_b;
    Ok(BoundSample::new(kp.ln_gamma_translated(zeta, z), ln_rhs))
}

/// `Gamma(zeta^{-1} o z)` against `(b_B r^2)^{-sQ/2} exp(-c_2 / b_B^{2n+1})` for
/// `z` in `Q^2_r` and `zeta` in `Q^3_r`.
pub fn kernel_lower_bound(
    kp: &KernelParams,
    bc: &BoundConstants,
    z0: &Point,
    r: f64,
    z: &Point,
    zeta: &Point,
) -> Result<BoundSample> {
    let st = kp.structure();
    let nc = NamedCylinders::new(z0, r, bc.k, bc.sigma_0, bc.b_b)?;
    if !nc.q2.contains(st, z) {
        return Err(Error::Membership("z is not in Q^2_r".into()));
    }
    if !nc.q3.contains(st, zeta) {
        return Err(Error::Membership("zeta is not in Q^3_r".into()));
    }
    let ln_rhs = ln_prefactor(kp, bc.b_b, r) - bc.c2 / bc.b_b.powi(2 * bc.n as i32 + 1);
    Ok(BoundSample::new(kp.ln_gamma_translated(zeta, z), ln_rhs))
}

/// Outcome of a bound campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `ln rhs - ln lhs` (upper) or `ln lhs - ln rhs` (lower).
    pub min_log_slack: f64,
}

/// Samples admissible pairs for both kernel bounds and counts violations.
pub fn bound_campaign(
    kp: &KernelParams,
    bc: &BoundConstants,
    z0: &Point,
    r: f64,
    samples: usize,
    seed: u64,
    upper: bool,
    exec: Exec,
) -> Result<BoundReport> {
    let st = kp.structure().clone();
    let nc = NamedCylinders::new(z0, r, bc.k, bc.sigma_0, bc.b_b)?;
    let counts = par::split_counts(samples, par::SAMPLING_CHUNKS);
    let parts = par::map_indexed(exec, counts.len(), |c| -> Result<(usize, f64)> {
        let mut rng = par::stream_rng(seed, c as u64);
        let mut viol = 0;
        let mut slack = f64::INFINITY;
        for _ in 0..counts[c] {
            let zeta = nc.q3.sample_interior(&st, &mut rng);
            let b = if upper {
                let z = nc.s1.sample(&st, &mut rng);
                kernel_upper_bound(kp, bc, z0, r, &z, &zeta)?
            } else {
                let z = nc.q2.sample_interior(&st, &mut rng);
                kernel_lower_bound(kp, bc, z0, r, &z, &zeta)?
            };
            let (ok, sl) = if upper {
                (b.upper_holds(), b.ln_rhs - b.ln_lhs)
            } else {
                (b.lower_holds(), b.ln_lhs - b.ln_rhs)
            };
            if !ok {
                viol += 1;
            }
            slack = slack.min(sl);
        }
        Ok((viol, slack))
    });
    let mut rep = BoundReport {
        samples,
        violations: 0,
        min_log_slack: f64::INFINITY,
    };
    for p in parts {
        let (v, s) = p?;
        rep.violations += v;
        rep.min_log_slack = rep.min_log_slack.min(s);
    }
    Ok(rep)
}
