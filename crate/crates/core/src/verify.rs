//! Sampling suites behind `verify <suite>`: each check reports its sample
//! count, the number of violations and the worst observed slack.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsReport;
use crate::covariance::{eigen_bounds, CovariancePoly};
use crate::error::{Error, Result};
use crate::fields::{make_field, CoefficientField, FieldKind, FieldSpec, Hypothesis};
use crate::geometry::{
    check_inclusion_i, check_inclusion_ii, unit_ball_measure, Cylinder, InclusionCheck, InclusionInputs, NamedCylinders,
};
use crate::group::{BlockStructure, Point};
use crate::kernels::{
    apply_la_local, bound_campaign, check_subsolution_h2, gamma0, sign_campaign, BoundConstants, KernelParams,
};
use crate::par::{self, Exec};
use crate::potentials::{potential, scaling_check, strip_potential, RegionE};
use crate::quadrature::{integrate, QuadOptions};

/// Relative tolerance for algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Multiplier on the admissible inclusion radius in adversarial runs.
pub const ADVERSARIAL_INFLATION: f64 = 20.0;
pub const SIGN_FIELDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Group,
    Covariance,
    Kernels,
    Geometry,
    Potentials,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Group, Suite::Covariance, Suite::Kernels, Suite::Geometry, Suite::Potentials];

    pub fn parse(name: &str) -> Option<Suite> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Group => "group",
            Suite::Covariance => "covariance",
            Suite::Kernels => "kernels",
            Suite::Geometry => "geometry",
            Suite::Potentials => "potentials",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest residual for identities, smallest slack for inequalities.
    pub worst: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, samples: usize, violations: usize, worst: f64) -> Self {
        Self { name: name.into(), samples, violations, worst, passed: violations == 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
    pub adversarial: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0x5EED, exec: Exec::default(), adversarial: false }
    }
}

/// Inputs shared by the suites.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub structure: BlockStructure,
    pub constants: ConstantsReport,
    /// Field for the H2 subsolution check; ignored under H1.
    pub field: Option<CoefficientField>,
}

pub fn run_suite(ctx: &VerifyContext, suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Group => group_suite(&ctx.structure, opts)?,
        Suite::Covariance => covariance_suite(ctx, opts)?,
        Suite::Kernels => kernels_suite(ctx, opts)?,
        Suite::Geometry => geometry_suite(ctx, opts)?,
        Suite::Potentials => potentials_suite(ctx, opts)?,
    };
    Ok(SuiteReport { suite, passed: checks.iter().all(|c| c.passed), checks })
}

/// Runs `f` on `samples` seeded draws and collects `(violations, worst)`.
/// `f` returns `(ok, value)`; `worst` is the max of `value` when `max` is
/// set and the min otherwise.
fn sampled<F>(samples: usize, seed: u64, stream: u64, exec: Exec, max: bool, f: F) -> (usize, f64)
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> (bool, f64) + Sync + Send,
{
    let counts = par::split_counts(samples, par::SAMPLING_CHUNKS);
    let parts = par::map_indexed(exec, counts.len(), |c| {
        let mut rng = par::stream_rng(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15), c as u64);
        let mut bad = 0;
        let mut worst = if max { f64::NEG_INFINITY } else { f64::INFINITY };
        for _ in 0..counts[c] {
            let (ok, v) = f(&mut rng);
            if !ok {
                bad += 1;
            }
            worst = if max { worst.max(v) } else { worst.min(v) };
        }
        (bad, worst)
    });
    parts.into_iter().fold((0, if max { f64::NEG_INFINITY } else { f64::INFINITY }), |a, p| {
        (a.0 + p.0, if max { a.1.max(p.1) } else { a.1.min(p.1) })
    })
}

/// Point with coordinates on mixed scales `10^[-2, 2]` and `|t| <= 2`.
pub fn random_point<R: Rng + ?Sized>(st: &BlockStructure, rng: &mut R) -> Point {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let x = DVector::from_fn(st.dim(), |_, _| scale * rng.random_range(-1.0..1.0));
    Point { x, t: rng.random_range(-2.0..2.0) }
}

fn rel_diff(a: &Point, b: &Point) -> f64 {
    let scale = a.x.amax().max(b.x.amax()).max(a.t.abs()).max(1.0);
    a.max_abs_diff(b) / scale
}

fn group_suite(st: &BlockStructure, o: &VerifyOptions) -> Result<Vec<Check>> {
    let sb = st.sigma_bounds()?;
    let n = o.samples;
    let mut out = Vec::new();
    let identity = |name: &str, stream: u64, f: &(dyn Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync)| {
        let (v, w) = sampled(n, o.seed, stream, o.exec, true, |rng| {
            let r = f(rng);
            (r <= IDENTITY_TOL, r)
        });
        Check::new(name, n, v, w)
    };
    out.push(identity("associativity", 1, &|rng| {
        let (a, b, c) = (random_point(st, rng), random_point(st, rng), random_point(st, rng));
        rel_diff(&st.compose(&st.compose(&a, &b), &c), &st.compose(&a, &st.compose(&b, &c)))
    }));
    out.push(identity("identity_and_inverse", 2, &|rng| {
        let a = random_point(st, rng);
        let e = Point::origin(st.dim());
        let d1 = rel_diff(&st.compose(&a, &e), &a).max(rel_diff(&st.compose(&e, &a), &a));
        let d2 = rel_diff(&st.compose(&a, &st.inverse(&a)), &e).max(rel_diff(&st.compose(&st.inverse(&a), &a), &e));
        d1.max(d2)
    }));
    out.push(identity("dilation_automorphism", 3, &|rng| {
        let (a, b) = (random_point(st, rng), random_point(st, rng));
        let r = 10f64.powf(rng.random_range(-1.0..1.0));
        let lhs = st.dilate(r, &st.compose(&a, &b)).expect("r > 0");
        let rhs = st.compose(&st.dilate(r, &a).expect("r > 0"), &st.dilate(r, &b).expect("r > 0"));
        rel_diff(&lhs, &rhs)
    }));
    out.push(identity("commutation", 4, &|rng| {
        let r = 10f64.powf(rng.random_range(-1.0..1.0));
        let s = rng.random_range(-2.0..2.0);
        let lhs = st.matrix_e(r * r * s);
        let rhs = st.dilation_matrix(r) * st.matrix_e(s) * st.dilation_matrix(1.0 / r);
        (lhs - &rhs).amax() / rhs.amax().max(1.0)
    }));
    out.push(identity("norm_homogeneity", 5, &|rng| {
        let x = random_point(st, rng).x;
        let r = 10f64.powf(rng.random_range(-1.0..1.0));
        let nx = st.norm_b(&x);
        (st.norm_b(&(st.dilation_matrix(r) * &x)) - r * nx).abs() / (r * nx).max(f64::MIN_POSITIVE)
    }));
    let ineq = |name: &str, stream: u64, f: &(dyn Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync)| {
        // f returns rhs - lhs, relative
        let (v, w) = sampled(n, o.seed, stream, o.exec, false, |rng| {
            let s = f(rng);
            (s >= -IDENTITY_TOL, s)
        });
        Check::new(name, n, v, w)
    };
    out.push(ineq("triangle_inequality", 6, &|rng| {
        let (x, y) = (random_point(st, rng).x, random_point(st, rng).x);
        let rhs = st.norm_b(&x) + st.norm_b(&y);
        (rhs - st.norm_b(&(&x + &y))) / rhs.max(f64::MIN_POSITIVE)
    }));
    out.push(ineq("norm_comparison", 7, &|rng| {
        let x = random_point(st, rng).x;
        let (lo, hi) = st.comparison_bounds(&sb, x.norm());
        let nb = st.norm_b(&x);
        ((nb - lo) / nb).min((hi - nb) / nb)
    }));
    out.push(ineq("e_minus_identity", 8, &|rng| {
        let p = random_point(st, rng);
        let lhs = st.norm_b(&(st.apply_e(p.t, &p.x) - &p.x));
        let rhs = st.e_minus_identity_bound(p.x.norm(), p.t);
        (rhs - lhs) / rhs.max(f64::MIN_POSITIVE)
    }));
    Ok(out)
}

fn random_band_matrix<R: Rng + ?Sized>(p0: usize, lambda: f64, big_lambda: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p0, p0, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DVector::from_fn(p0, |_, _| rng.random_range(lambda..=big_lambda));
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

fn covariance_suite(ctx: &VerifyContext, o: &VerifyOptions) -> Result<Vec<Check>> {
    let st = &ctx.structure;
    let c = &ctx.constants;
    let n = o.samples.min(1000);
    let cp = CovariancePoly::identity(st);
    let mut out = Vec::new();
    if st.block_sizes() == [1, 1] && (st.blocks()[0][(0, 0)] - 1.0).abs() == 0.0 {
        let (v, w) = sampled(n, o.seed, 11, o.exec, true, |rng| {
            let t: f64 = rng.random_range(0.0..4.0);
            let exact = DMatrix::from_row_slice(2, 2, &[t, -t * t / 2.0, -t * t / 2.0, t * t * t / 3.0]);
            let r = (cp.eval(t) - &exact).amax() / exact.amax().max(1.0);
            (r <= IDENTITY_TOL, r)
        });
        out.push(Check::new("prototype_closed_form", n, v, w));
    }
    let (v, w) = sampled(n, o.seed, 12, o.exec, true, |rng| {
        let t: f64 = rng.random_range(1e-6..4.0);
        let r = cp.split_residual(t) / cp.eval(t).amax().max(1.0);
        (r <= IDENTITY_TOL, r)
    });
    out.push(Check::new("dilation_split", n, v, w));
    let (v, w) = sampled(n, o.seed, 13, o.exec, true, |rng| {
        let t: f64 = rng.random_range(0.0..4.0);
        let r = cp.check_derivative_identity(t) / cp.deriv(t).amax().max(1.0);
        (r <= IDENTITY_TOL, r)
    });
    out.push(Check::new("derivative_identity", n, v, w));
    let q = st.q() as i32;
    let (v, w) = sampled(n, o.seed, 14, o.exec, true, |rng| {
        let t: f64 = rng.random_range(1e-2..4.0);
        let exact = t.powi(q) * cp.det_c1();
        let r = (cp.eval(t).determinant() - exact).abs() / exact;
        (r <= 1e-10, r)
    });
    out.push(Check::new("determinant_scaling", n, v, w));
    let sb = st.sigma_bounds()?;
    let eb = eigen_bounds(st, &sb, c.b_b, c.lambda, c.big_lambda)?;
    let two_n1 = 2 * st.n() as i32 + 1;
    let (v, w) = sampled(n, o.seed, 15, o.exec, false, |rng| {
        let a = random_band_matrix(st.p0(), c.lambda, c.big_lambda, rng);
        let full = crate::covariance::embed_block(st, &a).expect("p0 block");
        let cpa = CovariancePoly::new(st, &full).expect("admissible");
        let t = c.b_b * (1.0 - rng.random::<f64>());
        let inv = cpa.invert(t).expect("t > 0").0;
        let e = nalgebra::SymmetricEigen::new((&inv + inv.transpose()) * 0.5).eigenvalues;
        let (lo, hi) = (1.0 / (eb.big_lambda_1 * t), 1.0 / (eb.lambda_1 * t.powi(two_n1)));
        let slack = ((e.min() - lo) / lo).min((hi - e.max()) / hi);
        (slack >= -IDENTITY_TOL, slack)
    });
    out.push(Check::new("eigenvalue_sandwich", n, v, w));
    Ok(out)
}

/// `int Gamma_0(x, t) dx` by nested adaptive quadrature over `12` standard
/// deviations per axis; supported for `N <= 3`.
pub fn gamma0_mass(cp: &CovariancePoly, t: f64) -> Result<f64> {
    let st = cp.structure();
    let dim = st.dim();
    if dim > 3 {
        return Err(Error::InvalidParameter("nested quadrature is limited to N <= 3".into()));
    }
    let c = cp.eval(t);
    let half: Vec<f64> = (0..dim).map(|k| 12.0 * (2.0 * c[(k, k)]).sqrt()).collect();
    let opts = QuadOptions { abs_tol: 1e-11, rel_tol: 1e-11, max_intervals: 2000 };
    fn level(cp: &CovariancePoly, t: f64, half: &[f64], x: &mut Vec<f64>, opts: &QuadOptions) -> Result<f64> {
        let k = x.len();
        if k == half.len() {
            return Ok(gamma0(cp, &Point::new(x.clone(), t)));
        }
        let r = integrate(
            |v| {
                let mut y = x.clone();
                y.push(v);
                level(cp, t, half, &mut y, opts)
            },
            -half[k],
            half[k],
            &[0.0],
            opts,
        )?;
        Ok(r.value)
    }
    level(cp, t, &half, &mut Vec::new(), &opts)
}

fn kernel_params(ctx: &VerifyContext) -> Result<KernelParams> {
    let st = &ctx.structure;
    let c = &ctx.constants;
    let cp = match (c.hypothesis, &ctx.field) {
        (Hypothesis::H2, Some(f)) => CovariancePoly::new(st, &f.eval_full(&Point::origin(st.dim())))?,
        _ => CovariancePoly::identity(st),
    };
    KernelParams::new(c.s, c.beta, cp)
}

fn kernels_suite(ctx: &VerifyContext, o: &VerifyOptions) -> Result<Vec<Check>> {
    let st = &ctx.structure;
    let c = &ctx.constants;
    let cp = CovariancePoly::identity(st);
    let mut out = Vec::new();
    if st.dim() <= 3 {
        let mut worst: f64 = 0.0;
        let mut bad = 0;
        for t in [0.1, 0.5, 1.0] {
            let e = (gamma0_mass(&cp, t)? - 1.0).abs();
            worst = worst.max(e);
            if e > 1e-6 {
                bad += 1;
            }
        }
        out.push(Check::new("normalization", 3, bad, worst));
    }
    let n = o.samples.min(1000);
    let qf = st.qf();
    let (v, w) = sampled(n, o.seed, 21, o.exec, true, |rng| {
        let t = 10f64.powf(rng.random_range(-1.0..0.5));
        let x = DVector::from_fn(st.dim(), |k, _| rng.random_range(-1.5..1.5) * t.sqrt().powi(st.coordinate_degree(k)));
        let z = Point { x, t };
        let r = 10f64.powf(rng.random_range(-0.5..0.5));
        let lhs = gamma0(&cp, &st.dilate(r, &z).expect("r > 0"));
        let rhs = r.powf(-qf) * gamma0(&cp, &z);
        let e = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
        (e <= 1e-11, e)
    });
    out.push(Check::new("homogeneity", n, v, w));
    let kp0 = KernelParams::new(1.0, 1.0, cp.clone())?;
    let a0 = crate::covariance::embed_block(st, &DMatrix::identity(st.p0(), st.p0()))?;
    let (v, w) = sampled(n, o.seed, 22, o.exec, true, |rng| {
        let t = 10f64.powf(rng.random_range(-1.0..0.5));
        let x = DVector::from_fn(st.dim(), |k, _| rng.random_range(-1.5..1.5) * t.sqrt().powi(st.coordinate_degree(k)));
        let ev = apply_la_local(&a0, &kp0, &Point { x, t }).expect("t > 0");
        let e = ev.direct.abs() / ev.term_scale.max(f64::MIN_POSITIVE);
        (e <= 1e-8, e)
    });
    out.push(Check::new("fundamental_solution_residual", n, v, w));

    let kp = kernel_params(ctx)?;
    let bc = BoundConstants { b_b: c.b_b, k: c.k, sigma_0: c.sigma_0, c1: c.c_1, c2: c.c_2, n: c.n };
    let origin = Point::origin(st.dim());
    for (name, upper, stream) in [("upper_bound", true, 23), ("lower_bound", false, 24)] {
        let r = bound_campaign(&kp, &bc, &origin, 1.0, o.samples, o.seed ^ stream, upper, o.exec)?;
        out.push(Check::new(name, r.samples, r.violations, r.min_log_slack));
    }
    match c.hypothesis {
        Hypothesis::H1 => {
            let region = Cylinder::new(origin.clone(), 1.0, -1.0, 0.0)?;
            let mut viol = 0;
            let mut worst = f64::INFINITY;
            let per = o.samples;
            for i in 0..SIGN_FIELDS as u64 {
                let spec = FieldSpec::new(FieldKind::PiecewiseRandom, c.lambda, c.big_lambda).with_seed(o.seed.wrapping_add(i));
                let f = make_field(&spec, st, Some(Hypothesis::H1))?;
                let rep = sign_campaign(&f, &kp, &region, per, o.seed.wrapping_add(100 + i), o.exec)?;
                viol += rep.violations;
                worst = worst.min(rep.min_relative);
            }
            out.push(Check::new("h1_subsolution_sign", per * SIGN_FIELDS, viol, worst));
        }
        Hypothesis::H2 => {
            let f = ctx
                .field
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("H2 verification needs a field".into()))?;
            let s0 = c.s_0.unwrap_or(1.0 / st.qf());
            let eps0 = c
                .eps0_h2
                .ok_or_else(|| Error::InvalidParameter("constants carry no H2 radius".into()))?;
            let rep = check_subsolution_h2(f, st, s0, &origin, eps0, o.samples, o.seed ^ 25, o.exec)?;
            out.push(Check::new("h2_subsolution_sign", rep.signs.samples, rep.signs.violations, rep.signs.min_relative));
        }
    }
    Ok(out)
}

fn geometry_suite(ctx: &VerifyContext, o: &VerifyOptions) -> Result<Vec<Check>> {
    let st = &ctx.structure;
    let c = &ctx.constants;
    let inp = InclusionInputs {
        n: c.n,
        c_nb: st.c_nb(),
        sigma_0: c.sigma_0,
        sigma_bar: c.sigma_bar,
        b_b: c.b_b,
        k: c.k,
    };
    let inflation = if o.adversarial { ADVERSARIAL_INFLATION } else { 1.0 };
    let samples = o.samples.max(1) * 10;
    let mut out = Vec::new();
    for (name, d1, d2, part_i) in [("inclusion_i", 0.1, 0.3, true), ("inclusion_ii", 0.2, 0.6, false)] {
        let chk = InclusionCheck { r_big: 1.0, delta_1: d1, delta_2: d2, samples, seed: o.seed, inflation };
        let bad = if part_i {
            check_inclusion_i(st, &inp, c.c1_incl, &chk, o.exec)?
        } else {
            check_inclusion_ii(st, &inp, c.c2_incl, &chk, o.exec)?
        };
        out.push(Check::new(name, samples, bad, bad as f64 / samples as f64));
    }
    if st.block_sizes() == [1, 1] {
        let m = unit_ball_measure(st);
        let e = (m.value - 1.0).abs();
        out.push(Check::new("unit_ball_measure", m.samples, usize::from(e > 0.01), e));
    }
    Ok(out)
}

fn potentials_suite(ctx: &VerifyContext, o: &VerifyOptions) -> Result<Vec<Check>> {
    let st = &ctx.structure;
    let c = &ctx.constants;
    let kp = kernel_params(ctx)?;
    let origin = Point::origin(st.dim());
    let nc = NamedCylinders::new(&origin, 1.0, c.k, c.sigma_0, c.b_b)?;
    let bound = c.c_strip;
    let mut out = Vec::new();
    // the strip potential depends on t only; sample the window and beyond
    let n = o.samples.min(1000);
    let (v, w) = sampled(n, o.seed, 31, o.exec, false, |rng| {
        let mut z = random_point(st, rng);
        z.t = -c.b_b + 2.0 * c.b_b * rng.random::<f64>();
        let phi = strip_potential(&kp, -c.b_b, 0.0, &z, 1e-9).unwrap_or(f64::INFINITY);
        let slack = (bound - phi) / bound;
        (slack >= -1e-9, slack)
    });
    out.push(Check::new("strip_bound", n, v, w));
    let m = 8.min(n);
    let (v, w) = sampled(m, o.seed, 32, o.exec, false, |rng| {
        let z = nc.q2.sample_interior(st, rng);
        let u = potential(&kp, &RegionE::Cylinder(nc.q3.clone()), &z, 1e-9).unwrap_or(f64::INFINITY);
        let slack = (bound - u) / bound;
        (slack >= -1e-9, slack)
    });
    out.push(Check::new("cylinder_potential_bound", m, v, w));
    let (v, w) = sampled(4.min(n), o.seed, 33, o.exec, true, |rng| {
        let z = nc.q2.sample_interior(st, rng);
        let r = 10f64.powf(rng.random_range(-1.0..0.5));
        match scaling_check(&kp, &RegionE::Cylinder(nc.q3.clone()), r, &z, 1e-10) {
            Ok((lhs, rhs)) => {
                let e = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
                (e <= 1e-6, e)
            }
            Err(_) => (false, f64::INFINITY),
        }
    });
    out.push(Check::new("scaling_law", 4.min(n), v, w));
    Ok(out)
}
