//! Potentials `U_E(z) = int_E Gamma_{s,beta}(zeta^{-1} o z) dzeta`, the strip
//! bound and the dilation law for potentials.
//!
//! For a fixed time lag `u = t - tau` the integrand is a Gaussian in `xi`
//! with mean `E(-u) x` and covariance `2 beta E(-u) C_0(u) E(-u)^T`. Writing
//! `xi = E(-u) x + L(u) e` with `L(u) = D_{sqrt u} L_1` the Cholesky factor
//! turns the slice integral into a standard Gaussian mass over a region whose
//! limits are known coordinate by coordinate. The last coordinate is done in
//! closed form with `erf`, the others and the time lag adaptively.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Cylinder;
use crate::group::{BlockStructure, Point};
use crate::kernels::KernelParams;
use crate::par::{self, Exec};
use crate::quadrature::{integrate, QuadOptions};

/// Default absolute tolerance at unit scale.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Whitened coordinates beyond this are dropped (`exp(-72)` mass).
const E_CUT: f64 = 12.0;
const PANELS: usize = 16;

pub type Predicate = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// Set given by a predicate inside a Euclidean bounding box.
#[derive(Clone)]
pub struct IndicatorRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub pred: Predicate,
}

impl fmt::Debug for IndicatorRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndicatorRegion")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("t1", &self.t1)
            .field("t2", &self.t2)
            .finish_non_exhaustive()
    }
}

/// Integration set `E`.
#[derive(Debug, Clone)]
pub enum RegionE {
    Empty,
    /// `prod (lo_k, hi_k) x (t1, t2)`.
    Box { lo: Vec<f64>, hi: Vec<f64>, t1: f64, t2: f64 },
    Cylinder(Cylinder),
    /// `R^N x (t1, t2)`.
    Strip { t1: f64, t2: f64 },
    Indicator(IndicatorRegion),
}

impl RegionE {
    /// Time window `(T_1, T_2)` containing the set.
    pub fn strip(&self) -> Option<(f64, f64)> {
        match self {
            RegionE::Empty => None,
            RegionE::Box { t1, t2, .. } | RegionE::Strip { t1, t2 } => Some((*t1, *t2)),
            RegionE::Cylinder(c) => Some((c.center.t + c.t1, c.center.t + c.t2)),
            RegionE::Indicator(i) => Some((i.t1, i.t2)),
        }
    }

    pub fn contains(&self, st: &BlockStructure, z: &Point) -> bool {
        let in_box = |lo: &[f64], hi: &[f64], t1: f64, t2: f64| {
            z.t > t1 && z.t < t2 && z.x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v > a && v < b)
        };
        match self {
            RegionE::Empty => false,
            RegionE::Box { lo, hi, t1, t2 } => in_box(lo, hi, *t1, *t2),
            RegionE::Cylinder(c) => c.contains(st, z),
            RegionE::Strip { t1, t2 } => z.t > *t1 && z.t < *t2,
            RegionE::Indicator(i) => in_box(&i.lo, &i.hi, i.t1, i.t2) && (i.pred)(z),
        }
    }

    pub fn validate(&self, st: &BlockStructure) -> Result<()> {
        let n = st.dim();
        let check_box = |lo: &[f64], hi: &[f64]| -> Result<()> {
            if lo.len() != n || hi.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: lo.len().max(hi.len()),
                });
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                return Err(Error::InvalidParameter("box needs finite lo < hi".into()));
            }
            Ok(())
        };
        match self {
            RegionE::Empty => Ok(()),
            RegionE::Box { lo, hi, .. } => check_box(lo, hi),
            RegionE::Indicator(i) => check_box(&i.lo, &i.hi),
            RegionE::Cylinder(c) => {
                if c.center.x.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: c.center.x.len() });
                }
                Ok(())
            }
            RegionE::Strip { .. } => Ok(()),
        }?;
        if let Some((t1, t2)) = self.strip() {
            if !(t1 < t2) || !t1.is_finite() || !t2.is_finite() {
                return Err(Error::InvalidParameter(format!("time window ({t1}, {t2})")));
            }
        }
        Ok(())
    }

    /// Image `delta_r E`.
    pub fn dilate(&self, st: &BlockStructure, r: f64) -> Result<RegionE> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::NonPositiveDilation(r));
        }
        let r2 = r * r;
        let scale = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .map(|(k, x)| x * r.powi(st.coordinate_degree(k)))
                .collect()
        };
        Ok(match self {
            RegionE::Empty => RegionE::Empty,
            RegionE::Box { lo, hi, t1, t2 } => RegionE::Box {
                lo: scale(lo),
                hi: scale(hi),
                t1: t1 * r2,
                t2: t2 * r2,
            },
            RegionE::Cylinder(c) => {
                RegionE::Cylinder(Cylinder::new(st.dilate(r, &c.center)?, c.r * r, c.t1 * r2, c.t2 * r2)?)
            }
            RegionE::Strip { t1, t2 } => RegionE::Strip { t1: t1 * r2, t2: t2 * r2 },
            RegionE::Indicator(i) => {
                let inner = i.pred.clone();
                let st2 = st.clone();
                let inv = 1.0 / r;
                RegionE::Indicator(IndicatorRegion {
                    lo: scale(&i.lo),
                    hi: scale(&i.hi),
                    t1: i.t1 * r2,
                    t2: i.t2 * r2,
                    pred: Arc::new(move |z: &Point| match st2.dilate(inv, z) {
                        Ok(w) => inner(&w),
                        Err(_) => false,
                    }),
                })
            }
        })
    }
}

enum Shape<'a> {
    Box(&'a [f64], &'a [f64]),
    Ball(f64),
    Free,
    Masked(&'a IndicatorRegion),
}

struct SliceIntegrator<'a> {
    st: &'a BlockStructure,
    shape: Shape<'a>,
    l1: DMatrix<f64>,
    inner: QuadOptions,
}

/// `int_a^b exp(-e^2/2) de`, accurate in both tails.
fn gauss_mass(a: f64, b: f64) -> f64 {
    let c = (std::f64::consts::PI / 2.0).sqrt();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        c * (libm::erfc(a * s) - libm::erfc(b * s))
    } else if b <= 0.0 {
        c * (libm::erfc(-b * s) - libm::erfc(-a * s))
    } else {
        c * (libm::erf(b * s) - libm::erf(a * s))
    }
}

/// Scan points for locating predicate transitions along the last coordinate.
const MASK_SCAN: usize = 64;

/// Gaussian mass of `{e in (a, b) : pred(xi_last = c + lkk e)}`. Transitions
/// are found on a uniform scan and refined by bisection, so slices must be
/// unions of intervals longer than the scan spacing.
fn masked_mass(ind: &IndicatorRegion, tau: f64, c: f64, lkk: f64, a: f64, b: f64, xi: &mut [f64]) -> f64 {
    let k = xi.len() - 1;
    let mut inside = |e: f64| {
        xi[k] = c + lkk * e;
        (ind.pred)(&Point { x: DVector::from_column_slice(xi), t: tau })
    };
    let h = (b - a) / MASK_SCAN as f64;
    let mut total = 0.0;
    let mut start = if inside(a) { Some(a) } else { None };
    let mut prev = (a, start.is_some());
    for i in 1..=MASK_SCAN {
        let e = if i == MASK_SCAN { b } else { a + h * i as f64 };
        let cur = inside(e);
        if cur != prev.1 {
            let (mut lo, mut hi) = (prev.0, e);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) == prev.1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let edge = 0.5 * (lo + hi);
            if cur {
                start = Some(edge);
            } else if let Some(s0) = start.take() {
                total += gauss_mass(s0, edge);
            }
        }
        prev = (e, cur);
    }
    if let Some(s0) = start {
        total += gauss_mass(s0, b);
    }
    total
}

impl<'a> SliceIntegrator<'a> {
    /// Limits of `xi_k` given `xi_0 .. xi_{k-1}`.
    fn limits(&self, k: usize, xi: &[f64]) -> Option<(f64, f64)> {
        match &self.shape {
            Shape::Box(lo, hi) => Some((lo[k], hi[k])),
            Shape::Masked(i) => Some((i.lo[k], i.hi[k])),
            Shape::Free => Some((f64::NEG_INFINITY, f64::INFINITY)),
            Shape::Ball(rho) => {
                let blk = self.st.block_of(k);
                let mut used = 0.0;
                for j in 0..blk {
                    let rng = self.st.block_range(j);
                    let norm = xi[rng].iter().map(|v| v * v).sum::<f64>().sqrt();
                    used += norm.powf(1.0 / (2 * j + 1) as f64);
                }
                let rem = rho - used;
                if rem <= 0.0 {
                    return None;
                }
                let big_r = rem.powi(2 * blk as i32 + 1);
                let start = self.st.block_range(blk).start;
                let s2: f64 = xi[start..k].iter().map(|v| v * v).sum();
                let h2 = big_r * big_r - s2;
                if h2 <= 0.0 {
                    return None;
                }
                let h = h2.sqrt();
                Some((-h, h))
            }
        }
    }

    /// Standard Gaussian mass of the slice at lag `u`, local time `tau`.
    fn slice(&self, u: f64, tau: f64, x: &DVector<f64>) -> Result<f64> {
        let n = self.st.dim();
        let m = self.st.apply_e(-u, x);
        let su = u.sqrt();
        let l = DMatrix::from_fn(n, n, |i, j| self.l1[(i, j)] * su.powi(self.st.coordinate_degree(i)));
        let mut xi = vec![0.0; n];
        let mut e = vec![0.0; n];
        self.level(0, tau, &m, &l, &mut xi, &mut e)
    }

    fn level(
        &self,
        k: usize,
        tau: f64,
        m: &DVector<f64>,
        l: &DMatrix<f64>,
        xi: &mut Vec<f64>,
        e: &mut Vec<f64>,
    ) -> Result<f64> {
        let n = self.st.dim();
        let Some((lo, hi)) = self.limits(k, &xi[..k]) else {
            return Ok(0.0);
        };
        let mut c = m[k];
        for j in 0..k {
            c += l[(k, j)] * e[j];
        }
        let lkk = l[(k, k)];
        let a = ((lo - c) / lkk).max(-E_CUT);
        let b = ((hi - c) / lkk).min(E_CUT);
        if !(a < b) {
            return Ok(0.0);
        }
        if k + 1 == n {
            return Ok(match &self.shape {
                Shape::Masked(ind) => masked_mass(ind, tau, c, lkk, a, b, xi),
                _ => gauss_mass(a, b),
            });
        }
        let kink = -c / lkk;
        let breaks = [0.0, kink, -2.5, 2.5, -6.0, 6.0];
        let res = integrate(
            |ek| {
                let w = (-0.5 * ek * ek).exp();
                xi[k] = c + lkk * ek;
                e[k] = ek;
                Ok(w * self.level(k + 1, tau, m, l, xi, e)?)
            },
            a,
            b,
            &breaks,
            &self.inner,
        )?;
        Ok(res.value)
    }
}

/// `U_E(z)` with absolute tolerance `tol`.
pub fn potential(kp: &KernelParams, region: &RegionE, z: &Point, tol: f64) -> Result<f64> {
    potential_with(kp, region, z, tol, Exec::default())
}

pub fn potential_with(kp: &KernelParams, region: &RegionE, z: &Point, tol: f64, exec: Exec) -> Result<f64> {
    kp.check_potential_exponent()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let st = kp.structure();
    if z.x.len() != st.dim() {
        return Err(Error::DimensionMismatch { expected: st.dim(), got: z.x.len() });
    }
    region.validate(st)?;
    // local coordinates: cylinders are translated to the origin
    let (shape, zl, t1, t2) = match region {
        RegionE::Empty => return Ok(0.0),
        RegionE::Box { lo, hi, t1, t2 } => (Shape::Box(lo, hi), z.clone(), *t1, *t2),
        RegionE::Strip { t1, t2 } => (Shape::Free, z.clone(), *t1, *t2),
        RegionE::Indicator(i) => (Shape::Masked(i), z.clone(), i.t1, i.t2),
        RegionE::Cylinder(c) => (Shape::Ball(c.r), st.relative(&c.center, z), c.t1, c.t2),
    };
    let u_hi = zl.t - t1;
    if u_hi <= 0.0 {
        return Ok(0.0);
    }
    let u_lo = (zl.t - t2).max(0.0);

    let e1 = st.matrix_e(-1.0);
    let sigma1 = (&e1 * kp.cp().eval(1.0) * e1.transpose()) * (2.0 * kp.beta());
    let sigma1 = (&sigma1 + sigma1.transpose()) * 0.5;
    let l1 = sigma1
        .cholesky()
        .ok_or_else(|| Error::InconsistentConstant("slice covariance is not positive definite".into()))?
        .l();
    let det_l1: f64 = (0..st.dim()).map(|k| l1[(k, k)]).product();
    let si = SliceIntegrator {
        st,
        shape,
        l1,
        inner: QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 4000,
        },
    };

    // u = w^m absorbs the u^a singularity at zero lag
    let a = 0.5 * (1.0 - kp.s()) * st.qf();
    let m = if a < 0.0 { 2.0 / (1.0 + a) } else { 1.0 };
    let w_lo = u_lo.powf(1.0 / m);
    let w_hi = u_hi.powf(1.0 / m);
    let pw = (w_hi - w_lo) / PANELS as f64;
    let outer = QuadOptions {
        abs_tol: tol / PANELS as f64,
        rel_tol: 1e-13,
        max_intervals: 2000,
    };
    let parts = par::map_indexed(exec, PANELS, |p| -> Result<f64> {
        let lo = w_lo + pw * p as f64;
        let hi = if p + 1 == PANELS { w_hi } else { lo + pw };
        let r = integrate(
            |w| {
                let u = w.powf(m);
                if u <= 0.0 {
                    return Ok(0.0);
                }
                let jac = m * w.powf(m - 1.0 + m * a);
                Ok(jac * det_l1 * si.slice(u, zl.t - u, &zl.x)?)
            },
            lo,
            hi,
            &[],
            &outer,
        )?;
        Ok(r.value)
    });
    let vals = parts.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(par::pairwise_sum(&vals))
}

/// `phi(z)`, the potential of the whole strip `R^N x (T_1, T_2)`.
pub fn strip_potential(kp: &KernelParams, t1: f64, t2: f64, z: &Point, tol: f64) -> Result<f64> {
    potential(kp, &RegionE::Strip { t1, t2 }, z, tol)
}

/// Factors of the strip bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripBound {
    /// `int exp(-<C_0^{-1}(1) E(1) xi, E(1) xi> / (4 beta)) dxi = beta^{N/2} / c_0`.
    pub gaussian: f64,
    /// `sup_t int_{T_1}^{min(t, T_2)} (t - tau)^{(1-s)Q/2} dtau`.
    pub time: f64,
    pub value: f64,
}

fn time_factor(s: f64, q: f64, window: f64) -> Result<f64> {
    if s < 1.0 {
        return Err(Error::ExponentBelowOne(s));
    }
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!("strip window {window} must be positive")));
    }
    let a = 0.5 * (1.0 - s) * q;
    Ok(window.powf(a + 1.0) / (a + 1.0))
}

/// Strip bound for the kernel's own `A_0`.
pub fn strip_bound_parts(kp: &KernelParams, t1: f64, t2: f64) -> Result<StripBound> {
    kp.check_potential_exponent()?;
    let st = kp.structure();
    let n = st.dim() as f64;
    let gaussian = (4.0 * std::f64::consts::PI * kp.beta()).powf(0.5 * n) * kp.cp().det_c1().sqrt();
    let time = time_factor(kp.s(), st.qf(), t2 - t1)?;
    Ok(StripBound { gaussian, time, value: gaussian * time })
}

pub fn strip_bound(kp: &KernelParams, t1: f64, t2: f64) -> Result<f64> {
    Ok(strip_bound_parts(kp, t1, t2)?.value)
}

/// Strip bound valid for every frozen `A_0 <= Lambda I_0`, using
/// `det C_0(1) <= Lambda^N det C(1)`.
pub fn strip_bound_uniform(st: &BlockStructure, s: f64, beta: f64, big_lambda: f64, window: f64) -> Result<StripBound> {
    let threshold = 1.0 + 2.0 / st.qf();
    if s >= threshold {
        return Err(Error::ExponentTooLarge { s, threshold });
    }
    let n = st.dim() as f64;
    let cp = crate::covariance::CovariancePoly::identity(st);
    let gaussian = (4.0 * std::f64::consts::PI * beta * big_lambda).powf(0.5 * n) * cp.det_c1().sqrt();
    let time = time_factor(s, st.qf(), window)?;
    Ok(StripBound { gaussian, time, value: gaussian * time })
}

/// `(U_{delta_r E}(delta_r z), r^{Q+2-sQ} U_E(z))`.
pub fn scaling_check(kp: &KernelParams, region: &RegionE, r: f64, z: &Point, tol: f64) -> Result<(f64, f64)> {
    let st = kp.structure();
    let factor = r.powf(st.qf() + 2.0 - kp.s() * st.qf());
    let lhs = potential(kp, &region.dilate(st, r)?, &st.dilate(r, z)?, tol * factor)?;
    let rhs = factor * potential(kp, region, z, tol)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovariancePoly;

    fn kp(s: f64) -> KernelParams {
        KernelParams::new(s, 1.0, CovariancePoly::identity(&BlockStructure::prototype())).unwrap()
    }

    #[test]
    fn trivial_cases() {
        let k = kp(1.2);
        let z = Point::new(vec![0.1, 0.2], 0.5);
        assert_eq!(potential(&k, &RegionE::Empty, &z, 1e-8).unwrap(), 0.0);
        let boxed = RegionE::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0], t1: 0.5, t2: 1.0 };
        assert_eq!(potential(&k, &boxed, &z, 1e-8).unwrap(), 0.0);
        assert!(matches!(potential(&kp(1.5), &boxed, &z, 1e-8), Err(Error::ExponentTooLarge { .. })));
    }

    #[test]
    fn strip_potential_attains_bound_at_top() {
        let k = kp(1.2);
        let c = strip_bound(&k, -1.0, 0.0).unwrap();
        let phi = strip_potential(&k, -1.0, 0.0, &Point::new(vec![0.3, -0.7], 0.0), 1e-10).unwrap();
        assert!((phi - c).abs() < 1e-8 * c, "{phi} vs {c}");
        let below = strip_potential(&k, -1.0, 0.0, &Point::new(vec![0.3, -0.7], -0.4), 1e-10).unwrap();
        assert!(below < c);
    }

    #[test]
    fn unit_exponent_time_factor() {
        let k = kp(1.0);
        let p = strip_bound_parts(&k, -0.3, 0.5).unwrap();
        assert!((p.time - 0.8).abs() < 1e-15);
        let k4 = KernelParams::new(1.0, 4.0, k.cp().clone()).unwrap();
        let p4 = strip_bound_parts(&k4, -0.3, 0.5).unwrap();
        assert!((p4.gaussian / p.gaussian - 4.0).abs() < 1e-12);
        assert!(matches!(strip_bound(&kp(0.9), 0.0, 1.0), Err(Error::ExponentBelowOne(_))));
    }

    #[test]
    fn monotone_in_region() {
        let k = kp(1.2);
        let z = Point::new(vec![0.05, 0.0], 0.1);
        let small = RegionE::Box { lo: vec![-0.5, -0.5], hi: vec![0.5, 0.5], t1: -0.5, t2: 0.0 };
        let big = RegionE::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0], t1: -1.0, t2: 0.05 };
        let a = potential(&k, &small, &z, 1e-9).unwrap();
        let b = potential(&k, &big, &z, 1e-9).unwrap();
        assert!(a > 0.0 && a < b);
    }

    #[test]
    fn indicator_matches_box() {
        let k = kp(1.1);
        let z = Point::new(vec![0.1, 0.0], 0.2);
        let boxed = RegionE::Box { lo: vec![-0.5, -0.5], hi: vec![0.5, 0.5], t1: -0.5, t2: 0.0 };
        let ind = RegionE::Indicator(IndicatorRegion {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
            t1: -0.5,
            t2: 0.0,
            pred: Arc::new(|z: &Point| z.x.iter().all(|v| v.abs() < 0.5)),
        });
        let a = potential(&k, &boxed, &z, 1e-8).unwrap();
        let b = potential(&k, &ind, &z, 1e-8).unwrap();
        assert!((a - b).abs() < 1e-5 * a, "{a} vs {b}");
    }
}
