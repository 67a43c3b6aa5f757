//! Group cylinders `Q_r^{t1,t2}(z0) = z0 o (B_r(0) x (t1, t2))`, their
//! parabolic boundaries and measures, the named cylinders used by the growth
//! lemma and the Harnack inequality, and the inclusion constants `C_1`, `C_2`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{BlockStructure, Point};
use crate::par::{self, Exec};

/// Seed of the Monte Carlo estimate of `|B_1(0)|`.
pub const MEASURE_SEED: u64 = 0x5EED;
/// Sample count of the Monte Carlo estimate of `|B_1(0)|`.
pub const MEASURE_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Point,
    pub r: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Cylinder {
    pub fn new(center: Point, r: f64, t1: f64, t2: f64) -> Result<Self> {
        if !(r > 0.0) || !(t1 < t2) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cylinder needs r > 0 and t1 < t2, got r = {r}, t1 = {t1}, t2 = {t2}"
            )));
        }
        Ok(Self { center, r, t1, t2 })
    }

    /// `center^{-1} o z`.
    pub fn local(&self, s: &BlockStructure, z: &Point) -> Point {
        s.relative(&self.center, z)
    }

    /// `center o zeta`.
    pub fn global(&self, s: &BlockStructure, zeta: &Point) -> Point {
        s.compose(&self.center, zeta)
    }

    pub fn contains(&self, s: &BlockStructure, z: &Point) -> bool {
        let w = self.local(s, z);
        s.norm_b(&w.x) < self.r && w.t > self.t1 && w.t < self.t2
    }

    /// Membership in the closure, with slack `tol` on both the radius and
    /// the time interval.
    pub fn contains_closed(&self, s: &BlockStructure, z: &Point, tol: f64) -> bool {
        let w = self.local(s, z);
        s.norm_b(&w.x) <= self.r + tol && w.t >= self.t1 - tol && w.t <= self.t2 + tol
    }

    /// Membership in `(B_r x {t1}) u (dB_r x [t1, t2])`, within `tol`.
    pub fn on_parabolic_boundary(&self, s: &BlockStructure, z: &Point, tol: f64) -> bool {
        let w = self.local(s, z);
        let nb = s.norm_b(&w.x);
        let base = (w.t - self.t1).abs() <= tol && nb <= self.r + tol;
        let lateral = (nb - self.r).abs() <= tol && w.t >= self.t1 - tol && w.t <= self.t2 + tol;
        base || lateral
    }

    /// `|B_1(0)| r^Q (t2 - t1)`.
    pub fn measure(&self, s: &BlockStructure, unit_ball: f64) -> f64 {
        unit_ball * self.r.powi(s.q() as i32) * (self.t2 - self.t1)
    }

    /// Uniform sample from the open cylinder (left translation preserves
    /// Lebesgue measure).
    pub fn sample_interior<R: Rng + ?Sized>(&self, s: &BlockStructure, rng: &mut R) -> Point {
        let x = s.sample_in_ball_b(self.r, rng);
        let t = self.t1 + (self.t2 - self.t1) * rng.random::<f64>();
        self.global(s, &Point { x, t })
    }

    /// Sample from the parabolic boundary. Base and lateral parts are chosen
    /// with weights `|B_r|` and `Q |B_r| (t2 - t1) / r`.
    pub fn sample_parabolic_boundary<R: Rng + ?Sized>(&self, s: &BlockStructure, rng: &mut R) -> Point {
        let w_base = 1.0;
        let w_lat = s.qf() * (self.t2 - self.t1) / self.r;
        let local = if rng.random::<f64>() * (w_base + w_lat) < w_base {
            Point {
                x: s.sample_in_ball_b(self.r, rng),
                t: self.t1,
            }
        } else {
            Point {
                x: s.sample_on_sphere_b(self.r, rng),
                t: self.t1 + (self.t2 - self.t1) * rng.random::<f64>(),
            }
        };
        self.global(s, &local)
    }

    /// Sample from the whole topological boundary (base, lateral and top).
    pub fn sample_boundary<R: Rng + ?Sized>(&self, s: &BlockStructure, rng: &mut R) -> Point {
        if rng.random::<f64>() < 0.25 {
            let x = s.sample_in_ball_b(self.r, rng);
            self.global(s, &Point { x, t: self.t2 })
        } else {
            self.sample_parabolic_boundary(s, rng)
        }
    }
}

/// The lateral shell `dB_R(0) x [t1, t2]` translated by `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub center: Point,
    pub radius: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Shell {
    pub fn contains(&self, s: &BlockStructure, z: &Point, tol: f64) -> bool {
        let w = s.relative(&self.center, z);
        (s.norm_b(&w.x) - self.radius).abs() <= tol * self.radius.max(1.0)
            && w.t >= self.t1 - tol
            && w.t <= self.t2 + tol
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &BlockStructure, rng: &mut R) -> Point {
        let x = s.sample_on_sphere_b(self.radius, rng);
        let t = self.t1 + (self.t2 - self.t1) * rng.random::<f64>();
        s.compose(&self.center, &Point { x, t })
    }
}

/// Cylinders attached to a center `z0` and a radius `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCylinders {
    pub q1: Cylinder,
    pub q2: Cylinder,
    pub q3: Cylinder,
    pub s1: Shell,
    pub q_minus: Cylinder,
    pub q_plus: Cylinder,
}

impl NamedCylinders {
    pub fn new(z0: &Point, r: f64, k: f64, sigma_0: f64, b_b: f64) -> Result<Self> {
        let br2 = b_b * r * r;
        Ok(Self {
            q1: Cylinder::new(z0.clone(), k * r, -br2, 0.0)?,
            q2: Cylinder::new(z0.clone(), sigma_0 * r, -0.25 * br2, 0.0)?,
            q3: Cylinder::new(z0.clone(), sigma_0 * r, -br2, -0.5 * br2)?,
            s1: Shell {
                center: z0.clone(),
                radius: k * r,
                t1: -br2,
                t2: 0.0,
            },
            q_minus: Cylinder::new(z0.clone(), 0.5 * sigma_0 * r, -0.75 * br2, -0.5 * br2)?,
            q_plus: Cylinder::new(z0.clone(), 0.5 * sigma_0 * r, -0.25 * br2, 0.0)?,
        })
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Hit-or-miss estimate of `|{x : |x|_B < 1}|` over the bounding box
/// `[-1, 1]^N`, with a fixed seed and chunking.
pub fn unit_ball_measure_with(s: &BlockStructure, samples: usize, seed: u64, exec: Exec) -> MeasureEstimate {
    let counts = par::split_counts(samples, par::SAMPLING_CHUNKS);
    let n = s.dim();
    let hits = par::map_indexed(exec, counts.len(), |c| {
        let mut rng = par::stream_rng(seed, c as u64);
        let mut x = vec![0.0; n];
        let mut h = 0u64;
        for _ in 0..counts[c] {
            for v in x.iter_mut() {
                *v = 2.0 * rng.random::<f64>() - 1.0;
            }
            if s.norm_b_slice(&x) < 1.0 {
                h += 1;
            }
        }
        h
    });
    let total: u64 = hits.iter().sum();
    let box_vol = 2f64.powi(n as i32);
    let p = total as f64 / samples as f64;
    MeasureEstimate {
        value: box_vol * p,
        std_error: box_vol * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    }
}

/// Cached `|B_1(0)|` with the crate-wide seed and sample count.
pub fn unit_ball_measure(s: &BlockStructure) -> MeasureEstimate {
    static CACHE: OnceLock<Mutex<HashMap<String, MeasureEstimate>>> = OnceLock::new();
    let key = serde_json::to_string(&s.to_spec()).unwrap_or_default();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().ok().and_then(|c| c.get(&key).copied()) {
        return m;
    }
    let m = unit_ball_measure_with(s, MEASURE_SAMPLES, MEASURE_SEED, Exec::Parallel);
    if let Ok(mut c) = cache.lock() {
        c.insert(key, m);
    }
    m
}

/// Inputs of the inclusion constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionInputs {
    pub n: usize,
    pub c_nb: f64,
    pub sigma_0: f64,
    pub sigma_bar: f64,
    pub b_b: f64,
    pub k: f64,
}

/// `(C_1, C_2)` as explicit minima over the constraints collected in the
/// inclusion proof.
pub fn inclusion_constants(inp: &InclusionInputs) -> (f64, f64) {
    let n = inp.n as f64;
    let e = n + 0.5;
    let lead = 1.0 / (inp.sigma_bar * inp.b_b.sqrt());
    let corr = |num_pow: f64, denom: f64| -> f64 {
        if inp.c_nb == 0.0 {
            f64::INFINITY
        } else {
            lead * (inp.sigma_0.powf(num_pow) / (denom * inp.c_nb * inp.sigma_bar.powf((2.0 * n - 2.0) / 3.0))).powf(e)
        }
    };
    let c1 = [1.0, lead, 1.0 / (2.0 * inp.k), corr((2.0 * n + 1.0) / 3.0, 2.0)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let c2 = [
        1.0,
        1.0 / (2.0 * 2f64.sqrt()),
        lead,
        inp.sigma_0 / 8.0,
        corr((2.0 * n + 4.0) / 3.0, 8.0),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    (c1, c2)
}

/// Parameters of an inclusion check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionCheck {
    pub r_big: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub samples: usize,
    pub seed: u64,
    /// Multiplies the admissible `rho`; values above 1 probe that the check
    /// can fail.
    pub inflation: f64,
}

fn check_deltas(c: &InclusionCheck, max_delta: f64) -> Result<()> {
    if !(0.0 <= c.delta_1 && c.delta_1 < c.delta_2 && c.delta_2 <= max_delta) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= delta_1 < delta_2 <= {max_delta}, got {} and {}",
            c.delta_1, c.delta_2
        )));
    }
    if !(c.r_big > 0.0) || c.samples == 0 || !(c.inflation > 0.0) {
        return Err(Error::InvalidParameter("R, samples and inflation must be positive".into()));
    }
    Ok(())
}

/// Small-cylinder sample: half uniform, half just inside the lateral shell.
fn sample_small<R: Rng + ?Sized>(s: &BlockStructure, radius: f64, t1: f64, rng: &mut R) -> Point {
    let t = t1 * (1.0 - rng.random::<f64>());
    let x = if rng.random::<bool>() {
        s.sample_in_ball_b(radius, rng)
    } else {
        s.sample_on_sphere_b(radius * (1.0 - 1e-12), rng)
    };
    Point { x, t }
}

/// Counts points of `Q_{K rho}^{-b_B rho^2, 0}(z0)` outside
/// `Q_{R(1/2 + delta_2)}^{-b_B R^2 (1/2 + delta_2), 0}` for `z0` in the closure of
/// the `delta_1` cylinder, with `rho = C_1 R (delta_2 - delta_1)^{n + 1/2}`.
pub fn check_inclusion_i(
    s: &BlockStructure,
    inp: &InclusionInputs,
    c1: f64,
    chk: &InclusionCheck,
    exec: Exec,
) -> Result<usize> {
    check_deltas(chk, 0.5)?;
    let rr = chk.r_big;
    let b = inp.b_b;
    let rho = chk.inflation * c1 * rr * (chk.delta_2 - chk.delta_1).powf(inp.n as f64 + 0.5);
    let origin = Point::origin(s.dim());
    let inner = Cylinder::new(origin.clone(), rr * (0.5 + chk.delta_1), -b * rr * rr * (0.5 + chk.delta_1), 0.0)?;
    let outer = Cylinder::new(origin, rr * (0.5 + chk.delta_2), -b * rr * rr * (0.5 + chk.delta_2), 0.0)?;
    let counts = par::split_counts(chk.samples, par::SAMPLING_CHUNKS);
    let bad = par::map_indexed(exec, counts.len(), |c| {
        let mut rng = par::stream_rng(chk.seed, c as u64);
        let mut v = 0usize;
        for _ in 0..counts[c] {
            let z0 = if rng.random::<bool>() {
                inner.sample_interior(s, &mut rng)
            } else {
                inner.sample_boundary(s, &mut rng)
            };
            let zeta = sample_small(s, inp.k * rho, -b * rho * rho, &mut rng);
            if !outer.contains(s, &s.compose(&z0, &zeta)) {
                v += 1;
            }
        }
        v
    });
    Ok(bad.iter().sum())
}

/// The three nested cylinders of part (ii) for a parameter `d`.
fn part_ii_cylinder(s: &BlockStructure, inp: &InclusionInputs, rr: f64, d: f64) -> Result<Cylinder> {
    Cylinder::new(
        Point::origin(s.dim()),
        rr * inp.sigma_0 / 2.0 * (1.0 + d),
        -inp.b_b / 4.0 * rr * rr * (3.0 + d * d),
        -inp.b_b / 2.0 * rr * rr,
    )
}

/// Counts points of `Q_rho^{-b_B rho^2, 0}(z0)` that are outside the
/// `delta_2` cylinder or inside the `delta_1` cylinder, for `z0` on the
/// parabolic boundary of the middle cylinder, with
/// `rho = C_2 R (delta_2 - delta_1)^{n + 1/2}`.
pub fn check_inclusion_ii(
    s: &BlockStructure,
    inp: &InclusionInputs,
    c2: f64,
    chk: &InclusionCheck,
    exec: Exec,
) -> Result<usize> {
    check_deltas(chk, 1.0)?;
    let rr = chk.r_big;
    let b = inp.b_b;
    let rho = chk.inflation * c2 * rr * (chk.delta_2 - chk.delta_1).powf(inp.n as f64 + 0.5);
    let inner = part_ii_cylinder(s, inp, rr, chk.delta_1)?;
    let middle = part_ii_cylinder(s, inp, rr, 0.5 * (chk.delta_1 + chk.delta_2))?;
    let outer = part_ii_cylinder(s, inp, rr, chk.delta_2)?;
    let counts = par::split_counts(chk.samples, par::SAMPLING_CHUNKS);
    let bad = par::map_indexed(exec, counts.len(), |c| {
        let mut rng = par::stream_rng(chk.seed, c as u64);
        let mut v = 0usize;
        for _ in 0..counts[c] {
            let z0 = middle.sample_parabolic_boundary(s, &mut rng);
            let zeta = sample_small(s, rho, -b * rho * rho, &mut rng);
            let w = s.compose(&z0, &zeta);
            if !outer.contains(s, &w) || inner.contains(s, &w) {
                v += 1;
            }
        }
        v
    });
    Ok(bad.iter().sum())
}
