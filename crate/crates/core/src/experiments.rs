//! Solver campaigns that test the growth lemma, oscillation decay and the
//! Harnack inequality as necessary conditions.
//!
//! All experiments run at unit scale around the origin: a problem on
//! `Q(z0, r)` is pulled back through `w -> z0 o delta_r w`, which maps
//! solutions of `L_A` to solutions of `L_{A~}` with `A~(w) = A(z0 o delta_r w)`.
//! Inner cylinders that the outer grid cannot resolve are re-solved on their
//! own boxes with data interpolated from the enclosing solve.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsReport;
use crate::covariance::CovariancePoly;
use crate::error::{Error, Result};
use crate::fields::{make_field, CoefficientField, FieldKind, FieldSpec, Hypothesis};
use crate::geometry::Cylinder;
use crate::group::{BlockStructure, Point};
use crate::kernels::gamma0;
use crate::par::{self, Exec};
use crate::solver::{solve, solve_cylinder, BoxDomain, Observer, SolveOptions, SolveResult};

/// Discretization allowance, as a fraction of the measured sup.
pub const ALLOWANCE: f64 = 0.05;
/// Radius of the simulated outer cylinder in units of `sigma_0`.
pub const K_SIM_FACTOR: f64 = 2.0;
pub const DYADIC_LEVELS: usize = 4;
/// Gain used instead of `eta` in adversarial growth runs.
pub const ADVERSARIAL_ETA: f64 = 100.0;
pub const DEFAULT_LEVEL: f64 = 0.5;
const BUMPS: usize = 4;

/// Everything an experiment needs besides the field and the data.
#[derive(Debug, Clone)]
pub struct Setup {
    pub structure: BlockStructure,
    pub constants: ConstantsReport,
    pub resolution: usize,
    pub exec: Exec,
    /// Replace the theorem constants by values that should make checks fail.
    pub adversarial: bool,
}

impl Setup {
    pub fn k_sim(&self) -> f64 {
        K_SIM_FACTOR * self.constants.sigma_0
    }

    /// `Q^1 = Q_{K_sim}^{-b_B, 0}(0)` at unit scale.
    pub fn outer(&self, rho: f64) -> Result<Cylinder> {
        let b = self.constants.b_b;
        Cylinder::new(Point::origin(self.structure.dim()), self.k_sim() * rho, -b * rho * rho, 0.0)
    }

    fn cyl(&self, radius: f64, t1: f64, t2: f64) -> Result<Cylinder> {
        let b = self.constants.b_b;
        Cylinder::new(Point::origin(self.structure.dim()), radius, t1 * b, t2 * b)
    }

    fn opts(&self, observers: Vec<Observer>, keep_history: bool) -> SolveOptions {
        SolveOptions {
            resolution: self.resolution,
            observers,
            keep_history,
            exec: self.exec,
        }
    }
}

/// `A~(w) = A(z0 o delta_r w)`.
pub fn pullback(field: &CoefficientField, st: &BlockStructure, z0: &Point, r: f64) -> Result<CoefficientField> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveDilation(r));
    }
    if field.is_constant() || (r == 1.0 && z0.x.iter().all(|v| *v == 0.0) && z0.t == 0.0) {
        return Ok(field.clone());
    }
    let f = field.clone();
    let (st2, z0) = (st.clone(), z0.clone());
    Ok(CoefficientField::custom(st, field.lambda(), field.big_lambda(), field.modulus(), move |w| {
        let dw = st2.dilate(r, w).expect("r checked positive");
        f.eval_block(&st2.compose(&z0, &dw))
    }))
}

/// Solves on the box covering `cyl` with data taken from `parent`.
pub fn zoom(
    parent: &SolveResult,
    field: &CoefficientField,
    cyl: &Cylinder,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if parent.history.is_none() {
        return Err(Error::InvalidParameter("zoom needs the parent history".into()));
    }
    let data = |z: &Point| parent.interpolate(z).unwrap_or(f64::NAN);
    solve_cylinder(field, parent.structure(), cyl, &data, opts)
}

/// Nonnegative sum of anisotropic Gaussian bumps scaled to a cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpData {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
    pub heights: Vec<f64>,
    pub scales: Vec<f64>,
    pub time_rate: f64,
}

impl BumpData {
    pub fn random(st: &BlockStructure, cyl: &Cylinder, seed: u64) -> Self {
        let mut rng = par::stream_rng(seed, 0xB0);
        let scales = st.ball_half_widths(cyl.r);
        let n = st.dim();
        let mut centers = Vec::new();
        let mut widths = Vec::new();
        let mut heights = Vec::new();
        for _ in 0..BUMPS {
            centers.push((0..n).map(|k| scales[k] * rng.random_range(-1.2..1.2)).collect());
            widths.push(rng.random_range(0.3..0.8));
            heights.push(rng.random_range(0.1..1.0));
        }
        Self {
            centers,
            widths,
            heights,
            scales,
            time_rate: rng.random_range(-1.0..1.0) / (cyl.t2 - cyl.t1),
        }
    }

    pub fn eval(&self, z: &Point) -> f64 {
        let mut v = 0.0;
        for ((c, w), h) in self.centers.iter().zip(&self.widths).zip(&self.heights) {
            let d2: f64 = c
                .iter()
                .zip(z.x.iter())
                .zip(&self.scales)
                .map(|((c, x), s)| ((x - c) / s).powi(2))
                .sum();
            v += h * (-d2 / (w * w)).exp();
        }
        v * (1.0 + 0.5 * (self.time_rate * z.t).tanh())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub level: f64,
    /// `|Q^3 \ D| / |Q^3|` by node counting.
    pub missing_fraction: f64,
    pub eta: f64,
    pub ln_eta: f64,
    pub sup_d: f64,
    pub sup_d_q2: f64,
    pub rhs: f64,
    pub allowance: f64,
    pub slack: f64,
    pub vacuous: bool,
    pub holds: bool,
    pub nonnegative: bool,
}

/// Growth lemma for `v = u - l`, `D = {v > 0}`, with `u` driven by data
/// that vanish on half of the lateral boundary and `l = level sup_{Q^2} u`:
/// `sup_D v >= (1 + eta |Q^3 \ D|/|Q^3|) sup_{D n Q^2} v`.
pub fn growth_experiment(setup: &Setup, field: &CoefficientField, z0: &Point, r: f64, level: f64) -> Result<GrowthReport> {
    let st = &setup.structure;
    let f = pullback(field, st, z0, r)?;
    let q1 = setup.outer(1.0)?;
    let s0 = setup.constants.sigma_0;
    let q2 = setup.cyl(s0, -0.25, 0.0)?;
    let q3 = setup.cyl(s0, -1.0, -0.5)?;
    let k = setup.k_sim();
    let data = move |z: &Point| (z.x[0] / k).max(0.0);
    let parent = solve_cylinder(&f, st, &q1, &data, &setup.opts(vec![Observer::new("q1", q1.clone())], true))?;
    let inner = setup.cyl(s0, -1.0, 0.0)?;
    let child = zoom(&parent, &f, &inner, &setup.opts(Vec::new(), true))?;
    let o1 = parent.observer("q1").expect("registered");
    let sup_q2 = child.observe(&Observer::new("q2", q2.clone())).expect("history kept").sup;
    // the level is set relative to sup over Q^2 so that D meets Q^2
    let ell = level * sup_q2.max(0.0);
    let o2 = child.observe(&Observer::new("q2", q2).with_level(ell)).expect("history kept");
    let o3 = child.observe(&Observer::new("q3", q3).with_level(ell)).expect("history kept");
    let frac = if o3.nodes == 0 { 0.0 } else { o3.below_level as f64 / o3.nodes as f64 };
    let (eta, ln_eta) = if setup.adversarial {
        (ADVERSARIAL_ETA, ADVERSARIAL_ETA.ln())
    } else {
        (setup.constants.eta.unwrap_or(0.0), setup.constants.ln_eta)
    };
    let sup_d = o1.sup - ell;
    let sup_d_q2 = o2.sup - ell;
    let vacuous = sup_d_q2 <= 0.0;
    let rhs = (1.0 + eta * frac) * sup_d_q2.max(0.0);
    let allowance = ALLOWANCE * o1.sup.abs();
    let slack = sup_d - rhs + allowance;
    Ok(GrowthReport {
        level,
        missing_fraction: frac,
        eta,
        ln_eta,
        sup_d,
        sup_d_q2,
        rhs,
        allowance,
        slack,
        vacuous,
        holds: vacuous || slack >= 0.0,
        nonnegative: parent.nonnegative && child.nonnegative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationLevel {
    pub rho: f64,
    pub sup: f64,
    pub inf: f64,
    pub osc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub levels: Vec<OscillationLevel>,
    /// `osc_k / osc_{k+1}`; infinite when the finer oscillation vanishes.
    pub ratios: Vec<f64>,
    pub p: f64,
    pub decay_holds: Vec<bool>,
    pub alpha: f64,
    pub alpha_emp: Option<f64>,
    pub holder_holds: bool,
    pub holds: bool,
}

/// Least-squares slope of `ln osc` against `ln rho` over levels with
/// positive oscillation.
pub fn holder_fit(levels: &[OscillationLevel]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.osc > 0.0)
        .map(|l| (l.rho.ln(), l.osc.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "{} usable dyadic levels, at least 3 are needed for a fit",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(num / den)
}

/// Oscillation on `Q^1_{2^-k}` for `k < DYADIC_LEVELS`, each level re-solved
/// on its own box.
pub fn oscillation_experiment(
    setup: &Setup,
    field: &CoefficientField,
    z0: &Point,
    r: f64,
    data: &(dyn Fn(&Point) -> f64 + Sync),
) -> Result<OscillationReport> {
    let st = &setup.structure;
    let f = pullback(field, st, z0, r)?;
    let mut levels = Vec::new();
    let mut prev: Option<SolveResult> = None;
    for k in 0..DYADIC_LEVELS {
        let rho = 0.5f64.powi(k as i32);
        let cyl = setup.outer(rho)?;
        let keep = k + 1 < DYADIC_LEVELS;
        let opts = setup.opts(vec![Observer::new("level", cyl.clone())], keep);
        let res = match &prev {
            None => solve_cylinder(&f, st, &cyl, data, &opts)?,
            Some(p) => zoom(p, &f, &cyl, &opts)?,
        };
        let o = res.observer("level").expect("registered");
        levels.push(OscillationLevel { rho, sup: o.sup, inf: o.inf, osc: o.osc() });
        prev = Some(res);
    }
    let p = if setup.adversarial { ADVERSARIAL_ETA } else { setup.constants.p };
    let mut ratios = Vec::new();
    let mut decay_holds = Vec::new();
    for w in levels.windows(2) {
        ratios.push(if w[1].osc > 0.0 { w[0].osc / w[1].osc } else { f64::INFINITY });
        let allowance = ALLOWANCE * w[0].sup.abs().max(w[0].inf.abs());
        decay_holds.push(w[0].osc >= p * w[1].osc - allowance);
    }
    let alpha = setup.constants.alpha.unwrap_or(0.0);
    let alpha_emp = holder_fit(&levels).ok();
    let holder_holds = match alpha_emp {
        Some(a) => a >= alpha,
        // every level but at most two is flat: nothing to fit, nothing violated
        None => levels.iter().all(|l| l.osc >= 0.0),
    };
    Ok(OscillationReport {
        holds: holder_holds && decay_holds.iter().all(|h| *h),
        levels,
        ratios,
        p,
        decay_holds,
        alpha,
        alpha_emp,
        holder_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub sup_q_minus: f64,
    pub inf_q_plus: f64,
    pub ratio: f64,
    pub ln_ratio: f64,
    pub ln_c_harnack: f64,
    /// `ln(C inf + allowance) - ln sup`.
    pub log_slack: f64,
    /// `inf = 0` while `sup > 0`: strong positivity failed on the grid.
    pub degenerate_inf: bool,
    pub nonnegative: bool,
    pub holds: bool,
}

/// Geometry for the Harnack check at unit scale: `Q^-` and `Q^+`.
pub fn harnack_cylinders(setup: &Setup) -> Result<(Cylinder, Cylinder)> {
    let h = 0.5 * setup.constants.sigma_0;
    Ok((setup.cyl(h, -0.75, -0.5)?, setup.cyl(h, -0.25, 0.0)?))
}

/// `sup_{Q^-} u <= C inf_{Q^+} u` for the solution with data `data` (unit
/// coordinates) on the box covering `Q^1`.
pub fn harnack_experiment(
    setup: &Setup,
    field: &CoefficientField,
    z0: &Point,
    r: f64,
    data: &(dyn Fn(&Point) -> f64 + Sync),
    ln_c: f64,
) -> Result<HarnackReport> {
    let st = &setup.structure;
    let f = pullback(field, st, z0, r)?;
    let q1 = setup.outer(1.0)?;
    let (qm, qp) = harnack_cylinders(setup)?;
    let parent = solve_cylinder(&f, st, &q1, data, &setup.opts(Vec::new(), true))?;
    let cm = zoom(&parent, &f, &qm, &setup.opts(vec![Observer::new("q_minus", qm.clone())], false))?;
    let cp = zoom(&parent, &f, &qp, &setup.opts(vec![Observer::new("q_plus", qp.clone())], false))?;
    let sup = cm.observer("q_minus").expect("registered").sup;
    let inf = cp.observer("q_plus").expect("registered").inf;
    let ln_c = if setup.adversarial { 0.0 } else { ln_c };
    Ok(harnack_verdict(sup, inf, ln_c, parent.nonnegative && cm.nonnegative && cp.nonnegative))
}

/// Log-space comparison `sup <= C inf + ALLOWANCE sup`.
pub fn harnack_verdict(sup: f64, inf: f64, ln_c: f64, nonnegative: bool) -> HarnackReport {
    let allowance = ALLOWANCE * sup.abs();
    let rhs_ln = if inf > 0.0 {
        let a = ln_c + inf.ln();
        if allowance > 0.0 {
            let b = allowance.ln();
            a.max(b) + (-(a - b).abs()).exp().ln_1p()
        } else {
            a
        }
    } else if allowance > 0.0 {
        allowance.ln()
    } else {
        f64::NEG_INFINITY
    };
    let sup_ln = if sup > 0.0 { sup.ln() } else { f64::NEG_INFINITY };
    let holds = sup <= 0.0 || rhs_ln >= sup_ln;
    let log_slack = if sup > 0.0 { rhs_ln - sup_ln } else { f64::INFINITY };
    HarnackReport {
        sup_q_minus: sup,
        inf_q_plus: inf,
        ratio: sup / inf,
        ln_ratio: sup_ln - if inf > 0.0 { inf.ln() } else { f64::NEG_INFINITY },
        ln_c_harnack: ln_c,
        log_slack,
        degenerate_inf: inf <= 0.0 && sup > 0.0,
        nonnegative,
        holds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackRun {
    pub field_seed: u64,
    pub data_seed: u64,
    pub report: HarnackReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackCampaign {
    pub hypothesis: Hypothesis,
    pub r: f64,
    pub runs: Vec<HarnackRun>,
    pub violations: usize,
    pub degenerate: usize,
    pub max_ln_ratio: f64,
    pub min_log_slack: f64,
}

impl HarnackCampaign {
    fn collect(hypothesis: Hypothesis, r: f64, runs: Vec<HarnackRun>) -> Self {
        Self {
            hypothesis,
            r,
            violations: runs.iter().filter(|x| !x.report.holds).count(),
            degenerate: runs.iter().filter(|x| x.report.degenerate_inf).count(),
            max_ln_ratio: runs.iter().map(|x| x.report.ln_ratio).fold(f64::NEG_INFINITY, f64::max),
            min_log_slack: runs.iter().map(|x| x.report.log_slack).fold(f64::INFINITY, f64::min),
            runs,
        }
    }
}

fn run_grid(
    setup: &Setup,
    fields: &[(u64, CoefficientField)],
    data_sets: usize,
    seed: u64,
    r: f64,
    ln_c: f64,
) -> Result<Vec<HarnackRun>> {
    let q1 = setup.outer(1.0)?;
    let jobs: Vec<(usize, u64)> = (0..fields.len())
        .flat_map(|i| (0..data_sets as u64).map(move |d| (i, seed.wrapping_add(d))))
        .collect();
    // distinct solves are independent; each solve runs sequentially inside
    let inner = Setup { exec: Exec::Sequential, ..setup.clone() };
    let out = par::map_indexed(setup.exec, jobs.len(), |j| {
        let (i, ds) = jobs[j];
        let bump = BumpData::random(&setup.structure, &q1, ds);
        let origin = Point::origin(setup.structure.dim());
        harnack_experiment(&inner, &fields[i].1, &origin, r, &|z| bump.eval(z), ln_c).map(|report| HarnackRun {
            field_seed: fields[i].0,
            data_seed: ds,
            report,
        })
    });
    out.into_iter().collect()
}

/// H1 campaign: `fields` random checkerboard fields times `data_sets`
/// random bump data.
pub fn harnack_campaign_h1(setup: &Setup, fields: usize, data_sets: usize, seed: u64) -> Result<HarnackCampaign> {
    let c = &setup.constants;
    let fs: Vec<(u64, CoefficientField)> = (0..fields as u64)
        .map(|i| {
            let fseed = seed.wrapping_mul(31).wrapping_add(i);
            let spec = FieldSpec::new(FieldKind::Checkerboard, c.lambda, c.big_lambda).with_seed(fseed);
            make_field(&spec, &setup.structure, Some(Hypothesis::H1)).map(|f| (fseed, f))
        })
        .collect::<Result<_>>()?;
    let runs = run_grid(setup, &fs, data_sets, seed, 1.0, c.ln_c_harnack)?;
    Ok(HarnackCampaign::collect(Hypothesis::H1, 1.0, runs))
}

/// Small-radius H2 case: the given field at `r = r_0` from an H2 pipeline.
pub fn harnack_campaign_h2(setup: &Setup, field: &CoefficientField, data_sets: usize, seed: u64) -> Result<HarnackCampaign> {
    let r0 = setup
        .constants
        .r_0
        .ok_or_else(|| Error::InvalidParameter("constants carry no H2 radius r_0".into()))?;
    harnack_campaign(setup, field, r0, data_sets, seed)
}

/// One field, `data_sets` random bump data, radius `r`.
pub fn harnack_campaign(
    setup: &Setup,
    field: &CoefficientField,
    r: f64,
    data_sets: usize,
    seed: u64,
) -> Result<HarnackCampaign> {
    let c = &setup.constants;
    let runs = run_grid(setup, &[(0, field.clone())], data_sets, seed, r, c.ln_c_harnack)?;
    Ok(HarnackCampaign::collect(c.hypothesis, r, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub pole_time: f64,
    pub resolutions: Vec<usize>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

pub const CONVERGENCE_POLE_TIME: f64 = -0.5;

/// `A = I` on `[-1, 1]^N x [0, 1/4]` with `Gamma_0` data: discrete `L_inf`
/// error at the final time for each resolution.
pub fn convergence_study(st: &BlockStructure, resolutions: &[usize], exec: Exec) -> Result<ConvergenceReport> {
    let n = st.dim();
    let p0 = st.p0();
    let field = CoefficientField::constant(st, nalgebra::DMatrix::identity(p0, p0), 1.0, 1.0)?;
    let cp = CovariancePoly::identity(st);
    let pole = Point::new(vec![0.0; n], CONVERGENCE_POLE_TIME);
    let exact = |z: &Point| gamma0(&cp, &st.relative(&pole, z));
    let dom = BoxDomain { lo: vec![-1.0; n], hi: vec![1.0; n], t1: 0.0, t2: 0.25 };
    let mut errors = Vec::new();
    for &res in resolutions {
        let r = solve(&field, st, &dom, &exact, &SolveOptions { resolution: res, exec, ..Default::default() })?;
        let err = (0..r.u.len())
            .map(|k| (r.u[k] - exact(&Point { x: r.grid.coords(k), t: dom.t2 })).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let orders = errors
        .windows(2)
        .zip(resolutions.windows(2))
        .map(|(e, r)| (e[0] / e[1]).ln() / ((r[1] - 1) as f64 / (r[0] - 1) as f64).ln())
        .collect();
    Ok(ConvergenceReport {
        pole_time: CONVERGENCE_POLE_TIME,
        resolutions: resolutions.to_vec(),
        errors,
        orders,
    })
}
