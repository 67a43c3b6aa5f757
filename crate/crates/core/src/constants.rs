//! The chain of structural constants behind the growth lemma, the
//! oscillation decay and the Harnack inequality, assembled into one report.
//!
//! Several constants are far below the smallest positive `f64` for any
//! realistic structure (the lower kernel bound carries `exp(-c_2 / b_B^{2n+1})`
//! with `c_2 / b_B^{2n+1}` of order `10^6` for the prototype), so they are
//! carried as natural logarithms. The report has an `ln_` field for each of
//! them next to a value field that is `null` when the value does not fit.

use serde::{Deserialize, Serialize};

use crate::covariance::{compute_b_b, eigen_bounds};
use crate::error::{Error, Result};
use crate::fields::{h1_threshold, Hypothesis, Modulus};
use crate::geometry::{inclusion_constants, unit_ball_measure, InclusionInputs};
use crate::group::BlockStructure;
use crate::potentials::{strip_bound_uniform, StripBound};

/// Margin of `K` above its strict lower bound.
pub const K_MARGIN: f64 = 1e-6;
/// Ratios this close to `1 + 2/Q` are flagged.
pub const H1_FLAG_DISTANCE: f64 = 1e-3;

/// `(s, beta)` of the barrier kernel, and `s_0` for the continuity hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelChoice {
    pub s: f64,
    pub beta: f64,
    pub s0: Option<f64>,
}

pub fn kernel_choice(hyp: Hypothesis, lambda: f64, big_lambda: f64, q: f64) -> Result<KernelChoice> {
    if !(lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite()) {
        return Err(Error::BadEllipticity { lambda, big_lambda });
    }
    match hyp {
        Hypothesis::H1 => {
            let threshold = 1.0 + 2.0 / q;
            let ratio = big_lambda / lambda;
            if ratio >= threshold {
                return Err(Error::H1Violated { ratio, threshold });
            }
            Ok(KernelChoice { s: ratio, beta: lambda, s0: None })
        }
        Hypothesis::H2 => {
            let s0 = 1.0 / q;
            Ok(KernelChoice {
                s: 1.0 + s0,
                beta: 2.0 / (2.0 + s0),
                s0: Some(s0),
            })
        }
    }
}

/// `(K_1, c_1)` of the upper kernel bound.
pub fn upper_bound_constants(big_lambda_1: f64, sigma_bar: f64, b_b: f64, beta: f64, s: f64, q: f64) -> (f64, f64) {
    let k1 = (8.0 * sigma_bar).max(2.0 * sigma_bar * (b_b * big_lambda_1 * beta * s * q).sqrt());
    let c1 = 1.0 / (8.0 * big_lambda_1 * sigma_bar * sigma_bar * beta);
    (k1, c1)
}

/// `c_2` of the lower kernel bound.
pub fn lower_bound_constant(lambda_1: f64, beta: f64, n: usize) -> f64 {
    5.0 / (2.0 * lambda_1 * beta) * 4f64.powi(2 * n as i32 + 1)
}

/// `K = (1 + 1e-6) sqrt(max{c_2 / (c_1 b_B^{2n}), K_1^2})`.
pub fn choose_k(c1: f64, c2: f64, k1: f64, b_b: f64, n: usize) -> f64 {
    let a = c2 / (c1 * b_b.powi(2 * n as i32));
    (1.0 + K_MARGIN) * a.max(k1 * k1).sqrt()
}

/// `ln(e^{-lo} - e^{-hi})` for `lo < hi`.
fn ln_exp_diff(lo: f64, hi: f64) -> f64 {
    -lo + (-(-(hi - lo)).exp_m1()).ln()
}

/// `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(ln(1 + e^{ln_x}))` for `x > 0`.
fn ln_ln1p(ln_x: f64) -> f64 {
    if ln_x < -30.0 {
        // ln(1+x) = x (1 - x/2 + ...) and x < 1e-13
        ln_x + (-0.5 * ln_x.exp()).ln_1p()
    } else {
        softplus(ln_x).ln()
    }
}

/// `exp(ln)` when it is a normal positive `f64`.
pub fn representable(ln: f64) -> Option<f64> {
    let v = ln.exp();
    (v.is_normal() && v.is_finite()).then_some(v)
}

/// Constants of the growth lemma and the oscillation decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub ln_eta_bar: f64,
    pub ln_eta: f64,
    pub theta: f64,
    /// `ln(P - 1) = ln(eta / 4)`.
    pub ln_p_minus_1: f64,
    pub ln_alpha: f64,
}

impl GrowthConstants {
    pub fn p(&self) -> f64 {
        1.0 + self.ln_p_minus_1.exp()
    }
}

pub fn growth_constants(
    mu_lower: f64,
    mu_upper: f64,
    c_strip: f64,
    b_b: f64,
    s: f64,
    q: f64,
    q3_measure: f64,
    k: f64,
    sigma_0: f64,
) -> Result<GrowthConstants> {
    if !(mu_lower < mu_upper) {
        return Err(Error::InconsistentConstant(format!(
            "mu_lower = {mu_lower} must be below mu_upper = {mu_upper}"
        )));
    }
    let ln_eta_bar = ln_exp_diff(mu_lower, mu_upper) - c_strip.ln() - 0.5 * s * q * b_b.ln();
    let ln_eta = ln_eta_bar + q3_measure.ln();
    let theta = k / sigma_0;
    if theta < 2.0 {
        return Err(Error::InconsistentConstant(format!("theta = {theta} < 2")));
    }
    let ln_p_minus_1 = ln_eta - 4f64.ln();
    let ln_alpha = ln_ln1p(ln_p_minus_1) - theta.ln().ln();
    Ok(GrowthConstants {
        ln_eta_bar,
        ln_eta,
        theta,
        ln_p_minus_1,
        ln_alpha,
    })
}

/// `m` and `delta` of the measure-to-point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureToPoint {
    /// `m` itself when it is below `2^53`.
    pub m: Option<f64>,
    pub ln_m: f64,
    pub ln_delta: f64,
}

/// `m` = smallest integer with `(1 + eta/2)^m > M`, and
/// `delta = C_1^{Q+2} |Q^3_1| / (2 (2m)^{(n+1/2)(Q+2)})`.
pub fn measure_to_point_constants(ln_eta: f64, big_m: f64, c1_incl: f64, q3_measure: f64, n: usize, q: f64) -> Result<MeasureToPoint> {
    if !(big_m > 1.0) {
        return Err(Error::InvalidParameter(format!("M = {big_m} must exceed 1")));
    }
    let ln_ln_step = ln_ln1p(ln_eta - 2f64.ln());
    let ln_ratio = big_m.ln().ln() - ln_ln_step;
    let (m, ln_m) = if ln_ratio < 53.0 * 2f64.ln() {
        let step = (0.5 * ln_eta.exp()).ln_1p();
        let mut m = (big_m.ln() / step).floor().max(0.0) + 1.0;
        // strict inequality and minimality, guarding against rounding
        while m > 1.0 && (m - 1.0) * step > big_m.ln() {
            m -= 1.0;
        }
        while m * step <= big_m.ln() {
            m += 1.0;
        }
        (Some(m), m.ln())
    } else {
        (None, ln_ratio)
    };
    let e = (n as f64 + 0.5) * (q + 2.0);
    let ln_delta = -2f64.ln() + (q + 2.0) * c1_incl.ln() + q3_measure.ln() - e * (2f64.ln() + ln_m);
    Ok(MeasureToPoint { m, ln_m, ln_delta })
}

/// Logarithms of the Harnack assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackConstants {
    pub ln_eps0_case: f64,
    pub ln_c_hat_big: f64,
    pub ln_c_hat_small: f64,
    pub ln_c_harnack: f64,
}

/// `eps_0 = (C_2 / 2^{n+1/2})^{Q+2} delta`, `C^ = eta eps_0 / |Q^3_1|`,
/// `c^ = eta C_2^{Q+2} delta 2^{-2(n+1/2)(Q+2)} / |Q^3_1|` and
/// `C = 2 max{(1 + C^)/C^, (1 + c^)/c^}`.
pub fn harnack_constant(ln_eta: f64, ln_delta: f64, c2_incl: f64, q3_measure: f64, n: usize, q: f64) -> HarnackConstants {
    let h = n as f64 + 0.5;
    let ln2 = 2f64.ln();
    let ln_eps0_case = (q + 2.0) * (c2_incl.ln() - h * ln2) + ln_delta;
    let ln_c_hat_big = ln_eta + ln_eps0_case - q3_measure.ln();
    let ln_c_hat_small = ln_eta + (q + 2.0) * c2_incl.ln() + ln_delta - 2.0 * h * (q + 2.0) * ln2 - q3_measure.ln();
    // (1 + x)/x = 1 + 1/x is decreasing, so the max sits at the smaller of the two
    let ln_min = ln_c_hat_big.min(ln_c_hat_small);
    let ln_c_harnack = ln2 + softplus(-ln_min);
    HarnackConstants {
        ln_eps0_case,
        ln_c_hat_big,
        ln_c_hat_small,
        ln_c_harnack,
    }
}

/// `r_0 = (eps_0 / K) min{1, 4^{n+1/2} / (C_1 C_2)}`.
pub fn h2_radius(eps0: f64, k: f64, c1_incl: f64, c2_incl: f64, n: usize) -> Result<f64> {
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps0 = {eps0} must lie in (0, 1]")));
    }
    Ok(eps0 / k * 1f64.min(4f64.powf(n as f64 + 0.5) / (c1_incl * c2_incl)))
}

/// Inputs of the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineInput {
    pub structure: BlockStructure,
    pub hypothesis: Hypothesis,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Modulus of continuity of the field, required under H2.
    pub modulus: Option<Modulus>,
}

/// Every constant of the chain. Serialized flat; names are ASCII spellings of
/// the usual symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub hypothesis: Hypothesis,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(rename = "N")]
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub sigma_0: f64,
    pub sigma_bar: f64,
    #[serde(rename = "b_B")]
    pub b_b: f64,
    pub sigma_star: f64,
    #[serde(rename = "lambda_I")]
    pub lambda_i: f64,
    #[serde(rename = "Lambda_I")]
    pub big_lambda_i: f64,
    pub lambda_1: f64,
    #[serde(rename = "Lambda_1")]
    pub big_lambda_1: f64,
    pub s: f64,
    pub beta: f64,
    pub c_1: f64,
    pub c_2: f64,
    #[serde(rename = "K_1")]
    pub k_1: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub mu_upper: f64,
    pub mu_lower: f64,
    #[serde(rename = "C_strip")]
    pub c_strip: f64,
    pub c_strip_gaussian: f64,
    pub c_strip_time: f64,
    pub eta_bar: Option<f64>,
    pub ln_eta_bar: f64,
    pub eta: Option<f64>,
    pub ln_eta: f64,
    pub theta: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "ln_P_minus_1")]
    pub ln_p_minus_1: f64,
    pub alpha: Option<f64>,
    pub ln_alpha: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub m: Option<f64>,
    pub ln_m: f64,
    pub delta: Option<f64>,
    pub ln_delta: f64,
    pub eps0_case: Option<f64>,
    pub ln_eps0_case: f64,
    #[serde(rename = "C_hat")]
    pub c_hat_big: Option<f64>,
    #[serde(rename = "ln_C_hat")]
    pub ln_c_hat_big: f64,
    pub c_hat: Option<f64>,
    pub ln_c_hat: f64,
    #[serde(rename = "C_harnack")]
    pub c_harnack: Option<f64>,
    #[serde(rename = "ln_C_harnack")]
    pub ln_c_harnack: f64,
    #[serde(rename = "C_1")]
    pub c1_incl: f64,
    #[serde(rename = "C_2")]
    pub c2_incl: f64,
    pub s_0: Option<f64>,
    #[serde(rename = "eps0_H2")]
    pub eps0_h2: Option<f64>,
    pub r_0: Option<f64>,
    #[serde(rename = "Q3_1_measure")]
    pub q3_measure: f64,
    #[serde(rename = "B1_measure")]
    pub b1_measure: f64,
    #[serde(rename = "B1_measure_std_error")]
    pub b1_measure_std_error: f64,
    pub h1_ratio: f64,
    pub h1_threshold: f64,
    pub near_h1_threshold: bool,
    pub invariants_hold: bool,
}

/// One invariant of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub holds: bool,
}

impl ConstantsReport {
    /// Re-verifies every inequality the chain relies on.
    pub fn invariant_checks(&self) -> Vec<InvariantCheck> {
        let n2 = 2 * self.n as i32;
        let mut out = Vec::new();
        let mut push = |name: &str, holds: bool| {
            out.push(InvariantCheck { name: name.into(), holds });
        };
        push("K > K_1", self.k > self.k_1);
        push(
            "K^2 > c_2 / (c_1 b_B^{2n})",
            self.k * self.k > self.c_2 / (self.c_1 * self.b_b.powi(n2)),
        );
        push("K > sigma_0", self.k > self.sigma_0);
        push("mu_upper > mu_lower", self.mu_upper > self.mu_lower);
        push("b_B <= (sigma_0/sigma_bar)^2", self.b_b <= (self.sigma_0 / self.sigma_bar).powi(2));
        push("b_B <= sigma_star", self.b_b <= self.sigma_star);
        push("eta > 0", self.ln_eta.is_finite());
        push("eta_bar > 0", self.ln_eta_bar.is_finite());
        push("theta >= 2", self.theta >= 2.0);
        push("P > 1", self.ln_p_minus_1.is_finite());
        push("alpha > 0", self.ln_alpha.is_finite());
        push("alpha < 1", self.ln_alpha < 0.0);
        push("M > 1", self.big_m > 1.0);
        push("m >= 1", self.ln_m >= 0.0);
        push("delta > 0", self.ln_delta.is_finite());
        push("C_harnack >= 2", self.ln_c_harnack >= 2f64.ln());
        let pos = [
            self.sigma_0,
            self.sigma_bar,
            self.b_b,
            self.lambda_1,
            self.big_lambda_1,
            self.c_1,
            self.c_2,
            self.k_1,
            self.c_strip,
            self.c1_incl,
            self.c2_incl,
            self.q3_measure,
            self.b1_measure,
        ];
        push("structural constants positive and finite", pos.iter().all(|v| *v > 0.0 && v.is_finite()));
        if let Some(r0) = self.r_0 {
            push("r_0 in (0, 1)", r0 > 0.0 && r0 < 1.0);
        }
        out
    }
}

/// Runs the whole chain.
pub fn run_pipeline(inp: &PipelineInput) -> Result<ConstantsReport> {
    let st = &inp.structure;
    let q = st.qf();
    let n = st.n();
    let (lambda, big_lambda) = (inp.lambda, inp.big_lambda);
    let choice = kernel_choice(inp.hypothesis, lambda, big_lambda, q)?;

    let sb = st.sigma_bounds()?;
    let bb = compute_b_b(st, &sb);
    let b_b = bb.b_b;
    let eig = eigen_bounds(st, &sb, b_b, lambda, big_lambda)?;

    let (k_1, c_1) = upper_bound_constants(eig.big_lambda_1, sb.sigma_bar, b_b, choice.beta, choice.s, q);
    let c_2 = lower_bound_constant(eig.lambda_1, choice.beta, n);
    let k = choose_k(c_1, c_2, k_1, b_b, n);
    let mu_upper = c_1 * k * k / b_b;
    let mu_lower = c_2 / b_b.powi(2 * n as i32 + 1);

    // H1 kernels freeze A_0 = I_0; H2 kernels freeze A(z_0) <= Lambda I_0
    let lambda_for_strip = match inp.hypothesis {
        Hypothesis::H1 => 1.0,
        Hypothesis::H2 => big_lambda,
    };
    let strip: StripBound = strip_bound_uniform(st, choice.s, choice.beta, lambda_for_strip, b_b)?;

    let ball = unit_ball_measure(st);
    let q3_measure = ball.value * sb.sigma_0.powf(q) * 0.5 * b_b;

    let g = growth_constants(mu_lower, mu_upper, strip.value, b_b, choice.s, q, q3_measure, k, sb.sigma_0)?;

    let (c1_incl, c2_incl) = inclusion_constants(&InclusionInputs {
        n,
        c_nb: st.c_nb(),
        sigma_0: sb.sigma_0,
        sigma_bar: sb.sigma_bar,
        b_b,
        k,
    });
    let big_m = 2f64.powf(1.0 + (n as f64 + 0.5) * (q + 2.0));
    let mp = measure_to_point_constants(g.ln_eta, big_m, c1_incl, q3_measure, n, q)?;
    let h = harnack_constant(g.ln_eta, mp.ln_delta, c2_incl, q3_measure, n, q);

    let (eps0_h2, r_0) = match inp.hypothesis {
        Hypothesis::H1 => (None, None),
        Hypothesis::H2 => {
            let s0 = choice.s0.expect("H2 choice carries s0");
            let modulus = inp
                .modulus
                .ok_or_else(|| Error::InvalidParameter("H2 needs a modulus of continuity".into()))?;
            let eps0 = modulus.largest_eps_below(s0 / (2.0 + s0) * lambda);
            (Some(eps0), Some(h2_radius(eps0, k, c1_incl, c2_incl, n)?))
        }
    };

    let ratio = big_lambda / lambda;
    let threshold = h1_threshold(st);
    let mut report = ConstantsReport {
        hypothesis: inp.hypothesis,
        lambda,
        big_lambda,
        dim: st.dim(),
        n,
        q: st.q(),
        sigma_0: sb.sigma_0,
        sigma_bar: sb.sigma_bar,
        b_b,
        sigma_star: bb.sigma_star,
        lambda_i: eig.lambda_i,
        big_lambda_i: eig.big_lambda_i,
        lambda_1: eig.lambda_1,
        big_lambda_1: eig.big_lambda_1,
        s: choice.s,
        beta: choice.beta,
        c_1,
        c_2,
        k_1,
        k,
        mu_upper,
        mu_lower,
        c_strip: strip.value,
        c_strip_gaussian: strip.gaussian,
        c_strip_time: strip.time,
        eta_bar: representable(g.ln_eta_bar),
        ln_eta_bar: g.ln_eta_bar,
        eta: representable(g.ln_eta),
        ln_eta: g.ln_eta,
        theta: g.theta,
        p: g.p(),
        ln_p_minus_1: g.ln_p_minus_1,
        alpha: representable(g.ln_alpha),
        ln_alpha: g.ln_alpha,
        big_m,
        m: mp.m,
        ln_m: mp.ln_m,
        delta: representable(mp.ln_delta),
        ln_delta: mp.ln_delta,
        eps0_case: representable(h.ln_eps0_case),
        ln_eps0_case: h.ln_eps0_case,
        c_hat_big: representable(h.ln_c_hat_big),
        ln_c_hat_big: h.ln_c_hat_big,
        c_hat: representable(h.ln_c_hat_small),
        ln_c_hat: h.ln_c_hat_small,
        c_harnack: representable(h.ln_c_harnack),
        ln_c_harnack: h.ln_c_harnack,
        c1_incl,
        c2_incl,
        s_0: choice.s0,
        eps0_h2,
        r_0,
        q3_measure,
        b1_measure: ball.value,
        b1_measure_std_error: ball.std_error,
        h1_ratio: ratio,
        h1_threshold: threshold,
        near_h1_threshold: inp.hypothesis == Hypothesis::H1 && threshold - ratio < H1_FLAG_DISTANCE,
        invariants_hold: false,
    };
    report.invariants_hold = report.invariant_checks().iter().all(|c| c.holds);
    Ok(report)
}
