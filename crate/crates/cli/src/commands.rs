//! Subcommand bodies. Each returns a JSON report and whether it passed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use harnack_core::experiments::{
    growth_experiment, harnack_campaign, harnack_cylinders, oscillation_experiment, pullback, zoom, BumpData, Setup,
    DEFAULT_LEVEL,
};
use harnack_core::fields::Hypothesis;
use harnack_core::solver::{solve_cylinder, Observer, SolveOptions};
use harnack_core::verify::{run_suite, Suite, VerifyContext, VerifyOptions};
use harnack_core::{Error, Exec, Point};
use serde_json::{json, Value};

use crate::config::{Loaded, Which};
use crate::CliError;

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_DATA_SETS: usize = 4;

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub resolution: Option<usize>,
    pub adversarial: bool,
}

pub struct Outcome {
    pub report: Value,
    pub passed: bool,
}

pub fn constants(cfg: &Loaded) -> Result<Outcome, CliError> {
    let c = cfg.constants()?;
    let passed = c.invariants_hold;
    Ok(Outcome {
        report: json!({
            "command": "constants",
            "constants": c,
            "invariants": c.invariant_checks(),
            "passed": passed,
        }),
        passed,
    })
}

pub fn verify(cfg: &Loaded, names: &[String], ov: &Overrides) -> Result<Outcome, CliError> {
    let mut suites = Vec::new();
    for name in names {
        if name == "all" {
            suites.extend(Suite::ALL);
        } else {
            suites.push(Suite::parse(name).ok_or_else(|| CliError::Config(format!("unknown suite {name:?}")))?);
        }
    }
    if suites.is_empty() {
        suites = cfg.config.suites.clone();
    }
    if suites.is_empty() {
        return Err(CliError::Config("empty suite list".into()));
    }
    let ctx = VerifyContext {
        structure: cfg.structure.clone(),
        constants: cfg.constants()?,
        field: cfg.config.field.as_ref().map(|_| cfg.field.clone()),
    };
    let mut opts = VerifyOptions {
        seed: ov.seed.unwrap_or(cfg.config.seed),
        adversarial: ov.adversarial,
        ..Default::default()
    };
    if let Some(n) = ov.samples {
        opts.samples = n;
    }
    let reports = suites
        .iter()
        .map(|s| run_suite(&ctx, *s, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| r.passed);
    Ok(Outcome {
        report: json!({
            "command": "verify",
            "seed": opts.seed,
            "samples": opts.samples,
            "adversarial": opts.adversarial,
            "suites": reports,
            "passed": passed,
        }),
        passed,
    })
}

pub fn experiment(cfg: &Loaded, which: Which, ov: &Overrides, csv: Option<&Path>) -> Result<Outcome, CliError> {
    let e = cfg.experiment(which);
    let constants = cfg.constants()?;
    let st = &cfg.structure;
    let seed = ov.seed.or(e.seed).unwrap_or(cfg.config.seed);
    let resolution = ov.resolution.or(e.resolution).unwrap_or(DEFAULT_RESOLUTION);
    let z0 = e.z0.clone().unwrap_or_else(|| Point::origin(st.dim()));
    if z0.x.len() != st.dim() {
        return Err(CliError::Config(format!("z0 has dimension {}, expected {}", z0.x.len(), st.dim())));
    }
    let r = match (constants.hypothesis, e.r) {
        (Hypothesis::H1, r) => r.unwrap_or(1.0),
        (Hypothesis::H2, r) => {
            let r0 = constants
                .r_0
                .ok_or_else(|| CliError::Core(Error::InconsistentConstant("H2 pipeline gave no r_0".into())))?;
            let r = r.unwrap_or(r0);
            if r > r0 {
                return Err(CliError::Hypothesis(format!("hypothesis H2 allows r <= r_0 = {r0}, got r = {r}")));
            }
            r
        }
    };
    if !(r > 0.0) {
        return Err(CliError::Config(format!("radius must be positive, got {r}")));
    }
    let setup = Setup {
        structure: st.clone(),
        constants: constants.clone(),
        resolution,
        exec: Exec::default(),
        adversarial: ov.adversarial,
    };
    let q1 = setup.outer(1.0)?;
    let (result, passed) = match which {
        Which::Growth => {
            let rep = growth_experiment(&setup, &cfg.field, &z0, r, e.level.unwrap_or(DEFAULT_LEVEL))?;
            let ok = rep.holds;
            (serde_json::to_value(rep).expect("serializable"), ok)
        }
        Which::Oscillation => {
            let bump = BumpData::random(st, &q1, seed);
            let rep = oscillation_experiment(&setup, &cfg.field, &z0, r, &|z| bump.eval(z))?;
            let ok = rep.holds;
            (serde_json::to_value(rep).expect("serializable"), ok)
        }
        Which::Harnack => {
            let sets = ov.samples.or(e.samples).unwrap_or(DEFAULT_DATA_SETS);
            if sets == 0 {
                return Err(CliError::Config("harnack needs at least one data set".into()));
            }
            let rep = harnack_campaign(&setup, &cfg.field, r, sets, seed)?;
            let ok = rep.violations == 0;
            (serde_json::to_value(rep).expect("serializable"), ok)
        }
    };
    if let Some(path) = csv {
        write_series(&setup, cfg, &z0, r, seed, path)?;
    }
    Ok(Outcome {
        report: json!({
            "command": "experiment",
            "experiment": which,
            "hypothesis": constants.hypothesis,
            "seed": seed,
            "resolution": resolution,
            "r": r,
            "z0": z0,
            "adversarial": ov.adversarial,
            "theorem_constants": {
                "sigma_0": constants.sigma_0,
                "b_B": constants.b_b,
                "K": constants.k,
                "ln_eta": constants.ln_eta,
                "P": constants.p,
                "alpha": constants.alpha,
                "ln_C_harnack": constants.ln_c_harnack,
            },
            "result": result,
            "passed": passed,
        }),
        passed,
    })
}

/// Slab series on `Q^1` from the parent solve and on `Q^-`, `Q^+` from
/// their zoomed re-solves, for the first bump data set.
fn write_series(setup: &Setup, cfg: &Loaded, z0: &Point, r: f64, seed: u64, path: &Path) -> Result<(), CliError> {
    let st = &setup.structure;
    let q1 = setup.outer(1.0)?;
    let (qm, qp) = harnack_cylinders(setup)?;
    let f = pullback(&cfg.field, st, z0, r)?;
    let bump = BumpData::random(st, &q1, seed);
    let opts = |observers| SolveOptions {
        resolution: setup.resolution,
        observers,
        keep_history: false,
        exec: setup.exec,
    };
    let parent = solve_cylinder(
        &f,
        st,
        &q1,
        &|z| bump.eval(z),
        &SolveOptions { keep_history: true, ..opts(vec![Observer::new("q1", q1.clone())]) },
    )?;
    let minus = zoom(&parent, &f, &qm, &opts(vec![Observer::new("q_minus", qm.clone())]))?;
    let plus = zoom(&parent, &f, &qp, &opts(vec![Observer::new("q_plus", qp.clone())]))?;
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut text = Vec::new();
    parent.write_csv(&mut text).map_err(io)?;
    for child in [minus, plus] {
        let mut part = Vec::new();
        child.write_csv(&mut part).map_err(io)?;
        let body = part.iter().position(|b| *b == b'\n').map_or(part.len(), |i| i + 1);
        text.extend_from_slice(&part[body..]);
    }
    let mut file = BufWriter::new(File::create(path).map_err(io)?);
    file.write_all(&text).map_err(io)
}
