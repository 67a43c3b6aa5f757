//! JSON run configuration.

use std::path::{Path, PathBuf};

use harnack_core::constants::{run_pipeline, ConstantsReport, PipelineInput};
use harnack_core::fields::{h1_threshold, make_field, CoefficientField, FieldKind, FieldSpec, Hypothesis};
use harnack_core::verify::Suite;
use harnack_core::{BlockStructure, Error, Point, StructureSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Growth,
    Oscillation,
    Harnack,
}

/// Per-experiment overrides. Anything left out falls back to the command
/// line and then to the built-in defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub which: Option<Which>,
    pub r: Option<f64>,
    pub z0: Option<Point>,
    pub resolution: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Growth level as a fraction of `sup_{Q^2} u`.
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    /// Per-slab sup/inf series of the first experiment solve.
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "prototype_spec")]
    pub structure: StructureSpec,
    #[serde(default = "default_hypothesis")]
    pub hypothesis: Hypothesis,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(rename = "Lambda", default = "default_big_lambda")]
    pub big_lambda: f64,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

fn prototype_spec() -> StructureSpec {
    BlockStructure::prototype().to_spec()
}

fn default_hypothesis() -> Hypothesis {
    Hypothesis::H1
}

fn one() -> f64 {
    1.0
}

fn default_big_lambda() -> f64 {
    1.2
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// A config after validation, with the structure and field built.
pub struct Loaded {
    pub config: RunConfig,
    pub structure: BlockStructure,
    pub field: CoefficientField,
}

impl RunConfig {
    pub fn read(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Builds the structure and field, and rejects an H1 config whose
    /// ellipticity ratio is out of range before any work is done.
    pub fn load(self) -> Result<Loaded, CliError> {
        let structure = BlockStructure::from_spec(&self.structure).map_err(CliError::from_config)?;
        if !(self.lambda > 0.0 && self.big_lambda >= self.lambda && self.big_lambda.is_finite()) {
            return Err(CliError::Config(format!(
                "need 0 < lambda <= Lambda, got lambda = {}, Lambda = {}",
                self.lambda, self.big_lambda
            )));
        }
        if self.hypothesis == Hypothesis::H1 && self.big_lambda / self.lambda >= h1_threshold(&structure) {
            return Err(CliError::Core(Error::H1Violated {
                ratio: self.big_lambda / self.lambda,
                threshold: h1_threshold(&structure),
            }));
        }
        let spec = self
            .field
            .clone()
            .unwrap_or_else(|| FieldSpec::new(FieldKind::Constant, self.lambda, self.big_lambda).with_seed(self.seed));
        if spec.lambda < self.lambda || spec.big_lambda > self.big_lambda {
            return Err(CliError::Config(format!(
                "field band [{}, {}] is not inside [{}, {}]",
                spec.lambda, spec.big_lambda, self.lambda, self.big_lambda
            )));
        }
        let field = make_field(&spec, &structure, Some(self.hypothesis)).map_err(CliError::from_config)?;
        Ok(Loaded { config: self, structure, field })
    }
}

impl Loaded {
    pub fn constants(&self) -> Result<ConstantsReport, CliError> {
        let modulus = match self.config.hypothesis {
            Hypothesis::H1 => None,
            Hypothesis::H2 => self.field.modulus(),
        };
        Ok(run_pipeline(&PipelineInput {
            structure: self.structure.clone(),
            hypothesis: self.config.hypothesis,
            lambda: self.config.lambda,
            big_lambda: self.config.big_lambda,
            modulus,
        })?)
    }

    /// The config entry for `which`, or an empty one.
    pub fn experiment(&self, which: Which) -> ExperimentConfig {
        self.config
            .experiments
            .iter()
            .find(|e| e.which == Some(which))
            .cloned()
            .unwrap_or_default()
    }
}
