use std::path::{Path, PathBuf};

use faithsim::measurement::{OutcomeFunction, Povm};
use faithsim::operator::{ComplexOperator, DensityOperator, DEFAULT_DIM_CAP};
use faithsim::protocol::{Mode, ProtocolParams, ProtocolSpec};
use faithsim::rates::RateQuantities;
use faithsim::Scenario;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DIM_CAP_ENV: &str = "FAITHSIM_DIM_CAP";

/// Matrix entries by rows; `im` may be omitted for real operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl OperatorSpec {
    fn build(&self, what: &str) -> Result<ComplexOperator<f64>, CliError> {
        let d = self.re.len();
        if let Some(row) = self.re.iter().position(|r| r.len() != d) {
            return Err(CliError::Validation(format!("{what}: row {row} of re has {} entries, expected {d}", self.re[row].len())));
        }
        let zeros = vec![vec![0.0; d]; d];
        let im = self.im.as_ref().unwrap_or(&zeros);
        if im.len() != d {
            return Err(CliError::Validation(format!("{what}: im has {} rows, expected {d}", im.len())));
        }
        if let Some(row) = im.iter().position(|r| r.len() != d) {
            return Err(CliError::Validation(format!("{what}: row {row} of im has {} entries, expected {d}", im[row].len())));
        }
        ComplexOperator::from_parts(&self.re, im).map_err(|e| CliError::Validation(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[serde(rename = "sB")]
    #[value(name = "sB")]
    SB,
    #[serde(rename = "MB")]
    #[value(name = "MB")]
    MB,
    #[serde(rename = "n")]
    #[value(name = "n")]
    N,
    #[serde(rename = "delta")]
    #[value(name = "delta")]
    Delta,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::SB => "sB",
            Axis::MB => "MB",
            Axis::N => "n",
            Axis::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
}

fn default_trials() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub rho: OperatorSpec,
    pub povm: Vec<OperatorSpec>,
    #[serde(rename = "gA")]
    pub g_a: Vec<usize>,
    #[serde(rename = "gB")]
    pub g_b: Vec<usize>,
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_tol")]
    pub equivalence_tol: f64,
    /// Test fixture: swap the first two conditional elements of the first branch.
    #[serde(default)]
    pub corrupt_conditional: bool,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds the validated scenario; every error names the offending field and index.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let rho_op = self.rho.build("rho")?;
        let rho = DensityOperator::new(rho_op).map_err(|e| CliError::Validation(format!("rho: {e}")))?;
        if self.povm.is_empty() {
            return Err(CliError::Validation("povm: at least one element required".into()));
        }
        let mut elements = Vec::with_capacity(self.povm.len());
        for (i, e) in self.povm.iter().enumerate() {
            let op = e.build(&format!("povm[{i}]"))?;
            if op.dim() != rho.dim() {
                return Err(CliError::Validation(format!(
                    "povm[{i}]: dimension {} does not match rho dimension {}",
                    op.dim(),
                    rho.dim()
                )));
            }
            elements.push(op);
        }
        let povm = Povm::new(elements).map_err(|e| match e {
            faithsim::Error::InvalidPovmElement { index, reason } => CliError::Validation(format!("povm[{index}]: {reason}")),
            other => CliError::Validation(format!("povm: {other}")),
        })?;
        let g = |name: &str, map: &[usize]| -> Result<OutcomeFunction, CliError> {
            if map.len() != povm.len() {
                return Err(CliError::Validation(format!(
                    "{name}: length {} does not match the {} POVM outcomes",
                    map.len(),
                    povm.len()
                )));
            }
            OutcomeFunction::new(map.to_vec()).map_err(|e| match e {
                faithsim::Error::NonContiguousImage { missing } => {
                    CliError::Validation(format!("{name}: image value {missing} is never used"))
                }
                other => CliError::Validation(format!("{name}: {other}")),
            })
        };
        let g_a = g("gA", &self.g_a)?;
        let g_b = g("gB", &self.g_b)?;
        Scenario::new(rho, povm, g_a, g_b).map_err(|e| CliError::Validation(format!("scenario: {e}")))
    }

    pub fn params(&self, q: &RateQuantities, dim_cap: usize) -> Result<ProtocolParams, CliError> {
        self.protocol
            .resolve(self.mode, q, dim_cap)
            .map_err(|e| CliError::from_core("protocol", e))
    }
}

/// Dimension cap from the environment, else the library default.
pub fn dim_cap() -> Result<usize, CliError> {
    match std::env::var(DIM_CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|c| *c > 0)
            .ok_or_else(|| CliError::Validation(format!("{DIM_CAP_ENV}: expected a positive integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_DIM_CAP),
    }
}
