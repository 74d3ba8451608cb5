//! The JSON run configuration and its defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smallgain::network::GainMatrix;
use smallgain::sim::{History, SystemSpec};
use smallgain::validation::{LyapunovSetup, TAIL_FRACTION, TOL_GAIN, TOL_IMPL, TOL_TAIL};
use smallgain::{GridSpec, SynthesisInput};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSetup>,
    /// Initial state, or the constant initial segment of a delay system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<History>,
    #[serde(default)]
    pub analysis: Analysis,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analysis {
    pub seed: u64,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
    pub horizon: f64,
    pub dt: f64,
    /// Sample budget of the implication checker.
    pub samples: usize,
    /// Sampling radius of the implication checker.
    pub radius: f64,
    /// Step budget of `iterate`.
    pub steps: usize,
    pub oracle_starts: usize,
    pub oracle_steps: usize,
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis {
            seed: 0,
            grid: GridSpec::default(),
            tolerances: Tolerances::default(),
            horizon: 20.0,
            dt: 1e-2,
            samples: 100_000,
            radius: 10.0,
            steps: 200,
            oracle_starts: 20,
            oracle_steps: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    #[serde(rename = "impl")]
    pub implication: f64,
    pub tail: f64,
    pub gain: f64,
    pub conv: f64,
    pub oracle: f64,
    pub tail_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            implication: TOL_IMPL,
            tail: TOL_TAIL,
            gain: TOL_GAIN,
            conv: 1e-9,
            oracle: 1e-8,
            tail_fraction: TAIL_FRACTION,
        }
    }
}

/// Parses `text`, reporting the field path and the line/column of the first error.
pub fn parse(text: &str) -> Result<RunConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            format!("schema error: {inner}")
        } else {
            format!("schema error at `{path}`: {inner}")
        }
    })
}

pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}
