//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! group_size = 16
//! learning_rate = 0.02
//!
//! [pseudo]
//! videos = 2000
//! tau = 1.01
//!
//! [drift]
//! videos = 2000
//! tau = 1.02
//!
//! [eval]
//! every = 250
//! videos = 50
//! rho = [0.10, 0.25, 0.40]
//!
//! [data]      # synthgen::GenConfig
//! [oracle]    # oracle::OracleConfig
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::gatenet::default_hidden;
use crate::group_rl::{DEFAULT_GROUP_SIZE, DEFAULT_LEARNING_RATE};
use crate::oracle::OracleConfig;
use crate::synthgen::{GenConfig, Stage};

pub const DEFAULT_RHO: [f64; 3] = [0.10, 0.25, 0.40];
pub const WARMUP_TAU: f64 = 1.01;
pub const MAIN_TAU: f64 = 1.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub videos: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Emit a metrics record every this many training groups.
    pub every: usize,
    /// Held-out videos scored at each metrics record.
    pub videos: usize,
    pub rho: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 250,
            videos: 50,
            rho: DEFAULT_RHO.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub group_size: usize,
    pub learning_rate: f64,
    /// Gate hidden width; `None` means `max(16, D)`.
    pub hidden: Option<usize>,
    pub pseudo: StageConfig,
    pub drift: StageConfig,
    pub eval: EvalConfig,
    pub data: GenConfig,
    pub oracle: OracleConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            group_size: DEFAULT_GROUP_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            hidden: None,
            pseudo: StageConfig {
                videos: 2000,
                tau: WARMUP_TAU,
            },
            drift: StageConfig {
                videos: 2000,
                tau: MAIN_TAU,
            },
            eval: EvalConfig::default(),
            data: GenConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.unwrap_or_else(|| default_hidden(self.data.dim))
    }

    pub fn stage(&self, stage: Stage) -> &StageConfig {
        match stage {
            Stage::Pseudo => &self.pseudo,
            Stage::Drift => &self.drift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.group_size < 2 {
            return bad(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden == Some(0) {
            return bad("hidden must be >= 1".into());
        }
        for (name, stage) in [("pseudo", &self.pseudo), ("drift", &self.drift)] {
            if !(stage.tau.is_finite() && stage.tau >= 1.0) {
                return bad(format!("{name}.tau must be >= 1, got {}", stage.tau));
            }
        }
        if self.eval.every == 0 {
            return bad("eval.every must be >= 1".into());
        }
        if let Some(r) = self.eval.rho.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return bad(format!("rho values must lie in (0, 1], got {r}"));
        }
        if !(self.oracle.temperature.is_finite() && self.oracle.temperature > 0.0) {
            return bad("oracle.temperature must be positive".into());
        }
        self.data
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Which curriculum stages a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Pseudo-video warm-up only.
    Pseudo,
    /// Drift videos from a fresh gate; the stage-2-only ablation.
    Drift,
    /// Warm-up, then drift training initialized from the warm-up checkpoint.
    Both,
}

impl Schedule {
    pub fn stages(self) -> &'static [Stage] {
        match self {
            Schedule::Pseudo => &[Stage::Pseudo],
            Schedule::Drift => &[Stage::Drift],
            Schedule::Both => &[Stage::Pseudo, Stage::Drift],
        }
    }

    pub fn is_ablation(self) -> bool {
        self == Schedule::Drift
    }
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pseudo" => Ok(Schedule::Pseudo),
            "drift" => Ok(Schedule::Drift),
            "both" => Ok(Schedule::Both),
            other => Err(format!("unknown stage schedule {other:?}")),
        }
    }
}

/// Parse `0.1,0.25,0.4`.
pub fn parse_rho_list(text: &str) -> Result<Vec<f64>> {
    let rhos = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| HarnessError::Config(format!("bad rho {s:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if rhos.is_empty() || rhos.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(HarnessError::Config(format!("rho values must lie in (0, 1]: {text}")));
    }
    Ok(rhos)
}
