//! Frozen downstream surrogate: mean-pool the retained tokens, apply a fixed
//! linear readout, and score the video's label by softmax cross-entropy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synthgen::{ClassBasis, LabeledVideo};
use crate::tokenstream::Mask;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("mask retains no tokens")]
    EmptyRetention,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid oracle config: {0}")]
    InvalidConfig(String),
}

impl OracleError {
    pub fn code(&self) -> u32 {
        match self {
            OracleError::EmptyRetention => 30,
            OracleError::ShapeMismatch(_) => 31,
            OracleError::InvalidConfig(_) => 32,
        }
    }
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Seed of the class basis shared by the readout and the generator.
    pub seed: u64,
    /// Readout row norm.
    pub gain: f64,
    pub temperature: f64,
    /// CE charged to an empty rollout is `ln C + empty_offset`.
    pub empty_offset: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 1234,
            gain: 4.0,
            temperature: 1.0,
            empty_offset: 2.0,
        }
    }
}

/// `C x D` readout with biases. Never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenReadout {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    temperature: f64,
    empty_offset: f64,
}

impl FrozenReadout {
    pub fn from_parts(
        classes: usize,
        dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        temperature: f64,
        empty_offset: f64,
    ) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(OracleError::InvalidConfig("classes and dim must be positive".into()));
        }
        if weights.len() != classes * dim || biases.len() != classes {
            return Err(OracleError::InvalidConfig("readout table sizes disagree".into()));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(OracleError::InvalidConfig("temperature must be positive".into()));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) || !empty_offset.is_finite() {
            return Err(OracleError::InvalidConfig("non-finite readout parameter".into()));
        }
        Ok(Self {
            classes,
            dim,
            weights,
            biases,
            temperature,
            empty_offset,
        })
    }

    /// Row `c` is `gain * u_c` for the basis direction `u_c`; biases are zero.
    pub fn aligned(basis: &ClassBasis, cfg: &OracleConfig) -> Result<Self> {
        let weights = (0..basis.classes())
            .flat_map(|c| basis.direction(c).iter().map(|u| cfg.gain * u))
            .collect();
        Self::from_parts(
            basis.classes(),
            basis.dim(),
            weights,
            vec![0.0; basis.classes()],
            cfg.temperature,
            cfg.empty_offset,
        )
    }

    /// Build the class basis and aligned readout from one config.
    pub fn from_config(classes: usize, dim: usize, cfg: &OracleConfig) -> Result<(ClassBasis, Self)> {
        let basis = ClassBasis::new(classes, dim, cfg.seed);
        let readout = Self::aligned(&basis, cfg)?;
        Ok((basis, readout))
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// CE assigned to a rollout that keeps nothing.
    pub fn empty_retention_ce(&self) -> f64 {
        (self.classes as f64).ln() + self.empty_offset
    }

    /// Temperature-scaled logits of a pooled vector.
    pub fn logits(&self, pooled: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                let z = row
                    .iter()
                    .zip(pooled)
                    .fold(self.biases[c], |acc, (w, x)| acc + w * x);
                z / self.temperature
            })
            .collect()
    }

    /// Little-endian dump of every parameter, for frozenness checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in self
            .weights
            .iter()
            .chain(&self.biases)
            .chain([&self.temperature, &self.empty_offset])
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Mean of the retained token vectors.
pub fn pool_retained(video: &LabeledVideo, mask: &Mask) -> Result<Vec<f64>> {
    let grid = &video.grid;
    if mask.frames() != grid.frames() || mask.tokens_per_frame() != grid.tokens_per_frame() {
        return Err(OracleError::ShapeMismatch(format!(
            "mask {}x{} vs video {}x{}",
            mask.frames(),
            mask.tokens_per_frame(),
            grid.frames(),
            grid.tokens_per_frame()
        )));
    }
    let mut sum = vec![0.0; grid.dim()];
    let mut count = 0usize;
    for flat in mask.retained_indices() {
        sum.iter_mut()
            .zip(grid.token_flat(flat))
            .for_each(|(s, &v)| *s += v as f64);
        count += 1;
    }
    if count == 0 {
        return Err(OracleError::EmptyRetention);
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    Ok(sum)
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    (lse - logits[label]).max(0.0)
}

pub fn oracle_ce(readout: &FrozenReadout, video: &LabeledVideo, mask: &Mask) -> Result<f64> {
    if video.grid.dim() != readout.dim || video.class_label >= readout.classes {
        return Err(OracleError::ShapeMismatch(format!(
            "video (dim {}, label {}) does not fit a {}-class readout of dim {}",
            video.grid.dim(),
            video.class_label,
            readout.classes,
            readout.dim
        )));
    }
    let pooled = pool_retained(video, mask)?;
    Ok(cross_entropy(&readout.logits(&pooled), video.class_label))
}

pub fn oracle_ce_base(readout: &FrozenReadout, video: &LabeledVideo) -> Result<f64> {
    let full = Mask::filled(video.grid.frames(), video.grid.tokens_per_frame(), true)
        .map_err(|e| OracleError::ShapeMismatch(e.to_string()))?;
    oracle_ce(readout, video, &full)
}

/// A downstream evaluator bound to one task instance.
///
/// Any `(mask) -> CE` mapping satisfies the contract, so real-model adapters
/// can stand in for the readout surrogate.
pub trait TaskOracle: Sync {
    fn cross_entropy(&self, mask: &Mask) -> Result<f64>;

    /// CE charged when a rollout retains no tokens.
    fn empty_retention_ce(&self) -> f64;

    fn task_id(&self) -> u64 {
        0
    }
}

/// The frozen readout bound to one labeled video.
pub struct VideoOracle<'a> {
    pub readout: &'a FrozenReadout,
    pub video: &'a LabeledVideo,
}

impl<'a> VideoOracle<'a> {
    pub fn new(readout: &'a FrozenReadout, video: &'a LabeledVideo) -> Self {
        Self { readout, video }
    }
}

impl TaskOracle for VideoOracle<'_> {
    fn cross_entropy(&self, mask: &Mask) -> Result<f64> {
        oracle_ce(self.readout, self.video, mask)
    }

    fn empty_retention_ce(&self) -> f64 {
        self.readout.empty_retention_ce()
    }

    fn task_id(&self) -> u64 {
        self.video.id
    }
}
