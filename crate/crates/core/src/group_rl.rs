//! Group rollouts, accuracy/sparsity rewards, the split advantage, and the
//! token-normalized Bernoulli policy-gradient loss.
//!
//! For one video the policy samples `K` masks. Each rollout `k` gets
//! `dCE_k = tau * CE_base - CE_k` and sparsity `S_k`. Rollouts with
//! `dCE_k > 0` form the safe zone and are ranked by standardized sparsity,
//! `A_k = dCE_k * (S_k - mean_S+) / (std_S+ + eps)`; the rest are penalized by
//! `A_k = dCE_k * S_k`. The loss is
//! `-(1/K) sum_k A_k * (1/TN) * log pi(mask_k)`.

use thiserror::Error;

use crate::gatenet::{self, GateError, PolicyParams, RetentionMap};
use crate::oracle::{OracleError, TaskOracle};
use crate::tokenstream::{self, Mask, StreamError, SurpriseGrid, TokenGrid};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_GROUP_SIZE: usize = 16;
pub const DEFAULT_LEARNING_RATE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("tolerance tau must be >= 1, got {0}")]
    InvalidTau(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient at coordinate {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("oracle failed on rollout {rollout}: {source}")]
    Oracle {
        rollout: usize,
        #[source]
        source: OracleError,
    },
    #[error("oracle failed on the full-retention baseline: {0}")]
    Baseline(#[source] OracleError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

pub type Result<T> = std::result::Result<T, RlError>;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub mask: Mask,
    pub ce: f64,
    pub sparsity: f64,
    pub delta_ce: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub video_id: u64,
    pub ce_base: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub records: Vec<RolloutRecord>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of rollouts with `dCE > 0`.
    pub fn safe_fraction(&self) -> f64 {
        let safe = self.records.iter().filter(|r| r.delta_ce > 0.0).count();
        safe as f64 / self.records.len().max(1) as f64
    }

    pub fn mean_sparsity(&self) -> f64 {
        mean(self.records.iter().map(|r| r.sparsity))
    }

    pub fn mean_delta_ce(&self) -> f64 {
        mean(self.records.iter().map(|r| r.delta_ce))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimState {
    lr: f64,
    pub iteration: u64,
}

impl OptimState {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(RlError::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Self { lr, iteration: 0 })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }
}

impl Default for OptimState {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LEARNING_RATE,
            iteration: 0,
        }
    }
}

/// Fraction of dropped tokens.
pub fn sparsity(mask: &Mask) -> f64 {
    1.0 - mask.retained() as f64 / mask.len() as f64
}

pub fn delta_ce(ce_base: f64, ce: f64, tau: f64) -> Result<f64> {
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(RlError::InvalidTau(tau));
    }
    if !(ce_base >= 0.0 && ce >= 0.0) {
        return Err(RlError::InvalidArgument(format!(
            "cross-entropies must be non-negative, got base={ce_base} ce={ce}"
        )));
    }
    Ok(tau * ce_base - ce)
}

/// Advantages from per-rollout `dCE` and sparsity.
pub fn split_advantages(delta_ce: &[f64], sparsity: &[f64], epsilon: f64) -> Vec<f64> {
    debug_assert_eq!(delta_ce.len(), sparsity.len());
    let safe: Vec<f64> = delta_ce
        .iter()
        .zip(sparsity)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, s)| *s)
        .collect();
    let (mu, sigma) = if safe.is_empty() {
        (0.0, 0.0)
    } else {
        let n = safe.len() as f64;
        let mu = safe.iter().sum::<f64>() / n;
        let var = safe.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n;
        (mu, var.sqrt())
    };
    delta_ce
        .iter()
        .zip(sparsity)
        .map(|(&d, &s)| {
            if d > 0.0 {
                d * (s - mu) / (sigma + epsilon)
            } else {
                d * s
            }
        })
        .collect()
}

pub fn split_advantage(group: &mut RolloutGroup) {
    let deltas: Vec<f64> = group.records.iter().map(|r| r.delta_ce).collect();
    let sparsities: Vec<f64> = group.records.iter().map(|r| r.sparsity).collect();
    let adv = split_advantages(&deltas, &sparsities, group.epsilon);
    for (rec, a) in group.records.iter_mut().zip(adv) {
        rec.advantage = a;
    }
}

fn check_shape(p: &RetentionMap, mask: &Mask) -> Result<()> {
    if p.frames() != mask.frames() || p.tokens_per_frame() != mask.tokens_per_frame() {
        return Err(RlError::ShapeMismatch(format!(
            "retention map {}x{} vs mask {}x{}",
            p.frames(),
            p.tokens_per_frame(),
            mask.frames(),
            mask.tokens_per_frame()
        )));
    }
    Ok(())
}

/// `sum m log p + (1 - m) log(1 - p)` over all tokens.
pub fn bernoulli_logprob(p: &RetentionMap, mask: &Mask) -> Result<f64> {
    check_shape(p, mask)?;
    Ok(p.probs()
        .iter()
        .zip(mask.bits())
        .map(|(&prob, &m)| if m == 1 { prob.ln() } else { (1.0 - prob).ln() })
        .sum())
}

pub fn policy_loss_and_grad(
    params: &PolicyParams,
    h: &SurpriseGrid,
    group: &RolloutGroup,
) -> Result<(f64, PolicyParams)> {
    if group.is_empty() {
        return Err(RlError::InvalidArgument("empty rollout group".into()));
    }
    let p = gatenet::policy_forward(params, h)?;
    let k = group.len() as f64;
    let tokens = p.len() as f64;
    let scale = -1.0 / (k * tokens);
    let mut loss = 0.0;
    let mut grad_p = vec![0.0; p.len()];
    for rec in &group.records {
        check_shape(&p, &rec.mask)?;
        if rec.advantage == 0.0 {
            continue;
        }
        loss += scale * rec.advantage * bernoulli_logprob(&p, &rec.mask)?;
        for ((g, &prob), &m) in grad_p.iter_mut().zip(p.probs()).zip(rec.mask.bits()) {
            let dlogp = if m == 1 { 1.0 / prob } else { -1.0 / (1.0 - prob) };
            *g += scale * rec.advantage * dlogp;
        }
    }
    let grad = gatenet::policy_backward(params, h, &grad_p)?;
    Ok((loss, grad))
}

/// Plain SGD; rejects the whole step if any gradient coordinate is non-finite.
pub fn sgd_step(params: &mut PolicyParams, grad: &PolicyParams, opt: &mut OptimState) -> Result<()> {
    if !params.same_shape(grad) {
        return Err(RlError::ShapeMismatch("gradient and parameters differ in shape".into()));
    }
    if let Some((index, value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(RlError::NonFiniteGradient { index, value });
    }
    for (w, g) in params.iter_mut().zip(grad.iter()) {
        *w -= opt.lr * g;
    }
    opt.iteration += 1;
    Ok(())
}

/// Sample `k` masks for an encoded video and score them against the oracle.
pub fn run_group_on_state(
    params: &PolicyParams,
    h: &SurpriseGrid,
    oracle: &dyn TaskOracle,
    k: usize,
    tau: f64,
    seed: u64,
) -> Result<RolloutGroup> {
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(RlError::InvalidTau(tau));
    }
    let p = gatenet::policy_forward(params, h)?;
    let masks = gatenet::sample_masks(&p, k, seed)?;
    let full = Mask::filled(h.frames(), h.tokens_per_frame(), true)?;
    let ce_base = oracle
        .cross_entropy(&full)
        .map_err(RlError::Baseline)?;
    let mut records = Vec::with_capacity(k);
    for (rollout, mask) in masks.into_iter().enumerate() {
        let ce = match oracle.cross_entropy(&mask) {
            Ok(ce) => ce,
            Err(OracleError::EmptyRetention) => oracle.empty_retention_ce(),
            Err(source) => return Err(RlError::Oracle { rollout, source }),
        };
        records.push(RolloutRecord {
            sparsity: sparsity(&mask),
            delta_ce: delta_ce(ce_base, ce, tau)?,
            mask,
            ce,
            advantage: 0.0,
        });
    }
    let mut group = RolloutGroup {
        video_id: oracle.task_id(),
        ce_base,
        tau,
        epsilon: DEFAULT_EPSILON,
        records,
    };
    split_advantage(&mut group);
    Ok(group)
}

pub fn run_group(
    params: &PolicyParams,
    x: &TokenGrid,
    oracle: &dyn TaskOracle,
    k: usize,
    tau: f64,
    seed: u64,
) -> Result<RolloutGroup> {
    let h = tokenstream::encode_state(x)?;
    run_group_on_state(params, &h, oracle, k, tau, seed)
}
