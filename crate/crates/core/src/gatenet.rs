//! Per-token Bernoulli gate.
//!
//! A one-hidden-layer tanh MLP maps each `2D`-channel surprise-augmented state
//! to a logit; a sigmoid turns it into a retention probability clamped to
//! `[P_MIN, 1 - P_MIN]`. Training samples Bernoulli masks from those
//! probabilities, inference keeps the global top `floor(rho * T * N)`.

use rand::Rng;
use thiserror::Error;

use crate::seeding;
use crate::tokenstream::{Mask, StreamError, SurpriseGrid};

/// Lower probability clamp; the upper clamp is `1 - P_MIN`.
pub const P_MIN: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("budget floor({rho} * {tokens}) is zero")]
    ZeroBudget { rho: f64, tokens: usize },
    #[error(transparent)]
    Stream(#[from] StreamError),
}

pub type Result<T> = std::result::Result<T, GateError>;

/// Default hidden width for embedding width `dim`.
pub fn default_hidden(dim: usize) -> usize {
    dim.max(16)
}

/// Gate parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    input: usize,
    hidden: usize,
    /// `hidden x input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl PolicyParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w1: vec![0.0; input * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn from_parts(
        input: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(GateError::InvalidArgument("layer sizes must be positive".into()));
        }
        if w1.len() != input * hidden || b1.len() != hidden || w2.len() != hidden {
            return Err(GateError::DimensionMismatch(format!(
                "parameter tables do not match input={input} hidden={hidden}"
            )));
        }
        let p = Self {
            input,
            hidden,
            w1,
            b1,
            w2,
            b2,
        };
        if !p.is_finite() {
            return Err(GateError::InvalidArgument("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// Flat view in the order `w1, b1, w2, b2`.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
            .copied()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(std::iter::once(&mut self.b2))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.input == other.input && self.hidden == other.hidden
    }

    /// Raw logit for one state.
    pub fn logit(&self, state: &[f32]) -> f64 {
        let mut z = self.b2;
        for j in 0..self.hidden {
            let row = &self.w1[j * self.input..(j + 1) * self.input];
            let a = row
                .iter()
                .zip(state)
                .fold(self.b1[j], |acc, (w, &x)| acc + w * x as f64);
            z += self.w2[j] * a.tanh();
        }
        z
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
pub fn init_params(dim: usize, hidden: usize, seed: u64) -> Result<PolicyParams> {
    if dim == 0 || hidden == 0 {
        return Err(GateError::InvalidArgument(format!(
            "dim and hidden must be >= 1, got dim={dim} hidden={hidden}"
        )));
    }
    let input = 2 * dim;
    let mut rng = seeding::substream(seed, 0);
    let mut params = PolicyParams::zeros(input, hidden);
    let bound1 = 1.0 / (input as f64).sqrt();
    for w in &mut params.w1 {
        *w = rng.random_range(-bound1..=bound1);
    }
    let bound2 = 1.0 / (hidden as f64).sqrt();
    for w in &mut params.w2 {
        *w = rng.random_range(-bound2..=bound2);
    }
    Ok(params)
}

/// Per-token retention probabilities, shape `T x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionMap {
    frames: usize,
    tokens: usize,
    probs: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

impl RetentionMap {
    /// Clamps every entry into `[P_MIN, 1 - P_MIN]`.
    pub fn new(frames: usize, tokens: usize, probs: Vec<f64>) -> Result<Self> {
        let mut map = Self::new_unclamped(frames, tokens, probs)?;
        map.probs.iter_mut().for_each(|p| *p = clamp_prob(*p));
        Ok(map)
    }

    /// Test hook: accepts any probability in `[0, 1]` without clamping.
    pub fn new_unclamped(frames: usize, tokens: usize, probs: Vec<f64>) -> Result<Self> {
        if frames == 0 || tokens == 0 || probs.len() != frames * tokens {
            return Err(GateError::DimensionMismatch(format!(
                "{} probabilities for a {frames}x{tokens} map",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(GateError::InvalidArgument(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            frames,
            tokens,
            probs,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn check_input(params: &PolicyParams, h: &SurpriseGrid) -> Result<()> {
    if h.channels() != params.input {
        return Err(GateError::DimensionMismatch(format!(
            "state has {} channels, gate expects {}",
            h.channels(),
            params.input
        )));
    }
    Ok(())
}

pub fn policy_forward(params: &PolicyParams, h: &SurpriseGrid) -> Result<RetentionMap> {
    check_input(params, h)?;
    let probs = (0..h.token_count())
        .map(|flat| clamp_prob(sigmoid(params.logit(h.state(flat)))))
        .collect();
    Ok(RetentionMap {
        frames: h.frames(),
        tokens: h.tokens_per_frame(),
        probs,
    })
}

/// Reverse-mode gradient of a scalar `L` given `dL/dp` per token.
///
/// Tokens whose probability sits on the clamp contribute nothing.
pub fn policy_backward(
    params: &PolicyParams,
    h: &SurpriseGrid,
    grad_wrt_p: &[f64],
) -> Result<PolicyParams> {
    check_input(params, h)?;
    if grad_wrt_p.len() != h.token_count() {
        return Err(GateError::DimensionMismatch(format!(
            "{} upstream gradients for {} tokens",
            grad_wrt_p.len(),
            h.token_count()
        )));
    }
    let (input, hidden) = (params.input, params.hidden);
    let mut grad = PolicyParams::zeros(input, hidden);
    let mut act = vec![0.0; hidden];
    for (flat, &g) in grad_wrt_p.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let x = h.state(flat);
        let mut z = params.b2;
        for (j, a) in act.iter_mut().enumerate() {
            let row = &params.w1[j * input..(j + 1) * input];
            let pre = row
                .iter()
                .zip(x)
                .fold(params.b1[j], |acc, (w, &v)| acc + w * v as f64);
            *a = pre.tanh();
            z += params.w2[j] * *a;
        }
        let p = sigmoid(z);
        if p <= P_MIN || p >= 1.0 - P_MIN {
            continue;
        }
        let dz = g * p * (1.0 - p);
        grad.b2 += dz;
        for j in 0..hidden {
            grad.w2[j] += dz * act[j];
            let dpre = dz * params.w2[j] * (1.0 - act[j] * act[j]);
            grad.b1[j] += dpre;
            let row = &mut grad.w1[j * input..(j + 1) * input];
            for (gw, &v) in row.iter_mut().zip(x) {
                *gw += dpre * v as f64;
            }
        }
    }
    Ok(grad)
}

/// Draw `k` masks; rollout `r` uses ChaCha stream `r` under `seed`.
pub fn sample_masks(p: &RetentionMap, k: usize, seed: u64) -> Result<Vec<Mask>> {
    if k == 0 {
        return Err(GateError::InvalidArgument("K must be >= 1".into()));
    }
    (0..k).map(|r| sample_mask(p, seed, r as u64)).collect()
}

pub fn sample_mask(p: &RetentionMap, seed: u64, rollout: u64) -> Result<Mask> {
    let mut rng = seeding::substream(seed, rollout);
    let bits = p
        .probs
        .iter()
        .map(|&prob| u8::from(rng.random::<f64>() < prob))
        .collect();
    Ok(Mask::new(p.frames, p.tokens, bits)?)
}

/// Budget `floor(rho * tokens)`.
pub fn budget(rho: f64, tokens: usize) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(GateError::InvalidArgument(format!(
            "rho must lie in (0, 1], got {rho}"
        )));
    }
    // Absorb representation error so decimal ratios such as 0.29 floor as written.
    let keep = (rho * tokens as f64 + 1e-9).floor() as usize;
    if keep == 0 {
        return Err(GateError::ZeroBudget { rho, tokens });
    }
    Ok(keep.min(tokens))
}

/// Keep the `floor(rho * T * N)` highest scores; ties go to the smaller flat index.
pub fn topk_from_scores(scores: &[f64], frames: usize, tokens: usize, rho: f64) -> Result<Mask> {
    if scores.len() != frames * tokens {
        return Err(GateError::DimensionMismatch(format!(
            "{} scores for a {frames}x{tokens} grid",
            scores.len()
        )));
    }
    let keep = budget(rho, scores.len())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut bits = vec![0u8; scores.len()];
    for &idx in &order[..keep] {
        bits[idx] = 1;
    }
    Ok(Mask::new(frames, tokens, bits)?)
}

pub fn topk_select(p: &RetentionMap, rho: f64) -> Result<Mask> {
    topk_from_scores(&p.probs, p.frames, p.tokens, rho)
}
