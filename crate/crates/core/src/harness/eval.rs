//! Inference-path evaluation with deterministic top-K selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::load_checkpoint;
use super::{HarnessError, Result};
use crate::gatenet::{self, PolicyParams, RetentionMap};
use crate::group_rl;
use crate::oracle::{self, FrozenReadout};
use crate::synthgen::{gen_video, ClassBasis, GenConfig, LabeledVideo, Stage};
use crate::tokenstream::{self, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rho: f64,
    pub videos: usize,
    pub mean_ce: f64,
    pub mean_ce_base: f64,
    pub mean_delta_ce: f64,
    pub mean_sparsity: f64,
    /// Fraction of salient tokens kept by top-K, averaged over videos.
    pub salient_recall: f64,
    pub mean_p_salient: f64,
    pub mean_p_background: f64,
    /// Mean probability on segment-start frames; pseudo-videos only.
    pub mean_p_boundary: Option<f64>,
    pub mean_p_interior: Option<f64>,
    /// Fraction of videos whose top-K selection keeps `dCE > 0`.
    pub safe_fraction: f64,
}

/// Held-out video `j` of a stage: odd stream indices, never used for training.
pub fn held_out_video(cfg: &GenConfig, basis: &ClassBasis, stage: Stage, j: u64) -> Result<LabeledVideo> {
    Ok(gen_video(cfg, basis, stage, 2 * j + 1)?)
}

/// Training video `i` of a stage: even stream indices.
pub fn training_video(cfg: &GenConfig, basis: &ClassBasis, stage: Stage, i: u64) -> Result<LabeledVideo> {
    Ok(gen_video(cfg, basis, stage, 2 * i)?)
}

pub fn held_out_set(cfg: &GenConfig, basis: &ClassBasis, stage: Stage, count: usize) -> Result<Vec<LabeledVideo>> {
    (0..count as u64)
        .map(|j| held_out_video(cfg, basis, stage, j))
        .collect()
}

/// Per-video outcome at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEval {
    pub ce: f64,
    pub ce_base: f64,
    pub delta_ce: f64,
    pub sparsity: f64,
    pub recall: f64,
}

fn mean_where(p: &RetentionMap, pick: impl Fn(usize) -> bool) -> Option<f64> {
    let (sum, n) = p
        .probs()
        .iter()
        .enumerate()
        .filter(|(i, _)| pick(*i))
        .fold((0.0, 0usize), |(s, n), (_, &v)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn score_mask(
    readout: &FrozenReadout,
    video: &LabeledVideo,
    mask: &Mask,
    ce_base: f64,
    tau: f64,
) -> Result<VideoEval> {
    let ce = oracle::oracle_ce(readout, video, mask)?;
    let salient = video.salient_indices();
    let kept = salient.iter().filter(|&&i| mask.is_kept(i)).count();
    Ok(VideoEval {
        ce,
        ce_base,
        delta_ce: group_rl::delta_ce(ce_base, ce, tau)?,
        sparsity: group_rl::sparsity(mask),
        recall: kept as f64 / salient.len().max(1) as f64,
    })
}

/// Top-K outcomes of one video at every budget in `rhos`.
pub fn evaluate_video(
    params: &PolicyParams,
    readout: &FrozenReadout,
    video: &LabeledVideo,
    rhos: &[f64],
    tau: f64,
) -> Result<(RetentionMap, Vec<VideoEval>)> {
    let h = tokenstream::encode_state(&video.grid)?;
    let p = gatenet::policy_forward(params, &h)?;
    let ce_base = oracle::oracle_ce_base(readout, video)?;
    let evals = rhos
        .iter()
        .map(|&rho| {
            let mask = gatenet::topk_select(&p, rho)?;
            score_mask(readout, video, &mask, ce_base, tau)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((p, evals))
}

/// Per-video top-K cross-entropy at one budget, in video order.
pub fn per_video_ce(
    params: &PolicyParams,
    readout: &FrozenReadout,
    videos: &[LabeledVideo],
    rho: f64,
) -> Result<Vec<f64>> {
    videos
        .iter()
        .map(|v| Ok(evaluate_video(params, readout, v, &[rho], 1.0)?.1[0].ce))
        .collect()
}

pub fn evaluate(
    params: &PolicyParams,
    readout: &FrozenReadout,
    videos: &[LabeledVideo],
    rhos: &[f64],
    tau: f64,
) -> Result<Vec<EvalReport>> {
    if videos.is_empty() {
        return Err(HarnessError::Config("evaluation needs at least one video".into()));
    }
    let n = videos.len() as f64;
    let mut sums = vec![[0.0f64; 6]; rhos.len()];
    let mut safe = vec![0usize; rhos.len()];
    let (mut p_sal, mut p_bg) = (0.0, 0.0);
    let (mut p_bound, mut p_int, mut n_pseudo) = (0.0, 0.0, 0usize);
    for video in videos {
        let (p, evals) = evaluate_video(params, readout, video, rhos, tau)?;
        p_sal += mean_where(&p, |i| video.is_salient(i)).unwrap_or(0.0);
        p_bg += mean_where(&p, |i| !video.is_salient(i)).unwrap_or(0.0);
        if !video.boundary_frames.is_empty() {
            let n_tok = video.grid.tokens_per_frame();
            let is_boundary = |i: usize| video.boundary_frames.contains(&(i / n_tok));
            if let (Some(b), Some(r)) = (mean_where(&p, is_boundary), mean_where(&p, |i| !is_boundary(i))) {
                p_bound += b;
                p_int += r;
                n_pseudo += 1;
            }
        }
        for (j, e) in evals.iter().enumerate() {
            for (slot, v) in sums[j]
                .iter_mut()
                .zip([e.ce, e.ce_base, e.delta_ce, e.sparsity, e.recall, 0.0])
            {
                *slot += v;
            }
            safe[j] += usize::from(e.delta_ce > 0.0);
        }
    }
    let boundary = (n_pseudo > 0).then(|| p_bound / n_pseudo as f64);
    let interior = (n_pseudo > 0).then(|| p_int / n_pseudo as f64);
    Ok(rhos
        .iter()
        .enumerate()
        .map(|(j, &rho)| EvalReport {
            rho,
            videos: videos.len(),
            mean_ce: sums[j][0] / n,
            mean_ce_base: sums[j][1] / n,
            mean_delta_ce: sums[j][2] / n,
            mean_sparsity: sums[j][3] / n,
            salient_recall: sums[j][4] / n,
            mean_p_salient: p_sal / n,
            mean_p_background: p_bg / n,
            mean_p_boundary: boundary,
            mean_p_interior: interior,
            safe_fraction: safe[j] as f64 / n,
        })
        .collect())
}

/// Load a checkpoint and write the top-K mask for a `.tok` file.
pub fn compress(
    checkpoint: impl AsRef<Path>,
    tok_path: impl AsRef<Path>,
    rho: f64,
    out: impl AsRef<Path>,
) -> Result<Mask> {
    let ckpt = load_checkpoint(checkpoint)?;
    let grid = tokenstream::read_token_grid(tok_path)?;
    let h = tokenstream::encode_state(&grid)?;
    let p = gatenet::policy_forward(&ckpt.params, &h)?;
    let mask = gatenet::topk_select(&p, rho)?;
    tokenstream::write_mask(&mask, out)?;
    Ok(mask)
}
