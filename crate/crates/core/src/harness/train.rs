//! Two-stage curriculum training loop.
//!
//! Each step draws the next training video of the current stage, samples a
//! rollout group, computes the split-advantage policy loss and applies one
//! SGD step. The drift stage of a `both` run starts from the pseudo-stage
//! checkpoint as written to disk.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::{Schedule, TrainConfig};
use super::eval::{evaluate, held_out_set, training_video};
use super::metrics::{MetricRecord, MetricsWriter, WindowStats};
use super::{HarnessError, Result};
use crate::gatenet::{init_params, PolicyParams};
use crate::group_rl::{self, OptimState, RlError, RolloutGroup};
use crate::oracle::{FrozenReadout, VideoOracle};
use crate::seeding;
use crate::synthgen::{LabeledVideo, Stage};
use crate::tokenstream;

/// Summary of one training group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupSummary {
    pub stage: Stage,
    pub iteration: u64,
    pub video_id: u64,
    pub loss: f64,
    pub ce_base: f64,
    pub mean_sparsity: f64,
    pub safe_fraction: f64,
    pub mean_delta_ce: f64,
}

impl GroupSummary {
    fn new(stage: Stage, iteration: u64, loss: f64, g: &RolloutGroup) -> Self {
        Self {
            stage,
            iteration,
            video_id: g.video_id,
            loss,
            ce_base: g.ce_base,
            mean_sparsity: g.mean_sparsity(),
            safe_fraction: g.safe_fraction(),
            mean_delta_ce: g.mean_delta_ce(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub iteration: u64,
    /// Checkpoint written at the end of each stage, in stage order.
    pub stage_checkpoints: Vec<(Stage, PathBuf)>,
    pub history: Vec<GroupSummary>,
    pub metric_records: usize,
}

/// `run.ckpt` -> `run.pseudo.ckpt`.
pub fn stage_checkpoint_path(final_path: &Path, stage: Stage) -> PathBuf {
    let stem = final_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let ext = final_path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ckpt".into());
    final_path.with_file_name(format!("{stem}.{}.{ext}", stage.name()))
}

/// Seed of the rollout group drawn at `step` of `stage`.
pub fn rollout_seed(run_seed: u64, stage: Stage, step: usize) -> u64 {
    seeding::derive_seed(run_seed, &[0x5EED, stage as u64, step as u64])
}

#[derive(Serialize)]
struct AbortDump<'a> {
    stage: Stage,
    iteration: u64,
    video_id: u64,
    reason: &'a str,
    loss: f64,
    ce_base: f64,
    rollouts: Vec<[f64; 4]>,
    params: Vec<f64>,
    grad: Option<Vec<f64>>,
}

fn window_stats(window: &[GroupSummary]) -> WindowStats {
    let n = window.len().max(1) as f64;
    let sum = |f: fn(&GroupSummary) -> f64| window.iter().map(f).sum::<f64>() / n;
    WindowStats {
        groups: window.len(),
        mean_loss: sum(|g| g.loss),
        mean_sparsity: sum(|g| g.mean_sparsity),
        safe_fraction: sum(|g| g.safe_fraction),
        mean_delta_ce: sum(|g| g.mean_delta_ce),
    }
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    readout: FrozenReadout,
    basis: crate::synthgen::ClassBasis,
    metrics: MetricsWriter,
    checkpoint: &'a Path,
    ablation: bool,
}

impl Trainer<'_> {
    #[allow(clippy::too_many_arguments)]
    fn abort(
        &self,
        stage: Stage,
        opt: &OptimState,
        reason: String,
        loss: f64,
        group: &RolloutGroup,
        params: &PolicyParams,
        grad: Option<&PolicyParams>,
    ) -> HarnessError {
        let dump = self.checkpoint.with_extension("abort.json");
        let body = AbortDump {
            stage,
            iteration: opt.iteration,
            video_id: group.video_id,
            reason: &reason,
            loss,
            ce_base: group.ce_base,
            rollouts: group
                .records
                .iter()
                .map(|r| [r.ce, r.sparsity, r.delta_ce, r.advantage])
                .collect(),
            params: params.to_flat(),
            grad: grad.map(PolicyParams::to_flat),
        };
        if let Ok(text) = serde_json::to_string_pretty(&body) {
            let _ = std::fs::write(&dump, text);
        }
        HarnessError::NumericAbort {
            iteration: opt.iteration,
            reason,
            dump,
        }
    }

    fn run_stage(
        &mut self,
        stage: Stage,
        params: &mut PolicyParams,
        opt: &mut OptimState,
        history: &mut Vec<GroupSummary>,
        records: &mut usize,
    ) -> Result<()> {
        let cfg = self.cfg;
        let stage_cfg = cfg.stage(stage);
        let held_out: Vec<LabeledVideo> = if cfg.eval.videos > 0 && !cfg.eval.rho.is_empty() {
            held_out_set(&cfg.data, &self.basis, stage, cfg.eval.videos)?
        } else {
            Vec::new()
        };
        let stage_start = history.len();
        let mut window_start = history.len();
        for step in 0..stage_cfg.videos {
            let video = training_video(&cfg.data, &self.basis, stage, step as u64)?;
            let h = tokenstream::encode_state(&video.grid)?;
            let oracle = VideoOracle::new(&self.readout, &video);
            let seed = rollout_seed(cfg.seed, stage, step);
            let group =
                group_rl::run_group_on_state(params, &h, &oracle, cfg.group_size, stage_cfg.tau, seed)?;
            let (loss, grad) = group_rl::policy_loss_and_grad(params, &h, &group)?;
            if !loss.is_finite() {
                return Err(self.abort(stage, opt, format!("non-finite loss {loss}"), loss, &group, params, Some(&grad)));
            }
            match group_rl::sgd_step(params, &grad, opt) {
                Ok(()) => {}
                Err(e @ RlError::NonFiniteGradient { .. }) => {
                    return Err(self.abort(stage, opt, e.to_string(), loss, &group, params, Some(&grad)));
                }
                Err(e) => return Err(e.into()),
            }
            history.push(GroupSummary::new(stage, opt.iteration, loss, &group));

            let done = step + 1;
            if done % cfg.eval.every == 0 || done == stage_cfg.videos {
                let reports = if held_out.is_empty() {
                    Vec::new()
                } else {
                    evaluate(params, &self.readout, &held_out, &cfg.eval.rho, stage_cfg.tau)?
                };
                self.metrics.append(&MetricRecord::Eval {
                    stage,
                    iteration: opt.iteration,
                    stage_step: done,
                    ablation: self.ablation,
                    window: window_stats(&history[window_start..]),
                    reports,
                })?;
                *records += 1;
                window_start = history.len();
            }
        }
        debug_assert_eq!(history.len() - stage_start, stage_cfg.videos);
        Ok(())
    }
}

/// Run the configured curriculum, writing checkpoints and the metrics log.
pub fn train(
    cfg: &TrainConfig,
    schedule: Schedule,
    checkpoint: impl AsRef<Path>,
    metrics: impl AsRef<Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let checkpoint = checkpoint.as_ref();
    let (basis, readout) = FrozenReadout::from_config(cfg.data.classes, cfg.data.dim, &cfg.oracle)?;
    let mut trainer = Trainer {
        cfg,
        readout,
        basis,
        metrics: MetricsWriter::create(metrics)?,
        checkpoint,
        ablation: schedule.is_ablation(),
    };
    let mut params = init_params(cfg.data.dim, cfg.hidden_width(), cfg.seed)?;
    let mut opt = OptimState::new(cfg.learning_rate)?;
    let mut history = Vec::new();
    let mut records = 0;
    let mut stage_checkpoints = Vec::new();

    for (idx, &stage) in schedule.stages().iter().enumerate() {
        if idx > 0 {
            let (_, prev) = stage_checkpoints.last().expect("previous stage wrote a checkpoint");
            let ckpt = load_checkpoint(prev)?;
            params = ckpt.params;
            opt.iteration = ckpt.iteration;
        }
        trainer.run_stage(stage, &mut params, &mut opt, &mut history, &mut records)?;
        let path = stage_checkpoint_path(checkpoint, stage);
        save_checkpoint(
            &Checkpoint {
                params: params.clone(),
                seed: cfg.seed,
                iteration: opt.iteration,
            },
            &path,
        )?;
        stage_checkpoints.push((stage, path));
    }
    let final_ckpt = Checkpoint {
        params,
        seed: cfg.seed,
        iteration: opt.iteration,
    };
    save_checkpoint(&final_ckpt, checkpoint)?;
    Ok(TrainOutcome {
        params: final_ckpt.params,
        iteration: opt.iteration,
        stage_checkpoints,
        history,
        metric_records: records,
    })
}
