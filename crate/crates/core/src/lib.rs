//! Learned token pruning for video token streams.
//!
//! A per-token Bernoulli gate reads each visual token together with its
//! inter-frame residual and decides whether to keep it. The gate is trained
//! with group rollouts scored by a frozen downstream oracle, using a split
//! advantage that rewards sparsity only while the downstream cross-entropy
//! stays within tolerance. At inference a deterministic global top-K keeps a
//! fixed fraction of the stream.
//!
//! Module map:
//! - [`tokenstream`]: token grids, residual/state encoding, `.tok`/`.msk` files
//! - [`gatenet`]: the gate MLP, mask sampling, top-K selection
//! - [`group_rl`]: rewards, split advantage, policy loss, SGD, group rollouts
//! - [`synthgen`]: pseudo-video and drift-video curriculum data
//! - [`oracle`]: frozen mean-pool readout standing in for the downstream model
//! - [`harness`]: training loop, evaluation, checkpoints, metrics, cost model

pub mod gatenet;
pub mod group_rl;
pub mod harness;
pub mod oracle;
pub mod seeding;
pub mod synthgen;
pub mod tokenstream;
