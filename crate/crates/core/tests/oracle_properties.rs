//! Statistical properties of the frozen readout over generated videos.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tokprune::gatenet::init_params;
use tokprune::group_rl::{policy_loss_and_grad, run_group_on_state, sgd_step, OptimState};
use tokprune::harness::config::TrainConfig;
use tokprune::harness::eval::training_video;
use tokprune::oracle::{oracle_ce, oracle_ce_base, FrozenReadout, VideoOracle};
use tokprune::synthgen::{ClassBasis, LabeledVideo, Stage};
use tokprune::tokenstream::{encode_state, Mask};

fn setup() -> (TrainConfig, ClassBasis, FrozenReadout) {
    let cfg = TrainConfig::default();
    let (basis, readout) = FrozenReadout::from_config(cfg.data.classes, cfg.data.dim, &cfg.oracle).unwrap();
    (cfg, basis, readout)
}

fn mask_from(video: &LabeledVideo, keep: &[usize]) -> Mask {
    let mut bits = vec![0u8; video.token_count()];
    for &i in keep {
        bits[i] = 1;
    }
    Mask::new(video.frames(), video.grid.tokens_per_frame(), bits).unwrap()
}

#[test]
fn dropping_salient_tokens_raises_mean_ce() {
    let (cfg, basis, readout) = setup();
    let (mut full, mut dropped) = (0.0, 0.0);
    let n = 200;
    for i in 0..n {
        let v = training_video(&cfg.data, &basis, Stage::Pseudo, i).unwrap();
        let background: Vec<usize> = (0..v.token_count()).filter(|&j| !v.is_salient(j)).collect();
        full += oracle_ce_base(&readout, &v).unwrap();
        dropped += oracle_ce(&readout, &v, &mask_from(&v, &background)).unwrap();
    }
    assert!(dropped / n as f64 > full / n as f64, "dropped {dropped} full {full}");
}

#[test]
fn more_salient_tokens_at_equal_count_lower_ce() {
    let (cfg, basis, readout) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut rich, mut poor) = (0.0, 0.0);
    let pairs = 500;
    for i in 0..pairs {
        let stage = if i % 2 == 0 { Stage::Pseudo } else { Stage::Drift };
        let v = training_video(&cfg.data, &basis, stage, i / 2).unwrap();
        let mut sal = v.salient_indices();
        let mut bg: Vec<usize> = (0..v.token_count()).filter(|&j| !v.is_salient(j)).collect();
        sal.shuffle(&mut rng);
        bg.shuffle(&mut rng);
        // Same retained count, different salient share.
        let k = sal.len().min(bg.len()) / 2;
        let hi: Vec<usize> = sal[..k].iter().chain(&bg[..k]).copied().collect();
        let lo: Vec<usize> = sal[..k / 2].iter().chain(&bg[..2 * k - k / 2]).copied().collect();
        assert_eq!(hi.len(), lo.len());
        rich += oracle_ce(&readout, &v, &mask_from(&v, &hi)).unwrap();
        poor += oracle_ce(&readout, &v, &mask_from(&v, &lo)).unwrap();
    }
    assert!(rich < poor, "rich {rich} poor {poor}");
}

#[test]
fn training_leaves_readout_bytes_unchanged() {
    let (cfg, basis, readout) = setup();
    let before = readout.to_bytes();
    let mut params = init_params(cfg.data.dim, cfg.hidden_width(), cfg.seed).unwrap();
    let mut opt = OptimState::new(cfg.learning_rate).unwrap();
    for step in 0..40 {
        let v = training_video(&cfg.data, &basis, Stage::Pseudo, step).unwrap();
        let h = encode_state(&v.grid).unwrap();
        let oracle = VideoOracle::new(&readout, &v);
        let group = run_group_on_state(&params, &h, &oracle, cfg.group_size, cfg.pseudo.tau, step).unwrap();
        let (_, grad) = policy_loss_and_grad(&params, &h, &group).unwrap();
        sgd_step(&mut params, &grad, &mut opt).unwrap();
    }
    assert_eq!(before, readout.to_bytes());
    let (_, rebuilt) = FrozenReadout::from_config(cfg.data.classes, cfg.data.dim, &cfg.oracle).unwrap();
    assert_eq!(before, rebuilt.to_bytes());
}
