use proptest::prelude::*;

use tokprune::gatenet::{self, PolicyParams, RetentionMap};
use tokprune::group_rl::{self, DEFAULT_EPSILON};
use tokprune::harness::cost::{self, CostModel};
use tokprune::oracle::{oracle_ce, FrozenReadout, OracleConfig};
use tokprune::synthgen::{gen_video, GenConfig, Stage};
use tokprune::tokenstream::{encode_state, Mask, TokenGrid};

fn grid_and_probs() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..6, 1usize..12).prop_flat_map(|(t, n)| {
        (Just(t), Just(n), prop::collection::vec(1e-4f64..=1.0 - 1e-4, t * n))
    })
}

fn group() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=16).prop_flat_map(|k| {
        (
            prop::collection::vec(-1.0f64..1.0, k),
            prop::collection::vec(0.0f64..=1.0, k),
        )
    })
}

proptest! {
    #[test]
    fn advantage_sign_follows_zone((dce, s) in group()) {
        let adv = group_rl::split_advantages(&dce, &s, DEFAULT_EPSILON);
        let safe: Vec<f64> = dce.iter().zip(&s).filter(|(d, _)| **d > 0.0).map(|(_, x)| *x).collect();
        let mu = safe.iter().sum::<f64>() / safe.len().max(1) as f64;
        for i in 0..dce.len() {
            if dce[i] > 0.0 {
                prop_assert_eq!(adv[i] > 0.0, s[i] > mu);
            } else {
                prop_assert!(adv[i] <= 0.0);
                prop_assert_eq!(adv[i], dce[i] * s[i]);
            }
        }
    }

    #[test]
    fn topk_count_and_nesting((t, n, probs) in grid_and_probs(), a in 1usize..=1000, b in 1usize..=1000) {
        let p = RetentionMap::new(t, n, probs).unwrap();
        let (lo, hi) = (a.min(b) as f64 / 1000.0, a.max(b) as f64 / 1000.0);
        match (gatenet::topk_select(&p, lo), gatenet::topk_select(&p, hi)) {
            (Ok(m_lo), Ok(m_hi)) => {
                prop_assert_eq!(m_lo.retained(), gatenet::budget(lo, t * n).unwrap());
                prop_assert!(m_lo.bits().iter().zip(m_hi.bits()).all(|(x, y)| x <= y));
            }
            (Err(_), _) => prop_assert!((lo * (t * n) as f64 + 1e-9).floor() < 1.0),
            (Ok(_), Err(e)) => prop_assert!(false, "larger ratio failed: {}", e),
        }
    }

    #[test]
    fn sampling_is_reproducible_and_order_free((t, n, probs) in grid_and_probs(), seed in any::<u64>()) {
        let p = RetentionMap::new(t, n, probs).unwrap();
        let all = gatenet::sample_masks(&p, 4, seed).unwrap();
        prop_assert_eq!(&gatenet::sample_mask(&p, seed, 3).unwrap(), &all[3]);
        prop_assert_eq!(&gatenet::sample_mask(&p, seed, 0).unwrap(), &all[0]);
        for m in &all {
            let s = group_rl::sparsity(m);
            prop_assert_eq!(s, 1.0 - m.retained() as f64 / (t * n) as f64);
        }
    }

    #[test]
    fn logprob_is_nonpositive_and_bounded((t, n, probs) in grid_and_probs(), seed in any::<u64>()) {
        let p = RetentionMap::new(t, n, probs).unwrap();
        let m = gatenet::sample_mask(&p, seed, 0).unwrap();
        let lp = group_rl::bernoulli_logprob(&p, &m).unwrap();
        prop_assert!(lp <= 0.0);
        prop_assert!(lp >= (t * n) as f64 * 1e-4f64.ln() - 1e-9);
    }

    #[test]
    fn gate_probabilities_stay_clamped(
        (t, n, d) in (1usize..4, 1usize..6, 1usize..5),
        hidden in 1usize..8,
        scale in 0.1f64..20.0,
        seed in any::<u64>(),
    ) {
        let values: Vec<f32> = (0..t * n * d).map(|i| ((i as f32) * 0.37).sin() * 5.0).collect();
        let h = encode_state(&TokenGrid::new(t, n, d, values).unwrap()).unwrap();
        let mut params: PolicyParams = gatenet::init_params(d, hidden, seed).unwrap();
        for v in params.iter_mut() {
            *v *= scale;
        }
        let p = gatenet::policy_forward(&params, &h).unwrap();
        prop_assert!(p.probs().iter().all(|&x| (1e-4..=1.0 - 1e-4).contains(&x)));
    }

    #[test]
    fn speedup_within_exact_limits(
        a in 1e-6f64..1e6,
        b in 1e-6f64..1e6,
        full in 2u64..100_000,
        frac in 0.01f64..0.99,
    ) {
        let comp = ((full as f64 * frac) as u64).max(1);
        let m = CostModel::from_coefficients(a, b).unwrap();
        let s = cost::speedup(&m, full, comp).unwrap();
        let r = full as f64 / comp as f64;
        prop_assert!(s >= r * (1.0 - 1e-12) && s <= r * r * (1.0 + 1e-12));
    }

    #[test]
    fn oracle_ignores_order_of_identical_tokens(id in 0u64..50, seed in any::<u64>()) {
        let cfg = GenConfig { tokens_per_frame: 16, ..GenConfig::default() };
        let (basis, readout) = FrozenReadout::from_config(cfg.classes, cfg.dim, &OracleConfig::default()).unwrap();
        let v = gen_video(&cfg, &basis, Stage::Pseudo, id).unwrap();
        let p = RetentionMap::new(v.frames(), 16, vec![0.5; v.token_count()]).unwrap();
        let m = gatenet::sample_mask(&p, seed, 0).unwrap();
        prop_assume!(m.retained() > 0);
        // Inside a pseudo segment frames repeat, so moving a kept token to the same
        // position in the previous identical frame keeps the retained multiset.
        let mut bits = m.bits().to_vec();
        let mut moved = 0;
        for t in 1..v.frames() {
            if v.boundary_frames.contains(&t) {
                continue;
            }
            for i in 0..16 {
                let (here, prev) = (t * 16 + i, (t - 1) * 16 + i);
                if bits[here] == 1 && bits[prev] == 0 {
                    bits.swap(here, prev);
                    moved += 1;
                }
            }
        }
        let shifted = Mask::new(v.frames(), 16, bits).unwrap();
        let (a, b) = (oracle_ce(&readout, &v, &m).unwrap(), oracle_ce(&readout, &v, &shifted).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "moved {} tokens: {} vs {}", moved, a, b);
    }
}
