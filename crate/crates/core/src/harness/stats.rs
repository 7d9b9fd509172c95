//! Small statistics helpers for comparing checkpoints.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t_stat: f64,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_value: f64,
}

/// One-sided paired t-test of `a > b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let t_stat = if se > 0.0 {
        mean / se
    } else if mean > 0.0 {
        f64::INFINITY
    } else if mean < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).ok()?;
    Some(PairedTest {
        n: a.len(),
        mean_diff: mean,
        t_stat,
        p_value: 1.0 - dist.cdf(t_stat),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        // diffs = (1, 2, 3): mean 2, sd 1, t = 2 * sqrt(3).
        let t = paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((t.t_stat - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // P(T_2 > 3.4641) = 0.0370 (closed form for 2 dof: 0.5 - t / (2 sqrt(t^2 + 2))).
        let want = 0.5 - t.t_stat / (2.0 * (t.t_stat.powi(2) + 2.0).sqrt());
        assert!((t.p_value - want).abs() < 1e-9);
        assert!(paired_t_test(&[1.0], &[0.0]).is_none());
        let tie = paired_t_test(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(tie.p_value, 0.5);
    }
}
