//! Analytic prefill cost: `cost(L) = a * L + b * L^2`.
//!
//! `a` counts the dense per-token work (attention projections plus the
//! feed-forward block, 2 FLOPs per multiply-add) and `b` the per-pair
//! attention work (`QK^T` and the value mix), both summed over layers:
//!
//! ```text
//! a = layers * (8 + 4 * expansion) * width^2
//! b = layers * 2 * width
//! ```
//!
//! Any positive `(a, b)` puts `speedup(L_full, L_comp)` strictly between the
//! linear ratio `L_full / L_comp` and its square.

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};

/// Measured end-to-end prefill speedup at 10% retention on a 7B video model,
/// used as a reference point the analytic bracket must contain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub full_tokens: u64,
    pub compressed_tokens: u64,
    pub rho: f64,
    pub measured_speedup: f64,
}

pub const MEASURED_REFERENCE: ReferencePoint = ReferencePoint {
    full_tokens: 42657,
    compressed_tokens: 4439,
    rho: 0.10,
    measured_speedup: 16.2,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Per-token coefficient `a`.
    pub linear: f64,
    /// Per-pair coefficient `b`.
    pub quadratic: f64,
}

impl CostModel {
    pub fn from_architecture(layers: u32, width: u32, expansion: f64) -> Result<Self> {
        if layers == 0 || width == 0 || !(expansion.is_finite() && expansion > 0.0) {
            return Err(HarnessError::Config(format!(
                "layers, width and expansion must be positive (got {layers}, {width}, {expansion})"
            )));
        }
        let (l, d) = (layers as f64, width as f64);
        Self::from_coefficients(l * (8.0 + 4.0 * expansion) * d * d, l * 2.0 * d)
    }

    pub fn from_coefficients(linear: f64, quadratic: f64) -> Result<Self> {
        if !(linear.is_finite() && linear > 0.0 && quadratic.is_finite() && quadratic > 0.0) {
            return Err(HarnessError::Config(format!(
                "cost coefficients must be positive, got a={linear} b={quadratic}"
            )));
        }
        Ok(Self { linear, quadratic })
    }
}

pub fn prefill_cost(model: &CostModel, seq_len: u64) -> Result<f64> {
    if seq_len == 0 {
        return Err(HarnessError::Config("sequence length must be >= 1".into()));
    }
    let l = seq_len as f64;
    Ok(model.linear * l + model.quadratic * l * l)
}

pub fn speedup(model: &CostModel, full: u64, compressed: u64) -> Result<f64> {
    Ok(prefill_cost(model, full)? / prefill_cost(model, compressed)?)
}

/// Analytic limits of the speedup: `(L_full / L_comp, (L_full / L_comp)^2)`.
pub fn speedup_bracket(full: u64, compressed: u64) -> (f64, f64) {
    let r = full as f64 / compressed as f64;
    (r, r * r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: CostModel,
    pub full_tokens: u64,
    pub compressed_tokens: u64,
    pub full_cost_flops: f64,
    pub compressed_cost_flops: f64,
    pub speedup: f64,
    pub linear_limit: f64,
    pub quadratic_limit: f64,
    pub reference: ReferencePoint,
    pub reference_within_bracket: bool,
}

pub fn cost_report(model: &CostModel, full: u64, compressed: u64) -> Result<CostReport> {
    let (lo, hi) = speedup_bracket(full, compressed);
    let reference = MEASURED_REFERENCE;
    let (ref_lo, ref_hi) = speedup_bracket(reference.full_tokens, reference.compressed_tokens);
    Ok(CostReport {
        model: *model,
        full_tokens: full,
        compressed_tokens: compressed,
        full_cost_flops: prefill_cost(model, full)?,
        compressed_cost_flops: prefill_cost(model, compressed)?,
        speedup: speedup(model, full, compressed)?,
        linear_limit: lo,
        quadratic_limit: hi,
        reference,
        reference_within_bracket: ref_lo < reference.measured_speedup
            && reference.measured_speedup < ref_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_errors() {
        let m = CostModel::from_architecture(28, 3584, 4.0).unwrap();
        assert_eq!(speedup(&m, 5000, 5000).unwrap(), 1.0);
        assert!(prefill_cost(&m, 0).is_err());
        assert!(CostModel::from_coefficients(0.0, 1.0).is_err());
        assert!(CostModel::from_architecture(0, 10, 4.0).is_err());
    }

    #[test]
    fn seven_b_class_model_lands_near_reference() {
        let m = CostModel::from_architecture(28, 3584, 4.0).unwrap();
        let s = speedup(&m, 42657, 4439).unwrap();
        let (lo, hi) = speedup_bracket(42657, 4439);
        assert!(lo < s && s < hi);
        assert!((s - 16.2).abs() < 2.0, "{s}");
    }

    #[test]
    fn report_cites_reference() {
        let m = CostModel::from_coefficients(1.0, 1.0).unwrap();
        let r = cost_report(&m, 42657, 4439).unwrap();
        assert_eq!(r.reference.measured_speedup, 16.2);
        assert!(r.reference_within_bracket);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"measured_speedup\":16.2"));
    }
}
