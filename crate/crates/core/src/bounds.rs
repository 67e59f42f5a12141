//! Finite-hypothesis-class generalization bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nats per trainable parameter used when `ln|H|` is approximated from a
/// parameter count (one bit each).
pub const LN2_PER_PARAM: f64 = std::f64::consts::LN_2;

/// `sqrt((ln|H| + ln(2/δ)) / (2n))`, the two-sided Hoeffding + union bound
/// deviation.
pub fn hoeffding_gap(log_hypothesis_size: f64, n: u64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(log_hypothesis_size >= 0.0) || !log_hypothesis_size.is_finite() {
        return Err(Error::Domain(format!(
            "log hypothesis size must be finite and ≥ 0, got {log_hypothesis_size}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("n must be ≥ 1".into()));
    }
    let num = log_hypothesis_size + (2.0 / delta).ln();
    Ok((num / (2.0 * n as f64)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub train_error: f64,
    pub log_hypothesis_size: f64,
    pub n: u64,
    pub delta: f64,
}

impl BoundInput {
    /// `ln|H| = c · params`.
    pub fn from_param_count(train_error: f64, params: u64, nats_per_param: f64, n: u64, delta: f64) -> Self {
        BoundInput {
            train_error,
            log_hypothesis_size: nats_per_param * params as f64,
            n,
            delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub input: BoundInput,
    pub gap: f64,
    pub bound: f64,
}

pub fn bound(input: &BoundInput) -> Result<BoundReport> {
    if !(0.0..=1.0).contains(&input.train_error) {
        return Err(Error::Domain(format!(
            "train error must lie in [0, 1], got {}",
            input.train_error
        )));
    }
    let gap = hoeffding_gap(input.log_hypothesis_size, input.n, input.delta)?;
    Ok(BoundReport {
        input: input.clone(),
        gap,
        bound: input.train_error + gap,
    })
}
