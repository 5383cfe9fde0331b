//! Voltage deviation and loss savings.

use crate::distflow::{NetworkState, V0};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioMetrics {
    /// Largest relative deviation from the substation voltage.
    pub delta_v: f64,
    /// Total per-unit loss over the horizon.
    pub loss: f64,
    /// Fractional loss reduction against the baseline, when defined.
    pub savings: Option<f64>,
}

/// Largest `|V_j(t) - V0| / V0` over all nodes and slots.
pub fn voltage_variation(state: &NetworkState) -> f64 {
    state
        .v
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max((v - V0).abs() / V0))
}

/// `(baseline - method) / baseline`. Negative when the method loses more
/// than the baseline; not clamped.
pub fn energy_savings(loss_baseline: f64, loss_method: f64) -> Result<f64> {
    if !(loss_baseline > 0.0 && loss_baseline.is_finite()) {
        return Err(Error::UndefinedSavings(loss_baseline));
    }
    Ok((loss_baseline - loss_method) / loss_baseline)
}
