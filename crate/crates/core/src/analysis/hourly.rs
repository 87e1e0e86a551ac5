//! Hourly cost extrapolation and save-frequency what-ifs.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Per-workload inputs of the hourly table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySpec {
    pub workload: String,
    pub saves: u32,
    pub interval_s: f64,
    /// Appended to the frequency column, e.g. "idle".
    pub trigger_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyEstimate {
    pub scenario: String,
    pub avg_j_total: f64,
    pub saves: u32,
    /// Rounded to two decimals before the hourly multiplication.
    pub avg_j_per_save: f64,
    pub interval_s: f64,
    pub calls_per_hr: f64,
    pub joules_per_hr: f64,
    pub unrounded_j_per_save: f64,
    pub unrounded_joules_per_hr: f64,
    pub trigger_note: Option<String>,
}

fn validate(saves: u32, interval_s: f64) -> Result<(), AnalysisError> {
    if saves < 1 {
        return Err(AnalysisError::Invalid("saves must be at least 1".into()));
    }
    if !(interval_s > 0.0 && interval_s.is_finite()) {
        return Err(AnalysisError::Invalid(format!(
            "interval must be positive, got {interval_s}"
        )));
    }
    Ok(())
}

/// Energy per save rounded to cents of a joule, then scaled to one hour.
pub fn estimate_hourly(
    scenario: impl Into<String>,
    avg_j_total: f64,
    saves: u32,
    interval_s: f64,
) -> Result<HourlyEstimate, AnalysisError> {
    validate(saves, interval_s)?;
    if !(avg_j_total >= 0.0 && avg_j_total.is_finite()) {
        return Err(AnalysisError::Invalid(format!(
            "average energy must be non-negative, got {avg_j_total}"
        )));
    }
    let per_save = avg_j_total / saves as f64;
    let cents = (per_save * 100.0).round();
    let calls = SECONDS_PER_HOUR / interval_s;
    Ok(HourlyEstimate {
        scenario: scenario.into(),
        avg_j_total,
        saves,
        avg_j_per_save: cents / 100.0,
        interval_s,
        calls_per_hr: calls,
        // integer cents keep e.g. 0.83 x 120 at exactly 99.6
        joules_per_hr: cents * calls / 100.0,
        unrounded_j_per_save: per_save,
        unrounded_joules_per_hr: avg_j_total * (SECONDS_PER_HOUR / (saves as f64 * interval_s)),
        trigger_note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub scenario: String,
    pub old_interval_s: f64,
    pub new_interval_s: f64,
    pub old_joules_per_hr: f64,
    pub new_calls_per_hr: f64,
    pub new_joules_per_hr: f64,
    /// 1 - new/old; negative when saving more often.
    pub reduction_fraction: f64,
}

pub fn frequency_whatif(estimate: &HourlyEstimate, new_interval_s: f64) -> Result<WhatIfResult, AnalysisError> {
    validate(1, new_interval_s)?;
    let new_calls = SECONDS_PER_HOUR / new_interval_s;
    let cents = (estimate.avg_j_per_save * 100.0).round();
    Ok(WhatIfResult {
        scenario: estimate.scenario.clone(),
        old_interval_s: estimate.interval_s,
        new_interval_s,
        old_joules_per_hr: estimate.joules_per_hr,
        new_calls_per_hr: new_calls,
        new_joules_per_hr: cents * new_calls / 100.0,
        reduction_fraction: 1.0 - new_calls / estimate.calls_per_hr,
    })
}
