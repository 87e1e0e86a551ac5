//! Control subtraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::{AnalysisError, ScenarioGroups, ScenarioKey};

/// Test scenario -> control scenario.
pub type ControlMapping = BTreeMap<ScenarioKey, ScenarioKey>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub scenario: ScenarioKey,
    pub control: ScenarioKey,
    pub mean_test_j: f64,
    pub mean_control_j: f64,
    pub delta_j: f64,
    pub n_test: usize,
    pub n_control: usize,
}

/// Maps each test scenario to the control of the same workload and size, or
/// failing that to the workload's only control.
pub fn default_control_mapping(groups: &ScenarioGroups) -> Result<ControlMapping, AnalysisError> {
    let controls: Vec<&ScenarioKey> = groups.keys().filter(|k| k.is_control()).collect();
    let mut mapping = ControlMapping::new();
    for key in groups.keys().filter(|k| !k.is_control()) {
        let same_workload: Vec<&&ScenarioKey> =
            controls.iter().filter(|c| c.workload == key.workload).collect();
        let control = same_workload
            .iter()
            .find(|c| c.file_size_bytes == key.file_size_bytes)
            .or(match same_workload.as_slice() {
                [only] => Some(only),
                _ => None,
            })
            .ok_or_else(|| AnalysisError::MissingControl(key.clone()))?;
        mapping.insert(key.clone(), (**control).clone());
    }
    Ok(mapping)
}

pub fn compute_deltas(
    groups: &ScenarioGroups,
    mapping: &ControlMapping,
) -> Result<Vec<DeltaResult>, AnalysisError> {
    let mut out = Vec::new();
    for (key, samples) in groups.iter().filter(|(k, _)| !k.is_control()) {
        let control = mapping
            .get(key)
            .ok_or_else(|| AnalysisError::MissingControl(key.clone()))?;
        let control_samples = groups
            .get(control)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| AnalysisError::MissingControl(key.clone()))?;
        if samples.is_empty() {
            return Err(AnalysisError::EmptyGroup(key.to_string()));
        }
        let mean_test_j = mean(samples);
        let mean_control_j = mean(control_samples);
        out.push(DeltaResult {
            scenario: key.clone(),
            control: control.clone(),
            mean_test_j,
            mean_control_j,
            delta_j: mean_test_j - mean_control_j,
            n_test: samples.len(),
            n_control: control_samples.len(),
        });
    }
    Ok(out)
}

/// Every test sample shifted by its control mean; controls are dropped.
pub fn delta_adjusted(groups: &ScenarioGroups, deltas: &[DeltaResult]) -> ScenarioGroups {
    deltas
        .iter()
        .filter_map(|d| {
            let s = groups.get(&d.scenario)?;
            Some((
                d.scenario.clone(),
                s.iter().map(|x| x - d.mean_control_j).collect(),
            ))
        })
        .collect()
}
