//! Run matrix expansion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{ExperimentPlan, PlanError, CONTROL_VARIANT};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunCoordinates {
    pub workload: String,
    pub variant: String,
    pub file_size_bytes: u64,
    pub repetition: u32,
    pub is_control: bool,
}

/// A run with its stable id: the position it would have in grouped order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub run_id: u32,
    pub coords: RunCoordinates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatrixCounts {
    pub workloads: usize,
    pub variants: usize,
    pub file_sizes: usize,
    pub repetitions: u32,
    pub control_scenarios: usize,
    pub main_runs: usize,
    pub control_runs: usize,
}

impl MatrixCounts {
    pub fn total(&self) -> usize {
        self.main_runs + self.control_runs
    }

    /// "810 main + 90 control = 900 runs"
    pub fn summary(&self) -> String {
        let total = self.total();
        format!(
            "{} main + {} control = {} run{}",
            self.main_runs,
            self.control_runs,
            total,
            if total == 1 { "" } else { "s" }
        )
    }
}

pub fn matrix_counts(plan: &ExperimentPlan) -> Result<MatrixCounts, PlanError> {
    let variants = plan.variant_chain()?.len();
    let reps = plan.repetitions as usize;
    Ok(MatrixCounts {
        workloads: plan.workloads.len(),
        variants,
        file_sizes: plan.file_sizes_bytes.len(),
        repetitions: plan.repetitions,
        control_scenarios: plan.controls.len(),
        main_runs: plan.workloads.len() * variants * plan.file_sizes_bytes.len() * reps,
        control_runs: plan.controls.len() * reps,
    })
}

/// Every run of the plan. Ids follow grouped order (workload, variant, size,
/// repetition, then controls); the returned order is shuffled with the plan
/// seed when `randomize_order` is set.
pub fn expand_matrix(plan: &ExperimentPlan) -> Result<Vec<PlannedRun>, PlanError> {
    plan.validate()?;
    let chain = plan.variant_chain()?;
    let mut coords = Vec::new();
    for w in &plan.workloads {
        for v in chain.variants() {
            for &size in &plan.file_sizes_bytes {
                for rep in 0..plan.repetitions {
                    coords.push(RunCoordinates {
                        workload: w.name.clone(),
                        variant: v.name.clone(),
                        file_size_bytes: size,
                        repetition: rep,
                        is_control: false,
                    });
                }
            }
        }
    }
    for c in &plan.controls {
        let size = plan.control_size(c);
        for rep in 0..plan.repetitions {
            coords.push(RunCoordinates {
                workload: c.workload.clone(),
                variant: CONTROL_VARIANT.to_string(),
                file_size_bytes: size,
                repetition: rep,
                is_control: true,
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = coords.iter().find(|c| !seen.insert(*c)) {
        return Err(PlanError {
            field: "controls".into(),
            message: format!(
                "control scenario for `{}` at {} bytes is declared twice",
                dup.workload, dup.file_size_bytes
            ),
        });
    }
    let mut runs: Vec<PlannedRun> = coords
        .into_iter()
        .enumerate()
        .map(|(i, coords)| PlannedRun {
            run_id: i as u32,
            coords,
        })
        .collect();
    if plan.randomize_order {
        runs.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    }
    Ok(runs)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Edit-script seed for a run. Variants and controls of the same size and
/// repetition share a script, so they differ only in the feature under test.
pub fn script_seed(plan_seed: u64, coords: &RunCoordinates) -> u64 {
    let mut h = splitmix64(plan_seed);
    for b in coords.workload.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h = splitmix64(h ^ coords.file_size_bytes);
    splitmix64(h ^ coords.repetition as u64)
}
