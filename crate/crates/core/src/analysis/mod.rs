//! Turns stored measurements into result tables: control deltas, descriptive
//! statistics, pairwise significance, hourly extrapolation and what-ifs.
//!
//! Everything here is a pure function of the loaded records. Per-scenario and
//! per-pair work is spread over a rayon pool unless [`ExecMode::Sequential`]
//! is requested or the `parallel` feature is off.

pub mod delta;
pub mod hourly;
pub mod hypothesis;
pub mod normality;
pub mod pairwise;
pub mod report;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{StoredRecord, CONTROL_VARIANT};

pub use delta::{compute_deltas, default_control_mapping, ControlMapping, DeltaResult};
pub use hourly::{estimate_hourly, frequency_whatif, HourlyEstimate, HourlySpec, WhatIfResult};
pub use hypothesis::{mann_whitney_u, welch_t_test, MannWhitneyResult, MwuMethod, WelchResult};
pub use normality::{shapiro_wilk, ShapiroWilk};
pub use pairwise::{all_pairwise, holm_adjust, test_pairwise, PairwiseComparison, Side, TestKind};
pub use report::{
    analyze, export_report, format_p, format_size, hourly_table, pairwise_table, table_to_csv, table_to_text,
    AnalysisOptions, Analyses, ReportBundle, ReportMetadata, ScenarioSummary, PAIRWISE_FILE, HOURLY_FILE, TEXT_FILE,
};
pub use stats::{box_summary, describe, iqr_filter, BoxSummary, Descriptive};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no control scenario for {0}")]
    MissingControl(ScenarioKey),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("the store holds no successful records")]
    EmptyStore,
    #[error("cannot write report to {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub workload: String,
    pub variant: String,
    pub file_size_bytes: u64,
}

impl ScenarioKey {
    pub fn new(workload: impl Into<String>, variant: impl Into<String>, file_size_bytes: u64) -> Self {
        ScenarioKey {
            workload: workload.into(),
            variant: variant.into(),
            file_size_bytes,
        }
    }

    pub fn is_control(&self) -> bool {
        self.variant == CONTROL_VARIANT
    }

    /// "Mu change"
    pub fn label(&self) -> String {
        format!("{} {}", self.workload, self.variant)
    }
}

impl fmt::Display for ScenarioKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} @ {} B", self.workload, self.variant, self.file_size_bytes)
    }
}

/// Total joules of successful runs, grouped by scenario, in store order.
pub type ScenarioGroups = BTreeMap<ScenarioKey, Vec<f64>>;

pub fn group_totals<'a>(records: impl IntoIterator<Item = &'a StoredRecord>) -> ScenarioGroups {
    let mut groups = ScenarioGroups::new();
    for r in records {
        if !r.is_ok() {
            continue;
        }
        let Some(j) = r.total_joules else { continue };
        let c = &r.coords;
        groups
            .entry(ScenarioKey::new(&c.workload, &c.variant, c.file_size_bytes))
            .or_default()
            .push(j);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Order-preserving map that uses the rayon pool in parallel mode.
pub(crate) fn map_items<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
