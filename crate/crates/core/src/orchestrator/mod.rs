//! Plan expansion and strictly sequential execution of measurement cycles.

pub mod cycle;
pub mod env;
pub mod matrix;
pub mod plan;
pub mod runner;
pub mod store;

pub use cycle::{execute_cycle, CycleContext, CycleError, MeasurementRecord};
pub use env::{environment_check, environment_check_at, EnvironmentFingerprint, HostRoots, ReadinessReport};
pub use matrix::{expand_matrix, matrix_counts, MatrixCounts, PlannedRun, RunCoordinates};
pub use plan::{
    AnalysisSection, ClockKind, ControlSpec, CycleConfig, ExperimentPlan, FeatureSection, PlanError, ProviderSection,
    SyntheticCosts, WhatIf, WorkloadTemplate, CONTROL_VARIANT,
};
pub use runner::{
    open_plan_provider, output_dir, rerun_failed, run_plan, ResumeToken, RunError, RunOptions, RunSummary,
    ENVIRONMENT_FILE, PLAN_COPY_FILE, RESUME_FILE, STORE_FILE,
};
pub use store::{load_store, LoadedStore, RunStatus, RunStore, StoreError, StoredRecord};
