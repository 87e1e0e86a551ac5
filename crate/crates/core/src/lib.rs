//! Feature-level energy measurement for background processes.

pub mod analysis;
pub mod clock;
pub mod energy;
pub mod feature_model;
pub mod orchestrator;
pub mod workload;
