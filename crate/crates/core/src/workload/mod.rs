//! Native autosave skeleton: a text buffer under scripted edits, periodic or
//! idle triggers, three write strategies, change detection and logging.

mod buffer;
mod edits;
mod log;
mod save;
mod session;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use buffer::{detect_change, DocumentBuffer};
pub use edits::{
    generate_edit_script, generate_edit_script_with, EditEvent, EditParams, EditScript, Mutation,
    DEFAULT_APPEND_FRACTION, DEFAULT_EDIT_RATE_HZ,
};
pub use log::{emit_log, LogError, LogSink, LoggingMode, SaveAction, SaveEvent};
pub use save::{
    backup_path, is_temp_sibling, perform_save, perform_save_with_fault, InjectedFault,
    SaveReceipt, WriteStrategy,
};
pub use session::{
    firing_schedule, run_autosave_session, AutosaveConfig, AutosaveSession, SessionObserver,
    SessionOp, SessionReport, SessionStats, TriggerConfig, TriggerKind, DEFAULT_MAX_SESSION_S,
};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload configuration: {0}")]
    Config(String),
    #[error("{strategy:?} save to {} failed: {source}", path.display())]
    Save {
        strategy: WriteStrategy,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("target {} is not in a writable directory", .0.display())]
    Unwritable(PathBuf),
    #[error("idle trigger reached {fired} of {budget} firings within {bound_s} s")]
    Timeout { fired: u32, budget: u32, bound_s: f64 },
    #[error("session cancelled")]
    Cancelled,
}
