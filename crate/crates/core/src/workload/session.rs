//! Timeline driver for one autosave session.
//!
//! Edits and trigger firings are merged onto a single event loop. At equal
//! timestamps edits run first, so an idle trigger never fires in the same
//! instant as an edit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::buffer::{detect_change, DocumentBuffer};
use super::edits::EditScript;
use super::log::{LogSink, LoggingMode, SaveAction, SaveEvent};
use super::save::{perform_save, WriteStrategy};
use super::WorkloadError;
use crate::clock::{nanos_to_secs, secs_to_nanos, CancelFlag, Clock, Nanos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    /// Fires every `interval_s`.
    Periodic,
    /// Fires once `interval_s` has passed without an edit, then waits for the
    /// next edit before it can fire again.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    pub kind: TriggerKind,
    pub interval_s: f64,
}

impl TriggerConfig {
    pub fn periodic(interval_s: f64) -> Self {
        TriggerConfig {
            kind: TriggerKind::Periodic,
            interval_s,
        }
    }

    pub fn idle(interval_s: f64) -> Self {
        TriggerConfig {
            kind: TriggerKind::Idle,
            interval_s,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !self.interval_s.is_finite() || self.interval_s <= 0.0 {
            return Err(WorkloadError::Config(format!(
                "trigger interval must be positive, got {}",
                self.interval_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutosaveConfig {
    pub trigger: TriggerConfig,
    pub strategy: WriteStrategy,
    pub change_detection: bool,
    pub logging: LoggingMode,
    pub target_path: PathBuf,
    /// Defaults to `<target>.log`.
    pub log_path: Option<PathBuf>,
    pub save_budget: u32,
    /// When false the edit timeline runs but no trigger action executes
    /// (control scenario).
    pub autosave_enabled: bool,
    /// Upper bound on session length; an idle trigger that cannot reach its
    /// budget within it is a timeout.
    pub max_session_s: f64,
}

pub const DEFAULT_MAX_SESSION_S: f64 = 3600.0;

impl AutosaveConfig {
    pub fn new(trigger: TriggerConfig, strategy: WriteStrategy, target_path: impl Into<PathBuf>) -> Self {
        AutosaveConfig {
            trigger,
            strategy,
            change_detection: false,
            logging: LoggingMode::None,
            target_path: target_path.into(),
            log_path: None,
            save_budget: 12,
            autosave_enabled: true,
            max_session_s: DEFAULT_MAX_SESSION_S,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        self.trigger.validate()?;
        if self.save_budget == 0 {
            return Err(WorkloadError::Config("save_budget must be at least 1".into()));
        }
        if self.max_session_s.is_nan() || self.max_session_s <= 0.0 {
            return Err(WorkloadError::Config("max_session_s must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_log_path(&self) -> PathBuf {
        self.log_path.clone().unwrap_or_else(|| {
            let mut s = self.target_path.clone().into_os_string();
            s.push(".log");
            PathBuf::from(s)
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub trigger_firings: u32,
    pub saves_performed: u32,
    pub saves_skipped: u32,
    pub change_checks: u32,
    pub bytes_written: u64,
    pub log_records: u32,
    pub log_errors: u32,
    pub edits_applied: u32,
    pub wall_time_s: f64,
}

impl SessionStats {
    /// Equality ignoring wall time.
    pub fn same_counts(&self, other: &SessionStats) -> bool {
        SessionStats {
            wall_time_s: 0.0,
            ..self.clone()
        } == SessionStats {
            wall_time_s: 0.0,
            ..other.clone()
        }
    }
}

/// Atomic operations as they execute, for instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionOp {
    Edit,
    ChangeCheck,
    Write { bytes: u64 },
    Log,
}

pub trait SessionObserver {
    fn on_operation(&mut self, op: SessionOp);

    /// Period of `on_tick` callbacks, if sampling is wanted.
    fn tick_interval(&self) -> Option<Nanos> {
        None
    }

    fn on_tick(&mut self, _at: Nanos) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub stats: SessionStats,
    /// One entry per executed firing, with session-relative timestamps.
    pub firings: Vec<SaveEvent>,
}

/// Firing times (session-relative) for `trigger` over the edit timeline.
pub fn firing_schedule(
    trigger: &TriggerConfig,
    budget: u32,
    script: &EditScript,
    max_session_s: f64,
) -> Result<Vec<Nanos>, WorkloadError> {
    trigger.validate()?;
    let interval = secs_to_nanos(trigger.interval_s);
    let bound = secs_to_nanos(max_session_s);
    let mut times = Vec::with_capacity(budget as usize);
    match trigger.kind {
        TriggerKind::Periodic => {
            times.extend((1..=budget as u64).map(|k| k * interval));
        }
        TriggerKind::Idle => {
            let edits = &script.events;
            for (i, e) in edits.iter().enumerate() {
                if times.len() == budget as usize {
                    break;
                }
                let fire_at = e.at + interval;
                let interrupted = edits.get(i + 1).is_some_and(|next| next.at <= fire_at);
                if !interrupted {
                    times.push(fire_at);
                }
            }
        }
    }
    if times.len() < budget as usize {
        return Err(WorkloadError::Timeout {
            fired: times.len() as u32,
            budget,
            bound_s: max_session_s,
        });
    }
    if let Some(&last) = times.last() {
        if last > bound {
            let fired = times.iter().filter(|t| **t <= bound).count() as u32;
            return Err(WorkloadError::Timeout {
                fired,
                budget,
                bound_s: max_session_s,
            });
        }
    }
    Ok(times)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    // order matters: edits before ticks before firings at equal timestamps
    Edit(usize),
    Tick,
    Fire(u32),
}

/// A prepared session, armed but idle until [`AutosaveSession::run`].
#[derive(Debug)]
pub struct AutosaveSession {
    config: AutosaveConfig,
    script: EditScript,
    schedule: Vec<Nanos>,
    buffer: DocumentBuffer,
    sink: LogSink,
}

impl AutosaveSession {
    pub fn prepare(config: AutosaveConfig, script: EditScript) -> Result<Self, WorkloadError> {
        let sink = if config.logging == LoggingMode::None {
            LogSink::disabled()
        } else {
            LogSink::new(config.logging, Some(&config.effective_log_path()))
        };
        Self::prepare_with_sink(config, script, sink)
    }

    pub fn prepare_with_sink(
        config: AutosaveConfig,
        script: EditScript,
        sink: LogSink,
    ) -> Result<Self, WorkloadError> {
        config.validate()?;
        let dir = config
            .target_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !dir.is_dir() {
            return Err(WorkloadError::Unwritable(config.target_path.clone()));
        }
        let schedule = firing_schedule(
            &config.trigger,
            config.save_budget,
            &script,
            config.max_session_s,
        )?;
        let buffer = DocumentBuffer::new(script.target_size_bytes);
        Ok(AutosaveSession {
            config,
            script,
            schedule,
            buffer,
            sink,
        })
    }

    pub fn schedule(&self) -> &[Nanos] {
        &self.schedule
    }

    /// Session length: the time of the last firing.
    pub fn planned_duration(&self) -> Nanos {
        self.schedule.last().copied().unwrap_or(0)
    }

    pub fn run(
        mut self,
        clock: &dyn Clock,
        mut observer: Option<&mut dyn SessionObserver>,
        cancel: &CancelFlag,
    ) -> Result<SessionReport, WorkloadError> {
        let end = self.planned_duration();
        let mut steps: Vec<(Nanos, Step)> = self
            .script
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.at <= end)
            .map(|(i, e)| (e.at, Step::Edit(i)))
            .collect();
        steps.extend(
            self.schedule
                .iter()
                .enumerate()
                .map(|(i, t)| (*t, Step::Fire(i as u32 + 1))),
        );
        if let Some(period) = observer.as_ref().and_then(|o| o.tick_interval()).filter(|p| *p > 0) {
            steps.extend((1..).map(|k| k * period).take_while(|t| *t < end).map(|t| (t, Step::Tick)));
        }
        steps.sort();

        let origin = clock.now();
        let mut stats = SessionStats::default();
        let mut firings = Vec::new();
        for (at, step) in steps {
            if !clock.sleep_until(origin + at, cancel) {
                return Err(WorkloadError::Cancelled);
            }
            match step {
                Step::Edit(i) => {
                    let mutation = self.script.events[i].mutation;
                    self.buffer.apply(&mutation, i);
                    stats.edits_applied += 1;
                    if let Some(o) = observer.as_deref_mut() {
                        o.on_operation(SessionOp::Edit);
                    }
                }
                Step::Tick => {
                    if let Some(o) = observer.as_deref_mut() {
                        o.on_tick(at);
                    }
                }
                Step::Fire(index) => {
                    if !self.config.autosave_enabled {
                        continue;
                    }
                    let event = self.fire(index, at, &mut stats, &mut observer)?;
                    firings.push(event);
                }
            }
        }
        stats.wall_time_s = nanos_to_secs(clock.now().saturating_sub(origin));
        Ok(SessionReport { stats, firings })
    }

    fn fire(
        &mut self,
        index: u32,
        at: Nanos,
        stats: &mut SessionStats,
        observer: &mut Option<&mut dyn SessionObserver>,
    ) -> Result<SaveEvent, WorkloadError> {
        stats.trigger_firings += 1;
        let should_write = if self.config.change_detection {
            stats.change_checks += 1;
            if let Some(o) = observer.as_deref_mut() {
                o.on_operation(SessionOp::ChangeCheck);
            }
            detect_change(&self.buffer)
        } else {
            true
        };
        let (action, bytes) = if should_write {
            let receipt = perform_save(
                self.config.strategy,
                self.buffer.content(),
                &self.config.target_path,
            )?;
            self.buffer.mark_saved();
            stats.saves_performed += 1;
            stats.bytes_written += receipt.bytes_written;
            if let Some(o) = observer.as_deref_mut() {
                o.on_operation(SessionOp::Write {
                    bytes: receipt.bytes_written,
                });
            }
            (SaveAction::Saved, receipt.bytes_written)
        } else {
            stats.saves_skipped += 1;
            (SaveAction::Skipped, 0)
        };
        let event = SaveEvent {
            timestamp_s: nanos_to_secs(at),
            firing_index: index,
            action,
            bytes,
        };
        match self.sink.emit(&event) {
            Ok(true) => {
                stats.log_records += 1;
                if let Some(o) = observer.as_deref_mut() {
                    o.on_operation(SessionOp::Log);
                }
            }
            Ok(false) => {}
            Err(_) => stats.log_errors += 1,
        }
        Ok(event)
    }
}

/// Prepares and runs a session in one call.
pub fn run_autosave_session(
    config: AutosaveConfig,
    script: EditScript,
    clock: &dyn Clock,
    observer: Option<&mut dyn SessionObserver>,
    cancel: &CancelFlag,
) -> Result<SessionReport, WorkloadError> {
    AutosaveSession::prepare(config, script)?.run(clock, observer, cancel)
}
