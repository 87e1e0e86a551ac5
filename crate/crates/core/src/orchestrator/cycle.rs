//! One measurement cycle: arm, settle, measure, tear down, persist, cool down.

use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::{secs_to_nanos, CancelFlag, Nanos};
use crate::energy::{window_energy, EnergyError, EnergyProvider, EnergyWindow, ProviderKind};
use crate::workload::{
    generate_edit_script_with, AutosaveConfig, AutosaveSession, EditParams, LoggingMode,
    SessionObserver, SessionOp, SessionStats, WorkloadError,
};

use super::env::EnvironmentFingerprint;
use super::matrix::{script_seed, PlannedRun, RunCoordinates};
use super::plan::{ExperimentPlan, SyntheticCosts, OP_CHANGE_DETECT, OP_LOGGING};
use super::store::{RecordCounts, RunStatus, RunStore, StoreError, StoredRecord};

#[derive(Debug, thiserror::Error)]
pub enum CycleError {
    #[error(transparent)]
    Provider(#[from] EnergyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("scratch directory {}: {source}", path.display())]
    Scratch {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("interrupted")]
    Interrupted,
    #[error("plan has no workload or variant `{0}`")]
    UnknownCoordinates(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub run_id: u32,
    pub coords: RunCoordinates,
    pub status: RunStatus,
    /// Absent when the session failed.
    pub energy: Option<EnergyWindow>,
    pub stats: Option<SessionStats>,
    pub started_at: DateTime<Utc>,
    /// Provider-clock timestamps of the bracketing snapshots.
    pub window_start_ns: Nanos,
    pub window_end_ns: Nanos,
    /// Expected energy under the synthetic model, when that provider is used.
    pub model_joules: Option<f64>,
    pub error: Option<String>,
    pub environment: EnvironmentFingerprint,
}

impl MeasurementRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn to_stored(&self) -> StoredRecord {
        StoredRecord {
            run_id: self.run_id,
            coords: self.coords.clone(),
            status: self.status,
            per_domain_joules: self
                .energy
                .as_ref()
                .map(|w| {
                    w.per_domain_joules
                        .iter()
                        .map(|(d, j)| (d.as_str().to_string(), *j))
                        .collect()
                })
                .unwrap_or_default(),
            total_joules: self.energy.as_ref().map(EnergyWindow::total_joules),
            duration_s: self.energy.as_ref().map(|w| w.duration_s),
            counts: self.stats.as_ref().map(|s| RecordCounts {
                trigger_firings: s.trigger_firings,
                saves_performed: s.saves_performed,
                saves_skipped: s.saves_skipped,
                bytes_written: s.bytes_written,
                log_records: s.log_records,
            }),
            started_at: self.started_at.to_rfc3339_opts(SecondsFormat::Nanos, true),
        }
    }
}

/// Everything a cycle needs besides the run itself.
pub struct CycleContext<'a> {
    pub plan: &'a ExperimentPlan,
    pub provider: &'a mut dyn EnergyProvider,
    pub store: &'a mut RunStore,
    pub scratch_root: &'a Path,
    /// Wall-clock time at provider-clock zero.
    pub epoch: DateTime<Utc>,
    pub environment: &'a EnvironmentFingerprint,
    pub cancel: &'a CancelFlag,
    pub cooldown_s: f64,
}

/// Session configuration for a run.
pub fn session_config(
    plan: &ExperimentPlan,
    coords: &RunCoordinates,
    target: &Path,
) -> Result<AutosaveConfig, CycleError> {
    let template = plan
        .workload(&coords.workload)
        .ok_or_else(|| CycleError::UnknownCoordinates(coords.workload.clone()))?;
    let mut cfg = AutosaveConfig::new(template.trigger, template.strategy, target);
    cfg.save_budget = template.save_budget;
    cfg.max_session_s = template.max_session_s;
    if coords.is_control {
        cfg.autosave_enabled = false;
        cfg.change_detection = false;
        cfg.logging = LoggingMode::None;
    } else {
        let chain = plan
            .variant_chain()
            .map_err(|_| CycleError::UnknownCoordinates(coords.variant.clone()))?;
        let variant = chain
            .get(&coords.variant)
            .ok_or_else(|| CycleError::UnknownCoordinates(coords.variant.clone()))?;
        cfg.change_detection = variant.contains(OP_CHANGE_DETECT);
        cfg.logging = if variant.contains(OP_LOGGING) {
            template.logging
        } else {
            LoggingMode::None
        };
    }
    Ok(cfg)
}

pub fn edit_params(plan: &ExperimentPlan, coords: &RunCoordinates) -> Result<EditParams, CycleError> {
    let template = plan
        .workload(&coords.workload)
        .ok_or_else(|| CycleError::UnknownCoordinates(coords.workload.clone()))?;
    Ok(EditParams {
        seed: script_seed(plan.seed, coords),
        target_size_bytes: coords.file_size_bytes as i64,
        session_duration_s: template.script_duration_s(),
        edit_rate_hz: template.edit_rate_hz,
        append_fraction: template.append_fraction,
    })
}

/// Charges the synthetic model as operations execute.
struct Charger<'a> {
    provider: &'a mut dyn EnergyProvider,
    costs: SyntheticCosts,
    error: Option<EnergyError>,
}

impl SessionObserver for Charger<'_> {
    fn on_operation(&mut self, op: SessionOp) {
        let cost = match op {
            SessionOp::Edit => self.costs.edit_j,
            SessionOp::ChangeCheck => self.costs.change_check_j,
            SessionOp::Write { .. } => self.costs.write_j,
            SessionOp::Log => self.costs.log_j,
        };
        if cost > 0.0 && self.error.is_none() {
            if let Err(e) = self.provider.synthetic_charge(cost) {
                self.error = Some(e);
            }
        }
    }
}

fn started_at(epoch: DateTime<Utc>, ns: Nanos) -> DateTime<Utc> {
    epoch + TimeDelta::nanoseconds(ns as i64)
}

pub fn execute_cycle(run: &PlannedRun, ctx: &mut CycleContext<'_>) -> Result<MeasurementRecord, CycleError> {
    let coords = &run.coords;
    let scratch = ctx.scratch_root.join(format!("run-{:05}", run.run_id));
    let scratch_err = |source| CycleError::Scratch {
        path: scratch.clone(),
        source,
    };
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch).map_err(scratch_err)?;
    }
    std::fs::create_dir_all(&scratch).map_err(scratch_err)?;

    let config = session_config(ctx.plan, coords, &scratch.join("document.txt"))?;
    let clock = ctx.provider.clock().clone();
    let params = edit_params(ctx.plan, coords)?;
    let prepared = generate_edit_script_with(&params)
        .and_then(|script| AutosaveSession::prepare(config, script));

    let mut record = MeasurementRecord {
        run_id: run.run_id,
        coords: coords.clone(),
        status: RunStatus::Failed,
        energy: None,
        stats: None,
        started_at: started_at(ctx.epoch, clock.now()),
        window_start_ns: 0,
        window_end_ns: 0,
        model_joules: None,
        error: None,
        environment: ctx.environment.clone(),
    };

    let outcome = match prepared {
        Err(e) => Err(e),
        Ok(session) => {
            if !clock.sleep_for(secs_to_nanos(ctx.plan.cycle.app_settle_s), ctx.cancel) {
                return Err(CycleError::Interrupted);
            }
            let start = ctx.provider.snapshot()?;
            let synthetic = ctx.provider.kind() == ProviderKind::Synthetic;
            let costs = ctx.plan.synthetic_costs.clone();
            let mut charger = Charger {
                provider: &mut *ctx.provider,
                costs: costs.clone(),
                error: None,
            };
            let observer: Option<&mut dyn SessionObserver> =
                if synthetic { Some(&mut charger) } else { None };
            let result = session.run(clock.as_ref(), observer, ctx.cancel);
            if let Some(e) = charger.error.take() {
                return Err(e.into());
            }
            let end = ctx.provider.snapshot()?;
            match result {
                Err(WorkloadError::Cancelled) => return Err(CycleError::Interrupted),
                Err(e) => Err(e),
                Ok(report) => {
                    let window = window_energy(&start, &end)?;
                    record.window_start_ns = start.iter().map(|s| s.timestamp).min().unwrap_or(0);
                    record.window_end_ns = end.iter().map(|s| s.timestamp).max().unwrap_or(0);
                    record.started_at = started_at(ctx.epoch, record.window_start_ns);
                    if synthetic {
                        let idle = ctx.plan.synthetic_params().idle_rate_w;
                        record.model_joules =
                            Some(costs.expected_joules(idle, window.duration_s, &report.stats));
                    }
                    record.energy = Some(window);
                    record.stats = Some(report.stats);
                    record.status = RunStatus::Ok;
                    Ok(())
                }
            }
        }
    };
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }

    if !ctx.plan.keep_scratch {
        std::fs::remove_dir_all(&scratch).map_err(scratch_err)?;
    }
    ctx.store.append(&record.to_stored())?;
    if !clock.sleep_for(secs_to_nanos(ctx.cooldown_s), ctx.cancel) {
        return Err(CycleError::Interrupted);
    }
    Ok(record)
}
