//! Sequential plan execution with resumable checkpoints.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{secs_to_nanos, CancelFlag, RealClock, SharedClock, VirtualClock};
use crate::energy::{open_provider, EnergyError, EnergyProvider, ProviderConfig, ProviderKind};

use super::cycle::{execute_cycle, CycleContext, CycleError, MeasurementRecord};
use super::env::{environment_check, EnvironmentFingerprint};
use super::matrix::{expand_matrix, PlannedRun};
use super::plan::{ClockKind, ExperimentPlan, PlanError};
use super::store::{LoadedStore, RunStore, StoreError};

pub const STORE_FILE: &str = "runs.csv";
pub const PLAN_COPY_FILE: &str = "plan.toml";
pub const ENVIRONMENT_FILE: &str = "environment.json";
pub const RESUME_FILE: &str = "resume.json";
pub const SCRATCH_DIR: &str = "scratch";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Provider(EnergyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{} already holds {records} records; pass --resume to continue it", path.display())]
    StoreExists { path: PathBuf, records: usize },
    #[error("the plan differs from the one recorded in {}; refusing to resume", path.display())]
    ResumeMismatch { path: PathBuf },
    #[error("run aborted ({reason}); resume token written to {}", token.display())]
    Aborted { token: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub provider: Option<ProviderKind>,
    pub resume: bool,
    pub in_order: bool,
    pub cooldown_override: Option<f64>,
}

/// Written when a run stops early; `run --resume` picks up from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeToken {
    pub plan_name: String,
    pub store: PathBuf,
    pub completed_runs: usize,
    pub remaining_runs: usize,
    pub reason: String,
    pub written_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub store: PathBuf,
    pub executed: usize,
    pub failed: usize,
    pub already_present: usize,
}

/// Output directory for a plan: explicit override, plan setting, or `results/<name>`.
pub fn output_dir(plan: &ExperimentPlan, override_root: Option<&Path>) -> PathBuf {
    let root = override_root
        .map(Path::to_path_buf)
        .or_else(|| plan.output_root.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    root.join(&plan.name)
}

pub fn open_plan_provider(
    plan: &ExperimentPlan,
    kind: Option<ProviderKind>,
) -> Result<Box<dyn EnergyProvider>, RunError> {
    let kind = kind.unwrap_or(plan.provider.kind);
    let clock_kind = match (kind, plan.provider.clock) {
        (ProviderKind::RaplSysfs, _) => ClockKind::Real,
        (ProviderKind::Synthetic, Some(c)) => c,
        (ProviderKind::Synthetic, None) => ClockKind::Virtual,
    };
    let clock: SharedClock = match clock_kind {
        ClockKind::Real => RealClock::shared(),
        ClockKind::Virtual => VirtualClock::shared(),
    };
    let config = ProviderConfig {
        powercap_root: plan.provider.powercap_root(),
        synthetic: plan.synthetic_params(),
    };
    open_provider(kind, &config, clock).map_err(RunError::Provider)
}

fn last_window_end(store: &LoadedStore) -> Option<DateTime<Utc>> {
    store
        .records
        .iter()
        .filter_map(|r| {
            let start = DateTime::parse_from_rfc3339(&r.started_at).ok()?;
            let dur = TimeDelta::nanoseconds(secs_to_nanos(r.duration_s.unwrap_or(0.0)) as i64);
            Some(start.with_timezone(&Utc) + dur)
        })
        .max()
}

fn write_resume_token(dir: &Path, token: &ResumeToken) -> Result<PathBuf, RunError> {
    let path = dir.join(RESUME_FILE);
    let json = serde_json::to_string_pretty(token).expect("token serializes");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    Ok(path)
}

struct Session<'a> {
    plan: &'a ExperimentPlan,
    dir: PathBuf,
    provider: Box<dyn EnergyProvider>,
    store: RunStore,
    loaded: LoadedStore,
    environment: EnvironmentFingerprint,
    cooldown_s: f64,
}

impl<'a> Session<'a> {
    fn open(plan: &'a ExperimentPlan, dir: &Path, opts: &RunOptions) -> Result<Self, RunError> {
        let provider = open_plan_provider(plan, opts.provider)?;
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let (store, loaded) = RunStore::open(&dir.join(STORE_FILE))?;
        let mut environment = environment_check().fingerprint;
        environment.provider = Some(provider.kind().to_string());
        let env_path = dir.join(ENVIRONMENT_FILE);
        if !env_path.exists() {
            let json = serde_json::to_string_pretty(&environment).expect("fingerprint serializes");
            std::fs::write(&env_path, json).map_err(io_err(&env_path))?;
        }
        Ok(Session {
            plan,
            dir: dir.to_path_buf(),
            provider,
            store,
            loaded,
            environment,
            cooldown_s: opts.cooldown_override.unwrap_or(plan.cycle.cooldown_s),
        })
    }

    fn execute(
        mut self,
        runs: &[PlannedRun],
        cancel: &CancelFlag,
        progress: &mut dyn FnMut(&MeasurementRecord, usize, usize),
    ) -> Result<RunSummary, RunError> {
        let clock = self.provider.clock().clone();
        let now = Utc::now();
        let wall = if clock.is_virtual() {
            last_window_end(&self.loaded).map_or(now, |t| t.max(now))
        } else {
            now
        };
        let epoch = wall - TimeDelta::nanoseconds(clock.now() as i64);
        let scratch = self.dir.join(SCRATCH_DIR);
        let total = runs.len();
        let mut summary = RunSummary {
            store: self.store.path().to_path_buf(),
            executed: 0,
            failed: 0,
            already_present: 0,
        };
        if !runs.is_empty() && self.plan.cycle.warmup_s > 0.0 {
            clock.sleep_for(secs_to_nanos(self.plan.cycle.warmup_s), cancel);
        }
        let mut ctx = CycleContext {
            plan: self.plan,
            provider: self.provider.as_mut(),
            store: &mut self.store,
            scratch_root: &scratch,
            epoch,
            environment: &self.environment,
            cancel,
            cooldown_s: self.cooldown_s,
        };
        for (i, run) in runs.iter().enumerate() {
            let reason = if cancel.is_cancelled() {
                Some("interrupted".to_string())
            } else {
                match execute_cycle(run, &mut ctx) {
                    Ok(record) => {
                        summary.executed += 1;
                        if !record.is_ok() {
                            summary.failed += 1;
                        }
                        progress(&record, i + 1, total);
                        None
                    }
                    Err(CycleError::Interrupted) => Some("interrupted".to_string()),
                    Err(CycleError::Provider(e)) => Some(format!("energy provider failed: {e}")),
                    Err(CycleError::Store(e)) => return Err(e.into()),
                    Err(e) => Some(e.to_string()),
                }
            };
            if let Some(reason) = reason {
                let token = ResumeToken {
                    plan_name: self.plan.name.clone(),
                    store: summary.store.clone(),
                    completed_runs: self.loaded.records.len() + summary.executed,
                    remaining_runs: total - i,
                    reason: reason.clone(),
                    written_at: Utc::now(),
                };
                let token = write_resume_token(&self.dir, &token)?;
                return Err(RunError::Aborted { token, reason });
            }
        }
        let _ = std::fs::remove_dir(&scratch);
        let token = self.dir.join(RESUME_FILE);
        if token.exists() {
            std::fs::remove_file(&token).map_err(io_err(&token))?;
        }
        Ok(summary)
    }
}

/// Executes every run of `plan` not yet in the store under `dir`, one at a time.
pub fn run_plan(
    plan: &ExperimentPlan,
    dir: &Path,
    opts: &RunOptions,
    cancel: &CancelFlag,
    progress: &mut dyn FnMut(&MeasurementRecord, usize, usize),
) -> Result<RunSummary, RunError> {
    let mut runs = expand_matrix(plan)?;
    if opts.in_order {
        runs.sort_by_key(|r| r.run_id);
    }
    let store_path = dir.join(STORE_FILE);
    let plan_path = dir.join(PLAN_COPY_FILE);
    if store_path.exists() {
        let existing = super::store::load_store(&store_path)?;
        if !opts.resume && !existing.records.is_empty() {
            return Err(RunError::StoreExists {
                path: store_path,
                records: existing.records.len(),
            });
        }
        if opts.resume && plan_path.exists() {
            let recorded = ExperimentPlan::load(&plan_path)?;
            if &recorded != plan {
                return Err(RunError::ResumeMismatch { path: plan_path });
            }
        }
    }
    let session = Session::open(plan, dir, opts)?;
    std::fs::write(&plan_path, plan.to_toml_string()).map_err(io_err(&plan_path))?;
    let done: HashSet<u32> = session.loaded.records.iter().map(|r| r.run_id).collect();
    let already_present = runs.iter().filter(|r| done.contains(&r.run_id)).count();
    runs.retain(|r| !done.contains(&r.run_id));
    let mut summary = session.execute(&runs, cancel, progress)?;
    summary.already_present = already_present;
    Ok(summary)
}

/// Re-executes runs whose latest record failed; new records supersede them.
pub fn rerun_failed(
    dir: &Path,
    opts: &RunOptions,
    cancel: &CancelFlag,
    progress: &mut dyn FnMut(&MeasurementRecord, usize, usize),
) -> Result<RunSummary, RunError> {
    let plan = ExperimentPlan::load(&dir.join(PLAN_COPY_FILE))?;
    let session = Session::open(&plan, dir, opts)?;
    let failed: HashSet<u32> = session
        .loaded
        .failed_records()
        .iter()
        .map(|r| r.run_id)
        .collect();
    let mut runs: Vec<PlannedRun> = expand_matrix(&plan)?
        .into_iter()
        .filter(|r| failed.contains(&r.run_id))
        .collect();
    runs.sort_by_key(|r| r.run_id);
    session.execute(&runs, cancel, progress)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::plan::tests::MINIMAL;
    use crate::orchestrator::store::load_store;

    fn plan(reps: u32) -> ExperimentPlan {
        let mut p = ExperimentPlan::from_toml_str(MINIMAL).unwrap();
        p.repetitions = reps;
        p.synthetic_costs.write_j = 0.25;
        p
    }

    fn quiet() -> impl FnMut(&MeasurementRecord, usize, usize) {
        |_, _, _| {}
    }

    #[test]
    fn runs_every_record_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(3);
        let s = run_plan(&p, dir.path(), &RunOptions::default(), &CancelFlag::new(), &mut quiet()).unwrap();
        assert_eq!(s.executed, 3);
        let store = load_store(&dir.path().join(STORE_FILE)).unwrap();
        assert_eq!(store.records.len(), 3);
        assert!(dir.path().join(ENVIRONMENT_FILE).exists());
        assert!(!dir.path().join(RESUME_FILE).exists());
        let again = run_plan(&p, dir.path(), &RunOptions::default(), &CancelFlag::new(), &mut quiet());
        assert!(matches!(again, Err(RunError::StoreExists { records: 3, .. })));
    }

    #[test]
    fn interrupt_then_resume_adds_only_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(2);
        let cancel = CancelFlag::new();
        let mut stop_after_first = |_: &MeasurementRecord, done: usize, _: usize| {
            if done == 1 {
                cancel.cancel();
            }
        };
        let err = run_plan(&p, dir.path(), &RunOptions::default(), &cancel, &mut stop_after_first)
            .unwrap_err();
        let RunError::Aborted { token, .. } = err else {
            panic!("{err}")
        };
        let t: ResumeToken = serde_json::from_str(&std::fs::read_to_string(token).unwrap()).unwrap();
        assert_eq!((t.completed_runs, t.remaining_runs), (1, 1));
        assert_eq!(load_store(&dir.path().join(STORE_FILE)).unwrap().records.len(), 1);

        let opts = RunOptions {
            resume: true,
            ..Default::default()
        };
        let s = run_plan(&p, dir.path(), &opts, &CancelFlag::new(), &mut quiet()).unwrap();
        assert_eq!((s.executed, s.already_present), (1, 1));
        let store = load_store(&dir.path().join(STORE_FILE)).unwrap();
        let ids: HashSet<u32> = store.records.iter().map(|r| r.run_id).collect();
        assert_eq!((store.records.len(), ids.len()), (2, 2));
    }

    #[test]
    fn resume_rejects_a_different_plan() {
        let dir = tempfile::tempdir().unwrap();
        run_plan(&plan(1), dir.path(), &RunOptions::default(), &CancelFlag::new(), &mut quiet()).unwrap();
        let opts = RunOptions {
            resume: true,
            ..Default::default()
        };
        let err = run_plan(&plan(2), dir.path(), &opts, &CancelFlag::new(), &mut quiet()).unwrap_err();
        assert!(matches!(err, RunError::ResumeMismatch { .. }));
    }

    #[test]
    fn missing_rapl_is_a_provider_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = plan(1);
        p.provider.powercap_root = Some(dir.path().join("nowhere"));
        let opts = RunOptions {
            provider: Some(ProviderKind::RaplSysfs),
            ..Default::default()
        };
        let err = run_plan(&p, &dir.path().join("out"), &opts, &CancelFlag::new(), &mut quiet()).unwrap_err();
        assert!(matches!(err, RunError::Provider(EnergyError::Unavailable { .. })), "{err}");
    }
}
