//! `bgjoule`: plan, run and analyze feature-level energy experiments.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (`env` always exits 0) |
//! | 1 | I/O or other failure |
//! | 2 | invalid plan (field path printed) or malformed run store (line printed) |
//! | 3 | energy provider unavailable |
//! | 4 | run interrupted or aborted; resume token path printed |

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bgjoule::analysis::{analyze, export_report, AnalysisError, AnalysisOptions, ExecMode, TEXT_FILE};
use bgjoule::clock::CancelFlag;
use bgjoule::energy::{EnergyError, ProviderKind};
use bgjoule::orchestrator::{
    environment_check, expand_matrix, load_store, matrix_counts, output_dir, rerun_failed, run_plan,
    ExperimentPlan, MeasurementRecord, PlanError, RunError, RunOptions, RunSummary, StoreError,
    PLAN_COPY_FILE,
};

const OUTPUT_ROOT_ENV: &str = "BGJOULE_OUTPUT_ROOT";
const REPORT_DIR: &str = "report";

#[derive(Parser)]
#[command(name = "bgjoule", version, about = "Feature-level energy measurement for background processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a plan and print its run matrix.
    Plan {
        plan: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Execute every run of a plan, appending to its run store.
    Run {
        plan: PathBuf,
        /// Override the plan's provider (rapl_sysfs or synthetic).
        #[arg(long)]
        provider: Option<ProviderKind>,
        /// Continue an interrupted run, skipping stored run ids.
        #[arg(long)]
        resume: bool,
        /// Grouped order instead of the seeded shuffle.
        #[arg(long)]
        in_order: bool,
        /// Cooldown between runs in seconds.
        #[arg(long, value_name = "SECONDS")]
        cooldown_override: Option<f64>,
        #[arg(long, env = OUTPUT_ROOT_ENV, value_name = "DIR")]
        output_root: Option<PathBuf>,
    },
    /// Analyze a run store and write a report bundle beside it.
    Analyze {
        store: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Drop samples outside 1.5 IQR before testing.
        #[arg(long)]
        iqr_filter: bool,
        /// Holm-adjust pairwise p-values.
        #[arg(long)]
        holm: bool,
        /// Plan holding hourly and what-if settings; defaults to plan.toml beside the store.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Bundle directory; defaults to report/ beside the store.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Single-threaded analysis.
        #[arg(long)]
        sequential: bool,
    },
    /// Print the text report of an existing bundle.
    Report {
        /// Bundle directory, or a run directory containing report/.
        dir: PathBuf,
    },
    /// Inspect host readiness for energy measurement.
    Env {
        #[arg(long)]
        json: bool,
    },
    /// Re-execute runs whose latest record failed.
    RerunFailed {
        /// Run directory holding runs.csv and plan.toml.
        dir: PathBuf,
        #[arg(long)]
        provider: Option<ProviderKind>,
        #[arg(long, value_name = "SECONDS")]
        cooldown_override: Option<f64>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Failure::new(2, format!("invalid plan: {e}"))
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Malformed { .. } => Failure::new(2, e.to_string()),
            StoreError::Io { .. } => Failure::new(1, e.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::new(1, format!("analysis failed: {e}"))
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Plan(e) => e.into(),
            RunError::Store(e) => e.into(),
            RunError::Provider(e @ EnergyError::Unavailable { .. }) => Failure::new(
                3,
                format!("{e}\nhint: on hosts without RAPL powercap, pass --provider synthetic"),
            ),
            RunError::Provider(e) => Failure::new(3, e.to_string()),
            e @ RunError::Aborted { .. } => Failure::new(4, e.to_string()),
            e => Failure::new(1, e.to_string()),
        }
    }
}

fn load_plan(path: &Path) -> Result<ExperimentPlan, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentPlan::from_toml_str(&text)?)
}

fn human_duration(secs: f64) -> String {
    let s = secs.round() as u64;
    match (s / 3600, s % 3600 / 60, s % 60) {
        (0, 0, sec) => format!("{sec}s"),
        (0, m, sec) => format!("{m}m {sec:02}s"),
        (h, m, _) => format!("{h}h {m:02}m"),
    }
}

fn cmd_plan(path: &Path, json: bool) -> Result<(), Failure> {
    let plan = load_plan(path)?;
    let counts = matrix_counts(&plan)?;
    let runs = expand_matrix(&plan)?;
    let per_run = |w: &str| plan.workload(w).map_or(0.0, |t| t.script_duration_s());
    let wall_s = plan.cycle.warmup_s
        + runs
            .iter()
            .map(|r| plan.cycle.app_settle_s + per_run(&r.coords.workload) + plan.cycle.cooldown_s)
            .sum::<f64>();
    if json {
        let out = serde_json::json!({
            "name": plan.name,
            "counts": counts,
            "total_runs": counts.total(),
            "summary": counts.summary(),
            "estimated_wall_s": (wall_s * 1000.0).round() / 1000.0,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("json value"));
        return Ok(());
    }
    println!("plan        {}", plan.name);
    println!("workloads   {}", counts.workloads);
    println!("variants    {}", counts.variants);
    println!("file sizes  {}", counts.file_sizes);
    println!("repetitions {}", counts.repetitions);
    println!("controls    {}", counts.control_scenarios);
    println!("{}", counts.summary());
    println!("estimated wall time {} ({wall_s:.0} s)", human_duration(wall_s));
    Ok(())
}

fn print_progress(r: &MeasurementRecord, done: usize, total: usize) {
    let c = &r.coords;
    let outcome = match (&r.energy, &r.error) {
        (Some(e), _) => format!("{:.6} J", e.total_joules()),
        (None, Some(err)) => format!("FAILED: {err}"),
        (None, None) => "FAILED".to_string(),
    };
    println!(
        "[{done}/{total}] run {:05} {} {} {} B rep {}: {outcome}",
        r.run_id, c.workload, c.variant, c.file_size_bytes, c.repetition
    );
}

fn interrupt_flag() -> CancelFlag {
    let cancel = CancelFlag::new();
    let handler = cancel.clone();
    // a second handler cannot be installed; the first one already covers us
    let _ = ctrlc::set_handler(move || {
        eprintln!("interrupt received; stopping after the current run");
        handler.cancel();
    });
    cancel
}

fn finish(summary: &RunSummary) {
    println!(
        "{} run(s) executed, {} failed, {} already present",
        summary.executed, summary.failed, summary.already_present
    );
    println!("{}", summary.store.display());
}

fn cmd_run(plan_path: &Path, opts: RunOptions, output_root: Option<&Path>) -> Result<(), Failure> {
    let plan = load_plan(plan_path)?;
    let dir = output_dir(&plan, output_root);
    let summary = run_plan(&plan, &dir, &opts, &interrupt_flag(), &mut print_progress)?;
    finish(&summary);
    Ok(())
}

fn cmd_rerun_failed(dir: &Path, opts: RunOptions) -> Result<(), Failure> {
    let summary = rerun_failed(dir, &opts, &interrupt_flag(), &mut print_progress)?;
    finish(&summary);
    Ok(())
}

struct AnalyzeArgs {
    alpha: Option<f64>,
    iqr_filter: bool,
    holm: bool,
    plan: Option<PathBuf>,
    out: Option<PathBuf>,
    sequential: bool,
}

fn cmd_analyze(store_path: &Path, args: AnalyzeArgs) -> Result<(), Failure> {
    let store = load_store(store_path)?;
    let base = store_path.parent().unwrap_or(Path::new("."));
    let plan_path = args.plan.unwrap_or_else(|| base.join(PLAN_COPY_FILE));
    let mut opts = if plan_path.exists() {
        AnalysisOptions::from_plan(&load_plan(&plan_path)?)?
    } else {
        eprintln!("note: {} not found; hourly and what-if tables stay empty", plan_path.display());
        AnalysisOptions::default()
    };
    if let Some(alpha) = args.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Failure::new(2, format!("--alpha must lie in (0, 1), got {alpha}")));
        }
        opts.alpha = alpha;
    }
    opts.iqr_filter = args.iqr_filter;
    opts.holm = args.holm;
    if args.sequential {
        opts.mode = ExecMode::Sequential;
    }
    let analyses = analyze(&store.latest(), &opts)?;
    let out = args.out.unwrap_or_else(|| base.join(REPORT_DIR));
    let bundle = export_report(&analyses, &out)?;
    for f in &bundle.files {
        eprintln!("wrote {}", f.display());
    }
    println!("{}", bundle.dir.display());
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let candidates = [dir.join(TEXT_FILE), dir.join(REPORT_DIR).join(TEXT_FILE)];
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Failure::new(1, format!("no {TEXT_FILE} under {}; run `analyze` first", dir.display())))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
    print!("{text}");
    Ok(())
}

fn cmd_env(json: bool) {
    let report = environment_check();
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.render());
        if report.all_green() {
            println!("host looks ready for measurement");
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan { plan, json } => cmd_plan(&plan, json),
        Command::Run {
            plan,
            provider,
            resume,
            in_order,
            cooldown_override,
            output_root,
        } => {
            let opts = RunOptions {
                provider,
                resume,
                in_order,
                cooldown_override,
            };
            cmd_run(&plan, opts, output_root.as_deref())
        }
        Command::Analyze {
            store,
            alpha,
            iqr_filter,
            holm,
            plan,
            out,
            sequential,
        } => cmd_analyze(
            &store,
            AnalyzeArgs {
                alpha,
                iqr_filter,
                holm,
                plan,
                out,
                sequential,
            },
        ),
        Command::Report { dir } => cmd_report(&dir),
        Command::Env { json } => {
            cmd_env(json);
            Ok(())
        }
        Command::RerunFailed {
            dir,
            provider,
            cooldown_override,
        } => {
            let opts = RunOptions {
                provider,
                cooldown_override,
                ..Default::default()
            };
            cmd_rerun_failed(&dir, opts)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations_read_naturally() {
        assert_eq!(human_duration(42.0), "42s");
        assert_eq!(human_duration(125.0), "2m 05s");
        assert_eq!(human_duration(3.0 * 3600.0 + 60.0), "3h 01m");
    }

    #[test]
    fn store_errors_map_to_codes() {
        let malformed = StoreError::Malformed {
            path: "runs.csv".into(),
            line: 7,
            reason: "bad".into(),
        };
        let f = Failure::from(malformed);
        assert_eq!(f.code, 2);
        assert!(f.message.contains("line 7"));
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
