//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde::Deserialize;

use bgjoule::analysis::{
    analyze, estimate_hourly, export_report, frequency_whatif, mann_whitney_u, test_pairwise, welch_t_test,
    AnalysisOptions, Analyses, HourlyEstimate, PairwiseComparison, ScenarioKey, Side, TestKind, HOURLY_FILE,
    PAIRWISE_FILE,
};
use bgjoule::clock::{secs_to_nanos, CancelFlag, VirtualClock};
use bgjoule::energy::{counter_delta_uj, window_energy, CounterSnapshot, EnergyDomain};
use bgjoule::orchestrator::{
    expand_matrix, load_store, matrix_counts, run_plan, ControlSpec, ExperimentPlan, RunOptions, STORE_FILE,
};
use bgjoule::workload::{
    backup_path, generate_edit_script, is_temp_sibling, perform_save, perform_save_with_fault,
    run_autosave_session, AutosaveConfig, EditScript, InjectedFault, SessionStats, TriggerConfig,
    WriteStrategy,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn plans_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../plans")
}

fn load_plan(name: &str) -> ExperimentPlan {
    ExperimentPlan::load(&plans_dir().join(name)).expect("shipped plan parses")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn published_hourly() -> Result<[HourlyEstimate; 3], String> {
    let e = |name: &str, avg, interval| estimate_hourly(name, avg, 12, interval).map_err(|e| e.to_string());
    let mut leo = e("Leo", 11.07, 300.0)?;
    leo.trigger_note = Some("idle".into());
    Ok([e("novelWriter", 9.98, 30.0)?, e("Mu", 10.3, 5.0)?, leo])
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let rows = published_hourly()?;
    let want = [(0.83, 120.0, 99.6), (0.86, 720.0, 619.2), (0.92, 12.0, 11.04)];
    for (r, w) in rows.iter().zip(want) {
        let got = (r.avg_j_per_save, r.calls_per_hr, r.joules_per_hr);
        ensure(got == w, || format!("{}: got {got:?}, want {w:?}", r.scenario))?;
    }
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok("novelWriter 99.6, Mu 619.2, Leo 11.04 J/hr exactly".into())
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mu = estimate_hourly("Mu", 10.3, 12, 5.0).map_err(|e| e.to_string())?;
    let w = frequency_whatif(&mu, 30.0).map_err(|e| e.to_string())?;
    let pct = w.reduction_fraction * 100.0;
    ensure((pct - 83.3).abs() <= 0.1, || format!("reduction {pct}%"))?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("Mu 5 s -> 30 s cuts {pct:.1}% ({} -> {} J/hr)", w.old_joules_per_hr, w.new_joules_per_hr))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let canonical = load_plan("paper-canonical.toml");
    let runs = expand_matrix(&canonical).map_err(|e| e.to_string())?;
    let counts = matrix_counts(&canonical).map_err(|e| e.to_string())?;
    let summary = counts.summary();
    ensure(summary == "810 main + 90 control = 900 runs", || summary.clone())?;
    ensure(runs.len() == 900, || format!("{} runs", runs.len()))?;
    let controls = runs.iter().filter(|r| r.coords.is_control).count();
    ensure(controls == 90, || format!("{controls} control runs"))?;

    let dims = (1usize..5, 1usize..=3, 1usize..5, 1u32..8, 0usize..5);
    runner(256)
        .run(&dims, |(w, v, s, r, c)| {
            let c = c.min(w);
            let mut p = canonical.clone();
            p.analysis = Default::default();
            p.feature.operations.truncate(v);
            p.feature.variant_names.truncate(v);
            let template = p.workloads[0].clone();
            p.workloads = (0..w)
                .map(|i| {
                    let mut t = template.clone();
                    t.name = format!("w{i}");
                    t
                })
                .collect();
            p.file_sizes_bytes = (0..s as u64).map(|i| i * 1024).collect();
            p.repetitions = r;
            p.controls = (0..c)
                .map(|i| ControlSpec {
                    workload: format!("w{i}"),
                    file_size_bytes: None,
                })
                .collect();
            let runs = expand_matrix(&p).unwrap();
            let n = r as usize;
            prop_assert_eq!(runs.len(), w * v * s * n + c * n);
            prop_assert_eq!(runs.iter().filter(|x| x.coords.is_control).count(), c * n);
            let ids: HashSet<u32> = runs.iter().map(|x| x.run_id).collect();
            prop_assert_eq!(ids.len(), runs.len());
            prop_assert_eq!(matrix_counts(&p).unwrap().total(), runs.len());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{summary}; product formula held over 256 random matrices"))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let plan = load_plan("desk-scale.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut mismatches = Vec::new();
    let mut records = 0;
    let mut check = |r: &bgjoule::orchestrator::MeasurementRecord, _: usize, _: usize| {
        records += 1;
        let got = r.energy.as_ref().map(|e| e.total_joules());
        match (got, r.model_joules) {
            (Some(g), Some(m)) if (g - m).abs() <= 1e-6 => {}
            other => mismatches.push(format!("run {}: measured/model {other:?}", r.run_id)),
        }
    };
    run_plan(&plan, dir.path(), &RunOptions::default(), &CancelFlag::new(), &mut check)
        .map_err(|e| e.to_string())?;
    ensure(mismatches.is_empty(), || mismatches.join("; "))?;
    ensure(records == 150, || format!("{records} records"))?;

    let store = load_store(&dir.path().join(STORE_FILE)).map_err(|e| e.to_string())?;
    let opts = AnalysisOptions::from_plan(&plan).map_err(|e| e.to_string())?;
    let a = analyze(&store.latest(), &opts).map_err(|e| e.to_string())?;
    let c = &plan.synthetic_costs;
    let saves = 12.0;
    for d in &a.deltas {
        let per_save = match d.scenario.variant.as_str() {
            "base" => c.write_j,
            "change" => c.write_j + c.change_check_j,
            "logging" => c.write_j + c.change_check_j + c.log_j,
            other => return Err(format!("unexpected variant {other}")),
        };
        let want = saves * per_save;
        ensure((d.delta_j - want).abs() <= 1e-6, || {
            format!("{}: delta {} J, want {want} J", d.scenario, d.delta_j)
        })?;
    }
    ensure(a.deltas.len() == 27, || format!("{} deltas", a.deltas.len()))?;
    within(t.elapsed(), Duration::from_secs(15 * 60))?;
    Ok(format!(
        "150 records within 1e-6 J of the model; 27 deltas = 12 x per-save cost; {:.2?}",
        t.elapsed()
    ))
}

fn criterion_5() -> Outcome {
    let strategy = (1u64..=1 << 40, any::<u64>(), any::<u64>(), any::<bool>());
    runner(10_000)
        .run(&strategy, |(range, s, d, force_wrap)| {
            let start = s % range;
            let delta = if force_wrap {
                // at least one step past the top of the range
                (range - start) + d % start.max(1)
            } else {
                d % range
            };
            let delta = delta % range;
            let end = (start + delta) % range;
            let modular = (end as i128 - start as i128).rem_euclid(range as i128) as u64;
            prop_assert_eq!(counter_delta_uj(start, end, range), modular);
            let snap = |counter_uj, timestamp| CounterSnapshot {
                domain: EnergyDomain::Package,
                zone: "intel-rapl:0".into(),
                counter_uj,
                max_range_uj: range,
                timestamp,
            };
            let w = window_energy(&[snap(start, 0)], &[snap(end, 1)]).unwrap();
            let j = w.per_domain_joules[&EnergyDomain::Package];
            prop_assert!(j >= 0.0);
            prop_assert_eq!(j, modular as f64 / 1e6);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("10000 counter pairs, wraps forced on about half".into())
}

fn temp_siblings(dir: &Path, target: &Path) -> usize {
    fs::read_dir(dir)
        .map(|rd| rd.filter(|e| e.as_ref().is_ok_and(|e| is_temp_sibling(target, &e.path()))).count())
        .unwrap_or(0)
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let content = prop::collection::vec(any::<u8>(), 0..16_384);
    let strategy = (content.clone(), prop::option::of(content), any::<bool>());
    for s in WriteStrategy::ALL {
        runner(1000)
            .run(&strategy, |(buf, prior, mid_write)| {
                let dir = tempfile::tempdir().unwrap();
                let target = dir.path().join("doc.txt");
                if let Some(p) = &prior {
                    fs::write(&target, p).unwrap();
                }
                let receipt = perform_save(s, &buf, &target).unwrap();
                prop_assert_eq!(fs::read(&target).unwrap(), buf.clone());
                prop_assert_eq!(receipt.bytes_written, buf.len() as u64);
                match s {
                    WriteStrategy::TempRename => {
                        prop_assert_eq!(temp_siblings(dir.path(), &target), 0);
                        let fault = if mid_write { InjectedFault::MidWrite } else { InjectedFault::BeforeCommit };
                        let failed = perform_save_with_fault(s, b"replacement", &target, Some(fault));
                        prop_assert!(failed.is_err());
                        prop_assert_eq!(fs::read(&target).unwrap(), buf);
                        prop_assert_eq!(temp_siblings(dir.path(), &target), 0);
                    }
                    WriteStrategy::BackupOverwrite => match &prior {
                        Some(p) => prop_assert_eq!(&fs::read(backup_path(&target)).unwrap(), p),
                        None => prop_assert!(!backup_path(&target).exists()),
                    },
                    WriteStrategy::DirectSync => {}
                }
                Ok(())
            })
            .map_err(|e| format!("{s:?}: {e}"))?;
    }
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!("1000 cases each for direct_sync, temp_rename, backup_overwrite in {:.2?}", t.elapsed()))
}

fn session(strategy: WriteStrategy, detection: bool, script: EditScript) -> Result<SessionStats, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = AutosaveConfig::new(TriggerConfig::periodic(10.0), strategy, dir.path().join("doc.txt"));
    cfg.change_detection = detection;
    let clock = VirtualClock::new();
    run_autosave_session(cfg, script, &clock, None, &CancelFlag::new())
        .map(|r| r.stats)
        .map_err(|e| e.to_string())
}

fn criterion_7() -> Outcome {
    let mut detail = Vec::new();
    for s in WriteStrategy::ALL {
        // 120 s session, edits stop at 30 s
        let script = generate_edit_script(7, 5120, 120.0, 1.0)
            .map_err(|e| e.to_string())?
            .truncated_at(secs_to_nanos(30.0));
        let on = session(s, true, script.clone())?;
        let off = session(s, false, script)?;
        ensure(on.saves_skipped >= 1, || format!("{s:?}: nothing skipped"))?;
        ensure(on.bytes_written < off.bytes_written, || {
            format!("{s:?}: {} B with detection vs {} B without", on.bytes_written, off.bytes_written)
        })?;
        let idle = session(s, true, EditScript::empty(7, 5120))?;
        ensure(idle.bytes_written == 0, || format!("{s:?}: {} B with no edits", idle.bytes_written))?;
        detail.push(format!("{s:?} {}/{} B", on.bytes_written, off.bytes_written));
    }
    Ok(format!("skips after edits stop; {}; zero edits write 0 B", detail.join(", ")))
}

#[derive(Deserialize)]
struct Reference {
    datasets: Vec<Dataset>,
}

#[derive(Deserialize)]
struct Dataset {
    name: String,
    a: Vec<f64>,
    b: Vec<f64>,
    welch_t: f64,
    welch_p: f64,
    mwu_u: f64,
    mwu_p: f64,
}

fn criterion_8() -> Outcome {
    let reference: Reference =
        serde_json::from_str(include_str!("fixtures/stats_reference.json")).map_err(|e| e.to_string())?;
    ensure(reference.datasets.len() >= 5, || format!("{} datasets", reference.datasets.len()))?;
    let close = |got: f64, want: f64, what: &str| {
        ensure((got - want).abs() <= 1e-9, || format!("{what}: got {got}, want {want}"))
    };
    for d in &reference.datasets {
        let w = welch_t_test(&d.a, &d.b).map_err(|e| e.to_string())?;
        close(w.t, d.welch_t, &format!("{} welch t", d.name))?;
        close(w.p_value, d.welch_p, &format!("{} welch p", d.name))?;
        let m = mann_whitney_u(&d.a, &d.b).map_err(|e| e.to_string())?;
        close(m.u, d.mwu_u, &format!("{} U", d.name))?;
        close(m.p_value, d.mwu_p, &format!("{} U p", d.name))?;
    }
    let key = |w: &str| ScenarioKey::new(w, "base", 5120);
    let groups = prop::collection::vec(-50.0f64..50.0, 2..25);
    runner(1000)
        .run(&(groups.clone(), groups), |(a, b)| {
            let ab = test_pairwise(&key("a"), &a, &key("b"), &b, 0.05).unwrap();
            let ba = test_pairwise(&key("b"), &b, &key("a"), &a, 0.05).unwrap();
            prop_assert_eq!(ab.p_value, ba.p_value);
            prop_assert_eq!(ab.delta_j, ba.delta_j);
            prop_assert_eq!(ab.test, ba.test);
            if ab.delta_j > 0.0 {
                prop_assert_eq!(ab.higher_energy_user(), ba.higher_energy_user());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} reference datasets within 1e-9; symmetry over 1000 pairs", reference.datasets.len()))
}

#[derive(Deserialize)]
struct PublishedRow {
    a: (String, String),
    b: (String, String),
    file_size_bytes: u64,
    p_value: f64,
    higher: String,
    delta_j: f64,
}

fn criterion_9() -> Outcome {
    let rows: Vec<PublishedRow> =
        serde_json::from_str(include_str!("fixtures/published_pairwise.json")).map_err(|e| e.to_string())?;
    let pairwise: Vec<PairwiseComparison> = rows
        .into_iter()
        .map(|r| PairwiseComparison {
            scenario_a: ScenarioKey::new(r.a.0, r.a.1, r.file_size_bytes),
            scenario_b: ScenarioKey::new(r.b.0, r.b.1, r.file_size_bytes),
            file_size_bytes: r.file_size_bytes,
            p_value: r.p_value,
            p_adjusted: None,
            test: TestKind::Reported,
            higher: if r.higher == "a" { Side::A } else { Side::B },
            delta_j: r.delta_j,
            significant: r.p_value < 0.05,
        })
        .collect();
    let analyses = Analyses {
        pairwise,
        hourly: published_hourly()?.to_vec(),
        ..Default::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    export_report(&analyses, dir.path()).map_err(|e| e.to_string())?;
    let got = fs::read(dir.path().join(PAIRWISE_FILE)).map_err(|e| e.to_string())?;
    let golden = include_bytes!("fixtures/published_pairwise.golden.csv");
    ensure(got == golden, || {
        format!("pairwise.csv differs from golden:\n{}", String::from_utf8_lossy(&got))
    })?;

    let hourly = fs::read_to_string(dir.path().join(HOURLY_FILE)).map_err(|e| e.to_string())?;
    let want = [
        ["novelWriter", "0.83", "30 s", "120", "99.6"],
        ["Mu", "0.86", "5 s", "720", "619.2"],
        ["Leo", "0.92", "300 s (idle)", "12", "11.04"],
    ];
    let lines: Vec<&str> = hourly.lines().skip(1).collect();
    ensure(lines.len() == 3, || format!("{} hourly rows", lines.len()))?;
    for (line, w) in lines.iter().zip(want) {
        let f: Vec<&str> = line.split(',').collect();
        let got = [f[0], f[2], f[3], f[4], f[5]];
        ensure(got == w, || format!("hourly row {got:?}, want {w:?}"))?;
    }
    Ok("10 published pairwise rows byte-identical to golden; hourly rows match criterion 1".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("hourly cost table", criterion_1),
        ("save-frequency what-if", criterion_2),
        ("matrix cardinality", criterion_3),
        ("synthetic end-to-end", criterion_4),
        ("counter wraparound", criterion_5),
        ("write-strategy invariants", criterion_6),
        ("change-detection suppression", criterion_7),
        ("statistics oracle", criterion_8),
        ("report fidelity", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
