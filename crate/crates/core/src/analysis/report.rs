//! End-to-end analysis of a store and the report bundle it produces.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::orchestrator::{ExperimentPlan, PlanError, StoredRecord};
use crate::workload::TriggerKind;

use super::delta::{compute_deltas, default_control_mapping, delta_adjusted, DeltaResult};
use super::hourly::{estimate_hourly, frequency_whatif, HourlyEstimate, HourlySpec, WhatIfResult};
use super::pairwise::{all_pairwise, PairwiseComparison, NORMALITY_ALPHA};
use super::stats::{box_summary, describe, iqr_filter, mean, BoxSummary, Descriptive};
use super::{group_totals, map_items, AnalysisError, ExecMode, ScenarioGroups, ScenarioKey};

pub const DELTAS_FILE: &str = "deltas.csv";
pub const DESCRIPTIVE_FILE: &str = "descriptive.csv";
pub const PAIRWISE_FILE: &str = "pairwise.csv";
pub const HOURLY_FILE: &str = "hourly.csv";
pub const WHATIF_FILE: &str = "whatif.csv";
pub const BOXPLOT_FILE: &str = "boxplot.csv";
pub const TEXT_FILE: &str = "report.txt";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub holm: bool,
    pub iqr_filter: bool,
    pub mode: ExecMode,
    /// Variant whose deltas feed the hourly table.
    pub hourly_variant: Option<String>,
    pub hourly: Vec<HourlySpec>,
    /// (workload, new interval in seconds)
    pub whatifs: Vec<(String, f64)>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            alpha: 0.05,
            holm: false,
            iqr_filter: false,
            mode: ExecMode::default(),
            hourly_variant: None,
            hourly: Vec::new(),
            whatifs: Vec::new(),
        }
    }
}

impl AnalysisOptions {
    /// Alpha, hourly inputs and what-ifs as declared in a plan. The hourly
    /// table defaults to the last (fullest) variant.
    pub fn from_plan(plan: &ExperimentPlan) -> Result<Self, PlanError> {
        let chain = plan.variant_chain()?;
        let hourly_variant = plan
            .analysis
            .hourly_variant
            .clone()
            .or_else(|| chain.variants().last().map(|v| v.name.clone()));
        let hourly = plan
            .workloads
            .iter()
            .map(|w| {
                let idle = w.native_trigger.unwrap_or(w.trigger.kind) == TriggerKind::Idle;
                HourlySpec {
                    workload: w.name.clone(),
                    saves: w.save_budget,
                    interval_s: w.native_interval_s.unwrap_or(w.trigger.interval_s),
                    trigger_note: idle.then(|| "idle".to_string()),
                }
            })
            .collect();
        Ok(AnalysisOptions {
            alpha: plan.analysis.alpha,
            hourly_variant,
            hourly,
            whatifs: plan
                .analysis
                .whatif
                .iter()
                .map(|w| (w.workload.clone(), w.new_interval_s))
                .collect(),
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: ScenarioKey,
    pub stats: Descriptive,
    pub boxplot: BoxSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub alpha: f64,
    pub holm: bool,
    pub iqr_filter: bool,
    pub normality_alpha: f64,
    pub procedure: String,
    pub pairwise_basis: String,
    pub hourly_basis: String,
    pub records_used: usize,
    pub records_failed: usize,
    pub samples_removed_by_filter: usize,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        ReportMetadata {
            alpha: 0.05,
            holm: false,
            iqr_filter: false,
            normality_alpha: NORMALITY_ALPHA,
            procedure: "Shapiro-Wilk screen per group; Welch t-test if both normal, else Mann-Whitney U; two-sided".into(),
            pairwise_basis: "per-run totals minus the mean of the mapped control".into(),
            hourly_basis: "mean control delta across file sizes".into(),
            records_used: 0,
            records_failed: 0,
            samples_removed_by_filter: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Analyses {
    pub deltas: Vec<DeltaResult>,
    /// Raw totals, controls included.
    pub scenarios: Vec<ScenarioSummary>,
    pub pairwise: Vec<PairwiseComparison>,
    pub hourly: Vec<HourlyEstimate>,
    pub whatifs: Vec<WhatIfResult>,
    pub metadata: ReportMetadata,
}

pub fn analyze(records: &[&StoredRecord], opts: &AnalysisOptions) -> Result<Analyses, AnalysisError> {
    let raw = group_totals(records.iter().copied());
    if raw.is_empty() {
        return Err(AnalysisError::EmptyStore);
    }
    let groups: ScenarioGroups = if opts.iqr_filter {
        let entries: Vec<_> = raw.iter().collect();
        map_items(&entries, opts.mode, |(k, s)| ((*k).clone(), iqr_filter(s)))
            .into_iter()
            .collect()
    } else {
        raw.clone()
    };
    let removed = raw.values().map(Vec::len).sum::<usize>() - groups.values().map(Vec::len).sum::<usize>();

    let mapping = default_control_mapping(&groups)?;
    let deltas = compute_deltas(&groups, &mapping)?;
    let adjusted = delta_adjusted(&groups, &deltas);
    let pairwise = all_pairwise(&adjusted, opts.alpha, opts.holm, opts.mode)?;

    let entries: Vec<_> = groups.iter().collect();
    let scenarios = map_items(&entries, opts.mode, |(k, s)| {
        Ok(ScenarioSummary {
            scenario: (*k).clone(),
            stats: describe(s)?,
            boxplot: box_summary(s)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, AnalysisError>>()?;

    let mut hourly = Vec::new();
    if let Some(variant) = &opts.hourly_variant {
        for spec in &opts.hourly {
            let per_size: Vec<f64> = deltas
                .iter()
                .filter(|d| d.scenario.workload == spec.workload && &d.scenario.variant == variant)
                .map(|d| d.delta_j)
                .collect();
            if per_size.is_empty() {
                return Err(AnalysisError::EmptyGroup(format!("{} {variant}", spec.workload)));
            }
            // noise can push a small delta below zero; a cost cannot be
            let avg = mean(&per_size).max(0.0);
            let mut e = estimate_hourly(&spec.workload, avg, spec.saves, spec.interval_s)?;
            e.trigger_note = spec.trigger_note.clone();
            hourly.push(e);
        }
    }
    let mut whatifs = Vec::new();
    for (workload, new_interval) in &opts.whatifs {
        let e = hourly
            .iter()
            .find(|h| &h.scenario == workload)
            .ok_or_else(|| AnalysisError::EmptyGroup(format!("no hourly estimate for {workload}")))?;
        whatifs.push(frequency_whatif(e, *new_interval)?);
    }

    Ok(Analyses {
        deltas,
        scenarios,
        pairwise,
        hourly,
        whatifs,
        metadata: ReportMetadata {
            alpha: opts.alpha,
            holm: opts.holm,
            iqr_filter: opts.iqr_filter,
            records_used: records.iter().filter(|r| r.is_ok()).count(),
            records_failed: records.iter().filter(|r| !r.is_ok()).count(),
            samples_removed_by_filter: removed,
            ..Default::default()
        },
    })
}

/// p rounded to four significant digits, printed without exponent when
/// that stays short.
pub fn format_p(p: f64) -> String {
    if p == 0.0 {
        return "0".into();
    }
    if p < 1e-6 {
        return format!("{p:.3e}");
    }
    let digits = 3 - p.log10().floor() as i32;
    let scale = 10f64.powi(digits);
    format!("{}", (p * scale).round() / scale)
}

pub fn format_size(bytes: u64) -> String {
    format!("{} KB", bytes as f64 / 1024.0)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn frequency_label(e: &HourlyEstimate) -> String {
    match &e.trigger_note {
        Some(note) => format!("{} s ({note})", e.interval_s),
        None => format!("{} s", e.interval_s),
    }
}

type Table = (Vec<&'static str>, Vec<Vec<String>>);

fn deltas_table(a: &Analyses) -> Table {
    let header = vec![
        "workload", "variant", "file_size_bytes", "mean_test_j", "mean_control_j", "delta_j",
        "n_test", "n_control", "control_variant", "control_file_size_bytes",
    ];
    let rows = a
        .deltas
        .iter()
        .map(|d| {
            vec![
                d.scenario.workload.clone(),
                d.scenario.variant.clone(),
                d.scenario.file_size_bytes.to_string(),
                d.mean_test_j.to_string(),
                d.mean_control_j.to_string(),
                d.delta_j.to_string(),
                d.n_test.to_string(),
                d.n_control.to_string(),
                d.control.variant.clone(),
                d.control.file_size_bytes.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

fn descriptive_table(a: &Analyses) -> Table {
    let header = vec![
        "workload", "variant", "file_size_bytes", "n", "mean", "median", "sd", "sd_defined", "min",
        "q1", "q3", "max",
    ];
    let rows = a
        .scenarios
        .iter()
        .map(|s| {
            let d = &s.stats;
            vec![
                s.scenario.workload.clone(),
                s.scenario.variant.clone(),
                s.scenario.file_size_bytes.to_string(),
                d.n.to_string(),
                d.mean.to_string(),
                d.median.to_string(),
                d.sd.to_string(),
                d.sd_defined.to_string(),
                d.min.to_string(),
                d.q1.to_string(),
                d.q3.to_string(),
                d.max.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

/// Comparison, file size, p, higher user and delta first, then provenance.
pub fn pairwise_table(rows: &[PairwiseComparison]) -> Table {
    let header = vec![
        "comparison", "file_size", "p_value", "higher_energy_user", "delta_j", "test", "p_adjusted",
        "significant",
    ];
    let rows = rows
        .iter()
        .map(|c| {
            vec![
                c.label(),
                format_size(c.file_size_bytes),
                format_p(c.p_value),
                c.higher_energy_user().label(),
                format!("{:.2}", c.delta_j),
                c.test.to_string(),
                c.p_adjusted.map(format_p).unwrap_or_default(),
                c.significant.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

pub fn hourly_table(rows: &[HourlyEstimate]) -> Table {
    let header = vec![
        "editor", "avg_j_total", "avg_j_per_save", "frequency", "calls_per_hr", "joules_per_hr",
        "unrounded_j_per_save", "unrounded_joules_per_hr",
    ];
    let rows = rows
        .iter()
        .map(|e| {
            vec![
                e.scenario.clone(),
                round2(e.avg_j_total).to_string(),
                e.avg_j_per_save.to_string(),
                frequency_label(e),
                e.calls_per_hr.to_string(),
                e.joules_per_hr.to_string(),
                e.unrounded_j_per_save.to_string(),
                e.unrounded_joules_per_hr.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

fn whatif_table(a: &Analyses) -> Table {
    let header = vec![
        "editor", "old_interval_s", "new_interval_s", "old_joules_per_hr", "new_calls_per_hr",
        "new_joules_per_hr", "reduction_fraction",
    ];
    let rows = a
        .whatifs
        .iter()
        .map(|w| {
            vec![
                w.scenario.clone(),
                w.old_interval_s.to_string(),
                w.new_interval_s.to_string(),
                w.old_joules_per_hr.to_string(),
                w.new_calls_per_hr.to_string(),
                w.new_joules_per_hr.to_string(),
                w.reduction_fraction.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

fn boxplot_table(a: &Analyses) -> Table {
    let header = vec![
        "workload", "variant", "file_size_bytes", "n", "q1", "median", "q3", "lo_whisker",
        "hi_whisker", "outliers",
    ];
    let rows = a
        .scenarios
        .iter()
        .map(|s| {
            let b = &s.boxplot;
            vec![
                s.scenario.workload.clone(),
                s.scenario.variant.clone(),
                s.scenario.file_size_bytes.to_string(),
                b.n.to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.lo_whisker.to_string(),
                b.hi_whisker.to_string(),
                b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            ]
        })
        .collect();
    (header, rows)
}

pub fn table_to_csv((header, rows): &Table) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Left-aligned plain-text rendering.
pub fn table_to_text((header, rows): &Table) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.clone());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

pub fn export_report(analyses: &Analyses, dir: &Path) -> Result<ReportBundle, AnalysisError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| AnalysisError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let tables = [
        (DELTAS_FILE, "Control deltas", deltas_table(analyses)),
        (DESCRIPTIVE_FILE, "Per-scenario totals", descriptive_table(analyses)),
        (PAIRWISE_FILE, "Pairwise comparisons", pairwise_table(&analyses.pairwise)),
        (HOURLY_FILE, "Hourly cost", hourly_table(&analyses.hourly)),
        (WHATIF_FILE, "Save-frequency what-ifs", whatif_table(analyses)),
        (BOXPLOT_FILE, "Box-plot data", boxplot_table(analyses)),
    ];
    let mut files = Vec::new();
    let mut text = String::new();
    for (name, title, table) in &tables {
        let path = dir.join(name);
        fs::write(&path, table_to_csv(table)).map_err(io(&path))?;
        files.push(path);
        text.push_str(&format!("{title}\n\n{}\n", table_to_text(table)));
    }
    let path = dir.join(TEXT_FILE);
    fs::write(&path, text).map_err(io(&path))?;
    files.push(path);
    let path = dir.join(METADATA_FILE);
    let json = serde_json::to_string_pretty(&analyses.metadata).expect("metadata serializes");
    fs::write(&path, json).map_err(io(&path))?;
    files.push(path);
    Ok(ReportBundle {
        dir: dir.to_path_buf(),
        files,
    })
}
