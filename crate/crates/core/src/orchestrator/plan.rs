//! Experiment plan: the declarative description of a measurement campaign.
//!
//! Plans are TOML documents. Unknown keys are rejected, and every semantic
//! check reports the dotted path of the offending field.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{ProviderKind, SyntheticParams, DEFAULT_POWERCAP_ROOT};
use crate::feature_model::{
    build_named_variant_chain, validate_profile, AtomicOperation, FeatureProfile, VariantChain,
};
use crate::workload::{
    LoggingMode, SessionStats, TriggerConfig, TriggerKind, WriteStrategy, DEFAULT_APPEND_FRACTION,
    DEFAULT_EDIT_RATE_HZ, DEFAULT_MAX_SESSION_S,
};

pub const OP_FILE_WRITE: &str = "file_write";
pub const OP_CHANGE_DETECT: &str = "change_detect";
pub const OP_LOGGING: &str = "logging";
const KNOWN_OPS: [&str; 3] = [OP_FILE_WRITE, OP_CHANGE_DETECT, OP_LOGGING];

#[derive(Debug)]
pub struct PlanError {
    pub field: String,
    pub message: String,
}

impl PlanError {
    fn at(field: impl Into<String>, message: impl Into<String>) -> Self {
        PlanError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for PlanError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    /// One-off idle period before the first run of a plan.
    pub warmup_s: f64,
    /// Wait between arming the workload and the start snapshot.
    pub app_settle_s: f64,
    /// Pause after each run.
    pub cooldown_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    Real,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powercap_root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticParams>,
}

impl ProviderSection {
    /// Synthetic providers default to simulated time, hardware to real time.
    pub fn clock_kind(&self) -> ClockKind {
        self.clock.unwrap_or(match self.kind {
            ProviderKind::Synthetic => ClockKind::Virtual,
            ProviderKind::RaplSysfs => ClockKind::Real,
        })
    }

    pub fn powercap_root(&self) -> PathBuf {
        self.powercap_root
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_POWERCAP_ROOT))
    }
}

/// Joules the synthetic provider is charged per executed atomic operation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCosts {
    #[serde(default)]
    pub write_j: f64,
    #[serde(default)]
    pub change_check_j: f64,
    #[serde(default)]
    pub log_j: f64,
    #[serde(default)]
    pub edit_j: f64,
}

impl SyntheticCosts {
    /// Analytic energy of a window of `duration_s` in which `stats` executed.
    pub fn expected_joules(&self, idle_rate_w: f64, duration_s: f64, stats: &SessionStats) -> f64 {
        idle_rate_w * duration_s
            + self.write_j * stats.saves_performed as f64
            + self.change_check_j * stats.change_checks as f64
            + self.log_j * stats.log_records as f64
            + self.edit_j * stats.edits_applied as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<FeatureProfile>,
    pub operations: Vec<AtomicOperation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variant_names: Vec<String>,
}

/// Template for one workload (skeleton application style).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadTemplate {
    pub name: String,
    pub trigger: TriggerConfig,
    pub strategy: WriteStrategy,
    /// Sink used by variants that include the logging operation.
    pub logging: LoggingMode,
    pub save_budget: u32,
    #[serde(default = "default_edit_rate")]
    pub edit_rate_hz: f64,
    #[serde(default = "default_append_fraction")]
    pub append_fraction: f64,
    #[serde(default = "default_max_session")]
    pub max_session_s: f64,
    /// The application's native save interval, used for hourly extrapolation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_interval_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_trigger: Option<TriggerKind>,
}

fn default_edit_rate() -> f64 {
    DEFAULT_EDIT_RATE_HZ
}

fn default_append_fraction() -> f64 {
    DEFAULT_APPEND_FRACTION
}

fn default_max_session() -> f64 {
    DEFAULT_MAX_SESSION_S
}

impl WorkloadTemplate {
    /// Edit script length that lets the trigger reach its budget.
    pub fn script_duration_s(&self) -> f64 {
        match self.trigger.kind {
            TriggerKind::Periodic => self.trigger.interval_s * self.save_budget as f64,
            TriggerKind::Idle if self.edit_rate_hz > 0.0 => {
                self.save_budget as f64 / self.edit_rate_hz
            }
            TriggerKind::Idle => self.trigger.interval_s * self.save_budget as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub workload: String,
    /// Defaults to the plan's first file size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_size_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIf {
    pub workload: String,
    pub new_interval_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Variant whose deltas feed the hourly table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hourly_variant: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub whatif: Vec<WhatIf>,
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            alpha: default_alpha(),
            hourly_variant: None,
            whatif: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub seed: u64,
    pub repetitions: u32,
    pub file_sizes_bytes: Vec<u64>,
    #[serde(default = "default_true")]
    pub randomize_order: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
    #[serde(default)]
    pub keep_scratch: bool,
    pub cycle: CycleConfig,
    pub provider: ProviderSection,
    #[serde(default)]
    pub synthetic_costs: SyntheticCosts,
    pub feature: FeatureSection,
    pub workloads: Vec<WorkloadTemplate>,
    #[serde(default)]
    pub controls: Vec<ControlSpec>,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_true() -> bool {
    true
}

fn positive(field: &str, v: f64) -> Result<(), PlanError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PlanError::at(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), PlanError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PlanError::at(field, format!("must be non-negative, got {v}")))
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self, PlanError> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .and_then(|span| text.get(..span.start))
                .map(|prefix| format!("line {}", prefix.lines().count().max(1)))
                .unwrap_or_default();
            PlanError::at(field, msg)
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, PlanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlanError::at("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("plan serializes")
    }

    pub fn variant_chain(&self) -> Result<VariantChain, PlanError> {
        build_named_variant_chain(&self.feature.operations, &self.feature.variant_names)
            .map_err(|e| PlanError::at("feature.operations", e.to_string()))
    }

    pub fn workload(&self, name: &str) -> Option<&WorkloadTemplate> {
        self.workloads.iter().find(|w| w.name == name)
    }

    pub fn control_size(&self, spec: &ControlSpec) -> u64 {
        spec.file_size_bytes
            .unwrap_or_else(|| self.file_sizes_bytes.first().copied().unwrap_or(0))
    }

    pub fn synthetic_params(&self) -> SyntheticParams {
        self.provider.synthetic.clone().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.name.trim().is_empty() {
            return Err(PlanError::at("name", "must not be empty"));
        }
        if self.repetitions < 1 {
            return Err(PlanError::at("repetitions", "must be at least 1"));
        }
        if self.file_sizes_bytes.is_empty() {
            return Err(PlanError::at("file_sizes_bytes", "must not be empty"));
        }
        let mut sizes = HashSet::new();
        for s in &self.file_sizes_bytes {
            if !sizes.insert(s) {
                return Err(PlanError::at("file_sizes_bytes", format!("duplicate size {s}")));
            }
        }
        non_negative("cycle.warmup_s", self.cycle.warmup_s)?;
        non_negative("cycle.app_settle_s", self.cycle.app_settle_s)?;
        non_negative("cycle.cooldown_s", self.cycle.cooldown_s)?;

        if self.provider.kind == ProviderKind::RaplSysfs
            && self.provider.clock_kind() == ClockKind::Virtual
        {
            return Err(PlanError::at(
                "provider.clock",
                "hardware counters need the real clock",
            ));
        }
        if let Some(p) = &self.provider.synthetic {
            p.validate()
                .map_err(|e| PlanError::at("provider.synthetic", e.to_string()))?;
        }
        let c = &self.synthetic_costs;
        for (field, v) in [
            ("synthetic_costs.write_j", c.write_j),
            ("synthetic_costs.change_check_j", c.change_check_j),
            ("synthetic_costs.log_j", c.log_j),
            ("synthetic_costs.edit_j", c.edit_j),
        ] {
            non_negative(field, v)?;
        }

        if let Some(profile) = &self.feature.profile {
            let report = validate_profile(profile);
            if let Some(v) = report.violations.first() {
                return Err(PlanError::at("feature.profile", v.to_string()));
            }
        }
        let chain = self.variant_chain()?;
        for (i, op) in self.feature.operations.iter().enumerate() {
            if !KNOWN_OPS.contains(&op.id.as_str()) {
                return Err(PlanError::at(
                    format!("feature.operations[{i}].id"),
                    format!(
                        "`{}` is not an autosave operation (expected one of {})",
                        op.id,
                        KNOWN_OPS.join(", ")
                    ),
                ));
            }
        }
        if chain
            .variants()
            .iter()
            .any(|v| !v.contains(OP_FILE_WRITE))
        {
            return Err(PlanError::at(
                "feature.operations[0].id",
                "every variant must include file_write, so it has to come first",
            ));
        }
        if chain.variants().iter().any(|v| v.name == CONTROL_VARIANT) {
            return Err(PlanError::at(
                "feature.variant_names",
                format!("`{CONTROL_VARIANT}` is reserved for control runs"),
            ));
        }

        if self.workloads.is_empty() {
            return Err(PlanError::at("workloads", "must not be empty"));
        }
        let mut names = HashSet::new();
        for (i, w) in self.workloads.iter().enumerate() {
            let at = |f: &str| format!("workloads[{i}].{f}");
            if w.name.trim().is_empty() || w.name.contains(',') {
                return Err(PlanError::at(at("name"), "must be non-empty and comma-free"));
            }
            if !names.insert(w.name.as_str()) {
                return Err(PlanError::at(at("name"), format!("duplicate workload `{}`", w.name)));
            }
            positive(&at("trigger.interval_s"), w.trigger.interval_s)?;
            if w.save_budget < 1 {
                return Err(PlanError::at(at("save_budget"), "must be at least 1"));
            }
            non_negative(&at("edit_rate_hz"), w.edit_rate_hz)?;
            if !(0.0..=1.0).contains(&w.append_fraction) {
                return Err(PlanError::at(at("append_fraction"), "must lie in [0, 1]"));
            }
            positive(&at("max_session_s"), w.max_session_s)?;
            if let Some(v) = w.native_interval_s {
                positive(&at("native_interval_s"), v)?;
            }
        }
        for (i, c) in self.controls.iter().enumerate() {
            if self.workload(&c.workload).is_none() {
                return Err(PlanError::at(
                    format!("controls[{i}].workload"),
                    format!("unknown workload `{}`", c.workload),
                ));
            }
        }
        let a = &self.analysis;
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return Err(PlanError::at("analysis.alpha", "must lie in (0, 1)"));
        }
        if let Some(v) = &a.hourly_variant {
            if chain.get(v).is_none() {
                return Err(PlanError::at(
                    "analysis.hourly_variant",
                    format!("unknown variant `{v}`"),
                ));
            }
        }
        for (i, w) in a.whatif.iter().enumerate() {
            if self.workload(&w.workload).is_none() {
                return Err(PlanError::at(
                    format!("analysis.whatif[{i}].workload"),
                    format!("unknown workload `{}`", w.workload),
                ));
            }
            positive(&format!("analysis.whatif[{i}].new_interval_s"), w.new_interval_s)?;
        }
        Ok(())
    }
}

pub const CONTROL_VARIANT: &str = "control";
