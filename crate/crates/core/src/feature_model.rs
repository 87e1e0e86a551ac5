//! Background features as property profiles and incremental operation chains.
//!
//! A feature is described once by a [`FeatureProfile`] (how it is triggered,
//! how often it runs, what it touches) and decomposed into an ordered list of
//! [`AtomicOperation`]s. [`build_variant_chain`] expands that decomposition
//! into the series of variants that are measured one after another, each
//! variant adding exactly one operation on top of its predecessor.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    ScheduleTime,
    ScheduleEvent,
    ScheduleIdle,
    Reactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Periodic,
    Aperiodic,
    Sporadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    Immediate,
    LongRunning,
    Deferrable,
    Persistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Cpu,
    DiskIo,
    Network,
    Sensors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Local,
    External,
}

/// Property taxonomy instance for one background feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureProfile {
    pub trigger: Trigger,
    pub frequency: Frequency,
    pub persistence: Persistence,
    pub resources: BTreeSet<Resource>,
    pub scope: Scope,
}

impl FeatureProfile {
    /// The autosave feature as characterised in the case study: a timer-driven,
    /// periodic, local disk writer. Persistence is mapped to `long_running`.
    pub fn autosave() -> Self {
        FeatureProfile {
            trigger: Trigger::ScheduleTime,
            frequency: Frequency::Periodic,
            persistence: Persistence::LongRunning,
            resources: BTreeSet::from([Resource::DiskIo]),
            scope: Scope::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProfileViolation {
    ResourcesEmpty,
}

impl fmt::Display for ProfileViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileViolation::ResourcesEmpty => f.write_str("resources empty"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<ProfileViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a profile against the taxonomy invariants. Enum-typed fields always
/// carry exactly one value, so only the resource set can be incomplete.
pub fn validate_profile(profile: &FeatureProfile) -> ValidationReport {
    let mut violations = Vec::new();
    if profile.resources.is_empty() {
        violations.push(ProfileViolation::ResourcesEmpty);
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicOperation {
    pub id: String,
    #[serde(default)]
    pub description: String,
}

impl AtomicOperation {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Self {
        AtomicOperation {
            id: id.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub operations: Vec<String>,
}

impl VariantSpec {
    pub fn contains(&self, op_id: &str) -> bool {
        self.operations.iter().any(|o| o == op_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantChain {
    variants: Vec<VariantSpec>,
}

impl VariantChain {
    pub fn variants(&self) -> &[VariantSpec] {
        &self.variants
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&VariantSpec> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// True when every variant's operations are a strict prefix of the next.
    pub fn has_prefix_property(&self) -> bool {
        self.variants.windows(2).all(|pair| {
            let (a, b) = (&pair[0].operations, &pair[1].operations);
            a.len() < b.len() && b.starts_with(a)
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("feature decomposition is empty")]
    Empty,
    #[error("duplicate atomic operation id `{0}`")]
    DuplicateId(String),
    #[error("variant names must be unique, `{0}` repeats")]
    DuplicateVariantName(String),
    #[error("{names} variant names given for {ops} operations")]
    NameCountMismatch { names: usize, ops: usize },
}

/// Expands an ordered decomposition into the incremental variant chain.
/// Variant `k` holds the first `k` operations and is named after its last one.
pub fn build_variant_chain(ops: &[AtomicOperation]) -> Result<VariantChain, DecompositionError> {
    build_named_variant_chain(ops, &[])
}

/// Like [`build_variant_chain`], with explicit variant names. An empty `names`
/// slice falls back to the last operation id of each variant.
pub fn build_named_variant_chain(
    ops: &[AtomicOperation],
    names: &[String],
) -> Result<VariantChain, DecompositionError> {
    if ops.is_empty() {
        return Err(DecompositionError::Empty);
    }
    if !names.is_empty() && names.len() != ops.len() {
        return Err(DecompositionError::NameCountMismatch {
            names: names.len(),
            ops: ops.len(),
        });
    }
    let mut seen = HashSet::new();
    for op in ops {
        if !seen.insert(op.id.as_str()) {
            return Err(DecompositionError::DuplicateId(op.id.clone()));
        }
    }
    let mut seen_names = HashSet::new();
    let mut variants = Vec::with_capacity(ops.len());
    for k in 1..=ops.len() {
        let name = names
            .get(k - 1)
            .cloned()
            .unwrap_or_else(|| ops[k - 1].id.clone());
        if !seen_names.insert(name.clone()) {
            return Err(DecompositionError::DuplicateVariantName(name));
        }
        variants.push(VariantSpec {
            name,
            operations: ops[..k].iter().map(|o| o.id.clone()).collect(),
        });
    }
    Ok(VariantChain { variants })
}
