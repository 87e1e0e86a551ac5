//! Energy readings for measurement windows.
//!
//! Providers expose monotone (modulo wraparound) microjoule counters per
//! domain. A window is attributed by snapshotting every counter at its start
//! and end and taking the modular difference.

mod rapl;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{nanos_to_secs, Nanos, SharedClock};

pub use rapl::{RaplProvider, DEFAULT_POWERCAP_ROOT};
pub use synthetic::{SyntheticParams, SyntheticProvider, DEFAULT_SYNTHETIC_RANGE_UJ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyDomain {
    Package,
    Dram,
    Psys,
    Core,
    Uncore,
}

impl EnergyDomain {
    pub const ALL: [EnergyDomain; 5] = [
        EnergyDomain::Package,
        EnergyDomain::Dram,
        EnergyDomain::Psys,
        EnergyDomain::Core,
        EnergyDomain::Uncore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyDomain::Package => "package",
            EnergyDomain::Dram => "dram",
            EnergyDomain::Psys => "psys",
            EnergyDomain::Core => "core",
            EnergyDomain::Uncore => "uncore",
        }
    }

    /// Core and uncore are sub-zones of the package and psys covers the whole
    /// platform, so only package and DRAM are summed into a window total.
    pub fn is_additive(self) -> bool {
        matches!(self, EnergyDomain::Package | EnergyDomain::Dram)
    }

    /// Maps a powercap zone `name` ("package-0", "dram", ...) to a domain.
    pub fn from_zone_name(name: &str) -> Option<Self> {
        let name = name.trim();
        if name.starts_with("package") {
            return Some(EnergyDomain::Package);
        }
        name.parse().ok()
    }
}

impl fmt::Display for EnergyDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnergyDomain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnergyDomain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown energy domain `{s}`"))
    }
}

/// One counter read. `zone` distinguishes several zones of the same domain
/// (for example one package per socket).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub domain: EnergyDomain,
    pub zone: String,
    pub counter_uj: u64,
    pub max_range_uj: u64,
    pub timestamp: Nanos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub per_domain_joules: BTreeMap<EnergyDomain, f64>,
    pub duration_s: f64,
}

impl EnergyWindow {
    /// Sum over additive domains, falling back to every domain when none of
    /// them is additive (a psys-only host, for example).
    pub fn total_joules(&self) -> f64 {
        let additive: Vec<f64> = self
            .per_domain_joules
            .iter()
            .filter(|(d, _)| d.is_additive())
            .map(|(_, j)| *j)
            .collect();
        if additive.is_empty() {
            self.per_domain_joules.values().sum()
        } else {
            additive.iter().sum()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RaplSysfs,
    Synthetic,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::RaplSysfs => "rapl_sysfs",
            ProviderKind::Synthetic => "synthetic",
        })
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rapl_sysfs" | "rapl" => Ok(ProviderKind::RaplSysfs),
            "synthetic" => Ok(ProviderKind::Synthetic),
            other => Err(format!(
                "unknown provider `{other}` (expected rapl_sysfs or synthetic)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub powercap_root: PathBuf,
    pub synthetic: SyntheticParams,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            powercap_root: PathBuf::from(DEFAULT_POWERCAP_ROOT),
            synthetic: SyntheticParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("energy provider unavailable: cannot read {}: {reason}", path.display())]
    Unavailable { path: PathBuf, reason: String },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("snapshot of {domain} zone {zone} failed: {reason}")]
    Snapshot {
        domain: EnergyDomain,
        zone: String,
        reason: String,
    },
    #[error("start and end snapshots cover different zones: {0}")]
    Pairing(String),
    #[error("window for zone {zone} has non-positive duration ({start_ns} ns -> {end_ns} ns)")]
    Timing {
        zone: String,
        start_ns: Nanos,
        end_ns: Nanos,
    },
    #[error("{0} is only supported by the synthetic provider")]
    Unsupported(&'static str),
}

/// A source of per-domain energy counters.
///
/// A handle is driven by one measurement controller at a time; it is `Send`
/// so it can be created on and moved to a worker thread, but is not shared.
pub trait EnergyProvider: Send {
    fn kind(&self) -> ProviderKind;

    fn domains(&self) -> Vec<EnergyDomain>;

    /// One snapshot per zone, all taken in a single read pass.
    fn snapshot(&mut self) -> Result<Vec<CounterSnapshot>, EnergyError>;

    /// Adds event energy to a synthetic model. Hardware providers refuse.
    fn synthetic_charge(&mut self, event_cost_j: f64) -> Result<(), EnergyError>;

    fn clock(&self) -> &SharedClock;
}

pub fn open_provider(
    kind: ProviderKind,
    config: &ProviderConfig,
    clock: SharedClock,
) -> Result<Box<dyn EnergyProvider>, EnergyError> {
    match kind {
        ProviderKind::RaplSysfs => Ok(Box::new(RaplProvider::open(&config.powercap_root, clock)?)),
        ProviderKind::Synthetic => Ok(Box::new(SyntheticProvider::open(
            config.synthetic.clone(),
            clock,
        )?)),
    }
}

/// Modular counter delta in microjoules, assuming at most one wrap.
pub fn counter_delta_uj(start_uj: u64, end_uj: u64, max_range_uj: u64) -> u64 {
    if end_uj >= start_uj {
        end_uj - start_uj
    } else {
        (max_range_uj - start_uj) + end_uj
    }
}

/// Energy attributed to the window bracketed by two snapshot passes.
pub fn window_energy(
    start: &[CounterSnapshot],
    end: &[CounterSnapshot],
) -> Result<EnergyWindow, EnergyError> {
    if start.is_empty() {
        return Err(EnergyError::Pairing("no snapshots".into()));
    }
    let by_zone: BTreeMap<&str, &CounterSnapshot> =
        end.iter().map(|s| (s.zone.as_str(), s)).collect();
    if by_zone.len() != start.len() || end.len() != start.len() {
        return Err(EnergyError::Pairing(format!(
            "{} start vs {} end zones",
            start.len(),
            end.len()
        )));
    }
    let mut per_domain: BTreeMap<EnergyDomain, u64> = BTreeMap::new();
    let mut first_start = Nanos::MAX;
    let mut last_end = 0;
    for s in start {
        let e = by_zone
            .get(s.zone.as_str())
            .ok_or_else(|| EnergyError::Pairing(format!("zone {} missing at end", s.zone)))?;
        if e.domain != s.domain || e.max_range_uj != s.max_range_uj {
            return Err(EnergyError::Pairing(format!(
                "zone {} changed identity between snapshots",
                s.zone
            )));
        }
        if e.timestamp <= s.timestamp {
            return Err(EnergyError::Timing {
                zone: s.zone.clone(),
                start_ns: s.timestamp,
                end_ns: e.timestamp,
            });
        }
        first_start = first_start.min(s.timestamp);
        last_end = last_end.max(e.timestamp);
        *per_domain.entry(s.domain).or_default() +=
            counter_delta_uj(s.counter_uj, e.counter_uj, s.max_range_uj);
    }
    Ok(EnergyWindow {
        per_domain_joules: per_domain
            .into_iter()
            .map(|(d, uj)| (d, uj as f64 / 1e6))
            .collect(),
        duration_s: nanos_to_secs(last_end - first_start),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RANGE: u64 = 262_143_328_850;

    fn snap(counter_uj: u64, ts: Nanos) -> CounterSnapshot {
        CounterSnapshot {
            domain: EnergyDomain::Package,
            zone: "intel-rapl:0".into(),
            counter_uj,
            max_range_uj: RANGE,
            timestamp: ts,
        }
    }

    fn joules(start: u64, end: u64) -> f64 {
        let w = window_energy(&[snap(start, 0)], &[snap(end, 1_000)]).unwrap();
        w.per_domain_joules[&EnergyDomain::Package]
    }

    #[test]
    fn plain_subtraction() {
        assert_eq!(joules(2_000_000, 5_000_000), 3.0);
    }

    #[test]
    fn single_wraparound() {
        assert_eq!(joules(262_143_000_000, 1_000_000), 1.32885);
    }

    #[test]
    fn zero_window() {
        assert_eq!(joules(77, 77), 0.0);
    }

    #[test]
    fn mismatched_zones_rejected() {
        let mut other = snap(10, 50);
        other.zone = "intel-rapl:1".into();
        assert!(matches!(
            window_energy(&[snap(0, 0)], &[other]),
            Err(EnergyError::Pairing(_))
        ));
        assert!(matches!(
            window_energy(&[snap(0, 0)], &[snap(1, 0), snap(2, 0)]),
            Err(EnergyError::Pairing(_))
        ));
    }

    #[test]
    fn non_positive_duration_rejected() {
        assert!(matches!(
            window_energy(&[snap(0, 100)], &[snap(10, 100)]),
            Err(EnergyError::Timing { .. })
        ));
    }

    #[test]
    fn total_sums_package_and_dram_only() {
        let w = EnergyWindow {
            per_domain_joules: BTreeMap::from([
                (EnergyDomain::Package, 10.0),
                (EnergyDomain::Dram, 2.5),
                (EnergyDomain::Core, 7.0),
            ]),
            duration_s: 1.0,
        };
        assert_eq!(w.total_joules(), 12.5);
        let psys_only = EnergyWindow {
            per_domain_joules: BTreeMap::from([(EnergyDomain::Psys, 4.0)]),
            duration_s: 1.0,
        };
        assert_eq!(psys_only.total_joules(), 4.0);
    }

    #[test]
    fn zone_names_map_to_domains() {
        assert_eq!(EnergyDomain::from_zone_name("package-1\n"), Some(EnergyDomain::Package));
        assert_eq!(EnergyDomain::from_zone_name("dram"), Some(EnergyDomain::Dram));
        assert_eq!(EnergyDomain::from_zone_name("psys"), Some(EnergyDomain::Psys));
        assert_eq!(EnergyDomain::from_zone_name("gpu"), None);
    }

    proptest! {
        #[test]
        fn consecutive_windows_add_up(
            range in 1_000u64..=RANGE,
            a_frac in 0.0f64..1.0,
            d1_frac in 0.0f64..1.0,
            d2_frac in 0.0f64..1.0,
        ) {
            // the two sub-deltas together stay below one full range
            let a = ((range - 1) as f64 * a_frac) as u64;
            let d1 = ((range - 1) as f64 * d1_frac * 0.5) as u64;
            let d2 = ((range - 1) as f64 * d2_frac * 0.5) as u64;
            let b = (a + d1) % range;
            let c = (a + d1 + d2) % range;
            let ab = counter_delta_uj(a, b, range);
            let bc = counter_delta_uj(b, c, range);
            let ac = counter_delta_uj(a, c, range);
            prop_assert_eq!(ab + bc, ac);
        }
    }
}
