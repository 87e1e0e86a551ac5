use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{CounterSnapshot, EnergyDomain, EnergyError, EnergyProvider, ProviderKind};
use crate::clock::SharedClock;

pub const DEFAULT_POWERCAP_ROOT: &str = "/sys/class/powercap";

#[derive(Debug, Clone)]
struct Zone {
    id: String,
    domain: EnergyDomain,
    energy_path: PathBuf,
    max_range_uj: u64,
}

/// Reads Intel RAPL counters through the Linux powercap sysfs tree.
pub struct RaplProvider {
    zones: Vec<Zone>,
    clock: SharedClock,
}

fn read_u64(path: &Path) -> io::Result<u64> {
    let raw = fs::read_to_string(path)?;
    raw.trim()
        .parse()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{e}: {raw:?}")))
}

fn unavailable(path: &Path, err: impl ToString) -> EnergyError {
    EnergyError::Unavailable {
        path: path.to_path_buf(),
        reason: err.to_string(),
    }
}

impl RaplProvider {
    pub fn open(root: &Path, clock: SharedClock) -> Result<Self, EnergyError> {
        let entries = fs::read_dir(root).map_err(|e| unavailable(root, e))?;
        let mut dirs: Vec<(String, PathBuf)> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                // `intel-rapl` alone is the control-type node; mmio zones mirror the package
                name.starts_with("intel-rapl:").then(|| (name, e.path()))
            })
            .collect();
        dirs.sort();

        let mut zones = Vec::new();
        for (id, dir) in dirs {
            let name_path = dir.join("name");
            let name = fs::read_to_string(&name_path).map_err(|e| unavailable(&name_path, e))?;
            let Some(domain) = EnergyDomain::from_zone_name(&name) else {
                continue;
            };
            let range_path = dir.join("max_energy_range_uj");
            let max_range_uj = read_u64(&range_path).map_err(|e| unavailable(&range_path, e))?;
            if max_range_uj == 0 {
                return Err(unavailable(&range_path, "zero counter range"));
            }
            let energy_path = dir.join("energy_uj");
            // energy_uj is root-only on many kernels; probe it now rather than mid-run
            read_u64(&energy_path).map_err(|e| unavailable(&energy_path, e))?;
            zones.push(Zone {
                id,
                domain,
                energy_path,
                max_range_uj,
            });
        }
        if zones.is_empty() {
            return Err(unavailable(
                &root.join("intel-rapl:*"),
                "no RAPL zones with a known domain name",
            ));
        }
        Ok(RaplProvider { zones, clock })
    }
}

impl EnergyProvider for RaplProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::RaplSysfs
    }

    fn domains(&self) -> Vec<EnergyDomain> {
        let mut d: Vec<EnergyDomain> = self.zones.iter().map(|z| z.domain).collect();
        d.sort();
        d.dedup();
        d
    }

    fn snapshot(&mut self) -> Result<Vec<CounterSnapshot>, EnergyError> {
        self.zones
            .iter()
            .map(|z| {
                let counter_uj = read_u64(&z.energy_path).map_err(|e| EnergyError::Snapshot {
                    domain: z.domain,
                    zone: z.id.clone(),
                    reason: e.to_string(),
                })?;
                Ok(CounterSnapshot {
                    domain: z.domain,
                    zone: z.id.clone(),
                    counter_uj: counter_uj % z.max_range_uj,
                    max_range_uj: z.max_range_uj,
                    timestamp: self.clock.now(),
                })
            })
            .collect()
    }

    fn synthetic_charge(&mut self, _event_cost_j: f64) -> Result<(), EnergyError> {
        Err(EnergyError::Unsupported("synthetic_charge"))
    }

    fn clock(&self) -> &SharedClock {
        &self.clock
    }
}
