//! Host readiness inspection. Everything here only warns.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Ok,
    Warn,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Identifies the machine a record was measured on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFingerprint {
    pub hostname: Option<String>,
    pub kernel: Option<String>,
    pub cpu_model: Option<String>,
    pub governor: Option<String>,
    pub provider: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadinessReport {
    pub checks: Vec<Check>,
    pub fingerprint: EnvironmentFingerprint,
}

impl ReadinessReport {
    pub fn all_green(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Ok)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status != CheckStatus::Ok)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Ok => "ok  ",
                CheckStatus::Warn => "WARN",
                CheckStatus::Unknown => "??  ",
            };
            out.push_str(&format!("[{tag}] {:<10} {}\n", c.name, c.detail));
        }
        out
    }
}

/// Where to look; overridable so tests can fake a host.
#[derive(Debug, Clone, PartialEq)]
pub struct HostRoots {
    pub sys: PathBuf,
    pub proc: PathBuf,
    /// Load average above this is flagged.
    pub max_load: f64,
}

impl Default for HostRoots {
    fn default() -> Self {
        HostRoots {
            sys: PathBuf::from("/sys"),
            proc: PathBuf::from("/proc"),
            max_load: 1.0,
        }
    }
}

fn read_trimmed(path: &Path) -> Option<String> {
    fs::read_to_string(path).ok().map(|s| s.trim().to_string())
}

fn check(name: &str, status: CheckStatus, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        status,
        detail: detail.into(),
    }
}

pub fn fingerprint(roots: &HostRoots) -> EnvironmentFingerprint {
    let cpu_model = fs::read_to_string(roots.proc.join("cpuinfo")).ok().and_then(|info| {
        info.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split_once(':'))
            .map(|(_, v)| v.trim().to_string())
    });
    EnvironmentFingerprint {
        hostname: read_trimmed(&roots.proc.join("sys/kernel/hostname")),
        kernel: read_trimmed(&roots.proc.join("sys/kernel/osrelease")),
        cpu_model,
        governor: read_trimmed(&roots.sys.join("devices/system/cpu/cpu0/cpufreq/scaling_governor")),
        provider: None,
    }
}

fn governor_check(governor: Option<&str>) -> Check {
    match governor {
        Some("performance") => check("governor", CheckStatus::Ok, "performance"),
        Some(g) => check(
            "governor",
            CheckStatus::Warn,
            format!("{g}: frequency scaling adds variance, consider `performance`"),
        ),
        None => check("governor", CheckStatus::Unknown, "cpufreq not exposed"),
    }
}

fn turbo_check(sys: &Path) -> Check {
    let cpu = sys.join("devices/system/cpu");
    if let Some(v) = read_trimmed(&cpu.join("intel_pstate/no_turbo")) {
        return if v == "1" {
            check("turbo", CheckStatus::Ok, "disabled")
        } else {
            check("turbo", CheckStatus::Warn, "enabled (intel_pstate/no_turbo = 0)")
        };
    }
    if let Some(v) = read_trimmed(&cpu.join("cpufreq/boost")) {
        return if v == "0" {
            check("turbo", CheckStatus::Ok, "disabled")
        } else {
            check("turbo", CheckStatus::Warn, "enabled (cpufreq/boost = 1)")
        };
    }
    check("turbo", CheckStatus::Unknown, "no boost control found")
}

fn power_check(sys: &Path) -> Check {
    let Ok(entries) = fs::read_dir(sys.join("class/power_supply")) else {
        return check("power", CheckStatus::Unknown, "no power_supply class");
    };
    let mut on_ac = false;
    let mut has_battery = false;
    let mut discharging = false;
    for e in entries.flatten() {
        let dir = e.path();
        match read_trimmed(&dir.join("type")).as_deref() {
            Some("Mains") => on_ac |= read_trimmed(&dir.join("online")).as_deref() == Some("1"),
            Some("Battery") => {
                has_battery = true;
                discharging |= read_trimmed(&dir.join("status")).as_deref() == Some("Discharging")
            }
            _ => {}
        }
    }
    if discharging || (has_battery && !on_ac) {
        check("power", CheckStatus::Warn, "running on battery: power management skews readings")
    } else {
        check("power", CheckStatus::Ok, "AC")
    }
}

fn rapl_check(sys: &Path) -> Check {
    let root = sys.join("class/powercap");
    let readable = fs::read_dir(&root)
        .map(|entries| {
            entries.flatten().any(|e| {
                e.file_name().to_string_lossy().starts_with("intel-rapl:")
                    && fs::read_to_string(e.path().join("energy_uj")).is_ok()
            })
        })
        .unwrap_or(false);
    if readable {
        check("rapl", CheckStatus::Ok, format!("readable under {}", root.display()))
    } else {
        check(
            "rapl",
            CheckStatus::Warn,
            format!(
                "no readable intel-rapl zones under {} (needs Intel RAPL and read access to energy_uj); use `--provider synthetic` to exercise the pipeline",
                root.display()
            ),
        )
    }
}

fn load_check(proc: &Path, max_load: f64) -> Check {
    let load = read_trimmed(&proc.join("loadavg"))
        .and_then(|s| s.split_whitespace().next().and_then(|v| v.parse::<f64>().ok()));
    match load {
        Some(l) if l <= max_load => check("load", CheckStatus::Ok, format!("1-min load {l:.2}")),
        Some(l) => check(
            "load",
            CheckStatus::Warn,
            format!("1-min load {l:.2} above {max_load:.2}: background activity pollutes measurements"),
        ),
        None => check("load", CheckStatus::Unknown, "loadavg unreadable"),
    }
}

pub fn environment_check_at(roots: &HostRoots) -> ReadinessReport {
    let fp = fingerprint(roots);
    let checks = vec![
        governor_check(fp.governor.as_deref()),
        turbo_check(&roots.sys),
        power_check(&roots.sys),
        rapl_check(&roots.sys),
        load_check(&roots.proc, roots.max_load),
    ];
    ReadinessReport {
        checks,
        fingerprint: fp,
    }
}

pub fn environment_check() -> ReadinessReport {
    environment_check_at(&HostRoots::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(root: &Path, rel: &str, content: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, content).unwrap();
    }

    fn host(governor: &str) -> (tempfile::TempDir, HostRoots) {
        let dir = tempfile::tempdir().unwrap();
        let sys = dir.path().join("sys");
        let proc = dir.path().join("proc");
        put(&sys, "devices/system/cpu/cpu0/cpufreq/scaling_governor", governor);
        put(&sys, "devices/system/cpu/intel_pstate/no_turbo", "1\n");
        put(&sys, "class/power_supply/AC/type", "Mains\n");
        put(&sys, "class/power_supply/AC/online", "1\n");
        put(&sys, "class/powercap/intel-rapl:0/energy_uj", "12345\n");
        put(&proc, "loadavg", "0.10 0.20 0.30 1/100 4242\n");
        put(&proc, "cpuinfo", "processor\t: 0\nmodel name\t: Test CPU @ 3GHz\n");
        put(&proc, "sys/kernel/osrelease", "6.1.0-test\n");
        let roots = HostRoots {
            sys,
            proc,
            max_load: 1.0,
        };
        (dir, roots)
    }

    #[test]
    fn tuned_host_is_green() {
        let (_d, roots) = host("performance\n");
        let r = environment_check_at(&roots);
        assert!(r.all_green(), "{}", r.render());
        assert_eq!(r.fingerprint.cpu_model.as_deref(), Some("Test CPU @ 3GHz"));
        assert_eq!(r.fingerprint.kernel.as_deref(), Some("6.1.0-test"));
    }

    #[test]
    fn powersave_warns() {
        let (_d, roots) = host("powersave\n");
        let r = environment_check_at(&roots);
        let w: Vec<_> = r.warnings().map(|c| c.name.as_str()).collect();
        assert_eq!(w, vec!["governor"]);
    }

    #[test]
    fn missing_rapl_suggests_synthetic() {
        let (_d, roots) = host("performance\n");
        fs::remove_dir_all(roots.sys.join("class/powercap")).unwrap();
        let r = environment_check_at(&roots);
        let rapl = r.checks.iter().find(|c| c.name == "rapl").unwrap();
        assert_eq!(rapl.status, CheckStatus::Warn);
        assert!(rapl.detail.contains("synthetic"));
    }

    #[test]
    fn battery_warns() {
        let (_d, roots) = host("performance\n");
        put(&roots.sys, "class/power_supply/AC/online", "0\n");
        put(&roots.sys, "class/power_supply/BAT0/type", "Battery\n");
        put(&roots.sys, "class/power_supply/BAT0/status", "Discharging\n");
        let r = environment_check_at(&roots);
        assert_eq!(r.checks.iter().find(|c| c.name == "power").unwrap().status, CheckStatus::Warn);
    }
}
