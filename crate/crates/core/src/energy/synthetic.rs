use serde::{Deserialize, Serialize};

use super::{CounterSnapshot, EnergyDomain, EnergyError, EnergyProvider, ProviderKind};
use crate::clock::{Nanos, SharedClock};

/// Counter modulus of a typical package zone.
pub const DEFAULT_SYNTHETIC_RANGE_UJ: u64 = 262_143_328_850;

/// Parameters of the deterministic energy model:
/// `E(t) = idle_rate_w * t + sum(charged events)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub idle_rate_w: f64,
    #[serde(default = "default_range")]
    pub max_range_uj: u64,
    /// Counter value at open time, to exercise wraparound.
    #[serde(default)]
    pub initial_counter_uj: u64,
}

fn default_range() -> u64 {
    DEFAULT_SYNTHETIC_RANGE_UJ
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            idle_rate_w: 1.0,
            max_range_uj: DEFAULT_SYNTHETIC_RANGE_UJ,
            initial_counter_uj: 0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !self.idle_rate_w.is_finite() || self.idle_rate_w < 0.0 {
            return Err(EnergyError::Config(format!(
                "idle_rate_w must be a non-negative number, got {}",
                self.idle_rate_w
            )));
        }
        if self.max_range_uj == 0 {
            return Err(EnergyError::Config("max_range_uj must be positive".into()));
        }
        if self.initial_counter_uj >= self.max_range_uj {
            return Err(EnergyError::Config(
                "initial_counter_uj must be below max_range_uj".into(),
            ));
        }
        Ok(())
    }
}

/// Single `package` zone driven by a clock and an event ledger.
///
/// Energy is accumulated in nanojoules (W x ns) and exposed in whole
/// microjoules, so model values that are microjoule-aligned come back exactly.
pub struct SyntheticProvider {
    params: SyntheticParams,
    clock: SharedClock,
    opened_at: Nanos,
    charged_nj: u128,
    last_timestamp: Option<Nanos>,
}

const ZONE: &str = "synthetic:0";

impl SyntheticProvider {
    pub fn open(params: SyntheticParams, clock: SharedClock) -> Result<Self, EnergyError> {
        params.validate()?;
        let opened_at = clock.now();
        Ok(SyntheticProvider {
            params,
            clock,
            opened_at,
            charged_nj: 0,
            last_timestamp: None,
        })
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// Total modelled energy at `ts`, in nanojoules.
    fn energy_nj_at(&self, ts: Nanos) -> u128 {
        let elapsed = ts.saturating_sub(self.opened_at);
        let idle = (self.params.idle_rate_w * elapsed as f64).round() as u128;
        idle + self.charged_nj + self.params.initial_counter_uj as u128 * 1_000
    }
}

impl EnergyProvider for SyntheticProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Synthetic
    }

    fn domains(&self) -> Vec<EnergyDomain> {
        vec![EnergyDomain::Package]
    }

    fn snapshot(&mut self) -> Result<Vec<CounterSnapshot>, EnergyError> {
        let mut ts = self.clock.now();
        if let Some(last) = self.last_timestamp {
            ts = ts.max(last + 1);
        }
        self.last_timestamp = Some(ts);
        let uj = self.energy_nj_at(ts) / 1_000;
        Ok(vec![CounterSnapshot {
            domain: EnergyDomain::Package,
            zone: ZONE.into(),
            counter_uj: (uj % self.params.max_range_uj as u128) as u64,
            max_range_uj: self.params.max_range_uj,
            timestamp: ts,
        }])
    }

    fn synthetic_charge(&mut self, event_cost_j: f64) -> Result<(), EnergyError> {
        if !event_cost_j.is_finite() || event_cost_j < 0.0 {
            return Err(EnergyError::Config(format!(
                "event cost must be a non-negative number, got {event_cost_j}"
            )));
        }
        self.charged_nj += (event_cost_j * 1e9).round() as u128;
        Ok(())
    }

    fn clock(&self) -> &SharedClock {
        &self.clock
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{secs_to_nanos, CancelFlag, Clock, VirtualClock};
    use crate::energy::window_energy;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn provider(idle: f64) -> (Arc<VirtualClock>, SyntheticProvider) {
        let clock = VirtualClock::shared();
        let p = SyntheticProvider::open(
            SyntheticParams {
                idle_rate_w: idle,
                ..Default::default()
            },
            clock.clone(),
        )
        .unwrap();
        (clock, p)
    }

    #[test]
    fn idle_model_at_ten_seconds() {
        let (clock, mut p) = provider(1.0);
        clock.advance(secs_to_nanos(10.0));
        let s = p.snapshot().unwrap();
        assert_eq!(s[0].counter_uj, 10_000_000);
        assert_eq!(p.domains(), vec![EnergyDomain::Package]);
    }

    #[test]
    fn successive_timestamps_strictly_increase() {
        let (_clock, mut p) = provider(1.0);
        let a = p.snapshot().unwrap()[0].timestamp;
        let b = p.snapshot().unwrap()[0].timestamp;
        assert!(b > a);
    }

    #[test]
    fn charges_add_to_idle_energy() {
        let (clock, mut p) = provider(1.0);
        let start = p.snapshot().unwrap();
        clock.advance(secs_to_nanos(4.0));
        p.synthetic_charge(0.5).unwrap();
        clock.advance(secs_to_nanos(6.0));
        p.synthetic_charge(0.5).unwrap();
        p.synthetic_charge(0.0).unwrap();
        let end = p.snapshot().unwrap();
        let w = window_energy(&start, &end).unwrap();
        assert_eq!(w.total_joules(), 11.0);
        assert_eq!(w.duration_s, 10.0);
    }

    #[test]
    fn counter_wraps_at_range() {
        let clock = VirtualClock::shared();
        let mut p = SyntheticProvider::open(
            SyntheticParams {
                idle_rate_w: 1.0,
                max_range_uj: 5_000_000,
                initial_counter_uj: 4_000_000,
            },
            clock.clone(),
        )
        .unwrap();
        let start = p.snapshot().unwrap();
        clock.advance(secs_to_nanos(2.0));
        let end = p.snapshot().unwrap();
        assert!(end[0].counter_uj < start[0].counter_uj);
        assert_eq!(window_energy(&start, &end).unwrap().total_joules(), 2.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let clock = VirtualClock::shared();
        for params in [
            SyntheticParams { idle_rate_w: -1.0, ..Default::default() },
            SyntheticParams { idle_rate_w: f64::NAN, ..Default::default() },
            SyntheticParams { max_range_uj: 0, ..Default::default() },
        ] {
            assert!(matches!(
                SyntheticProvider::open(params, clock.clone()),
                Err(EnergyError::Config(_))
            ));
        }
        let (_c, mut p) = provider(1.0);
        assert!(p.synthetic_charge(-0.1).is_err());
    }

    #[derive(Debug, Clone)]
    enum Step {
        Wait(u64),
        Charge(u64),
    }

    fn step() -> impl Strategy<Value = Step> {
        prop_oneof![
            (1u64..5_000_000).prop_map(Step::Wait),
            (0u64..3_000_000).prop_map(Step::Charge),
        ]
    }

    proptest! {
        // Microjoule-aligned schedules: waits in whole microseconds at a
        // whole-watt idle rate, charges in whole microjoules.
        #[test]
        fn window_matches_event_log_sum(
            idle_w in 0u32..50,
            steps in prop::collection::vec(step(), 1..40),
        ) {
            let (clock, mut p) = provider(idle_w as f64);
            let start = p.snapshot().unwrap();
            let mut oracle_j = 0.0f64;
            let mut waited_us = 0u64;
            for s in &steps {
                match *s {
                    Step::Wait(us) => {
                        clock.sleep_for(us * 1_000, &CancelFlag::new());
                        waited_us += us;
                        oracle_j += idle_w as f64 * us as f64 / 1e6;
                    }
                    Step::Charge(uj) => {
                        p.synthetic_charge(uj as f64 / 1e6).unwrap();
                        oracle_j += uj as f64 / 1e6;
                    }
                }
            }
            clock.sleep_for(1_000, &CancelFlag::new());
            oracle_j += idle_w as f64 / 1e6;
            let end = p.snapshot().unwrap();
            let w = window_energy(&start, &end).unwrap();
            prop_assert!((w.total_joules() - oracle_j).abs() <= 1e-9,
                "measured {} vs oracle {} after {} us", w.total_joules(), oracle_j, waited_us);
        }

        // Arbitrary real-valued schedules are bounded by the counter's 1 uJ quantum.
        #[test]
        fn window_within_counter_resolution(
            idle_w in 0.0f64..80.0,
            waits in prop::collection::vec(1u64..3_000_000_000, 1..10),
            charges in prop::collection::vec(0.0f64..5.0, 0..10),
        ) {
            let (clock, mut p) = provider(idle_w);
            let start = p.snapshot().unwrap();
            let mut oracle_j = 0.0;
            for w in &waits {
                clock.advance(*w);
                oracle_j += idle_w * *w as f64 / 1e9;
            }
            for c in &charges {
                p.synthetic_charge(*c).unwrap();
                oracle_j += c;
            }
            let end = p.snapshot().unwrap();
            let measured = window_energy(&start, &end).unwrap().total_joules();
            prop_assert!((measured - oracle_j).abs() <= 1e-6 + 1e-9 * oracle_j.max(1.0));
        }
    }
}
