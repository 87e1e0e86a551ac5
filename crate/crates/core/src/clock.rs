//! Time sources shared by workload sessions and energy providers.
//!
//! Timestamps are nanoseconds since the clock's origin. The real clock wraps
//! `Instant` and actually sleeps; the virtual clock only advances when asked
//! to sleep, which makes whole measurement plans run in simulated time.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub type Nanos = u64;

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

pub fn secs_to_nanos(secs: f64) -> Nanos {
    (secs * NANOS_PER_SEC as f64).round().max(0.0) as Nanos
}

pub fn nanos_to_secs(ns: Nanos) -> f64 {
    ns as f64 / NANOS_PER_SEC as f64
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Nanos;

    /// Blocks (or advances) until `deadline`. Returns early with `false` if the
    /// cancellation flag is raised while waiting.
    fn sleep_until(&self, deadline: Nanos, cancel: &CancelFlag) -> bool;

    fn is_virtual(&self) -> bool;

    fn sleep_for(&self, dur: Nanos, cancel: &CancelFlag) -> bool {
        self.sleep_until(self.now().saturating_add(dur), cancel)
    }
}

pub type SharedClock = Arc<dyn Clock>;

/// Cooperative cancellation, raised from a signal handler.
#[derive(Debug, Clone, Default)]
pub struct CancelFlag(Arc<AtomicBool>);

impl CancelFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug)]
pub struct RealClock {
    origin: Instant,
}

impl RealClock {
    pub fn new() -> Self {
        RealClock {
            origin: Instant::now(),
        }
    }

    pub fn shared() -> SharedClock {
        Arc::new(Self::new())
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

// Long sleeps are chunked so an interrupt is noticed within this bound.
const CANCEL_POLL: Duration = Duration::from_millis(200);

impl Clock for RealClock {
    fn now(&self) -> Nanos {
        self.origin.elapsed().as_nanos() as Nanos
    }

    fn sleep_until(&self, deadline: Nanos, cancel: &CancelFlag) -> bool {
        loop {
            if cancel.is_cancelled() {
                return false;
            }
            let now = self.now();
            if now >= deadline {
                return true;
            }
            let remaining = Duration::from_nanos(deadline - now);
            std::thread::sleep(remaining.min(CANCEL_POLL));
        }
    }

    fn is_virtual(&self) -> bool {
        false
    }
}

#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ns: Nanos) -> Self {
        VirtualClock {
            now: AtomicU64::new(ns),
        }
    }

    pub fn shared() -> Arc<VirtualClock> {
        Arc::new(Self::new())
    }

    pub fn advance(&self, dur: Nanos) {
        self.now.fetch_add(dur, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Nanos {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline: Nanos, cancel: &CancelFlag) -> bool {
        if cancel.is_cancelled() {
            return false;
        }
        self.now.fetch_max(deadline, Ordering::SeqCst);
        true
    }

    fn is_virtual(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_jumps_to_deadline() {
        let c = VirtualClock::new();
        let flag = CancelFlag::new();
        assert!(c.sleep_until(secs_to_nanos(2.5), &flag));
        assert_eq!(c.now(), 2_500_000_000);
        // never moves backwards
        assert!(c.sleep_until(10, &flag));
        assert_eq!(c.now(), 2_500_000_000);
    }

    #[test]
    fn cancelled_sleep_returns_false() {
        let flag = CancelFlag::new();
        flag.cancel();
        assert!(!RealClock::new().sleep_for(secs_to_nanos(30.0), &flag));
        assert!(!VirtualClock::new().sleep_for(10, &flag));
    }

    #[test]
    fn real_clock_is_monotonic() {
        let c = RealClock::new();
        let a = c.now();
        assert!(c.sleep_for(1_000_000, &CancelFlag::new()));
        assert!(c.now() >= a + 1_000_000);
    }

    #[test]
    fn seconds_round_trip() {
        assert_eq!(secs_to_nanos(1.2), 1_200_000_000);
        assert_eq!(nanos_to_secs(120 * NANOS_PER_SEC), 120.0);
    }
}
