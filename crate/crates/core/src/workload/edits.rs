//! Seeded simulation of user edits.
//!
//! Events arrive at a fixed rate, at the midpoints `(k + 0.5) / rate`. Typing
//! events grow the document toward its target size and then oscillate around
//! it; the remaining events overwrite text in place.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::DocumentBuffer;
use super::WorkloadError;
use crate::clock::{nanos_to_secs, secs_to_nanos, Nanos};

pub const DEFAULT_EDIT_RATE_HZ: f64 = 1.0;
pub const DEFAULT_APPEND_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    Append { len: usize },
    Replace { offset: usize, len: usize },
    Delete { len: usize },
}

impl Mutation {
    pub fn payload_len(&self) -> usize {
        match *self {
            Mutation::Append { len } | Mutation::Replace { len, .. } | Mutation::Delete { len } => len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditEvent {
    /// Offset from session start.
    pub at: Nanos,
    pub mutation: Mutation,
}

impl EditEvent {
    pub fn time_offset_s(&self) -> f64 {
        nanos_to_secs(self.at)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScript {
    pub seed: u64,
    pub target_size_bytes: u64,
    pub events: Vec<EditEvent>,
}

impl EditScript {
    pub fn empty(seed: u64, target_size_bytes: u64) -> Self {
        EditScript {
            seed,
            target_size_bytes,
            events: Vec::new(),
        }
    }

    pub fn last_edit_at(&self) -> Option<Nanos> {
        self.events.last().map(|e| e.at)
    }

    /// Drops every event after `cutoff` (session-relative).
    pub fn truncated_at(mut self, cutoff: Nanos) -> Self {
        self.events.retain(|e| e.at <= cutoff);
        self
    }

    /// Buffer after applying every event in order.
    pub fn replay(&self) -> DocumentBuffer {
        let mut buf = DocumentBuffer::new(self.target_size_bytes);
        for (seq, e) in self.events.iter().enumerate() {
            buf.apply(&e.mutation, seq);
        }
        buf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditParams {
    pub seed: u64,
    pub target_size_bytes: i64,
    pub session_duration_s: f64,
    pub edit_rate_hz: f64,
    pub append_fraction: f64,
}

impl EditParams {
    pub fn new(seed: u64, target_size_bytes: i64, session_duration_s: f64, edit_rate_hz: f64) -> Self {
        EditParams {
            seed,
            target_size_bytes,
            session_duration_s,
            edit_rate_hz,
            append_fraction: DEFAULT_APPEND_FRACTION,
        }
    }
}

pub fn generate_edit_script(
    seed: u64,
    target_size_bytes: i64,
    session_duration_s: f64,
    edit_rate_hz: f64,
) -> Result<EditScript, WorkloadError> {
    generate_edit_script_with(&EditParams::new(
        seed,
        target_size_bytes,
        session_duration_s,
        edit_rate_hz,
    ))
}

pub fn generate_edit_script_with(p: &EditParams) -> Result<EditScript, WorkloadError> {
    if p.target_size_bytes < 0 {
        return Err(WorkloadError::Config(format!(
            "target size must be non-negative, got {}",
            p.target_size_bytes
        )));
    }
    if !p.session_duration_s.is_finite() || p.session_duration_s <= 0.0 {
        return Err(WorkloadError::Config(format!(
            "session duration must be positive, got {}",
            p.session_duration_s
        )));
    }
    if !p.edit_rate_hz.is_finite() || p.edit_rate_hz < 0.0 {
        return Err(WorkloadError::Config(format!(
            "edit rate must be non-negative, got {}",
            p.edit_rate_hz
        )));
    }
    if !(0.0..=1.0).contains(&p.append_fraction) {
        return Err(WorkloadError::Config(format!(
            "append fraction must lie in [0, 1], got {}",
            p.append_fraction
        )));
    }
    let target = p.target_size_bytes as usize;
    let mut script = EditScript::empty(p.seed, target as u64);
    if p.edit_rate_hz == 0.0 {
        return Ok(script);
    }

    // small epsilon so 120 s at 1 Hz yields exactly 120 events despite rounding
    let n = (p.session_duration_s * p.edit_rate_hz + 1e-9).floor() as usize;
    let growth_events = (n / 4).max(1);
    let chunk = target.div_ceil(growth_events).max(1);
    let jitter = (target / 64).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut len = 0usize;
    let mut reached = false;
    script.events.reserve(n);
    for k in 0..n {
        let at = secs_to_nanos((k as f64 + 0.5) / p.edit_rate_hz);
        let typing = rng.random_bool(p.append_fraction);
        let mutation = if target == 0 {
            // empty documents only see zero-length touches
            Mutation::Replace { offset: 0, len: 0 }
        } else if typing {
            if len < target {
                let want = if reached {
                    rng.random_range(1..=jitter)
                } else {
                    rng.random_range((chunk / 2).max(1)..=chunk + chunk / 2)
                };
                Mutation::Append { len: want }
            } else {
                reached = true;
                Mutation::Delete {
                    len: rng.random_range(1..=jitter).min(len),
                }
            }
        } else if len == 0 {
            Mutation::Replace { offset: 0, len: 0 }
        } else {
            let l = rng.random_range(1..=jitter.min(len));
            Mutation::Replace {
                offset: rng.random_range(0..=len - l),
                len: l,
            }
        };
        match mutation {
            Mutation::Append { len: l } => len += l,
            Mutation::Delete { len: l } => len -= l,
            Mutation::Replace { .. } => {}
        }
        if len >= target {
            reached = true;
        }
        script.events.push(EditEvent { at, mutation });
    }
    debug_assert!(script.events.windows(2).all(|w| w[0].at < w[1].at));
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hertz_for_two_minutes_reaches_target() {
        let script = generate_edit_script(42, 5120, 120.0, 1.0).unwrap();
        assert_eq!(script.events.len(), 120);
        let final_len = script.replay().len() as f64;
        assert!(
            (final_len - 5120.0).abs() <= 512.0,
            "final size {final_len}"
        );
    }

    #[test]
    fn zero_rate_means_no_edits() {
        assert!(generate_edit_script(1, 5120, 120.0, 0.0).unwrap().events.is_empty());
    }

    #[test]
    fn same_inputs_same_script() {
        let a = generate_edit_script(7, 51200, 60.0, 2.0).unwrap();
        let b = generate_edit_script(7, 51200, 60.0, 2.0).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = generate_edit_script(8, 51200, 60.0, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn events_strictly_ordered_at_midpoints() {
        let s = generate_edit_script(3, 100, 10.0, 2.0).unwrap();
        assert_eq!(s.events.len(), 20);
        assert_eq!(s.events[0].at, 250_000_000);
        assert!(s.events.windows(2).all(|w| w[0].at < w[1].at));
    }

    #[test]
    fn empty_target_stays_empty() {
        let s = generate_edit_script(3, 0, 30.0, 1.0).unwrap();
        assert_eq!(s.events.len(), 30);
        let buf = s.replay();
        assert!(buf.is_empty());
        assert!(buf.is_modified());
    }

    #[test]
    fn invalid_parameters() {
        assert!(generate_edit_script(1, -1, 10.0, 1.0).is_err());
        assert!(generate_edit_script(1, 10, 0.0, 1.0).is_err());
        assert!(generate_edit_script(1, 10, 10.0, -1.0).is_err());
        assert!(generate_edit_script(1, 10, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn oscillates_near_target_after_growth() {
        let s = generate_edit_script(11, 51200, 600.0, 1.0).unwrap();
        let mut buf = DocumentBuffer::new(51200);
        for (seq, e) in s.events.iter().enumerate() {
            buf.apply(&e.mutation, seq);
            if seq > 300 {
                let dev = (buf.len() as f64 - 51200.0).abs() / 51200.0;
                assert!(dev < 0.1, "event {seq}: size {}", buf.len());
            }
        }
    }
}
