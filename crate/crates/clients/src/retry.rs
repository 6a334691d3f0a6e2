use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested delays instead of sleeping.
#[derive(Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().expect("lock").clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.delays.lock().expect("lock").push(d);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay_ms: 1000,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): `base · 2^retry`, scaled
    /// by a uniform factor in [0.5, 1.5) when jitter is on.
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * 2f64.powi(retry.min(16) as i32);
        let factor = if self.jitter { rand::rng().random_range(0.5..1.5) } else { 1.0 };
        Duration::from_secs_f64(ms * factor / 1000.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_without_jitter() {
        let p = RetryPolicy { jitter: false, ..Default::default() };
        assert_eq!(p.delay(0), Duration::from_secs(1));
        assert_eq!(p.delay(3), Duration::from_secs(8));
    }

    #[test]
    fn jitter_stays_in_band() {
        let p = RetryPolicy::default();
        for r in 0..4 {
            let d = p.delay(r).as_secs_f64();
            let nominal = 2f64.powi(r as i32);
            assert!(d >= 0.5 * nominal && d < 1.5 * nominal);
        }
    }
}
