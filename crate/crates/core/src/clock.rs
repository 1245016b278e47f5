//! Injectable monotonic clocks.
//!
//! Every stage that measures or simulates time takes a `&dyn Clock`. The
//! simulated clock keeps integer nanoseconds so stage durations add up
//! exactly, which keeps latency breakdowns reproducible across runs.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's epoch.
    fn now(&self) -> Duration;

    /// Block (or pretend to) for `d`.
    fn sleep(&self, d: Duration);

    /// Account for work that takes `d` of simulated time. Real clocks ignore
    /// this because the work itself consumes wall time.
    fn simulate(&self, d: Duration);

    fn is_simulated(&self) -> bool;
}

#[derive(Debug)]
pub struct RealClock {
    epoch: Instant,
}

impl RealClock {
    pub fn new() -> Self {
        Self { epoch: Instant::now() }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now(&self) -> Duration {
        self.epoch.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn simulate(&self, _d: Duration) {}

    fn is_simulated(&self) -> bool {
        false
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    nanos: AtomicU64,
}

impl SimulatedClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        let n = u64::try_from(d.as_nanos()).unwrap_or(u64::MAX);
        self.nanos.fetch_add(n, Ordering::SeqCst);
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }

    fn simulate(&self, d: Duration) {
        self.advance(d);
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

/// Convert a non-negative seconds value into a `Duration`, clamping garbage
/// (negative, NaN) to zero.
pub fn secs(s: f64) -> Duration {
    if s.is_finite() && s > 0.0 {
        Duration::from_secs_f64(s)
    } else {
        Duration::ZERO
    }
}
