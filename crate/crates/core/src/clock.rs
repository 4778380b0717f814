//! Time sources.
//!
//! Wall-clock nanoseconds go on the wire and into the latency log so that
//! publisher and subscriber processes on one host can be compared directly.
//! Schedules use a monotonic clock anchored at a per-run origin.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// Nanoseconds since the Unix epoch.
#[inline]
pub fn wall_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

/// Monotonic nanoseconds relative to a fixed origin.
#[derive(Debug, Clone, Copy)]
pub struct MonoClock {
    origin: Instant,
}

impl MonoClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn starting_at(origin: Instant) -> Self {
        Self { origin }
    }

    #[inline]
    pub fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    pub fn instant_at(&self, ns: u64) -> Instant {
        self.origin + Duration::from_nanos(ns)
    }

    pub fn origin(&self) -> Instant {
        self.origin
    }
}

impl Default for MonoClock {
    fn default() -> Self {
        Self::new()
    }
}

/// Wall-clock nanoseconds that never go backwards: the wall time read once at
/// the origin plus monotonic time elapsed since.
///
/// Components of one process share a `WallClock`, so their timestamps are
/// ordered exactly; separate processes agree to within the origin read error.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    mono: MonoClock,
    wall_origin_ns: u64,
}

impl WallClock {
    pub fn new() -> Self {
        let mono = MonoClock::new();
        Self {
            mono,
            wall_origin_ns: wall_ns(),
        }
    }

    pub fn mono(&self) -> &MonoClock {
        &self.mono
    }

    #[inline]
    pub fn now_ns(&self) -> u64 {
        self.wall_origin_ns + self.mono.now_ns()
    }

    /// Wall time corresponding to a reading of [`Self::mono`].
    #[inline]
    pub fn at(&self, mono_ns: u64) -> u64 {
        self.wall_origin_ns + mono_ns
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}
