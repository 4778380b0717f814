//! Publisher throttling.
//!
//! A rate profile is turned into an absolute schedule of send deadlines: the
//! k-th notification of a segment is due at `segment_start + round(k·10⁹/rate)`.
//! Because deadlines are anchored to the segment start rather than to the
//! previous send, a stalled publisher catches up afterwards instead of
//! silently offering less load. Catch-up is bounded by a burst cap: when the
//! publisher falls further behind than the cap, the remaining schedule is
//! shifted later and the shift is reported as slippage.

use std::time::Duration;

use crate::clock::MonoClock;
use crate::workload::{RateProfile, WorkloadError};

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacingConfig {
    /// Sleep until this close to a deadline, then spin.
    pub spin_threshold: Duration,
    /// Largest backlog (in schedule time) sent back-to-back after a stall.
    pub burst_cap: Duration,
}

impl Default for PacingConfig {
    fn default() -> Self {
        Self {
            spin_threshold: Duration::from_micros(100),
            burst_cap: Duration::from_millis(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ScheduledSegment {
    count: u64,
    rate: f64,
    duration_ns: u64,
}

/// Deadline schedule for one profile, in nanoseconds relative to the run start.
#[derive(Debug, Clone)]
pub struct PaceState {
    segments: Vec<ScheduledSegment>,
    segment_index: usize,
    segment_start_ns: u64,
    sent_in_segment: u64,
}

impl PaceState {
    pub fn new(profile: &RateProfile) -> Result<Self, WorkloadError> {
        let segments = profile
            .effective()
            .map(|s| {
                Ok(ScheduledSegment {
                    count: s.count()?,
                    rate: s.rate,
                    duration_ns: s.duration_s.saturating_mul(NANOS_PER_SEC),
                })
            })
            .collect::<Result<Vec<_>, WorkloadError>>()?;
        Ok(Self {
            segments,
            segment_index: 0,
            segment_start_ns: 0,
            sent_in_segment: 0,
        })
    }

    pub fn segment_index(&self) -> usize {
        self.segment_index
    }

    pub fn segment_start_ns(&self) -> u64 {
        self.segment_start_ns
    }

    pub fn sent_in_segment(&self) -> u64 {
        self.sent_in_segment
    }

    /// Schedule length: the sum of all segment durations.
    pub fn total_ns(&self) -> u64 {
        self.segments.iter().map(|s| s.duration_ns).sum()
    }

    pub fn total_count(&self) -> u64 {
        self.segments.iter().map(|s| s.count).sum()
    }

    /// Deadline of the next notification, or `None` once the profile is done.
    pub fn next_deadline(&mut self) -> Option<u64> {
        loop {
            let seg = self.segments.get(self.segment_index)?;
            if self.sent_in_segment < seg.count {
                let k = self.sent_in_segment;
                self.sent_in_segment += 1;
                let offset = (k as f64 * NANOS_PER_SEC as f64 / seg.rate).round() as u64;
                return Some(self.segment_start_ns + offset);
            }
            self.segment_start_ns += seg.duration_ns;
            self.segment_index += 1;
            self.sent_in_segment = 0;
        }
    }
}

impl Iterator for PaceState {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        self.next_deadline()
    }
}

/// Sleeps, then spins, until `deadline_ns` on `clock`. Returns the wake time.
///
/// The spin phase yields the CPU between checks so that other threads of the
/// same process (subscriber, log writer) keep running on small hosts.
pub fn wait_until(clock: &MonoClock, deadline_ns: u64, spin_threshold: Duration) -> u64 {
    let spin_ns = spin_threshold.as_nanos() as u64;
    loop {
        let now = clock.now_ns();
        if now >= deadline_ns {
            return now;
        }
        let remaining = deadline_ns - now;
        if remaining > spin_ns {
            std::thread::sleep(Duration::from_nanos(remaining - spin_ns));
        } else {
            std::hint::spin_loop();
            std::thread::yield_now();
        }
    }
}

/// Runtime wrapper around a deadline schedule: applies the burst cap and
/// keeps slippage statistics.
#[derive(Debug)]
pub struct Pacer<S> {
    schedule: S,
    clock: MonoClock,
    config: PacingConfig,
    start_ns: u64,
    scheduled_end_ns: u64,
    shift_ns: u64,
    stats: PacerStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacerStats {
    pub sent: u64,
    /// Total amount the schedule was pushed back by the burst cap.
    pub shift_ns: u64,
    /// Largest observed (wake − deadline).
    pub max_lateness_ns: u64,
    /// Sends that happened after the schedule's end time: intended minus
    /// actual cumulative count at the moment the schedule finished.
    pub sent_after_end: u64,
    /// Wall time from start to the last send.
    pub elapsed_ns: u64,
    pub scheduled_ns: u64,
}

impl PacerStats {
    /// Fraction of notifications not sent by the time the schedule ended.
    pub fn slippage(&self) -> f64 {
        if self.sent == 0 {
            0.0
        } else {
            self.sent_after_end as f64 / self.sent as f64
        }
    }

    pub fn merge(&mut self, other: &PacerStats) {
        self.sent += other.sent;
        self.shift_ns = self.shift_ns.max(other.shift_ns);
        self.max_lateness_ns = self.max_lateness_ns.max(other.max_lateness_ns);
        self.sent_after_end += other.sent_after_end;
        self.elapsed_ns = self.elapsed_ns.max(other.elapsed_ns);
        self.scheduled_ns = self.scheduled_ns.max(other.scheduled_ns);
    }
}

impl<S: Iterator<Item = u64>> Pacer<S> {
    /// `schedule` yields non-decreasing offsets from `start_ns`;
    /// `scheduled_len_ns` is the schedule's nominal length.
    pub fn new(schedule: S, scheduled_len_ns: u64, clock: MonoClock, start_ns: u64, config: PacingConfig) -> Self {
        Self {
            schedule,
            clock,
            config,
            start_ns,
            scheduled_end_ns: start_ns + scheduled_len_ns,
            shift_ns: 0,
            stats: PacerStats {
                scheduled_ns: scheduled_len_ns,
                ..PacerStats::default()
            },
        }
    }

    /// Next effective deadline, with the burst cap applied.
    pub fn next_deadline(&mut self) -> Option<u64> {
        let planned = self.start_ns + self.schedule.next()? + self.shift_ns;
        let now = self.clock.now_ns();
        let cap = self.config.burst_cap.as_nanos() as u64;
        if now > planned + cap {
            let extra = now - planned - cap;
            self.shift_ns += extra;
            self.stats.shift_ns = self.shift_ns;
            return Some(planned + extra);
        }
        Some(planned)
    }

    /// Blocks until `deadline_ns`. Returns the wake time.
    pub fn wait(&mut self, deadline_ns: u64) -> u64 {
        let woke = wait_until(&self.clock, deadline_ns, self.config.spin_threshold);
        self.stats.max_lateness_ns = self.stats.max_lateness_ns.max(woke - deadline_ns);
        woke
    }

    /// Whether `deadline_ns` is already due.
    pub fn is_due(&self, deadline_ns: u64) -> bool {
        self.clock.now_ns() >= deadline_ns
    }

    /// Records one send at monotonic time `at_ns`.
    pub fn on_sent(&mut self, at_ns: u64) {
        self.stats.sent += 1;
        if at_ns > self.scheduled_end_ns {
            self.stats.sent_after_end += 1;
        }
        self.stats.elapsed_ns = at_ns.saturating_sub(self.start_ns);
    }

    pub fn clock(&self) -> &MonoClock {
        &self.clock
    }

    pub fn stats(&self) -> PacerStats {
        self.stats
    }
}

/// Achieved rate of a window of send timestamps: count / window length.
/// An empty window is 0/s.
pub fn achieved_rate(send_ts_ns: &[u64], window_start_ns: u64, window_ns: u64) -> f64 {
    if window_ns == 0 {
        return 0.0;
    }
    let end = window_start_ns.saturating_add(window_ns);
    let n = send_ts_ns
        .iter()
        .filter(|&&t| t >= window_start_ns && t < end)
        .count();
    n as f64 * NANOS_PER_SEC as f64 / window_ns as f64
}

/// Per-window send counts, bucketed by time since a start instant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RateMeter {
    window_ns: u64,
    counts: Vec<u64>,
}

impl RateMeter {
    pub fn new(window: Duration) -> Self {
        Self {
            window_ns: (window.as_nanos() as u64).max(1),
            counts: Vec::new(),
        }
    }

    pub fn per_second() -> Self {
        Self::new(Duration::from_secs(1))
    }

    #[inline]
    pub fn record(&mut self, since_start_ns: u64) {
        let w = (since_start_ns / self.window_ns) as usize;
        if w >= self.counts.len() {
            self.counts.resize(w + 1, 0);
        }
        self.counts[w] += 1;
    }

    pub fn merge(&mut self, other: &RateMeter) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn window_ns(&self) -> u64 {
        self.window_ns
    }

    /// Achieved rate per window in messages per second.
    pub fn rates(&self) -> Vec<f64> {
        let secs = self.window_ns as f64 / NANOS_PER_SEC as f64;
        self.counts.iter().map(|&c| c as f64 / secs).collect()
    }

    /// `second,sent,rate` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("second,sent,rate\n");
        let secs = self.window_ns as f64 / NANOS_PER_SEC as f64;
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{:.1}\n", i as f64 * secs, c, c as f64 / secs));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::RateProfile;

    fn deadlines(profile: &str) -> Vec<u64> {
        PaceState::new(&RateProfile::parse_csv(profile).unwrap()).unwrap().collect()
    }

    #[test]
    fn one_millisecond_spacing_at_1000_per_second() {
        let d = deadlines("1,1000");
        assert_eq!(d.len(), 1000);
        for (k, t) in d.iter().enumerate() {
            assert_eq!(*t, k as u64 * 1_000_000);
        }
    }

    #[test]
    fn thirds_round_to_nearest_nanosecond() {
        // exact rational oracle: k/3 s = k·10⁹/3 ns, rounded half up
        let oracle: Vec<u64> = (0..3u64).map(|k| (2 * k * NANOS_PER_SEC + 3) / 6).collect();
        assert_eq!(oracle, vec![0, 333_333_333, 666_666_667]);
        assert_eq!(deadlines("1,3"), oracle);
    }

    #[test]
    fn segments_start_back_to_back() {
        let d = deadlines("1,2\n1,4");
        assert_eq!(d.len(), 6);
        assert_eq!(d.iter().filter(|&&t| t < NANOS_PER_SEC).count(), 2);
        assert!(d[2..].iter().all(|&t| (NANOS_PER_SEC..2 * NANOS_PER_SEC).contains(&t)));
        assert_eq!(d[2], NANOS_PER_SEC);
    }

    #[test]
    fn pauses_shift_later_segments() {
        let d = deadlines("1,1\n3,0\n1,1");
        assert_eq!(d, vec![0, 4 * NANOS_PER_SEC]);
        let state = PaceState::new(&RateProfile::parse_csv("1,1\n3,0\n1,1").unwrap()).unwrap();
        assert_eq!(state.total_ns(), 5 * NANOS_PER_SEC);
    }

    #[test]
    fn counts_are_exact_and_bounded_by_segment() {
        let profile = RateProfile::parse_csv("2,333.3\n1,0.4\n3,1000.5").unwrap();
        let mut s = PaceState::new(&profile).unwrap();
        let mut seen = 0;
        let mut last = 0;
        while let Some(t) = s.next_deadline() {
            assert!(t >= last);
            last = t;
            seen += 1;
        }
        assert_eq!(seen, profile.expected_total().unwrap());
    }

    #[test]
    fn deadlines_stay_inside_their_segment() {
        for rate in [0.6, 1.0, 7.3, 999.9, 123_456.7] {
            let d = deadlines(&format!("2,{rate}"));
            assert!(d.iter().all(|&t| t < 2 * NANOS_PER_SEC), "rate {rate}");
        }
    }

    #[test]
    fn wait_for_past_deadline_returns_immediately() {
        let clock = MonoClock::new();
        std::thread::sleep(Duration::from_millis(2));
        let woke = wait_until(&clock, 1_000, Duration::from_micros(100));
        assert!(woke >= 1_000);
        assert!(woke < 50_000_000);
    }

    #[test]
    fn wait_for_future_deadline() {
        let clock = MonoClock::new();
        let deadline = clock.now_ns() + 10_000_000;
        let woke = wait_until(&clock, deadline, Duration::from_micros(100));
        assert!(woke >= deadline);
        // relaxed bound; shared CI hosts
        assert!(woke - deadline < 5_000_000, "late by {} ns", woke - deadline);
    }

    #[test]
    fn burst_cap_shifts_schedule_after_stall() {
        let clock = MonoClock::new();
        let profile = RateProfile::flat(1, 1000.0).unwrap();
        let state = PaceState::new(&profile).unwrap();
        let total = state.total_ns();
        let cfg = PacingConfig {
            burst_cap: Duration::from_millis(1),
            ..PacingConfig::default()
        };
        let mut pacer = Pacer::new(state, total, clock, clock.now_ns(), cfg);
        std::thread::sleep(Duration::from_millis(20));
        let d0 = pacer.next_deadline().unwrap();
        let stats = pacer.stats();
        assert!(stats.shift_ns >= 18_000_000, "{stats:?}");
        // the shifted deadline is at most one cap in the past
        assert!(clock.now_ns() - d0 <= 2_000_000);
        let mut prev = d0;
        for _ in 0..10 {
            let d = pacer.next_deadline().unwrap();
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn achieved_rate_windows() {
        let ts: Vec<u64> = (0..1000).map(|i| i * 1_000_000).collect();
        assert_eq!(achieved_rate(&ts, 0, NANOS_PER_SEC), 1000.0);
        assert_eq!(achieved_rate(&ts, NANOS_PER_SEC, NANOS_PER_SEC), 0.0);
        assert_eq!(achieved_rate(&[], 0, NANOS_PER_SEC), 0.0);

        let mut m = RateMeter::per_second();
        for t in &ts {
            m.record(*t);
        }
        m.record(2 * NANOS_PER_SEC + 5);
        assert_eq!(m.counts(), &[1000, 0, 1]);
        assert_eq!(m.rates(), vec![1000.0, 0.0, 1.0]);
        let mut n = RateMeter::per_second();
        n.record(0);
        n.merge(&m);
        assert_eq!(n.counts(), &[1001, 0, 1]);
        assert!(n.to_csv().starts_with("second,sent,rate\n0,1001,1001.0\n"));
    }
}
