//! Delivery-quality verdicts from a latency log and its run manifest:
//! exactly-once, per-stream order, completeness and a latency SLO.
//!
//! Every delivery of a stream is classified exactly one way:
//!
//! * first delivery in order: the sequence is `max_seen + 1`, or the stream is new;
//! * first delivery past a gap: the sequence is above `max_seen + 1`;
//! * first delivery out of order: an unseen sequence below `max_seen`;
//! * duplicate: the sequence was already delivered.
//!
//! Received sequences are kept as an interval set, so memory grows with the
//! number of open gaps rather than the number of messages.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::latlog::{LatencyAccumulator, LatencyRecord, LogError, LogReader};
use crate::manifest::RunManifest;

/// Default latency SLO: 20 ms.
pub const DEFAULT_SLO_NS: u64 = 20_000_000;
pub const DEFAULT_SLO_PERCENTILE: f64 = 0.99;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("log contains stream {0}, which the manifest does not list")]
    UnknownStream(u32),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Disjoint, non-adjacent inclusive ranges of `u64`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: BTreeMap<u64, u64>,
    len: u64,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of values in the set.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of stored ranges.
    pub fn ranges(&self) -> usize {
        self.ranges.len()
    }

    pub fn contains(&self, v: u64) -> bool {
        self.ranges.range(..=v).next_back().is_some_and(|(_, &end)| v <= end)
    }

    /// Inserts `v`; false if it was already present.
    pub fn insert(&mut self, v: u64) -> bool {
        if let Some(mut last) = self.ranges.last_entry() {
            if last.get().checked_add(1) == Some(v) {
                *last.get_mut() = v;
                self.len += 1;
                return true;
            }
        }
        let prev = self.ranges.range(..=v).next_back().map(|(&s, &e)| (s, e));
        if let Some((_, end)) = prev {
            if v <= end {
                return false;
            }
        }
        let joins_prev = prev.and_then(|(s, e)| (e.checked_add(1) == Some(v)).then_some(s));
        let next_end = v.checked_add(1).and_then(|n| self.ranges.get(&n).copied());
        match (joins_prev, next_end) {
            (Some(start), Some(end)) => {
                self.ranges.remove(&(v + 1));
                self.ranges.insert(start, end);
            }
            (Some(start), None) => {
                self.ranges.insert(start, v);
            }
            (None, Some(end)) => {
                self.ranges.remove(&(v + 1));
                self.ranges.insert(v, end);
            }
            (None, None) => {
                self.ranges.insert(v, v);
            }
        }
        self.len += 1;
        true
    }

    /// Values of the set below `bound`.
    pub fn count_below(&self, bound: u64) -> u64 {
        self.ranges
            .range(..bound)
            .map(|(&s, &e)| e.min(bound - 1) - s + 1)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    InOrder,
    AfterGap,
    OutOfOrder,
    Duplicate,
}

/// Streaming state for one stream id.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    pub max_seen: Option<u64>,
    pub received: IntervalSet,
    pub deliveries: u64,
    pub duplicates: u64,
    pub out_of_order: u64,
    pub latency: LatencyAccumulator,
}

impl StreamState {
    pub fn observe(&mut self, record: &LatencyRecord) -> Delivery {
        self.deliveries += 1;
        self.latency.record(record.latency_ns());
        self.observe_sequence(record.sequence)
    }

    pub fn observe_sequence(&mut self, seq: u64) -> Delivery {
        if !self.received.insert(seq) {
            self.duplicates += 1;
            return Delivery::Duplicate;
        }
        match self.max_seen {
            None => {
                self.max_seen = Some(seq);
                Delivery::InOrder
            }
            Some(max) if seq == max + 1 => {
                self.max_seen = Some(seq);
                Delivery::InOrder
            }
            Some(max) if seq > max => {
                self.max_seen = Some(seq);
                Delivery::AfterGap
            }
            Some(_) => {
                self.out_of_order += 1;
                Delivery::OutOfOrder
            }
        }
    }

    pub fn unique(&self) -> u64 {
        self.received.len()
    }

    /// Sequences missing below the highest one seen.
    pub fn gaps(&self) -> u64 {
        self.max_seen.map_or(0, |m| m + 1 - self.received.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SloConfig {
    pub latency_ns: u64,
    /// Percentile the SLO applies to, in [0, 1].
    pub percentile: f64,
}

impl Default for SloConfig {
    fn default() -> Self {
        Self {
            latency_ns: DEFAULT_SLO_NS,
            percentile: DEFAULT_SLO_PERCENTILE,
        }
    }
}

/// Single-pass verifier over any number of streams.
#[derive(Debug, Default)]
pub struct Verifier {
    streams: BTreeMap<u32, StreamState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdicts {
    pub exactly_once: bool,
    pub ordered: bool,
    /// `None` without a manifest.
    pub complete: Option<bool>,
    pub latency_slo: bool,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.exactly_once && self.ordered && self.complete == Some(true) && self.latency_slo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    /// `None` for the aggregate row.
    pub stream_id: Option<u32>,
    pub priority: Option<u8>,
    pub intended: Option<u64>,
    pub sent: Option<u64>,
    pub deliveries: u64,
    pub received_unique: u64,
    pub gaps: u64,
    pub duplicates: u64,
    pub out_of_order: u64,
    /// Sequences at or above the publisher's sent count.
    pub unexpected: u64,
    pub loss_rate: Option<f64>,
    pub negative_latencies: u64,
    pub p50_ns: Option<i64>,
    pub p99_ns: Option<i64>,
    pub p999_ns: Option<i64>,
    pub max_ns: Option<i64>,
    pub slo_latency_ns: Option<i64>,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityLatency {
    pub priority: Option<u8>,
    pub count: u64,
    pub p50_ns: Option<i64>,
    pub p99_ns: Option<i64>,
    pub p999_ns: Option<i64>,
    pub max_ns: Option<i64>,
}

/// Comparison of verifier counts with the fault injector's ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerCheck {
    pub matches: bool,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QoSReport {
    pub streams: Vec<StreamReport>,
    pub total: StreamReport,
    pub per_priority: Vec<PriorityLatency>,
    pub slo: SloConfig,
    pub verdicts: Verdicts,
    pub ledger: Option<LedgerCheck>,
    pub run_complete: Option<bool>,
}

impl Verifier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn observe(&mut self, record: &LatencyRecord) -> Delivery {
        self.streams.entry(record.stream_id).or_default().observe(record)
    }

    pub fn observe_log(&mut self, path: &Path) -> Result<usize, VerifyError> {
        let mut reader = LogReader::open(path)?;
        while let Some(r) = reader.next_record()? {
            self.observe(&r);
        }
        Ok(reader.trailing_bytes())
    }

    pub fn stream(&self, id: u32) -> Option<&StreamState> {
        self.streams.get(&id)
    }

    pub fn streams(&self) -> impl Iterator<Item = (&u32, &StreamState)> {
        self.streams.iter()
    }

    /// Combines two verifiers over disjoint stream sets.
    pub fn merge(&mut self, other: Verifier) {
        for (id, s) in other.streams {
            self.streams.entry(id).or_insert(s);
        }
    }

    pub fn finalize(&self, manifest: Option<&RunManifest>, slo: SloConfig) -> Result<QoSReport, VerifyError> {
        if let Some(m) = manifest {
            if let Some(&id) = self.streams.keys().find(|id| m.stream(**id).is_none()) {
                return Err(VerifyError::UnknownStream(id));
            }
        }
        let empty = StreamState::default();
        let mut ids: Vec<u32> = self.streams.keys().copied().collect();
        if let Some(m) = manifest {
            ids.extend(m.streams.iter().map(|s| s.stream_id));
            ids.sort_unstable();
            ids.dedup();
        }

        let mut streams = Vec::with_capacity(ids.len());
        let mut total_latency = LatencyAccumulator::default();
        let mut by_priority: BTreeMap<Option<u8>, LatencyAccumulator> = BTreeMap::new();
        for id in ids {
            let state = self.streams.get(&id).unwrap_or(&empty);
            let plan = manifest.and_then(|m| m.stream(id));
            streams.push(stream_report(Some(id), state, plan.map(|p| (p.priority, p.intended, p.sent)), &slo));
            total_latency.merge(&state.latency);
            by_priority.entry(plan.map(|p| p.priority)).or_default().merge(&state.latency);
        }

        let run_complete = manifest.map(|m| m.complete);
        let total = aggregate(&streams, &total_latency, manifest.is_some(), run_complete, &slo);
        let per_priority = by_priority
            .into_iter()
            .map(|(priority, acc)| {
                let q = |p| acc.histogram.quantile(p).map(|v| v as i64);
                PriorityLatency {
                    priority,
                    count: acc.count,
                    p50_ns: q(0.5),
                    p99_ns: q(0.99),
                    p999_ns: q(0.999),
                    max_ns: acc.histogram.max().map(|v| v as i64),
                }
            })
            .collect();
        let ledger = manifest.filter(|m| !m.faults.is_empty()).map(|m| ledger_check(&streams, m));
        Ok(QoSReport {
            verdicts: total.verdicts,
            streams,
            total,
            per_priority,
            slo,
            ledger,
            run_complete,
        })
    }
}

struct Figures {
    p50: Option<i64>,
    p99: Option<i64>,
    p999: Option<i64>,
    max: Option<i64>,
    at_slo: Option<i64>,
    slo_ok: bool,
}

fn latency_figures(acc: &LatencyAccumulator, slo: &SloConfig) -> Figures {
    let q = |p| acc.histogram.quantile(p).map(|v| v as i64);
    let at_slo = q(slo.percentile);
    Figures {
        p50: q(0.5),
        p99: q(0.99),
        p999: q(0.999),
        max: acc.histogram.max().map(|v| v as i64),
        at_slo,
        slo_ok: at_slo.is_none_or(|v| v < slo.latency_ns as i64),
    }
}

fn stream_report(id: Option<u32>, s: &StreamState, plan: Option<(u8, u64, u64)>, slo: &SloConfig) -> StreamReport {
    let Figures { p50, p99, p999, max, at_slo, slo_ok } = latency_figures(&s.latency, slo);
    let (gaps, unexpected) = match plan {
        Some((_, _, sent)) => {
            let below = s.received.count_below(sent);
            (sent - below, s.received.len() - below)
        }
        None => (s.gaps(), 0),
    };
    let exactly_once = gaps == 0 && s.duplicates == 0 && unexpected == 0;
    StreamReport {
        stream_id: id,
        priority: plan.map(|p| p.0),
        intended: plan.map(|p| p.1),
        sent: plan.map(|p| p.2),
        deliveries: s.deliveries,
        received_unique: s.unique(),
        gaps,
        duplicates: s.duplicates,
        out_of_order: s.out_of_order,
        unexpected,
        loss_rate: plan.map(|(_, _, sent)| if sent == 0 { 0.0 } else { gaps as f64 / sent as f64 }),
        negative_latencies: s.latency.negative,
        p50_ns: p50,
        p99_ns: p99,
        p999_ns: p999,
        max_ns: max,
        slo_latency_ns: at_slo,
        verdicts: Verdicts {
            exactly_once,
            ordered: s.out_of_order == 0,
            complete: plan.map(|(_, intended, _)| unexpected == 0 && s.unique() == intended),
            latency_slo: slo_ok,
        },
    }
}

fn aggregate(
    streams: &[StreamReport],
    latency: &LatencyAccumulator,
    with_manifest: bool,
    run_complete: Option<bool>,
    slo: &SloConfig,
) -> StreamReport {
    let Figures { p50, p99, p999, max, at_slo, slo_ok } = latency_figures(latency, slo);
    let sum = |f: fn(&StreamReport) -> u64| streams.iter().map(f).sum::<u64>();
    let intended = with_manifest.then(|| streams.iter().filter_map(|s| s.intended).sum::<u64>());
    let sent = with_manifest.then(|| streams.iter().filter_map(|s| s.sent).sum::<u64>());
    let gaps = sum(|s| s.gaps);
    StreamReport {
        stream_id: None,
        priority: None,
        intended,
        sent,
        deliveries: sum(|s| s.deliveries),
        received_unique: sum(|s| s.received_unique),
        gaps,
        duplicates: sum(|s| s.duplicates),
        out_of_order: sum(|s| s.out_of_order),
        unexpected: sum(|s| s.unexpected),
        loss_rate: sent.map(|t| if t == 0 { 0.0 } else { gaps as f64 / t as f64 }),
        negative_latencies: latency.negative,
        p50_ns: p50,
        p99_ns: p99,
        p999_ns: p999,
        max_ns: max,
        slo_latency_ns: at_slo,
        verdicts: Verdicts {
            exactly_once: streams.iter().all(|s| s.verdicts.exactly_once),
            ordered: streams.iter().all(|s| s.verdicts.ordered),
            complete: run_complete.map(|c| c && streams.iter().all(|s| s.verdicts.complete == Some(true))),
            latency_slo: slo_ok,
        },
    }
}

fn ledger_check(streams: &[StreamReport], m: &RunManifest) -> LedgerCheck {
    let mut mismatches = Vec::new();
    for s in streams {
        let id = s.stream_id.unwrap_or_default();
        let f = m.faults.get(&id).copied().unwrap_or_default();
        for (name, verifier, injector) in [
            ("gaps/dropped", s.gaps, f.dropped),
            ("duplicates", s.duplicates, f.duplicated),
            ("out_of_order", s.out_of_order, f.out_of_order),
            ("deliveries", s.deliveries, f.delivered),
        ] {
            if verifier != injector {
                mismatches.push(format!("stream {id} {name}: verifier {verifier}, injector {injector}"));
            }
        }
    }
    LedgerCheck {
        matches: mismatches.is_empty(),
        mismatches,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn flag(v: bool) -> &'static str {
    if v {
        "PASS"
    } else {
        "FAIL"
    }
}

fn flag_opt(v: Option<bool>) -> &'static str {
    v.map(flag).unwrap_or("UNKNOWN")
}

fn ms(v: Option<i64>) -> String {
    v.map(|x| format!("{:.3}", x as f64 / 1e6)).unwrap_or_else(|| "-".into())
}

impl QoSReport {
    pub const CSV_HEADER: &'static str = "scope,priority,intended,sent,deliveries,received_unique,gaps,duplicates,out_of_order,unexpected,loss_rate,negative_latencies,p50_ns,p99_ns,p999_ns,max_ns,exactly_once,ordered,complete,latency_slo";

    pub fn passed(&self) -> bool {
        self.verdicts.all_pass()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in self.streams.iter().chain(std::iter::once(&self.total)) {
            let v = &s.verdicts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.stream_id.map(|i| i.to_string()).unwrap_or_else(|| "all".into()),
                opt(s.priority),
                opt(s.intended),
                opt(s.sent),
                s.deliveries,
                s.received_unique,
                s.gaps,
                s.duplicates,
                s.out_of_order,
                s.unexpected,
                s.loss_rate.map(|r| format!("{r:.6}")).unwrap_or_else(|| "-".into()),
                s.negative_latencies,
                opt(s.p50_ns),
                opt(s.p99_ns),
                opt(s.p999_ns),
                opt(s.max_ns),
                v.exactly_once,
                v.ordered,
                v.complete.map(|c| c.to_string()).unwrap_or_else(|| "unknown".into()),
                v.latency_slo,
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>4} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "stream", "prio", "sent", "unique", "deliveries", "gaps", "dups", "out_order", "p50_ms", "p99_ms", "max_ms"
        );
        for s in self.streams.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{:<8} {:>4} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                s.stream_id.map(|i| i.to_string()).unwrap_or_else(|| "all".into()),
                opt(s.priority),
                opt(s.sent),
                s.received_unique,
                s.deliveries,
                s.gaps,
                s.duplicates,
                s.out_of_order,
                ms(s.p50_ns),
                ms(s.p99_ns),
                ms(s.max_ns),
            );
        }
        if self.per_priority.len() > 1 {
            out.push_str("\nlatency by priority\n");
            for p in &self.per_priority {
                let _ = writeln!(
                    out,
                    "  priority {:>3}: n={} p50={}ms p99={}ms p99.9={}ms max={}ms",
                    opt(p.priority),
                    p.count,
                    ms(p.p50_ns),
                    ms(p.p99_ns),
                    ms(p.p999_ns),
                    ms(p.max_ns)
                );
            }
        }
        let t = &self.total;
        if t.negative_latencies > 0 {
            let _ = writeln!(out, "\nnote: {} negative latencies (clock skew between hosts?)", t.negative_latencies);
        }
        if self.run_complete == Some(false) {
            out.push_str("\nnote: publisher did not finish its schedule\n");
        }
        let v = &self.verdicts;
        let _ = writeln!(out, "\nexactly_once  {}", flag(v.exactly_once));
        let _ = writeln!(out, "ordered       {}", flag(v.ordered));
        let _ = writeln!(out, "complete      {}", flag_opt(v.complete));
        let _ = writeln!(
            out,
            "latency_slo   {}  (p{} = {} ms, threshold {} ms)",
            flag(v.latency_slo),
            self.slo.percentile * 100.0,
            ms(t.slo_latency_ns),
            self.slo.latency_ns as f64 / 1e6
        );
        if let Some(l) = &self.ledger {
            let _ = writeln!(out, "fault ledger  {}", if l.matches { "MATCH" } else { "MISMATCH" });
            for m in &l.mismatches {
                let _ = writeln!(out, "  {m}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::StreamPlan;
    use proptest::prelude::*;
    use std::collections::{HashMap, HashSet};

    fn run(seqs: &[u64]) -> StreamState {
        let mut s = StreamState::default();
        for &q in seqs {
            s.observe_sequence(q);
        }
        s
    }

    /// Reference model over the whole list: multiset counts for gaps and
    /// duplicates, a running maximum over first deliveries for order.
    fn reference(seqs: &[u64]) -> (u64, u64, u64) {
        let mut sorted = seqs.to_vec();
        sorted.sort_unstable();
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for q in &sorted {
            *counts.entry(*q).or_default() += 1;
        }
        let dups: u64 = counts.values().map(|c| c - 1).sum();
        let gaps = sorted.last().map_or(0, |m| m + 1 - counts.len() as u64);
        let mut seen = HashSet::new();
        let mut max: Option<u64> = None;
        let mut ooo = 0;
        for q in seqs {
            if !seen.insert(*q) {
                continue;
            }
            if max.is_some_and(|m| *q < m) {
                ooo += 1;
            }
            max = Some(max.map_or(*q, |m| m.max(*q)));
        }
        (gaps, dups, ooo)
    }

    fn counts(s: &StreamState) -> (u64, u64, u64) {
        (s.gaps(), s.duplicates, s.out_of_order)
    }

    #[test]
    fn gap_example() {
        assert_eq!(counts(&run(&[0, 1, 2, 4])), (1, 0, 0));
    }

    #[test]
    fn duplicate_example() {
        assert_eq!(counts(&run(&[0, 1, 1, 2])), (0, 1, 0));
    }

    #[test]
    fn reorder_example() {
        let seqs = [0, 2, 1];
        assert_eq!(reference(&seqs), (0, 0, 1));
        assert_eq!(counts(&run(&seqs)), (0, 0, 1));
    }

    #[test]
    fn classification() {
        let mut s = StreamState::default();
        assert_eq!(s.observe_sequence(5), Delivery::InOrder);
        assert_eq!(s.observe_sequence(6), Delivery::InOrder);
        assert_eq!(s.observe_sequence(9), Delivery::AfterGap);
        assert_eq!(s.observe_sequence(7), Delivery::OutOfOrder);
        assert_eq!(s.observe_sequence(7), Delivery::Duplicate);
        assert_eq!(s.observe_sequence(9), Delivery::Duplicate);
        assert_eq!(s.gaps(), 5 + 1); // 0..5 and 8
    }

    #[test]
    fn interval_set_merges() {
        let mut set = IntervalSet::new();
        for v in [5, 7, 6, 1, 3, 2, 0, 4] {
            assert!(set.insert(v));
        }
        assert_eq!(set.ranges(), 1);
        assert_eq!(set.len(), 8);
        assert!(!set.insert(3));
        assert!(set.insert(u64::MAX));
        assert!(set.insert(u64::MAX - 1));
        assert!(set.contains(u64::MAX));
        assert!(!set.contains(8));
        assert_eq!(set.ranges(), 2);
        assert_eq!(set.count_below(4), 4);
        assert_eq!(set.count_below(100), 8);
        assert_eq!(set.count_below(0), 0);
    }

    #[test]
    fn memory_stays_flat_for_in_order_streams() {
        let mut s = StreamState::default();
        for q in 0..10_000_000u64 {
            s.observe_sequence(q);
        }
        assert_eq!(s.received.ranges(), 1);
        assert_eq!(counts(&s), (0, 0, 0));
    }

    fn rec(stream: u32, seq: u64, latency: u64) -> LatencyRecord {
        LatencyRecord {
            sequence: seq,
            send_ts_ns: 1_000,
            recv_ts_ns: 1_000 + latency,
            stream_id: stream,
            payload_size: 80,
        }
    }

    fn manifest(streams: &[(u32, u64)]) -> RunManifest {
        RunManifest {
            run_id: "t".into(),
            source: String::new(),
            transport: "loopback".into(),
            workers: streams.len(),
            start_wall_ns: 0,
            seed: 0,
            scale: 1.0,
            complete: true,
            streams: streams
                .iter()
                .map(|&(stream_id, n)| StreamPlan { stream_id, priority: (stream_id % 2) as u8, intended: n, sent: n })
                .collect(),
            faults: Default::default(),
            publisher: Default::default(),
        }
    }

    #[test]
    fn perfect_run_passes() {
        let mut v = Verifier::new();
        for stream in [1, 2] {
            for q in 0..100 {
                v.observe(&rec(stream, q, 50_000));
            }
        }
        let r = v.finalize(Some(&manifest(&[(1, 100), (2, 100)])), SloConfig::default()).unwrap();
        assert_eq!(
            r.verdicts,
            Verdicts { exactly_once: true, ordered: true, complete: Some(true), latency_slo: true }
        );
        assert!(r.passed());
        assert_eq!(r.total.received_unique, 200);
        assert_eq!(r.per_priority.len(), 2);
        assert!(r.to_table().contains("exactly_once  PASS"));
        assert_eq!(r.to_csv().lines().count(), 4);
    }

    #[test]
    fn slow_run_fails_slo() {
        let mut v = Verifier::new();
        for q in 0..10 {
            v.observe(&rec(1, q, 25_000_000));
        }
        let r = v.finalize(Some(&manifest(&[(1, 10)])), SloConfig::default()).unwrap();
        assert!(!r.verdicts.latency_slo);
        assert!(r.verdicts.exactly_once && r.verdicts.ordered);
        assert!(!r.passed());
    }

    #[test]
    fn tail_loss_counts_against_manifest() {
        let mut v = Verifier::new();
        for q in 0..8 {
            v.observe(&rec(1, q, 1));
        }
        let r = v.finalize(Some(&manifest(&[(1, 10), (3, 4)])), SloConfig::default()).unwrap();
        assert_eq!(r.streams[0].gaps, 2);
        assert_eq!(r.streams[1].gaps, 4);
        assert_eq!(r.total.gaps, 6);
        assert_eq!(r.verdicts.complete, Some(false));
        assert!(!r.verdicts.exactly_once);
        // without a manifest only interior gaps are visible
        let bare = v.finalize(None, SloConfig::default()).unwrap();
        assert_eq!(bare.total.gaps, 0);
        assert_eq!(bare.verdicts.complete, None);
        assert!(!bare.passed());
    }

    #[test]
    fn unknown_stream_is_an_error() {
        let mut v = Verifier::new();
        v.observe(&rec(9, 0, 1));
        assert!(matches!(
            v.finalize(Some(&manifest(&[(1, 1)])), SloConfig::default()),
            Err(VerifyError::UnknownStream(9))
        ));
    }

    #[test]
    fn sequences_beyond_sent_are_unexpected() {
        let mut v = Verifier::new();
        for q in [0, 1, 2, 7] {
            v.observe(&rec(1, q, 1));
        }
        let r = v.finalize(Some(&manifest(&[(1, 3)])), SloConfig::default()).unwrap();
        assert_eq!(r.streams[0].unexpected, 1);
        assert_eq!(r.streams[0].gaps, 0);
        assert!(!r.verdicts.exactly_once);
    }

    #[test]
    fn empty_run_against_empty_manifest() {
        let r = Verifier::new().finalize(Some(&manifest(&[(1, 0)])), SloConfig::default()).unwrap();
        assert!(r.passed());
    }

    fn arb_sequences() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(0u64..300, 0..400)
    }

    proptest! {
        #[test]
        fn streaming_matches_reference(seqs in arb_sequences()) {
            prop_assert_eq!(counts(&run(&seqs)), reference(&seqs));
        }

        #[test]
        fn gaps_and_dups_ignore_arrival_order(seqs in arb_sequences(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = seqs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = run(&seqs);
            let b = run(&shuffled);
            prop_assert_eq!((a.gaps(), a.duplicates), (b.gaps(), b.duplicates));
            prop_assert_eq!(reference(&shuffled).2, b.out_of_order);
        }
    }
}
