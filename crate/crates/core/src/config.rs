//! Run settings shared by config files and scenario definitions: transport,
//! fault injection, worker count, pacing and the latency SLO.

use std::time::Duration;

use crate::kv::{KvDoc, KvError};
use crate::pacing::PacingConfig;
use crate::transport::{FaultParams, TransportConfig, TransportKind};
use crate::verify::SloConfig;

pub const SETTINGS_KEYS: &[&str] = &[
    "transport",
    "endpoint",
    "queue_capacity",
    "drop_prob",
    "dup_prob",
    "reorder_prob",
    "reorder_window",
    "workers",
    "spin_threshold_us",
    "burst_cap_ms",
    "slo_ms",
    "slo_percentile",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub transport: TransportConfig,
    /// `None` means one worker per core minus one.
    pub workers: Option<usize>,
    pub pacing: PacingConfig,
    pub slo: SloConfig,
}

impl RunSettings {
    /// Applies every settings key present in `doc`; other keys are ignored.
    pub fn apply(&mut self, doc: &KvDoc) -> Result<(), KvError> {
        if let Some(e) = doc.get("transport") {
            self.transport.kind = e.parse::<TransportKind>()?;
        }
        if let Some(e) = doc.get("endpoint") {
            self.transport.endpoint = Some(e.value.clone());
        }
        if let Some(e) = doc.get("queue_capacity") {
            self.transport.queue_capacity = e.parse()?;
        }
        let f: &mut FaultParams = &mut self.transport.faults;
        for (key, slot) in [
            ("drop_prob", &mut f.drop_prob),
            ("dup_prob", &mut f.dup_prob),
            ("reorder_prob", &mut f.reorder_prob),
        ] {
            if let Some(e) = doc.get(key) {
                *slot = e.parse()?;
            }
        }
        if let Some(e) = doc.get("reorder_window") {
            f.reorder_window = e.parse()?;
        }
        if let Some(e) = doc.get("workers") {
            let w: usize = e.parse()?;
            if w == 0 {
                return Err(e.invalid("must be at least 1"));
            }
            self.workers = Some(w);
        }
        if let Some(e) = doc.get("spin_threshold_us") {
            self.pacing.spin_threshold = Duration::from_micros(e.parse()?);
        }
        if let Some(e) = doc.get("burst_cap_ms") {
            let ms: f64 = e.parse()?;
            if !(ms.is_finite() && ms >= 0.0) {
                return Err(e.invalid("must be a non-negative number"));
            }
            self.pacing.burst_cap = Duration::from_secs_f64(ms / 1e3);
        }
        if let Some(e) = doc.get("slo_ms") {
            let ms: f64 = e.parse()?;
            if !(ms.is_finite() && ms > 0.0) {
                return Err(e.invalid("must be positive"));
            }
            self.slo.latency_ns = (ms * 1e6).round() as u64;
        }
        if let Some(e) = doc.get("slo_percentile") {
            let p: f64 = e.parse()?;
            if !(0.0..=100.0).contains(&p) || p == 0.0 {
                return Err(e.invalid("must be in (0, 100]"));
            }
            self.slo.percentile = p / 100.0;
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self, KvError> {
        let mut s = Self::default();
        s.apply(doc)?;
        Ok(s)
    }
}

/// Copy of `doc` holding only entries whose key is in `keys`.
pub fn select_keys(doc: &KvDoc, keys: &[&str]) -> KvDoc {
    let mut out = KvDoc::default();
    for e in doc.entries().iter().filter(|e| keys.contains(&e.key.as_str())) {
        out.push_entry(e);
    }
    out
}
