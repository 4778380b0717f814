//! Run manifest: the publisher's ground truth, written next to the latency
//! log so the verifier can join what was intended and sent with what arrived.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::kv::{KvDoc, KvError};
use crate::transport::StreamFaults;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamPlan {
    pub stream_id: u32,
    pub priority: u8,
    /// Notifications the schedule called for.
    pub intended: u64,
    /// Notifications actually handed to the transport.
    pub sent: u64,
}

/// Publisher-side pacing figures for the report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PublisherFigures {
    pub elapsed_ns: u64,
    pub scheduled_ns: u64,
    pub shift_ns: u64,
    pub sent_after_end: u64,
    pub max_lateness_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    /// `workload:<path>`, `snapshot:<path>` or a scenario name.
    pub source: String,
    pub transport: String,
    pub workers: usize,
    pub start_wall_ns: u64,
    pub seed: u64,
    pub scale: f64,
    /// False when the publisher stopped early.
    pub complete: bool,
    pub streams: Vec<StreamPlan>,
    /// Fault-injector ledger, loopback-faulty runs only.
    pub faults: BTreeMap<u32, StreamFaults>,
    pub publisher: PublisherFigures,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("stream id {0} appears more than once")]
    DuplicateStream(u32),
    #[error("writing {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunManifest {
    pub fn stream(&self, id: u32) -> Option<&StreamPlan> {
        self.streams.iter().find(|s| s.stream_id == id)
    }

    pub fn total_intended(&self) -> u64 {
        self.streams.iter().map(|s| s.intended).sum()
    }

    pub fn total_sent(&self) -> u64 {
        self.streams.iter().map(|s| s.sent).sum()
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = BTreeSet::new();
        for s in &self.streams {
            if !seen.insert(s.stream_id) {
                return Err(ManifestError::DuplicateStream(s.stream_id));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        doc.push("run_id", &self.run_id);
        doc.push("source", &self.source);
        doc.push("transport", &self.transport);
        doc.push("workers", self.workers);
        doc.push("start_wall_ns", self.start_wall_ns);
        doc.push("seed", self.seed);
        doc.push("scale", self.scale);
        doc.push("complete", self.complete);
        let p = &self.publisher;
        doc.push("elapsed_ns", p.elapsed_ns);
        doc.push("scheduled_ns", p.scheduled_ns);
        doc.push("schedule_shift_ns", p.shift_ns);
        doc.push("sent_after_schedule_end", p.sent_after_end);
        doc.push("max_lateness_ns", p.max_lateness_ns);
        for s in &self.streams {
            doc.push("stream", format!("{},{},{},{}", s.stream_id, s.priority, s.intended, s.sent));
        }
        for (id, f) in &self.faults {
            doc.push(
                "fault",
                format!(
                    "{id},{},{},{},{},{},{}",
                    f.offered, f.dropped, f.duplicated, f.delayed, f.out_of_order, f.delivered
                ),
            );
        }
        doc
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# wrench run manifest\n# stream = id,priority,intended,sent\n");
        if !self.faults.is_empty() {
            out.push_str("# fault = stream,offered,dropped,duplicated,delayed,out_of_order,delivered\n");
        }
        out.push_str(&self.to_kv().render());
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.render()).map_err(|source| ManifestError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        Self::from_kv(&KvDoc::read(path)?)
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self, ManifestError> {
        let num = |key: &str| -> Result<u64, KvError> {
            match doc.get(key) {
                Some(e) => e.parse(),
                None => Ok(0),
            }
        };
        let mut streams = Vec::new();
        for e in doc.get_all("stream") {
            let f = split_numbers(e, 4)?;
            streams.push(StreamPlan {
                stream_id: u32::try_from(f[0]).map_err(|err| e.invalid(err))?,
                priority: u8::try_from(f[1]).map_err(|err| e.invalid(err))?,
                intended: f[2],
                sent: f[3],
            });
        }
        let mut faults = BTreeMap::new();
        for e in doc.get_all("fault") {
            let f = split_numbers(e, 7)?;
            faults.insert(
                u32::try_from(f[0]).map_err(|err| e.invalid(err))?,
                StreamFaults {
                    offered: f[1],
                    dropped: f[2],
                    duplicated: f[3],
                    delayed: f[4],
                    out_of_order: f[5],
                    delivered: f[6],
                },
            );
        }
        let m = Self {
            run_id: doc.require("run_id")?.value.clone(),
            source: doc.get("source").map(|e| e.value.clone()).unwrap_or_default(),
            transport: doc.get("transport").map(|e| e.value.clone()).unwrap_or_default(),
            workers: num("workers")? as usize,
            start_wall_ns: num("start_wall_ns")?,
            seed: num("seed")?,
            scale: match doc.get("scale") {
                Some(e) => e.parse()?,
                None => 1.0,
            },
            complete: doc.require("complete")?.parse_bool()?,
            streams,
            faults,
            publisher: PublisherFigures {
                elapsed_ns: num("elapsed_ns")?,
                scheduled_ns: num("scheduled_ns")?,
                shift_ns: num("schedule_shift_ns")?,
                sent_after_end: num("sent_after_schedule_end")?,
                max_lateness_ns: num("max_lateness_ns")?,
            },
        };
        m.validate()?;
        Ok(m)
    }
}

fn split_numbers(e: &crate::kv::KvEntry, n: usize) -> Result<Vec<u64>, KvError> {
    let f: Vec<u64> = e
        .value
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|err| e.invalid(err)))
        .collect::<Result<_, _>>()?;
    if f.len() != n {
        return Err(e.invalid(format!("expected {n} comma-separated numbers")));
    }
    Ok(f)
}
