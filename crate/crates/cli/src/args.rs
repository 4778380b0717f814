use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wrench_core::kv::KvDoc;

#[derive(Parser, Debug)]
#[command(name = "wrench", version, about = "Pub/sub feed benchmarking harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Publish a synthetic workload or replay a snapshot.
    Publish(Box<PublishArgs>),
    /// Receive notifications over TCP and write a latency log.
    Subscribe(SubscribeArgs),
    /// Capture a snapshot from a TCP publisher or from a synthetic workload.
    Record(RecordArgs),
    /// Check a latency log against its run manifest.
    Verify(VerifyArgs),
    /// Convert a binary latency log to CSV, or CSV back to a binary log.
    Convert(ConvertArgs),
    /// Summarize latencies in a log.
    Report(ReportArgs),
    /// Write an example rate profile as CSV.
    GenProfile(GenProfileArgs),
    /// Run a named benchmark scenario end to end.
    Scenario(ScenarioArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Flat key-value config file. Flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Validate everything and print the plan without sending traffic or writing files.
    #[arg(long)]
    pub dry_run: bool,
}

/// Workload selection shared by `publish` and `record`.
#[derive(Args, Debug, Default)]
pub struct WorkloadArgs {
    /// Workload file (profile, size model, event mix, seed).
    #[arg(long, value_name = "FILE")]
    pub workload: Option<PathBuf>,

    /// Rate profile CSV of `duration_s,rate` rows.
    #[arg(long, value_name = "FILE", conflicts_with = "rate")]
    pub profile: Option<PathBuf>,

    /// Flat rate in notifications per second; needs --duration.
    #[arg(long, requires = "duration")]
    pub rate: Option<f64>,

    /// Run length in seconds. With --rate it defines a flat profile;
    /// otherwise the profile is cut off after this many seconds.
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<u64>,

    /// Multiply every segment rate by this factor.
    #[arg(long)]
    pub scale: Option<f64>,

    /// Also multiply segment durations by the scale factor.
    #[arg(long)]
    pub scale_durations: bool,

    /// Seed for generated traffic and injected faults.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl WorkloadArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        push(&mut doc, "workload", self.workload.as_ref().map(|p| p.display()));
        push(&mut doc, "profile", self.profile.as_ref().map(|p| p.display()));
        match (self.rate, self.duration) {
            (Some(rate), Some(d)) => doc.push("segment", format!("{d},{rate}")),
            (None, d) => push(&mut doc, "duration", d),
            (Some(_), None) => {}
        }
        push(&mut doc, "scale", self.scale);
        if self.scale_durations {
            doc.push("scale_durations", true);
        }
        push(&mut doc, "seed", self.seed);
        doc
    }
}

#[derive(Args, Debug, Default)]
pub struct TransportArgs {
    /// loopback, loopback-faulty or tcp.
    #[arg(long)]
    pub transport: Option<String>,

    /// host:port of the subscriber, for tcp.
    #[arg(long)]
    pub endpoint: Option<String>,

    /// Frames a loopback channel holds before the publisher blocks.
    #[arg(long)]
    pub queue_capacity: Option<usize>,

    /// Probability of dropping a frame (loopback-faulty).
    #[arg(long)]
    pub drop_prob: Option<f64>,

    /// Probability of duplicating a frame (loopback-faulty).
    #[arg(long)]
    pub dup_prob: Option<f64>,

    /// Probability of delaying a frame (loopback-faulty).
    #[arg(long)]
    pub reorder_prob: Option<f64>,

    /// Frames after which a delayed frame is released.
    #[arg(long)]
    pub reorder_window: Option<usize>,
}

impl TransportArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        push(&mut doc, "transport", self.transport.as_ref());
        push(&mut doc, "endpoint", self.endpoint.as_ref());
        push(&mut doc, "queue_capacity", self.queue_capacity);
        push(&mut doc, "drop_prob", self.drop_prob);
        push(&mut doc, "dup_prob", self.dup_prob);
        push(&mut doc, "reorder_prob", self.reorder_prob);
        push(&mut doc, "reorder_window", self.reorder_window);
        doc
    }
}

#[derive(Args, Debug, Default)]
pub struct PacingArgs {
    /// Publisher worker threads, one stream each. Defaults to cores minus one.
    #[arg(long)]
    pub workers: Option<usize>,

    /// Spin instead of sleeping when a deadline is this close.
    #[arg(long, value_name = "MICROS")]
    pub spin_threshold_us: Option<u64>,

    /// Largest backlog caught up in a burst before the schedule shifts.
    #[arg(long, value_name = "MILLIS")]
    pub burst_cap_ms: Option<f64>,
}

impl PacingArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        push(&mut doc, "workers", self.workers);
        push(&mut doc, "spin_threshold_us", self.spin_threshold_us);
        push(&mut doc, "burst_cap_ms", self.burst_cap_ms);
        doc
    }
}

#[derive(Args, Debug)]
pub struct PublishArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(flatten)]
    pub workload: WorkloadArgs,

    /// Snapshot to replay instead of a synthetic workload.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["workload", "profile", "rate"])]
    pub snapshot: Option<PathBuf>,

    /// Replay speed; 2 plays a snapshot twice as fast.
    #[arg(long)]
    pub time_scale: Option<f64>,

    /// Overwrite send timestamps in replayed frames with the actual send time.
    #[arg(long)]
    pub restamp: bool,

    #[command(flatten)]
    pub transport: TransportArgs,

    #[command(flatten)]
    pub pacing: PacingArgs,

    /// Directory for the manifest, rate log and, on loopback, the latency log.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Latency log path (loopback transports).
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,

    /// Manifest path.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// Identifier written to the manifest.
    #[arg(long)]
    pub run_id: Option<String>,

    /// Print a per-second count to stderr.
    #[arg(long)]
    pub live: bool,
}

impl PublishArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = self.workload.to_kv();
        doc.extend(&self.transport.to_kv());
        doc.extend(&self.pacing.to_kv());
        push(&mut doc, "snapshot", self.snapshot.as_ref().map(|p| p.display()));
        push(&mut doc, "time_scale", self.time_scale);
        if self.restamp {
            doc.push("restamp", true);
        }
        push(&mut doc, "out_dir", self.out_dir.as_ref().map(|p| p.display()));
        push(&mut doc, "log", self.log.as_ref().map(|p| p.display()));
        push(&mut doc, "manifest", self.manifest.as_ref().map(|p| p.display()));
        push(&mut doc, "run_id", self.run_id.as_ref());
        if self.live {
            doc.push("live", true);
        }
        doc
    }
}

#[derive(Args, Debug)]
pub struct SubscribeArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Address to listen on, host:port.
    #[arg(long)]
    pub listen: Option<String>,

    /// Publisher connections to accept, one per publisher worker.
    #[arg(long)]
    pub connections: Option<usize>,

    /// Latency log path.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,

    /// Print a per-second count to stderr.
    #[arg(long)]
    pub live: bool,
}

impl SubscribeArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        push(&mut doc, "listen", self.listen.as_ref());
        push(&mut doc, "connections", self.connections);
        push(&mut doc, "log", self.log.as_ref().map(|p| p.display()));
        if self.live {
            doc.push("live", true);
        }
        doc
    }
}

#[derive(Args, Debug)]
pub struct RecordArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Snapshot file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Capture from a TCP publisher on this address instead of generating traffic.
    #[arg(long)]
    pub listen: Option<String>,

    /// Stop after this many frames (TCP capture).
    #[arg(long)]
    pub max_frames: Option<u64>,

    /// Stop after this many seconds (TCP capture).
    #[arg(long, value_name = "SECONDS")]
    pub max_seconds: Option<f64>,

    #[command(flatten)]
    pub workload: WorkloadArgs,
}

impl RecordArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = self.workload.to_kv();
        push(&mut doc, "listen", self.listen.as_ref());
        doc
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Latency log to check.
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,

    /// Publisher manifest. Without it completeness cannot be judged.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// Latency bound in milliseconds.
    #[arg(long)]
    pub slo_ms: Option<f64>,

    /// Percentile the latency bound applies to, e.g. 99.
    #[arg(long)]
    pub slo_percentile: Option<f64>,

    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

impl VerifyArgs {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        push(&mut doc, "slo_ms", self.slo_ms);
        push(&mut doc, "slo_percentile", self.slo_percentile);
        doc
    }
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Binary latency log to convert to CSV.
    #[arg(long, value_name = "FILE", required_unless_present = "csv", conflicts_with = "csv")]
    pub log: Option<PathBuf>,

    /// CSV to convert back to a binary log.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,

    /// Output file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Latency log to summarize.
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,

    /// none, stream or payload-band.
    #[arg(long, default_value = "stream")]
    pub group_by: String,

    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    /// 60 s at the mean rate of the reference snapshot.
    SnapshotMean,
    /// Constant rate.
    Flat,
    /// Linear ramp in one-second steps from a tenth of the rate up to the rate.
    Ramp,
    /// 2 s steps from 100k/s up to 700k/s.
    PeakBurst,
    /// Compressed trading session: opening burst, midday lull, closing burst.
    Session,
}

#[derive(Args, Debug)]
pub struct GenProfileArgs {
    #[arg(long, value_enum, default_value_t = ProfileKind::SnapshotMean)]
    pub kind: ProfileKind,

    /// Rate for flat and ramp profiles.
    #[arg(long, default_value_t = 100_000.0)]
    pub rate: f64,

    /// Length in seconds for flat and ramp profiles.
    #[arg(long, default_value_t = 60)]
    pub duration: u64,

    /// Multiply every rate by this factor.
    #[arg(long)]
    pub scale: Option<f64>,

    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    /// Built-in scenario name.
    #[arg(required_unless_present_any = ["file", "list"], conflicts_with = "file")]
    pub name: Option<String>,

    /// Scenario definition file instead of a built-in.
    #[arg(long, value_name = "FILE")]
    pub file: Option<PathBuf>,

    /// List built-in scenarios.
    #[arg(long)]
    pub list: bool,

    /// Run directory. Defaults to runs/<name>.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[arg(long)]
    pub dry_run: bool,
}

fn push<T: ToString>(doc: &mut KvDoc, key: &str, value: Option<T>) {
    if let Some(v) = value {
        doc.push(key, v);
    }
}
