//! Publisher and subscriber loops, snapshot capture and replay.
//!
//! A publisher runs one worker thread per stream. Each worker walks its own
//! deadline schedule, encodes the next notification ahead of the deadline and
//! stamps the send time immediately before handing the frame to its sink.
//!
//! A subscriber runs one receive loop per source. The receive time is taken
//! as soon as a frame arrives, before decoding. Records are batched into
//! fixed-size blocks and handed to a single log-writer thread over a bounded
//! queue; a slow writer blocks receivers instead of losing records.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{bounded, RecvTimeoutError};

use crate::clock::WallClock;
use crate::codec::{self, CodecError, FrameRead, NotificationHeader, HEADER_LEN, WIRE_VERSION};
use crate::latlog::{LatencyRecord, LogError, LogWriter};
use crate::manifest::{PublisherFigures, RunManifest, StreamPlan};
use crate::pacing::{PaceState, Pacer, PacerStats, PacingConfig, RateMeter, NANOS_PER_SEC};
use crate::transport::{
    loopback, new_fault_ledger, FaultLedger, FaultySink, FrameSink, FrameSource, StreamFaults, TransportConfig,
    TransportError, TransportKind,
};
use crate::workload::{WorkloadError, WorkloadSpec};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"WRSN";
pub const SNAPSHOT_VERSION: u16 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 6;

/// Records per block handed from a receive loop to the log writer.
pub const LOG_BLOCK_RECORDS: usize = 1024;
/// Blocks the writer queue holds: 64 × 1024 records.
pub const LOG_QUEUE_BLOCKS: usize = 64;

/// Delay between spawning workers and the first deadline.
const START_LEAD: Duration = Duration::from_millis(5);

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Config(String),
}

/// Number of publisher workers when none is configured: one core is left to
/// the OS and transport.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get().saturating_sub(1))
        .unwrap_or(1)
        .max(1)
}

#[derive(Debug, Clone)]
pub struct PublisherConfig {
    pub workers: usize,
    /// Worker `w` publishes stream `first_stream_id + w`.
    pub first_stream_id: u32,
    pub pacing: PacingConfig,
    /// Print `t,sent,rate` to stderr once per second.
    pub live: bool,
    /// Set to stop publishing early; the run is then marked incomplete.
    pub stop: Option<Arc<AtomicBool>>,
}

impl Default for PublisherConfig {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            first_stream_id: 0,
            pacing: PacingConfig::default(),
            live: false,
            stop: None,
        }
    }
}

/// What a publisher did, before it is written out as a manifest.
#[derive(Debug, Clone)]
pub struct PublishOutcome {
    pub streams: Vec<StreamPlan>,
    pub stats: PacerStats,
    pub rates: RateMeter,
    /// Wall-clock time of the first scheduled deadline.
    pub start_wall_ns: u64,
    pub complete: bool,
    /// First failure that ended a worker early.
    pub failure: Option<String>,
}

impl PublishOutcome {
    pub fn total_sent(&self) -> u64 {
        self.streams.iter().map(|s| s.sent).sum()
    }

    /// Sent notifications per second of elapsed publishing time.
    pub fn sustained_rate(&self) -> f64 {
        if self.stats.elapsed_ns == 0 {
            0.0
        } else {
            self.total_sent() as f64 * NANOS_PER_SEC as f64 / self.stats.elapsed_ns as f64
        }
    }

    pub fn manifest(
        &self,
        run_id: &str,
        source: &str,
        transport: &str,
        seed: u64,
        scale: f64,
        faults: BTreeMap<u32, StreamFaults>,
    ) -> RunManifest {
        RunManifest {
            run_id: run_id.to_string(),
            source: source.to_string(),
            transport: transport.to_string(),
            workers: self.streams.len(),
            start_wall_ns: self.start_wall_ns,
            seed,
            scale,
            complete: self.complete,
            streams: self.streams.clone(),
            faults,
            publisher: PublisherFigures {
                elapsed_ns: self.stats.elapsed_ns,
                scheduled_ns: self.stats.scheduled_ns,
                shift_ns: self.stats.shift_ns,
                sent_after_end: self.stats.sent_after_end,
                max_lateness_ns: self.stats.max_lateness_ns,
            },
        }
    }
}

/// Prints `t,count,rate` to stderr once per second until dropped.
struct LiveCounter {
    done: Option<crossbeam_channel::Sender<()>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl LiveCounter {
    fn start(enabled: bool, counter: Arc<AtomicU64>, clock: WallClock) -> Self {
        if !enabled {
            return Self { done: None, handle: None };
        }
        let (tx, rx) = bounded::<()>(1);
        let handle = std::thread::spawn(move || {
            let start = clock.mono().now_ns();
            let mut last = 0;
            loop {
                match rx.recv_timeout(Duration::from_secs(1)) {
                    Err(RecvTimeoutError::Timeout) => {
                        let n = counter.load(Ordering::Relaxed);
                        let t = (clock.mono().now_ns() - start) as f64 / NANOS_PER_SEC as f64;
                        eprintln!("{t:.0},{n},{}", n - last);
                        last = n;
                    }
                    _ => return,
                }
            }
        });
        Self {
            done: Some(tx),
            handle: Some(handle),
        }
    }
}

impl Drop for LiveCounter {
    fn drop(&mut self) {
        self.done.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn stopped(stop: &Option<Arc<AtomicBool>>) -> bool {
    stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed))
}

struct WorkerResult {
    plan: StreamPlan,
    stats: PacerStats,
    meter: RateMeter,
    finished_schedule: bool,
    failure: Option<String>,
}

/// Publishes `spec` through `sinks`, one worker per sink.
///
/// Transport failures do not return `Err`: the affected worker stops, and the
/// outcome records actual sent counts with `complete = false`.
pub fn publish_workload(
    spec: &WorkloadSpec,
    sinks: Vec<Box<dyn FrameSink>>,
    clock: WallClock,
    config: &PublisherConfig,
) -> Result<PublishOutcome, EngineError> {
    spec.validate()?;
    let workers = sinks.len();
    if workers == 0 {
        return Err(EngineError::Config("at least one worker is required".into()));
    }
    if config.first_stream_id.checked_add(workers as u32 - 1).is_none() {
        return Err(EngineError::Config("stream ids overflow u32".into()));
    }
    let profile = spec.profile.split(workers);
    let intended = profile.expected_total()?;
    let counter = Arc::new(AtomicU64::new(0));
    let live = LiveCounter::start(config.live, Arc::clone(&counter), clock);
    let start_ns = clock.mono().now_ns() + START_LEAD.as_nanos() as u64;

    let results: Vec<WorkerResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = sinks
            .into_iter()
            .enumerate()
            .map(|(w, sink)| {
                let plan = StreamPlan {
                    stream_id: config.first_stream_id + w as u32,
                    priority: spec.priority_for_worker(w),
                    intended,
                    sent: 0,
                };
                let profile = &profile;
                let counter = &counter;
                scope.spawn(move || run_worker(spec, profile, plan, sink, clock, start_ns, config, counter))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("publisher worker panicked"))
            .collect()
    });
    drop(live);

    let mut stats = PacerStats::default();
    let mut rates = RateMeter::per_second();
    let mut streams = Vec::with_capacity(results.len());
    let mut complete = true;
    let mut failure = None;
    for r in results {
        stats.merge(&r.stats);
        rates.merge(&r.meter);
        streams.push(r.plan);
        complete &= r.finished_schedule && r.failure.is_none();
        if failure.is_none() {
            failure = r.failure;
        }
    }
    Ok(PublishOutcome {
        streams,
        stats,
        rates,
        start_wall_ns: clock.at(start_ns),
        complete,
        failure,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_worker(
    spec: &WorkloadSpec,
    profile: &crate::workload::RateProfile,
    mut plan: StreamPlan,
    mut sink: Box<dyn FrameSink>,
    clock: WallClock,
    start_ns: u64,
    config: &PublisherConfig,
    counter: &AtomicU64,
) -> WorkerResult {
    let mut meter = RateMeter::per_second();
    let schedule = match PaceState::new(profile) {
        Ok(s) => s,
        Err(e) => {
            return WorkerResult {
                plan,
                stats: PacerStats::default(),
                meter,
                finished_schedule: false,
                failure: Some(e.to_string()),
            }
        }
    };
    let total_ns = schedule.total_ns();
    let mut pacer = Pacer::new(schedule, total_ns, *clock.mono(), start_ns, config.pacing);
    let mut sampler = spec.sampler(plan.stream_id);
    let mut buf = Vec::with_capacity(1024);
    let mut failure = None;
    let mut finished_schedule = true;

    let mut send = |pacer: &mut Pacer<PaceState>, deadline: u64, seq: u64| -> Result<(), EngineError> {
        let p = sampler.next_params();
        let header = NotificationHeader {
            priority: plan.priority,
            event_type: p.event_type,
            stream_id: plan.stream_id,
            sequence: seq,
            send_ts_ns: 0,
            symbol_id: p.symbol_id,
            attr_count: p.attr_count,
        };
        codec::encode_into(&header, p.size as usize, &mut buf)?;
        if !pacer.is_due(deadline) {
            sink.flush()?;
            pacer.wait(deadline);
        }
        let now = clock.mono().now_ns();
        codec::restamp(&mut buf, clock.at(now))?;
        sink.publish(&buf)?;
        pacer.on_sent(now);
        meter.record(now.saturating_sub(start_ns));
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(())
    };

    while let Some(deadline) = pacer.next_deadline() {
        if plan.sent.is_multiple_of(1024) && stopped(&config.stop) {
            finished_schedule = false;
            break;
        }
        if let Err(e) = send(&mut pacer, deadline, plan.sent) {
            failure = Some(format!("stream {}: {e}", plan.stream_id));
            finished_schedule = false;
            break;
        }
        plan.sent += 1;
    }
    if let Err(e) = sink.flush().and_then(|_| sink.finish()) {
        failure.get_or_insert_with(|| format!("stream {}: {e}", plan.stream_id));
    }
    WorkerResult {
        plan,
        stats: pacer.stats(),
        meter,
        finished_schedule,
        failure,
    }
}

#[derive(Debug, Clone)]
pub struct SubscriberConfig {
    pub live: bool,
    pub block_records: usize,
    pub queue_blocks: usize,
}

impl Default for SubscriberConfig {
    fn default() -> Self {
        Self {
            live: false,
            block_records: LOG_BLOCK_RECORDS,
            queue_blocks: LOG_QUEUE_BLOCKS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubscribeOutcome {
    /// Records written to the log.
    pub records: u64,
    /// Frames that failed to decode; they are not logged.
    pub corrupt: u64,
    /// First receive or write failure. The log holds everything before it.
    pub failure: Option<String>,
}

/// Receives from every source until each ends, logging one record per frame.
pub fn run_subscriber<S, W>(
    sources: Vec<S>,
    log: LogWriter<W>,
    clock: WallClock,
    config: &SubscriberConfig,
) -> Result<SubscribeOutcome, EngineError>
where
    S: FrameSource,
    W: Write + Send,
{
    let block_len = config.block_records.max(1);
    let (tx, rx) = bounded::<Vec<LatencyRecord>>(config.queue_blocks.max(1));
    let (free_tx, free_rx) = bounded::<Vec<LatencyRecord>>(config.queue_blocks.max(1) + sources.len() + 1);
    let counter = Arc::new(AtomicU64::new(0));
    let live = LiveCounter::start(config.live, Arc::clone(&counter), clock);

    let (receivers, written) = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<u64, LogError> {
            let mut log = log;
            for block in rx.iter() {
                log.append_all(&block)?;
                let mut block = block;
                block.clear();
                let _ = free_tx.try_send(block);
            }
            Ok(log.finish()?.0)
        });
        let handles: Vec<_> = sources
            .into_iter()
            .map(|source| {
                let tx = tx.clone();
                let free_rx = free_rx.clone();
                let counter = &counter;
                scope.spawn(move || receive_loop(source, tx, free_rx, block_len, clock, counter))
            })
            .collect();
        drop(tx);
        let receivers: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("receive loop panicked"))
            .collect();
        (receivers, writer.join().expect("log writer panicked"))
    });
    drop(live);

    let mut outcome = SubscribeOutcome::default();
    for (corrupt, failure) in receivers {
        outcome.corrupt += corrupt;
        if outcome.failure.is_none() {
            outcome.failure = failure;
        }
    }
    match written {
        Ok(n) => outcome.records = n,
        Err(e) => {
            outcome.records = counter.load(Ordering::Relaxed);
            outcome.failure = Some(format!("log write failed: {e}"));
        }
    }
    Ok(outcome)
}

fn receive_loop<S: FrameSource>(
    mut source: S,
    tx: crossbeam_channel::Sender<Vec<LatencyRecord>>,
    free: crossbeam_channel::Receiver<Vec<LatencyRecord>>,
    block_len: usize,
    clock: WallClock,
    counter: &AtomicU64,
) -> (u64, Option<String>) {
    let mut buf = Vec::with_capacity(1024);
    let mut block = Vec::with_capacity(block_len);
    let mut corrupt = 0u64;
    let mut failure = None;
    loop {
        match source.recv(&mut buf) {
            Ok(true) => {
                let recv_ts_ns = clock.now_ns();
                match codec::decode_notification(&buf) {
                    Ok((h, payload)) => {
                        block.push(LatencyRecord {
                            sequence: h.sequence,
                            send_ts_ns: h.send_ts_ns,
                            recv_ts_ns,
                            stream_id: h.stream_id,
                            payload_size: payload as u32,
                        });
                        counter.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        corrupt += 1;
                        if corrupt <= 10 {
                            log::warn!("dropping undecodable frame of {} bytes: {e}", buf.len());
                        }
                    }
                }
                if block.len() == block_len {
                    let next = free.try_recv().unwrap_or_else(|_| Vec::with_capacity(block_len));
                    if tx.send(std::mem::replace(&mut block, next)).is_err() {
                        failure = Some("log writer stopped".to_string());
                        break;
                    }
                }
            }
            Ok(false) => break,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    if !block.is_empty() {
        let _ = tx.send(block);
    }
    (corrupt, failure)
}

/// Result of a publisher and subscriber run back to back in one process.
#[derive(Debug, Clone)]
pub struct LoopbackRun {
    pub publisher: PublishOutcome,
    pub subscriber: SubscribeOutcome,
    pub faults: BTreeMap<u32, StreamFaults>,
}

/// Builds one sink per worker for an in-process loopback transport, with a
/// fault injector in front of each when the transport is `loopback-faulty`.
fn loopback_sinks(
    transport: &TransportConfig,
    sink: crate::transport::LoopbackSink,
    workers: usize,
    first_stream_id: u32,
    ledger: &FaultLedger,
) -> Vec<Box<dyn FrameSink>> {
    let mut sinks: Vec<Box<dyn FrameSink>> = Vec::with_capacity(workers);
    let mut last = Some(sink);
    for w in 0..workers {
        let s = if w + 1 == workers {
            last.take().expect("one sink per worker")
        } else {
            last.as_ref().expect("one sink per worker").clone()
        };
        let stream_id = first_stream_id + w as u32;
        sinks.push(match transport.kind {
            TransportKind::LoopbackFaulty => {
                Box::new(FaultySink::new(s, transport.faults, stream_id, Arc::clone(ledger)))
            }
            _ => Box::new(s),
        });
    }
    sinks
}

/// Publishes `spec` over an in-process loopback transport while a subscriber
/// thread writes every delivery to `log`.
pub fn run_loopback<W: Write + Send>(
    spec: &WorkloadSpec,
    transport: &TransportConfig,
    publisher: &PublisherConfig,
    log: LogWriter<W>,
) -> Result<LoopbackRun, EngineError> {
    transport.validate()?;
    if transport.kind == TransportKind::Tcp {
        return Err(EngineError::Config("run_loopback needs a loopback transport".into()));
    }
    let clock = WallClock::new();
    let (sink, source) = loopback(transport.queue_capacity);
    let ledger = new_fault_ledger();
    let sinks = loopback_sinks(transport, sink, publisher.workers.max(1), publisher.first_stream_id, &ledger);
    let (published, subscribed) = std::thread::scope(|scope| {
        let sub = scope.spawn(move || run_subscriber(vec![source], log, clock, &SubscriberConfig::default()));
        let published = publish_workload(spec, sinks, clock, publisher);
        (published, sub.join().expect("subscriber panicked"))
    });
    let faults = ledger.lock().unwrap_or_else(|e| e.into_inner()).clone();
    Ok(LoopbackRun {
        publisher: published?,
        subscriber: subscribed?,
        faults,
    })
}

/// Replays `frames` over an in-process loopback transport while a
/// subscriber thread writes every delivery to `log`.
pub fn run_loopback_replay<W: Write + Send>(
    frames: &[SnapshotFrame],
    transport: &TransportConfig,
    replay: &ReplayConfig,
    log: LogWriter<W>,
) -> Result<LoopbackRun, EngineError> {
    if transport.kind != TransportKind::Loopback {
        return Err(EngineError::Config("snapshot replay in one process needs the loopback transport".into()));
    }
    transport.validate()?;
    let clock = WallClock::new();
    let (mut sink, source) = loopback(transport.queue_capacity);
    let (published, subscribed) = std::thread::scope(|scope| {
        let sub = scope.spawn(move || run_subscriber(vec![source], log, clock, &SubscriberConfig::default()));
        let published = replay_snapshot(frames, &mut sink, clock, replay, None);
        drop(sink);
        (published, sub.join().expect("subscriber panicked"))
    });
    Ok(LoopbackRun {
        publisher: published?,
        subscriber: subscribed?,
        faults: BTreeMap::new(),
    })
}

/// One captured frame and the gap since the previous one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotFrame {
    pub delta_ns: u64,
    pub bytes: Vec<u8>,
}

pub struct SnapshotWriter<W: Write> {
    out: W,
    frames: u64,
}

impl SnapshotWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, EngineError> {
        Self::new(BufWriter::with_capacity(1 << 20, File::create(path)?))
    }
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(mut out: W) -> Result<Self, EngineError> {
        out.write_all(&SNAPSHOT_MAGIC)?;
        out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        Ok(Self { out, frames: 0 })
    }

    pub fn append(&mut self, delta_ns: u64, frame: &[u8]) -> Result<(), EngineError> {
        self.out.write_all(&delta_ns.to_le_bytes())?;
        codec::write_frame(&mut self.out, frame)?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn finish(mut self) -> Result<(u64, W), EngineError> {
        self.out.flush()?;
        Ok((self.frames, self.out))
    }
}

pub struct SnapshotReader<R: Read> {
    input: R,
}

impl SnapshotReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, EngineError> {
        Self::new(BufReader::with_capacity(1 << 20, File::open(path)?))
    }
}

impl<R: Read> SnapshotReader<R> {
    pub fn new(mut input: R) -> Result<Self, EngineError> {
        let mut header = [0u8; SNAPSHOT_HEADER_LEN];
        input
            .read_exact(&mut header)
            .map_err(|_| EngineError::Snapshot("file shorter than its header".into()))?;
        if header[..4] != SNAPSHOT_MAGIC {
            return Err(EngineError::Snapshot("bad magic, not a snapshot file".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != SNAPSHOT_VERSION {
            return Err(EngineError::Snapshot(format!("unsupported version {version}")));
        }
        Ok(Self { input })
    }

    pub fn next_frame(&mut self) -> Result<Option<SnapshotFrame>, EngineError> {
        let mut delta = [0u8; 8];
        let mut got = 0;
        while got < delta.len() {
            match self.input.read(&mut delta[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(EngineError::Snapshot("truncated record".into())),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let mut bytes = Vec::new();
        match codec::read_frame(&mut self.input, &mut bytes) {
            Ok(FrameRead::Frame) => Ok(Some(SnapshotFrame {
                delta_ns: u64::from_le_bytes(delta),
                bytes,
            })),
            Ok(FrameRead::Eof) | Err(_) => Err(EngineError::Snapshot("truncated record".into())),
        }
    }

    pub fn read_all(mut self) -> Result<Vec<SnapshotFrame>, EngineError> {
        let mut frames = Vec::new();
        while let Some(f) = self.next_frame()? {
            frames.push(f);
        }
        Ok(frames)
    }
}

pub fn read_snapshot(path: &Path) -> Result<Vec<SnapshotFrame>, EngineError> {
    SnapshotReader::open(path)?.read_all()
}

/// Σ deltas: the capture's duration from first to last frame.
pub fn snapshot_span_ns(frames: &[SnapshotFrame]) -> u64 {
    frames.iter().skip(1).map(|f| f.delta_ns).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptureLimit {
    pub max_frames: Option<u64>,
    /// Checked as frames arrive.
    pub duration: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureOutcome {
    pub frames: u64,
    /// First to last frame.
    pub span_ns: u64,
}

/// Copies frames from `source` into a snapshot with their inter-arrival gaps.
/// The first frame's delta is 0.
pub fn record_snapshot<S: FrameSource + ?Sized, W: Write>(
    source: &mut S,
    out: &mut SnapshotWriter<W>,
    limit: CaptureLimit,
) -> Result<CaptureOutcome, EngineError> {
    let clock = crate::clock::MonoClock::new();
    let mut buf = Vec::with_capacity(1024);
    let mut first: Option<u64> = None;
    let mut last = 0u64;
    let mut frames = 0u64;
    while limit.max_frames.is_none_or(|m| frames < m) && source.recv(&mut buf)? {
        let now = clock.now_ns();
        let delta = if first.is_some() { now - last } else { 0 };
        first.get_or_insert(now);
        last = now;
        out.append(delta, &buf)?;
        frames += 1;
        if limit
            .duration
            .is_some_and(|d| now - first.unwrap_or(now) >= d.as_nanos() as u64)
        {
            break;
        }
    }
    if frames == 0 {
        log::warn!("snapshot captured no frames");
    }
    Ok(CaptureOutcome {
        frames,
        span_ns: first.map_or(0, |f| last - f),
    })
}

/// Publishes `spec` with one worker over loopback and captures every frame
/// into a snapshot at `out`. Returns the number of frames captured.
pub fn loopback_capture(spec: &WorkloadSpec, out: &Path) -> Result<u64, EngineError> {
    let (sink, mut source) = loopback(TransportConfig::default().queue_capacity);
    let mut writer = SnapshotWriter::create(out)?;
    let config = PublisherConfig {
        workers: 1,
        ..PublisherConfig::default()
    };
    let (published, captured) = std::thread::scope(|scope| {
        let capture = scope.spawn(|| record_snapshot(&mut source, &mut writer, CaptureLimit::default()));
        let published = publish_workload(spec, vec![Box::new(sink)], WallClock::new(), &config);
        (published, capture.join().expect("capture thread panicked"))
    });
    let published = published?;
    if let Some(f) = published.failure {
        return Err(EngineError::Config(format!("publisher failed: {f}")));
    }
    let captured = captured?;
    writer.finish()?;
    Ok(captured.frames)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    /// Values above 1 compress time.
    pub time_scale: f64,
    /// Overwrite each frame's send timestamp with the actual send time.
    /// Off by default so that replayed bytes equal captured bytes.
    pub restamp: bool,
    pub pacing: PacingConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            time_scale: 1.0,
            restamp: false,
            pacing: PacingConfig::default(),
        }
    }
}

/// Per-stream frame counts and priorities found in a snapshot.
pub fn snapshot_streams(frames: &[SnapshotFrame]) -> Result<Vec<StreamPlan>, EngineError> {
    let mut streams: BTreeMap<u32, StreamPlan> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        let (h, _) = codec::decode_notification(&f.bytes)
            .map_err(|e| EngineError::Snapshot(format!("frame {i}: {e}")))?;
        let plan = streams.entry(h.stream_id).or_insert(StreamPlan {
            stream_id: h.stream_id,
            priority: h.priority,
            intended: 0,
            sent: 0,
        });
        plan.intended += 1;
    }
    Ok(streams.into_values().collect())
}

/// Publishes captured frames in order, frame `i` at Σ deltas up to `i`
/// divided by the time scale.
pub fn replay_snapshot<S: FrameSink + ?Sized>(
    frames: &[SnapshotFrame],
    sink: &mut S,
    clock: WallClock,
    config: &ReplayConfig,
    stop: Option<&AtomicBool>,
) -> Result<PublishOutcome, EngineError> {
    if !(config.time_scale.is_finite() && config.time_scale > 0.0) {
        return Err(EngineError::Config(format!(
            "time scale must be positive, got {}",
            config.time_scale
        )));
    }
    let mut streams = snapshot_streams(frames)?;
    let index: BTreeMap<u32, usize> = streams.iter().enumerate().map(|(i, s)| (s.stream_id, i)).collect();

    let scale = config.time_scale;
    let mut cumulative: u128 = 0;
    let offsets: Vec<u64> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if i > 0 {
                cumulative += f.delta_ns as u128;
            }
            (cumulative as f64 / scale).round() as u64
        })
        .collect();
    let last = offsets.last().copied().unwrap_or(0);
    // one mean gap after the last frame, as a paced schedule would allow
    let scheduled_len = if frames.len() > 1 { last + last / (frames.len() as u64 - 1) } else { last };

    let start_ns = clock.mono().now_ns() + START_LEAD.as_nanos() as u64;
    let mut pacer = Pacer::new(offsets.iter().copied(), scheduled_len, *clock.mono(), start_ns, config.pacing);
    let mut meter = RateMeter::per_second();
    let mut buf = Vec::with_capacity(1024);
    let mut failure = None;
    let mut complete = true;
    for (i, f) in frames.iter().enumerate() {
        let Some(deadline) = pacer.next_deadline() else { break };
        if i.is_multiple_of(1024) && stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            complete = false;
            break;
        }
        if config.restamp {
            buf.clear();
            buf.extend_from_slice(&f.bytes);
        }
        if !pacer.is_due(deadline) {
            if let Err(e) = sink.flush() {
                failure = Some(e.to_string());
                break;
            }
            pacer.wait(deadline);
        }
        let now = clock.mono().now_ns();
        let result = if config.restamp {
            codec::restamp(&mut buf, clock.at(now))
                .map_err(EngineError::from)
                .and_then(|_| sink.publish(&buf).map_err(EngineError::from))
        } else {
            sink.publish(&f.bytes).map_err(EngineError::from)
        };
        if let Err(e) = result {
            failure = Some(e.to_string());
            break;
        }
        pacer.on_sent(now);
        meter.record(now.saturating_sub(start_ns));
        if let Some((stream, _)) = codec::peek_stream_sequence(&f.bytes) {
            streams[index[&stream]].sent += 1;
        }
    }
    if let Err(e) = sink.flush().and_then(|_| sink.finish()) {
        failure.get_or_insert(e.to_string());
    }
    complete &= failure.is_none() && pacer.stats().sent == frames.len() as u64;
    Ok(PublishOutcome {
        streams,
        stats: pacer.stats(),
        rates: meter,
        start_wall_ns: clock.at(start_ns),
        complete,
        failure,
    })
}

const _: () = assert!(HEADER_LEN == 29 && WIRE_VERSION == 1);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latlog::read_log;
    use crate::transport::FaultParams;
    use crate::verify::{SloConfig, Verifier};
    use crate::workload::RateProfile;

    fn spec(duration_s: u64, rate: f64) -> WorkloadSpec {
        let mut s = WorkloadSpec::with_profile(RateProfile::flat(duration_s, rate).unwrap());
        s.seed = 11;
        s
    }

    fn config(workers: usize) -> PublisherConfig {
        PublisherConfig {
            workers,
            first_stream_id: 1,
            ..PublisherConfig::default()
        }
    }

    fn run(spec: &WorkloadSpec, transport: &TransportConfig, workers: usize) -> (LoopbackRun, Vec<LatencyRecord>) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.wrll");
        let r = run_loopback(spec, transport, &config(workers), LogWriter::create(&path).unwrap()).unwrap();
        (r, read_log(&path).unwrap())
    }

    #[test]
    fn flat_run_is_complete() {
        let (r, records) = run(&spec(1, 2000.0), &TransportConfig::default(), 1);
        assert!(r.publisher.complete);
        assert_eq!(r.publisher.total_sent(), 2000);
        assert_eq!(r.publisher.streams[0].intended, 2000);
        assert_eq!(r.subscriber.records, 2000);
        assert_eq!(records.len(), 2000);
        for (i, rec) in records.iter().enumerate() {
            assert_eq!(rec.sequence, i as u64);
            assert_eq!(rec.stream_id, 1);
            assert!(rec.recv_ts_ns >= rec.send_ts_ns);
        }
        let rates = r.publisher.rates.counts();
        assert_eq!(rates.iter().sum::<u64>(), 2000);
    }

    #[test]
    fn four_workers_split_the_rate() {
        let (r, records) = run(&spec(1, 4000.0), &TransportConfig::default(), 4);
        assert_eq!(r.publisher.streams.len(), 4);
        for (w, s) in r.publisher.streams.iter().enumerate() {
            assert_eq!(s.stream_id, 1 + w as u32);
            assert_eq!((s.intended, s.sent), (1000, 1000));
        }
        let m = r.publisher.manifest("t", "test", "loopback", 11, 1.0, r.faults.clone());
        let mut v = Verifier::new();
        records.iter().for_each(|rec| {
            v.observe(rec);
        });
        let report = v.finalize(Some(&m), SloConfig::default()).unwrap();
        assert!(report.verdicts.exactly_once && report.verdicts.ordered);
        assert_eq!(report.verdicts.complete, Some(true));
    }

    #[test]
    fn faulty_run_matches_ledger() {
        let transport = TransportConfig {
            kind: TransportKind::LoopbackFaulty,
            faults: FaultParams {
                drop_prob: 0.1,
                dup_prob: 0.05,
                reorder_prob: 0.05,
                reorder_window: 4,
                seed: 3,
            },
            ..TransportConfig::default()
        };
        let (r, records) = run(&spec(1, 5000.0), &transport, 1);
        let f = r.faults[&1];
        assert_eq!(f.offered, 5000);
        assert_eq!(records.len() as u64, f.delivered);
        let m = r.publisher.manifest("t", "test", "loopback-faulty", 11, 1.0, r.faults.clone());
        let mut v = Verifier::new();
        records.iter().for_each(|rec| {
            v.observe(rec);
        });
        let report = v.finalize(Some(&m), SloConfig::default()).unwrap();
        assert_eq!(report.total.gaps, f.dropped);
        assert_eq!(report.total.duplicates, f.duplicated);
        assert_eq!(report.total.out_of_order, f.out_of_order);
        assert!(report.ledger.unwrap().matches);
    }

    #[test]
    fn empty_run_writes_valid_log() {
        let (r, records) = run(&spec(1, 0.0), &TransportConfig::default(), 1);
        assert!(r.publisher.complete);
        assert_eq!(r.subscriber.records, 0);
        assert!(records.is_empty());
    }

    #[test]
    fn stop_flag_marks_run_incomplete() {
        let stop = Arc::new(AtomicBool::new(true));
        let cfg = PublisherConfig {
            stop: Some(stop),
            ..config(1)
        };
        let (sink, _source) = loopback(16);
        let out = publish_workload(&spec(10, 1000.0), vec![Box::new(sink)], WallClock::new(), &cfg).unwrap();
        assert!(!out.complete);
        assert_eq!(out.total_sent(), 0);
    }

    #[test]
    fn publish_failure_is_recorded_not_returned() {
        let (sink, source) = loopback(16);
        drop(source);
        let out = publish_workload(&spec(1, 1000.0), vec![Box::new(sink)], WallClock::new(), &config(1)).unwrap();
        assert!(!out.complete);
        assert!(out.failure.is_some());
        assert_eq!(out.streams[0].intended, 1000);
        assert_eq!(out.streams[0].sent, 0);
    }

    #[test]
    fn corrupt_frames_are_counted_and_skipped() {
        let (mut sink, source) = loopback(16);
        let h = NotificationHeader {
            stream_id: 1,
            ..NotificationHeader::default()
        };
        let good = codec::encode_notification(&h, 80).unwrap();
        let mut bad = good.clone();
        bad[50] ^= 1;
        sink.publish(&good).unwrap();
        sink.publish(&bad).unwrap();
        sink.finish().unwrap();
        let log = LogWriter::new(Vec::new()).unwrap();
        let out = run_subscriber(vec![source], log, WallClock::new(), &SubscriberConfig::default()).unwrap();
        assert_eq!(out, SubscribeOutcome { records: 1, corrupt: 1, failure: None });
    }

    #[test]
    fn subscriber_reports_mid_stream_close() {
        let (sink, source) = loopback(16);
        drop(sink);
        let out = run_subscriber(
            vec![source],
            LogWriter::new(Vec::new()).unwrap(),
            WallClock::new(),
            &SubscriberConfig::default(),
        )
        .unwrap();
        assert!(out.failure.is_some());
    }

    fn frame(stream_id: u32, sequence: u64) -> Vec<u8> {
        let h = NotificationHeader {
            stream_id,
            sequence,
            priority: 2,
            ..NotificationHeader::default()
        };
        codec::encode_notification(&h, 100).unwrap()
    }

    #[test]
    fn capture_records_deltas() {
        let (mut sink, mut source) = loopback(16);
        let t = std::thread::spawn(move || {
            sink.publish(&frame(1, 0)).unwrap();
            std::thread::sleep(Duration::from_millis(5));
            sink.publish(&frame(1, 1)).unwrap();
            sink.finish().unwrap();
        });
        let mut w = SnapshotWriter::new(Vec::new()).unwrap();
        let out = record_snapshot(&mut source, &mut w, CaptureLimit::default()).unwrap();
        t.join().unwrap();
        assert_eq!(out.frames, 2);
        let (_, bytes) = w.finish().unwrap();
        let frames = SnapshotReader::new(&bytes[..]).unwrap().read_all().unwrap();
        assert_eq!(frames[0].delta_ns, 0);
        assert!(frames[1].delta_ns >= 5_000_000);
        assert!(frames[1].delta_ns < 50_000_000);
        assert_eq!(frames[1].bytes, frame(1, 1));
        assert_eq!(snapshot_span_ns(&frames), out.span_ns);
    }

    #[test]
    fn snapshot_file_layout() {
        let mut w = SnapshotWriter::new(Vec::new()).unwrap();
        w.append(7, &[0xAA, 0xBB]).unwrap();
        let (n, bytes) = w.finish().unwrap();
        assert_eq!(n, 1);
        let mut expected = b"WRSN\x01\x00".to_vec();
        expected.extend_from_slice(&7u64.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&[0xAA, 0xBB]);
        assert_eq!(bytes, expected);
        assert!(SnapshotReader::new(&bytes[..bytes.len() - 1]).unwrap().read_all().is_err());
        assert!(SnapshotReader::new(&b"WRSX\x01\x00"[..]).is_err());
        assert!(SnapshotReader::new(&b"WRSN\x02\x00"[..]).is_err());
        assert!(SnapshotReader::new(&b"WRSN\x01\x00"[..]).unwrap().read_all().unwrap().is_empty());
    }

    #[test]
    fn replay_preserves_bytes_and_timing() {
        let frames: Vec<SnapshotFrame> = (0..50)
            .map(|i| SnapshotFrame {
                delta_ns: if i == 0 { 0 } else { 2_000_000 },
                bytes: frame(if i % 2 == 0 { 1 } else { 2 }, i / 2),
            })
            .collect();
        for scale in [1.0, 2.0] {
            let (mut sink, mut source) = loopback(128);
            let out = replay_snapshot(&frames, &mut sink, WallClock::new(), &ReplayConfig { time_scale: scale, ..Default::default() }, None)
                .unwrap();
            let mut got = Vec::new();
            let mut buf = Vec::new();
            while source.recv(&mut buf).unwrap() {
                got.push(buf.clone());
            }
            assert!(got.iter().eq(frames.iter().map(|f| &f.bytes)));
            assert!(out.complete);
            assert_eq!(out.streams.len(), 2);
            assert_eq!(out.streams[0].priority, 2);
            assert_eq!((out.streams[0].intended, out.streams[0].sent), (25, 25));
            let expected = 98_000_000.0 / scale;
            let elapsed = out.stats.elapsed_ns as f64;
            assert!(elapsed >= expected && elapsed < expected + 20_000_000.0, "{elapsed}");
        }
    }

    #[test]
    fn replay_restamp_changes_only_timestamps() {
        let frames = vec![SnapshotFrame { delta_ns: 0, bytes: frame(1, 0) }];
        let (mut sink, mut source) = loopback(4);
        let cfg = ReplayConfig { restamp: true, ..Default::default() };
        replay_snapshot(&frames, &mut sink, WallClock::new(), &cfg, None).unwrap();
        let mut buf = Vec::new();
        assert!(source.recv(&mut buf).unwrap());
        let (h, _) = codec::decode_notification(&buf).unwrap();
        assert!(h.send_ts_ns > 0);
        assert_eq!(h.sequence, 0);
        assert_eq!(buf[..15], frames[0].bytes[..15]);
    }

    #[test]
    fn loopback_replay_logs_every_frame() {
        let frames: Vec<SnapshotFrame> = (0..20).map(|i| SnapshotFrame { delta_ns: 100_000, bytes: frame(3, i) }).collect();
        let run = run_loopback_replay(
            &frames,
            &TransportConfig::default(),
            &ReplayConfig { restamp: true, ..Default::default() },
            LogWriter::new(Vec::new()).unwrap(),
        )
        .unwrap();
        assert!(run.publisher.complete);
        assert_eq!(run.subscriber.records, 20);
        assert_eq!(run.publisher.streams[0].sent, 20);
    }

    #[test]
    fn replay_rejects_bad_scale() {
        let (mut sink, _source) = loopback(4);
        let cfg = ReplayConfig { time_scale: 0.0, ..Default::default() };
        assert!(replay_snapshot(&[], &mut sink, WallClock::new(), &cfg, None).is_err());
    }
}
