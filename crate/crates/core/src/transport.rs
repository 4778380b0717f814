//! Frame delivery between publisher and subscriber.
//!
//! Shipped transports:
//!
//! * `loopback`: bounded in-process channel, exactly-once and FIFO per
//!   producer. Buffers are recycled back to producers so the steady state
//!   does not allocate.
//! * `loopback-faulty`: loopback behind a seeded fault injector that drops,
//!   duplicates and delays frames and keeps an exact ledger of what it did.
//! * `tcp`: length-prefixed frames over a TCP stream, Nagle disabled.
//!
//! Adapters for external brokers plug in by implementing [`FrameSink`] and
//! [`FrameSource`].

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crossbeam_channel::{Receiver, Sender, TryRecvError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{peek_stream_sequence, read_frame, write_frame, FrameRead};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("connection closed")]
    Closed,
    #[error("connection closed mid-stream: {0}")]
    ClosedMidStream(String),
    #[error("transport i/o: {0}")]
    Io(#[from] io::Error),
    #[error("invalid transport configuration: {0}")]
    Config(String),
}

/// Publishing end of a connection. Owned by one worker.
pub trait FrameSink: Send {
    /// Sends one frame. Blocks while the transport is full.
    fn publish(&mut self, frame: &[u8]) -> Result<(), TransportError>;

    /// Pushes buffered frames to the wire. Called before the publisher idles.
    fn flush(&mut self) -> Result<(), TransportError> {
        Ok(())
    }

    /// Marks a clean end of run.
    fn finish(&mut self) -> Result<(), TransportError>;
}

/// Receiving end of a connection.
pub trait FrameSource: Send {
    /// Fills `buf` with the next frame. `Ok(false)` is a clean end of run.
    fn recv(&mut self, buf: &mut Vec<u8>) -> Result<bool, TransportError>;
}

impl<T: FrameSink + ?Sized> FrameSink for Box<T> {
    fn publish(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (**self).publish(frame)
    }
    fn flush(&mut self) -> Result<(), TransportError> {
        (**self).flush()
    }
    fn finish(&mut self) -> Result<(), TransportError> {
        (**self).finish()
    }
}

impl<T: FrameSource + ?Sized> FrameSource for Box<T> {
    fn recv(&mut self, buf: &mut Vec<u8>) -> Result<bool, TransportError> {
        (**self).recv(buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Loopback,
    LoopbackFaulty,
    Tcp,
}

impl std::str::FromStr for TransportKind {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loopback" => Ok(Self::Loopback),
            "loopback-faulty" => Ok(Self::LoopbackFaulty),
            "tcp" => Ok(Self::Tcp),
            other => Err(TransportError::Config(format!(
                "unknown transport {other:?} (expected loopback, loopback-faulty or tcp)"
            ))),
        }
    }
}

impl std::fmt::Display for TransportKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Loopback => "loopback",
            Self::LoopbackFaulty => "loopback-faulty",
            Self::Tcp => "tcp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultParams {
    pub drop_prob: f64,
    pub dup_prob: f64,
    pub reorder_prob: f64,
    /// A delayed frame is released after this many frames, counting itself.
    pub reorder_window: usize,
    pub seed: u64,
}

impl Default for FaultParams {
    fn default() -> Self {
        Self {
            drop_prob: 0.0,
            dup_prob: 0.0,
            reorder_prob: 0.0,
            reorder_window: 2,
            seed: 0,
        }
    }
}

impl FaultParams {
    pub fn validate(&self) -> Result<(), TransportError> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("dup_prob", self.dup_prob),
            ("reorder_prob", self.reorder_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(TransportError::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.reorder_prob > 0.0 && self.reorder_window < 2 {
            return Err(TransportError::Config(
                "reorder_window must be at least 2 when reorder_prob > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub kind: TransportKind,
    pub endpoint: Option<String>,
    pub faults: FaultParams,
    pub queue_capacity: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            kind: TransportKind::Loopback,
            endpoint: None,
            faults: FaultParams::default(),
            queue_capacity: 65_536,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<(), TransportError> {
        if self.queue_capacity < 1 {
            return Err(TransportError::Config("queue_capacity must be at least 1".into()));
        }
        match self.kind {
            TransportKind::Tcp => match &self.endpoint {
                Some(ep) if ep.to_socket_addrs().is_ok() => Ok(()),
                Some(ep) => Err(TransportError::Config(format!("cannot resolve endpoint {ep:?}"))),
                None => Err(TransportError::Config("tcp transport needs an endpoint host:port".into())),
            },
            TransportKind::LoopbackFaulty => self.faults.validate(),
            TransportKind::Loopback => Ok(()),
        }
    }
}

/// Creates a bounded loopback channel holding at most `capacity` frames.
pub fn loopback(capacity: usize) -> (LoopbackSink, LoopbackSource) {
    let (tx, rx) = crossbeam_channel::bounded(capacity.max(1));
    let (free_tx, free_rx) = crossbeam_channel::bounded(capacity.max(1));
    let open = Arc::new(AtomicUsize::new(1));
    (
        LoopbackSink {
            tx: Some(tx),
            free: free_rx,
            open: Arc::clone(&open),
        },
        LoopbackSource { rx, free: free_tx, open },
    )
}

/// Producer handle of a loopback channel; clone one per worker.
#[derive(Debug)]
pub struct LoopbackSink {
    tx: Option<Sender<Vec<u8>>>,
    free: Receiver<Vec<u8>>,
    open: Arc<AtomicUsize>,
}

impl Clone for LoopbackSink {
    fn clone(&self) -> Self {
        if self.tx.is_some() {
            self.open.fetch_add(1, Ordering::SeqCst);
        }
        Self {
            tx: self.tx.clone(),
            free: self.free.clone(),
            open: Arc::clone(&self.open),
        }
    }
}

impl FrameSink for LoopbackSink {
    fn publish(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        let tx = self.tx.as_ref().ok_or(TransportError::Closed)?;
        let mut buf = match self.free.try_recv() {
            Ok(b) => b,
            Err(TryRecvError::Empty | TryRecvError::Disconnected) => Vec::with_capacity(frame.len()),
        };
        buf.clear();
        buf.extend_from_slice(frame);
        tx.send(buf).map_err(|_| TransportError::Closed)
    }

    fn finish(&mut self) -> Result<(), TransportError> {
        if self.tx.take().is_some() {
            self.open.fetch_sub(1, Ordering::SeqCst);
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct LoopbackSource {
    rx: Receiver<Vec<u8>>,
    free: Sender<Vec<u8>>,
    open: Arc<AtomicUsize>,
}

impl FrameSource for LoopbackSource {
    fn recv(&mut self, buf: &mut Vec<u8>) -> Result<bool, TransportError> {
        match self.rx.recv() {
            Ok(frame) => {
                let spent = std::mem::replace(buf, frame);
                let _ = self.free.try_send(spent);
                Ok(true)
            }
            Err(_) => match self.open.load(Ordering::SeqCst) {
                0 => Ok(false),
                n => Err(TransportError::ClosedMidStream(format!(
                    "{n} producer(s) went away without finishing"
                ))),
            },
        }
    }
}

/// What the fault injector did to one stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamFaults {
    /// Frames handed to the injector.
    pub offered: u64,
    pub dropped: u64,
    /// Frames forwarded twice.
    pub duplicated: u64,
    /// Frames held back by the reorder window.
    pub delayed: u64,
    /// First deliveries whose sequence is below one already delivered.
    pub out_of_order: u64,
    /// Frames actually forwarded, copies included.
    pub delivered: u64,
}

/// Per-stream fault records shared by every injector of a run.
pub type FaultLedger = Arc<Mutex<BTreeMap<u32, StreamFaults>>>;

pub fn new_fault_ledger() -> FaultLedger {
    Arc::new(Mutex::new(BTreeMap::new()))
}

/// Seeded fault injector in front of another sink.
///
/// Every offered frame consumes exactly three uniform draws (drop, duplicate,
/// delay), so a given `(seed, stream_id)` always produces the same faults.
pub struct FaultySink<S> {
    inner: S,
    params: FaultParams,
    stream_id: u32,
    rng: ChaCha8Rng,
    index: u64,
    held: VecDeque<(u64, Vec<u8>, u8)>,
    max_delivered: Option<u64>,
    counts: StreamFaults,
    ledger: FaultLedger,
    finished: bool,
}

impl<S: FrameSink> FaultySink<S> {
    pub fn new(inner: S, params: FaultParams, stream_id: u32, ledger: FaultLedger) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(stream_id as u64);
        Self {
            inner,
            params,
            stream_id,
            rng,
            index: 0,
            held: VecDeque::new(),
            max_delivered: None,
            counts: StreamFaults::default(),
            ledger,
            finished: false,
        }
    }

    pub fn counts(&self) -> StreamFaults {
        self.counts
    }

    fn deliver(&mut self, frame: &[u8], copies: u8) -> Result<(), TransportError> {
        if let Some((_, seq)) = peek_stream_sequence(frame) {
            match self.max_delivered {
                Some(max) if seq < max => self.counts.out_of_order += 1,
                Some(max) if seq == max => {}
                _ => self.max_delivered = Some(seq),
            }
        }
        for _ in 0..copies {
            self.inner.publish(frame)?;
            self.counts.delivered += 1;
        }
        Ok(())
    }

    fn release_due(&mut self, upto: u64) -> Result<(), TransportError> {
        while self.held.front().is_some_and(|(due, _, _)| *due <= upto) {
            let (_, frame, copies) = self.held.pop_front().unwrap();
            self.deliver(&frame, copies)?;
        }
        Ok(())
    }

    fn record(&self) {
        let mut ledger = self.ledger.lock().unwrap_or_else(|e| e.into_inner());
        ledger.insert(self.stream_id, self.counts);
    }
}

impl<S: FrameSink> FrameSink for FaultySink<S> {
    fn publish(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        let idx = self.index;
        self.index += 1;
        self.counts.offered += 1;
        let drop_roll: f64 = self.rng.random();
        let dup_roll: f64 = self.rng.random();
        let delay_roll: f64 = self.rng.random();
        if drop_roll < self.params.drop_prob {
            self.counts.dropped += 1;
        } else {
            let copies = if dup_roll < self.params.dup_prob {
                self.counts.duplicated += 1;
                2
            } else {
                1
            };
            if delay_roll < self.params.reorder_prob {
                self.counts.delayed += 1;
                let due = idx + self.params.reorder_window as u64 - 1;
                self.held.push_back((due, frame.to_vec(), copies));
            } else {
                self.deliver(frame, copies)?;
            }
        }
        self.release_due(idx)
    }

    fn flush(&mut self) -> Result<(), TransportError> {
        self.inner.flush()
    }

    fn finish(&mut self) -> Result<(), TransportError> {
        self.release_due(u64::MAX)?;
        self.finished = true;
        self.record();
        self.inner.finish()
    }
}

impl<S> Drop for FaultySink<S> {
    fn drop(&mut self) {
        if !self.finished {
            let mut ledger = self.ledger.lock().unwrap_or_else(|e| e.into_inner());
            ledger.insert(self.stream_id, self.counts);
        }
    }
}

/// Publishing end of a TCP connection.
pub struct TcpSink {
    stream: BufWriter<TcpStream>,
}

impl TcpSink {
    pub fn connect(endpoint: &str) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream: BufWriter::with_capacity(64 * 1024, stream),
        })
    }
}

impl FrameSink for TcpSink {
    fn publish(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        write_frame(&mut self.stream, frame).map_err(broken)
    }

    fn flush(&mut self) -> Result<(), TransportError> {
        self.stream.flush().map_err(broken)
    }

    /// Sends the zero-length end-of-run frame and half-closes the socket.
    fn finish(&mut self) -> Result<(), TransportError> {
        write_frame(&mut self.stream, &[]).map_err(broken)?;
        self.stream.flush().map_err(broken)?;
        let _ = self.stream.get_ref().shutdown(Shutdown::Write);
        Ok(())
    }
}

fn broken(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => TransportError::Closed,
        _ => TransportError::Io(e),
    }
}

/// Receiving end of a TCP connection.
pub struct TcpSource {
    stream: BufReader<TcpStream>,
    done: bool,
}

impl TcpSource {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(Self {
            stream: BufReader::with_capacity(64 * 1024, stream),
            done: false,
        })
    }
}

impl FrameSource for TcpSource {
    fn recv(&mut self, buf: &mut Vec<u8>) -> Result<bool, TransportError> {
        if self.done {
            return Ok(false);
        }
        match read_frame(&mut self.stream, buf) {
            Ok(FrameRead::Frame) if buf.is_empty() => {
                self.done = true;
                Ok(false)
            }
            Ok(FrameRead::Frame) => Ok(true),
            Ok(FrameRead::Eof) => Err(TransportError::ClosedMidStream(
                "peer closed without end-of-run frame".into(),
            )),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(TransportError::ClosedMidStream("peer closed inside a frame".into()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Accepts `connections` publisher connections, in arrival order.
pub fn accept_tcp(listener: &TcpListener, connections: usize) -> impl Iterator<Item = Result<TcpSource, TransportError>> + '_ {
    (0..connections).map(move |_| {
        let (stream, _) = listener.accept()?;
        TcpSource::new(stream)
    })
}
