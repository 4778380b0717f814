use std::fmt::Write as _;
use std::io::Write as _;
use std::net::{TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use wrench_core::clock::WallClock;
use wrench_core::config::{select_keys, RunSettings, SETTINGS_KEYS};
use wrench_core::engine::{
    default_workers, loopback_capture, publish_workload, read_snapshot, record_snapshot, replay_snapshot,
    run_loopback, run_loopback_replay, run_subscriber, snapshot_span_ns, CaptureLimit, PublishOutcome,
    PublisherConfig, ReplayConfig, SnapshotReader, SnapshotWriter, SubscriberConfig,
};
use wrench_core::kv::KvDoc;
use wrench_core::latlog::{convert_to_csv, csv_to_log, summarize, GroupBy, LogWriter};
use wrench_core::manifest::RunManifest;
use wrench_core::scenario::{builtin_names, run_scenario, verify_log, ScenarioDef};
use wrench_core::transport::{accept_tcp, FrameSink, TcpSink, TransportKind};
use wrench_core::workload::{RateProfile, RateSegment, WorkloadSpec, WORKLOAD_KEYS};

use crate::args::{
    Command, ConvertArgs, Format, GenProfileArgs, ProfileKind, PublishArgs, RecordArgs, ReportArgs, ScenarioArgs,
    SubscribeArgs, VerifyArgs,
};
use crate::layers;

/// Keys understood by the CLI on top of workload and run settings. One
/// config file can serve both the publisher and the subscriber side.
const CLI_KEYS: &[&str] = &[
    "workload",
    "snapshot",
    "time_scale",
    "restamp",
    "duration",
    "out_dir",
    "log",
    "manifest",
    "run_id",
    "live",
    "listen",
    "connections",
];

const DEFAULT_OUT_DIR: &str = "wrench-run";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    VerifyFailed,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input paths; nothing was sent.
    Config(anyhow::Error),
    /// The run itself failed.
    Run(anyhow::Error),
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn run(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn run(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

pub fn dispatch(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Publish(a) => publish(a),
        Command::Subscribe(a) => subscribe(a),
        Command::Record(a) => record(a),
        Command::Verify(a) => verify(a),
        Command::Convert(a) => convert(a),
        Command::Report(a) => report(a),
        Command::GenProfile(a) => gen_profile(a),
        Command::Scenario(a) => scenario(a),
    }
}

fn known_keys() -> Vec<&'static str> {
    WORKLOAD_KEYS.iter().chain(SETTINGS_KEYS).chain(CLI_KEYS).copied().collect()
}

fn merged(config: Option<&Path>, flags: &KvDoc) -> Result<KvDoc, Failure> {
    let doc = layers::merge(config, flags).config()?;
    doc.check_keys(&known_keys()).config()?;
    Ok(doc)
}

fn bool_key(doc: &KvDoc, key: &str) -> Result<bool, Failure> {
    doc.get(key).map(|e| e.parse_bool()).transpose().config().map(|b| b.unwrap_or(false))
}

fn path_key(doc: &KvDoc, key: &str) -> Option<PathBuf> {
    doc.get(key).map(|e| PathBuf::from(&e.value))
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{} does not exist or is not a file", path.display());
    }
    Ok(())
}

/// Checks that `path` can be created as a file: it is not a directory and
/// its nearest existing ancestor is a directory.
fn check_output(path: &Path) -> anyhow::Result<()> {
    if path.is_dir() {
        bail!("{} is a directory", path.display());
    }
    let mut ancestor = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    while !ancestor.exists() {
        ancestor = ancestor.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    }
    if !ancestor.is_dir() {
        bail!("cannot create {}: {} is not a directory", path.display(), ancestor.display());
    }
    Ok(())
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn resolve_listen(addr: &str) -> anyhow::Result<()> {
    match addr.to_socket_addrs().map(|mut it| it.next()) {
        Ok(Some(_)) => Ok(()),
        _ => bail!("cannot resolve listen address {addr:?}; expected host:port"),
    }
}

/// Cuts `profile` off after `seconds` of run time.
fn truncate(profile: &RateProfile, seconds: u64) -> anyhow::Result<RateProfile> {
    if seconds == 0 {
        bail!("duration must be at least 1 second");
    }
    let mut left = seconds;
    let mut segments = Vec::new();
    for s in profile.effective() {
        if left == 0 {
            break;
        }
        let d = s.duration_s.min(left);
        segments.push(RateSegment::new(d, s.rate)?);
        left -= d;
    }
    Ok(RateProfile::new(segments)?)
}

struct Workload {
    spec: WorkloadSpec,
    label: String,
    /// Rate factor applied, for the manifest.
    scale: f64,
}

fn load_workload(doc: &KvDoc) -> Result<Workload, Failure> {
    if let Some(p) = path_key(doc, "workload") {
        require_file(&p).context("workload").config()?;
    }
    if let Some(p) = path_key(doc, "profile") {
        require_file(&p).context("rate profile").config()?;
    }
    let mut spec = WorkloadSpec::from_kv(&select_keys(doc, WORKLOAD_KEYS), Path::new(".")).config()?;
    let scale = spec.profile.scale();
    if let Some(e) = doc.get("duration") {
        spec.profile = truncate(&spec.profile, e.parse().config()?).config()?;
    }
    let label = if let Some(e) = doc.get("workload") {
        format!("workload:{}", e.value)
    } else if let Some(e) = doc.get("profile") {
        format!("profile:{}", e.value)
    } else if doc.get("segment").is_some() {
        "segments".to_string()
    } else {
        "feed-default".to_string()
    };
    Ok(Workload { spec, label, scale })
}

enum Source {
    Workload(Workload),
    Snapshot { path: PathBuf, replay: ReplayConfig },
}

struct PublishPlan {
    source: Source,
    settings: RunSettings,
    workers: usize,
    seed: u64,
    out_dir: PathBuf,
    log: Option<PathBuf>,
    manifest: PathBuf,
    rates: PathBuf,
    run_id: Option<String>,
    live: bool,
}

fn plan_publish(args: &PublishArgs) -> Result<PublishPlan, Failure> {
    let doc = merged(args.common.config.as_deref(), &args.to_kv())?;
    let mut settings = RunSettings::from_kv(&doc).config()?;
    let (source, seed) = match path_key(&doc, "snapshot") {
        Some(path) => {
            let workload_keys: Vec<&str> = WORKLOAD_KEYS.iter().copied().filter(|k| *k != "seed").collect();
            if let Some(e) = doc.entries().iter().find(|e| workload_keys.contains(&e.key.as_str()) || e.key == "duration") {
                let hint = if e.key == "scale" { "; use --time-scale to change replay speed" } else { "" };
                return Err(Failure::Config(anyhow!("`{}` cannot be combined with a snapshot{hint}", e.key)));
            }
            require_file(&path).context("snapshot").config()?;
            SnapshotReader::open(&path).with_context(|| format!("snapshot {}", path.display())).config()?;
            let time_scale = match doc.get("time_scale") {
                Some(e) => e.parse::<f64>().config()?,
                None => 1.0,
            };
            if !(time_scale.is_finite() && time_scale > 0.0) {
                return Err(Failure::Config(anyhow!("time_scale must be positive, got {time_scale}")));
            }
            if settings.transport.kind == TransportKind::LoopbackFaulty {
                return Err(Failure::Config(anyhow!("snapshot replay does not support loopback-faulty")));
            }
            let replay = ReplayConfig {
                time_scale,
                restamp: bool_key(&doc, "restamp")?,
                pacing: settings.pacing,
            };
            let seed = doc.get("seed").map(|e| e.parse()).transpose().config()?.unwrap_or(0);
            (Source::Snapshot { path, replay }, seed)
        }
        None => {
            for key in ["time_scale", "restamp"] {
                if doc.get(key).is_some() {
                    return Err(Failure::Config(anyhow!("`{key}` only applies to snapshot replay")));
                }
            }
            let w = load_workload(&doc)?;
            let seed = w.spec.seed;
            (Source::Workload(w), seed)
        }
    };
    settings.transport.faults.seed = seed;
    settings.transport.validate().config()?;

    let workers = match (&source, settings.workers) {
        (Source::Snapshot { .. }, Some(w)) if w > 1 => {
            log::warn!("snapshot replay uses one connection; ignoring workers = {w}");
            1
        }
        (Source::Snapshot { .. }, _) => 1,
        (Source::Workload(_), w) => w.unwrap_or_else(default_workers),
    };
    let out_dir = path_key(&doc, "out_dir").unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let in_process = settings.transport.kind != TransportKind::Tcp;
    let log = match (in_process, path_key(&doc, "log")) {
        (true, p) => Some(p.unwrap_or_else(|| out_dir.join("latency.wrll"))),
        (false, Some(_)) => {
            return Err(Failure::Config(anyhow!(
                "the latency log of a tcp run is written by `wrench subscribe`"
            )))
        }
        (false, None) => None,
    };
    let manifest = path_key(&doc, "manifest").unwrap_or_else(|| out_dir.join("manifest.txt"));
    let rates = out_dir.join("rates.csv");
    for p in log.iter().chain([&manifest, &rates]) {
        check_output(p).config()?;
    }
    Ok(PublishPlan {
        source,
        settings,
        workers,
        seed,
        out_dir,
        log,
        manifest,
        rates,
        run_id: doc.get("run_id").map(|e| e.value.clone()),
        live: bool_key(&doc, "live")?,
    })
}

fn render_plan(plan: &PublishPlan) -> anyhow::Result<String> {
    let mut out = String::new();
    match &plan.source {
        Source::Workload(w) => {
            writeln!(out, "source        {}", w.label)?;
            writeln!(out, "intended      {}", w.spec.profile.expected_total()?)?;
            writeln!(out, "duration      {} s", w.spec.profile.total_duration_s())?;
            writeln!(out, "seed          {}", w.spec.seed)?;
        }
        Source::Snapshot { path, replay } => {
            writeln!(out, "source        snapshot:{}", path.display())?;
            writeln!(out, "time_scale    {}", replay.time_scale)?;
            writeln!(out, "restamp       {}", replay.restamp)?;
        }
    }
    let t = &plan.settings.transport;
    writeln!(out, "transport     {}", t.kind)?;
    if let Some(ep) = t.endpoint.as_ref().filter(|_| t.kind == TransportKind::Tcp) {
        writeln!(out, "endpoint      {ep}")?;
    }
    writeln!(out, "workers       {}", plan.workers)?;
    if let Some(log) = &plan.log {
        writeln!(out, "log           {}", log.display())?;
    }
    writeln!(out, "manifest      {}", plan.manifest.display())?;
    Ok(out)
}

fn render_publish(outcome: &PublishOutcome, manifest: &Path, log: Option<(&Path, u64)>) -> String {
    let mut out = String::new();
    let s = &outcome.stats;
    let _ = writeln!(out, "intended      {}", outcome.streams.iter().map(|p| p.intended).sum::<u64>());
    let _ = writeln!(out, "sent          {}", outcome.total_sent());
    let _ = writeln!(out, "elapsed       {:.3} s", s.elapsed_ns as f64 / 1e9);
    let _ = writeln!(out, "sustained     {:.0} msg/s", outcome.sustained_rate());
    let _ = writeln!(out, "slippage      {:.4}%", s.slippage() * 100.0);
    let _ = writeln!(out, "complete      {}", outcome.complete);
    let _ = writeln!(out, "manifest      {}", manifest.display());
    if let Some((path, records)) = log {
        let _ = writeln!(out, "log           {} ({records} records)", path.display());
    }
    out
}

fn publish(args: &PublishArgs) -> Result<Outcome, Failure> {
    let plan = plan_publish(args)?;
    if args.common.dry_run {
        print!("{}", render_plan(&plan).config()?);
        println!("dry run: configuration valid");
        return Ok(Outcome::Done);
    }
    std::fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating {}", plan.out_dir.display()))
        .run()?;
    for p in plan.log.iter().chain([&plan.manifest]) {
        create_parent(p).run()?;
    }
    let transport = &plan.settings.transport;
    let publisher = PublisherConfig {
        workers: plan.workers,
        first_stream_id: 0,
        pacing: plan.settings.pacing,
        live: plan.live,
        stop: None,
    };

    let (outcome, faults, subscribed, source_label, scale) = match &plan.source {
        Source::Workload(w) => match &plan.log {
            Some(log) => {
                let writer = LogWriter::create(log).run()?;
                let run = run_loopback(&w.spec, transport, &publisher, writer).run()?;
                (run.publisher, run.faults, Some(run.subscriber), w.label.clone(), w.scale)
            }
            None => {
                let ep = transport.endpoint.as_deref().expect("validated tcp endpoint");
                let sinks = (0..plan.workers)
                    .map(|_| TcpSink::connect(ep).map(|s| Box::new(s) as Box<dyn FrameSink>))
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("connecting to {ep}"))
                    .run()?;
                let outcome = publish_workload(&w.spec, sinks, WallClock::new(), &publisher).run()?;
                (outcome, Default::default(), None, w.label.clone(), w.scale)
            }
        },
        Source::Snapshot { path, replay } => {
            let frames = read_snapshot(path).run()?;
            let label = format!("snapshot:{}", path.display());
            match &plan.log {
                Some(log) => {
                    let writer = LogWriter::create(log).run()?;
                    let run = run_loopback_replay(&frames, transport, replay, writer).run()?;
                    (run.publisher, run.faults, Some(run.subscriber), label, 1.0)
                }
                None => {
                    let ep = transport.endpoint.as_deref().expect("validated tcp endpoint");
                    let mut sink = TcpSink::connect(ep).with_context(|| format!("connecting to {ep}")).run()?;
                    let outcome = replay_snapshot(&frames, &mut sink, WallClock::new(), replay, None).run()?;
                    (outcome, Default::default(), None, label, 1.0)
                }
            }
        }
    };

    let run_id = plan.run_id.clone().unwrap_or_else(|| format!("run-{}", outcome.start_wall_ns));
    let manifest = outcome.manifest(&run_id, &source_label, &transport.kind.to_string(), plan.seed, scale, faults);
    manifest.write(&plan.manifest).run()?;
    std::fs::write(&plan.rates, outcome.rates.to_csv())
        .with_context(|| format!("writing {}", plan.rates.display()))
        .run()?;
    let logged = plan.log.as_deref().zip(subscribed.as_ref().map(|s| s.records));
    print!("{}", render_publish(&outcome, &plan.manifest, logged));

    if let Some(f) = &outcome.failure {
        return Err(Failure::Run(anyhow!("publisher stopped early: {f}")));
    }
    if let Some(sub) = &subscribed {
        if let Some(f) = &sub.failure {
            return Err(Failure::Run(anyhow!("subscriber failed: {f}")));
        }
        if sub.corrupt > 0 {
            log::warn!("{} frames failed to decode and were not logged", sub.corrupt);
        }
    }
    Ok(Outcome::Done)
}

fn bind(addr: &str) -> Result<TcpListener, Failure> {
    let listener = TcpListener::bind(addr).with_context(|| format!("listening on {addr}")).run()?;
    let local = listener.local_addr().run()?;
    eprintln!("listening on {local}");
    Ok(listener)
}

fn subscribe(args: &SubscribeArgs) -> Result<Outcome, Failure> {
    let doc = merged(args.common.config.as_deref(), &args.to_kv())?;
    let listen = doc
        .get("listen")
        .map(|e| e.value.clone())
        .ok_or_else(|| Failure::Config(anyhow!("--listen host:port is required")))?;
    resolve_listen(&listen).config()?;
    let connections: usize = doc.get("connections").map(|e| e.parse()).transpose().config()?.unwrap_or(1);
    if connections == 0 {
        return Err(Failure::Config(anyhow!("connections must be at least 1")));
    }
    let log = path_key(&doc, "log").unwrap_or_else(|| match path_key(&doc, "out_dir") {
        Some(dir) => dir.join("latency.wrll"),
        None => PathBuf::from("latency.wrll"),
    });
    check_output(&log).config()?;
    let live = bool_key(&doc, "live")?;
    if args.common.dry_run {
        println!("listen        {listen}");
        println!("connections   {connections}");
        println!("log           {}", log.display());
        println!("dry run: configuration valid");
        return Ok(Outcome::Done);
    }
    create_parent(&log).run()?;
    let writer = LogWriter::create(&log).run()?;
    let listener = bind(&listen)?;
    let sources = accept_tcp(&listener, connections).collect::<Result<Vec<_>, _>>().run()?;
    let config = SubscriberConfig {
        live,
        ..SubscriberConfig::default()
    };
    let outcome = run_subscriber(sources, writer, WallClock::new(), &config).run()?;
    println!("records       {}", outcome.records);
    println!("corrupt       {}", outcome.corrupt);
    println!("log           {}", log.display());
    if let Some(f) = outcome.failure {
        return Err(Failure::Run(anyhow!("subscriber failed: {f}")));
    }
    Ok(Outcome::Done)
}

fn record(args: &RecordArgs) -> Result<Outcome, Failure> {
    let doc = merged(args.common.config.as_deref(), &args.to_kv())?;
    check_output(&args.out).config()?;
    match doc.get("listen").map(|e| e.value.clone()) {
        Some(listen) => {
            resolve_listen(&listen).config()?;
            let duration = args
                .max_seconds
                .map(|s| Duration::try_from_secs_f64(s).map_err(|_| anyhow!("max-seconds must be a non-negative number")))
                .transpose()
                .config()?;
            if args.common.dry_run {
                println!("capture       tcp {listen}");
                println!("out           {}", args.out.display());
                println!("dry run: configuration valid");
                return Ok(Outcome::Done);
            }
            create_parent(&args.out).run()?;
            let mut writer = SnapshotWriter::create(&args.out).run()?;
            let listener = bind(&listen)?;
            let mut source = accept_tcp(&listener, 1).next().expect("one connection").run()?;
            let limit = CaptureLimit {
                max_frames: args.max_frames,
                duration,
            };
            let outcome = record_snapshot(&mut source, &mut writer, limit).run()?;
            writer.finish().run()?;
            println!("frames        {}", outcome.frames);
            println!("span          {:.3} s", outcome.span_ns as f64 / 1e9);
        }
        None => {
            if args.max_frames.is_some() || args.max_seconds.is_some() {
                return Err(Failure::Config(anyhow!(
                    "--max-frames and --max-seconds apply to tcp capture; use --duration for a synthetic workload"
                )));
            }
            let w = load_workload(&doc)?;
            if args.common.dry_run {
                println!("capture       {}", w.label);
                println!("intended      {}", w.spec.profile.expected_total().config()?);
                println!("out           {}", args.out.display());
                println!("dry run: configuration valid");
                return Ok(Outcome::Done);
            }
            create_parent(&args.out).run()?;
            let frames = loopback_capture(&w.spec, &args.out).run()?;
            let span = snapshot_span_ns(&read_snapshot(&args.out).run()?);
            println!("frames        {frames}");
            println!("span          {:.3} s", span as f64 / 1e9);
        }
    }
    println!("snapshot      {}", args.out.display());
    Ok(Outcome::Done)
}

fn verify(args: &VerifyArgs) -> Result<Outcome, Failure> {
    let doc = merged(args.common.config.as_deref(), &args.to_kv())?;
    let settings = RunSettings::from_kv(&doc).config()?;
    require_file(&args.log).context("latency log").config()?;
    let manifest = args
        .manifest
        .as_deref()
        .map(|p| RunManifest::read(p).with_context(|| format!("manifest {}", p.display())))
        .transpose()
        .config()?;
    if args.common.dry_run {
        println!("dry run: configuration valid");
        return Ok(Outcome::Done);
    }
    if manifest.is_none() {
        log::warn!("no manifest given: completeness cannot be judged and the run cannot pass");
    }
    let (report, trailing) = verify_log(&args.log, manifest.as_ref(), settings.slo).run()?;
    if trailing > 0 {
        log::warn!("log ends with {trailing} bytes of a partial record");
    }
    match args.format {
        Format::Table => print!("{}", report.to_table()),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(if report.passed() { Outcome::Done } else { Outcome::VerifyFailed })
}

fn convert(args: &ConvertArgs) -> Result<Outcome, Failure> {
    let input = args.log.as_deref().or(args.csv.as_deref()).expect("clap requires one input");
    require_file(input).config()?;
    check_output(&args.out).config()?;
    if args.dry_run {
        println!("dry run: configuration valid");
        return Ok(Outcome::Done);
    }
    if args.log.is_some() {
        let outcome = convert_to_csv(input, &args.out).run()?;
        if outcome.truncated_bytes > 0 {
            log::warn!("log ends with {} bytes of a partial record", outcome.truncated_bytes);
        }
        println!("{}", outcome.rows);
    } else {
        println!("{}", csv_to_log(input, &args.out).run()?);
    }
    Ok(Outcome::Done)
}

fn report(args: &ReportArgs) -> Result<Outcome, Failure> {
    let group_by: GroupBy = args.group_by.parse().map_err(|e: String| Failure::Config(anyhow!(e)))?;
    require_file(&args.log).config()?;
    let summary = summarize(&args.log, group_by).run()?;
    match args.format {
        Format::Table => print!("{}", summary.to_table()),
        Format::Csv => print!("{}", summary.to_csv()),
    }
    Ok(Outcome::Done)
}

/// Example profile of the given kind, before scaling.
pub fn example_profile(kind: ProfileKind, rate: f64, duration_s: u64) -> anyhow::Result<RateProfile> {
    let segments: Vec<(u64, f64)> = match kind {
        ProfileKind::SnapshotMean => return Ok(RateProfile::snapshot_mean()),
        ProfileKind::Flat => vec![(duration_s, rate)],
        ProfileKind::Ramp => {
            if duration_s == 0 {
                bail!("duration must be at least 1 second");
            }
            let steps = duration_s.max(2) - 1;
            (0..duration_s)
                .map(|i| (1, (rate * (0.1 + 0.9 * i.min(steps) as f64 / steps as f64)).round()))
                .collect()
        }
        ProfileKind::PeakBurst => [100_000.0, 250_000.0, 400_000.0, 550_000.0, 700_000.0]
            .into_iter()
            .map(|r| (2, r))
            .collect(),
        ProfileKind::Session => vec![(5, 700_000.0), (10, 450_000.0), (30, 250_000.0), (10, 400_000.0), (5, 650_000.0)],
    };
    let segments = segments
        .into_iter()
        .map(|(d, r)| RateSegment::new(d, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RateProfile::new(segments)?)
}

fn gen_profile(args: &GenProfileArgs) -> Result<Outcome, Failure> {
    let mut profile = example_profile(args.kind, args.rate, args.duration).config()?;
    if let Some(s) = args.scale {
        profile = profile.scaled(s).config()?;
    }
    let text = profile.to_csv();
    match &args.out {
        Some(path) => {
            check_output(path).config()?;
            create_parent(path).run()?;
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).run()?;
        }
        None => std::io::stdout().write_all(text.as_bytes()).run()?,
    }
    Ok(Outcome::Done)
}

fn scenario(args: &ScenarioArgs) -> Result<Outcome, Failure> {
    if args.list {
        for name in builtin_names() {
            let def = ScenarioDef::builtin(name).config()?;
            println!("{name:<14} {}", def.description);
        }
        return Ok(Outcome::Done);
    }
    let def = match (&args.name, &args.file) {
        (_, Some(path)) => ScenarioDef::read(path).config()?,
        (Some(name), None) => ScenarioDef::builtin(name).config()?,
        (None, None) => return Err(Failure::Config(anyhow!("give a scenario name or --file"))),
    };
    let dir = args.out_dir.clone().unwrap_or_else(|| Path::new("runs").join(&def.name));
    check_output(&dir.join("manifest.txt")).config()?;
    if args.dry_run {
        println!("scenario      {}", def.name);
        println!("intended      {}", def.spec.profile.expected_total().config()?);
        println!("duration      {} s", def.spec.profile.total_duration_s());
        println!("transport     {}", def.settings.transport.kind);
        let criteria: Vec<String> = def.criteria.iter().map(|c| c.to_string()).collect();
        println!("criteria      {}", criteria.join(","));
        println!("run dir       {}", dir.display());
        println!("dry run: configuration valid");
        return Ok(Outcome::Done);
    }
    let outcome = run_scenario(&def, &dir).run()?;
    print!("{}", outcome.render());
    println!("artifacts     {}", dir.display());
    Ok(if outcome.passed() { Outcome::Done } else { Outcome::VerifyFailed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncate_cuts_across_segments() {
        let p = RateProfile::new(vec![RateSegment::new(3, 10.0).unwrap(), RateSegment::new(5, 20.0).unwrap()]).unwrap();
        let t = truncate(&p, 4).unwrap();
        assert_eq!(t.expected_total().unwrap(), 3 * 10 + 20);
        assert_eq!(truncate(&p, 100).unwrap().expected_total().unwrap(), 130);
        assert!(truncate(&p, 0).is_err());
    }

    #[test]
    fn truncate_keeps_scaled_rates() {
        let p = RateProfile::flat(10, 100.0).unwrap().scaled(2.0).unwrap();
        assert_eq!(truncate(&p, 2).unwrap().expected_total().unwrap(), 400);
    }

    #[test]
    fn example_profiles() {
        let snap = example_profile(ProfileKind::SnapshotMean, 0.0, 0).unwrap();
        assert_eq!(snap.expected_total().unwrap(), 18_023_640);
        assert_eq!(snap.total_duration_s(), 60);
        let ramp = example_profile(ProfileKind::Ramp, 1000.0, 10).unwrap();
        let rates: Vec<f64> = ramp.effective().map(|s| s.rate).collect();
        assert_eq!(rates.first(), Some(&100.0));
        assert_eq!(rates.last(), Some(&1000.0));
        assert!(rates.windows(2).all(|w| w[0] <= w[1]));
        let peak = example_profile(ProfileKind::PeakBurst, 0.0, 0).unwrap();
        assert_eq!(peak.effective().map(|s| s.rate).fold(0.0, f64::max), 700_000.0);
        assert_eq!(example_profile(ProfileKind::Session, 0.0, 0).unwrap().total_duration_s(), 60);
        assert_eq!(example_profile(ProfileKind::Flat, 5.0, 4).unwrap().expected_total().unwrap(), 20);
    }

    #[test]
    fn output_checks() {
        let dir = tempfile::tempdir().unwrap();
        assert!(check_output(&dir.path().join("a/b/c.wrll")).is_ok());
        assert!(check_output(dir.path()).is_err());
        let file = dir.path().join("f");
        std::fs::write(&file, "").unwrap();
        assert!(check_output(&file.join("x")).is_err());
    }
}
