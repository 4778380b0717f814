//! Named benchmark scenarios: a workload, run settings and the verdicts that
//! must pass. Built-in definitions are the committed files under
//! `scenarios/`; any file in the same format can be run too.
//!
//! A scenario runs publisher, subscriber and verifier back to back in one
//! process over the loopback transport and leaves its artifacts in a run
//! directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{select_keys, RunSettings, SETTINGS_KEYS};
use crate::engine::{default_workers, run_loopback, EngineError, PublishOutcome, PublisherConfig};
use crate::kv::{KvDoc, KvError};
use crate::latlog::{summarize, GroupBy, LogError, LogWriter, Summary};
use crate::manifest::{ManifestError, RunManifest};
use crate::transport::TransportKind;
use crate::verify::{QoSReport, SloConfig, Verifier, VerifyError};
use crate::workload::{RateProfile, WorkloadError, WorkloadSpec, WORKLOAD_KEYS};

const BUILTIN: &[(&str, &str)] = &[
    ("desk-smoke", include_str!("../scenarios/desk-smoke.conf")),
    ("snapshot60", include_str!("../scenarios/snapshot60.conf")),
    ("peak-burst", include_str!("../scenarios/peak-burst.conf")),
    ("fault-oracle", include_str!("../scenarios/fault-oracle.conf")),
];

const SCENARIO_KEYS: &[&str] = &["name", "description", "criteria", "auto_downscale", "probe_seconds"];

/// Scale factors tried, largest first, when a scenario auto-downscales.
pub const DOWNSCALE_LADDER: &[f64] = &[1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.15, 0.1, 0.05, 0.02, 0.01];

/// Largest schedule slippage a downscale probe may show.
pub const DOWNSCALE_MAX_SLIPPAGE: f64 = 0.001;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?} (known: {known})", known = builtin_names().join(", "))]
    Unknown(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// A verdict a scenario requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Complete,
    ExactlyOnce,
    Ordered,
    LatencySlo,
    /// Verifier counts equal the fault injector's ledger.
    LedgerMatch,
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "complete" => Ok(Self::Complete),
            "exactly_once" => Ok(Self::ExactlyOnce),
            "ordered" => Ok(Self::Ordered),
            "latency_slo" => Ok(Self::LatencySlo),
            "ledger_match" => Ok(Self::LedgerMatch),
            other => Err(format!(
                "unknown criterion {other:?} (expected complete, exactly_once, ordered, latency_slo or ledger_match)"
            )),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Complete => "complete",
            Self::ExactlyOnce => "exactly_once",
            Self::Ordered => "ordered",
            Self::LatencySlo => "latency_slo",
            Self::LedgerMatch => "ledger_match",
        })
    }
}

impl Criterion {
    pub fn check(&self, report: &QoSReport) -> bool {
        let v = &report.verdicts;
        match self {
            Self::Complete => v.complete == Some(true),
            Self::ExactlyOnce => v.exactly_once,
            Self::Ordered => v.ordered,
            Self::LatencySlo => v.latency_slo,
            Self::LedgerMatch => report.ledger.as_ref().is_some_and(|l| l.matches),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDef {
    pub name: String,
    pub description: String,
    pub spec: WorkloadSpec,
    pub settings: RunSettings,
    pub criteria: Vec<Criterion>,
    /// Probe length in seconds when the scenario picks its own scale.
    pub auto_downscale: Option<u64>,
}

impl ScenarioDef {
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
        Self::parse(text, Path::new("."))
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let doc = KvDoc::parse(text)?;
        let known: Vec<&str> = SCENARIO_KEYS
            .iter()
            .chain(SETTINGS_KEYS)
            .chain(WORKLOAD_KEYS)
            .copied()
            .collect();
        doc.check_keys(&known)?;
        let spec = WorkloadSpec::from_kv(&select_keys(&doc, WORKLOAD_KEYS), base_dir)?;
        let mut settings = RunSettings::from_kv(&doc)?;
        settings.transport.faults.seed = spec.seed;
        if settings.transport.kind == TransportKind::Tcp {
            return Err(ScenarioError::Invalid("scenarios run on loopback transports only".into()));
        }
        let criteria = match doc.get("criteria") {
            Some(e) => e
                .value
                .split(',')
                .map(|c| c.parse::<Criterion>().map_err(|err| e.invalid(err)))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![Criterion::Complete, Criterion::ExactlyOnce, Criterion::Ordered],
        };
        let auto = match doc.get("auto_downscale") {
            Some(e) => e.parse_bool()?,
            None => false,
        };
        let probe = match doc.get("probe_seconds") {
            Some(e) => {
                let s: u64 = e.parse()?;
                if s == 0 {
                    return Err(e.invalid("must be at least 1").into());
                }
                s
            }
            None => 3,
        };
        Ok(Self {
            name: doc.require("name")?.value.clone(),
            description: doc.get("description").map(|e| e.value.clone()).unwrap_or_default(),
            spec,
            settings,
            criteria,
            auto_downscale: auto.then_some(probe),
        })
    }

    fn publisher_config(&self) -> PublisherConfig {
        PublisherConfig {
            workers: self.settings.workers.unwrap_or_else(default_workers),
            first_stream_id: 0,
            pacing: self.settings.pacing,
            live: false,
            stop: None,
        }
    }
}

/// Files a run leaves in its directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub dir: PathBuf,
    pub log: PathBuf,
    pub manifest: PathBuf,
    pub rates: PathBuf,
    pub report_txt: PathBuf,
    pub report_csv: PathBuf,
    pub summary_csv: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            log: dir.join("latency.wrll"),
            manifest: dir.join("manifest.txt"),
            rates: dir.join("rates.csv"),
            report_txt: dir.join("report.txt"),
            report_csv: dir.join("report.csv"),
            summary_csv: dir.join("summary.csv"),
        }
    }
}

/// Single-pass verification of a log against its manifest.
pub fn verify_log(log: &Path, manifest: Option<&RunManifest>, slo: SloConfig) -> Result<(QoSReport, usize), ScenarioError> {
    let mut v = Verifier::new();
    let trailing = v.observe_log(log)?;
    Ok((v.finalize(manifest, slo)?, trailing))
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub scale: f64,
    /// Slippage of each downscale probe, largest factor first.
    pub probes: Vec<(f64, f64)>,
    pub manifest: RunManifest,
    pub publisher: PublishOutcome,
    pub report: QoSReport,
    pub summary: Summary,
    pub criteria: Vec<(Criterion, bool)>,
    pub paths: RunPaths,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|(_, ok)| *ok)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let p = &self.publisher;
        let _ = writeln!(out, "scenario      {}", self.name);
        let _ = writeln!(out, "scale         {}", self.scale);
        for (f, s) in &self.probes {
            let _ = writeln!(out, "  probe x{f}: slippage {:.4}%", s * 100.0);
        }
        let _ = writeln!(out, "intended      {}", self.manifest.total_intended());
        let _ = writeln!(out, "sent          {}", p.total_sent());
        let _ = writeln!(out, "received      {}", self.report.total.deliveries);
        let _ = writeln!(out, "elapsed       {:.3} s", p.stats.elapsed_ns as f64 / 1e9);
        let _ = writeln!(out, "sustained     {:.0} msg/s", p.sustained_rate());
        let _ = writeln!(out, "slippage      {:.4}%", p.stats.slippage() * 100.0);
        let _ = writeln!(out, "shift         {:.3} ms", p.stats.shift_ns as f64 / 1e6);
        for (c, ok) in &self.criteria {
            let _ = writeln!(out, "criterion {c:<14} {}", if *ok { "PASS" } else { "FAIL" });
        }
        let _ = writeln!(out, "result        {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn peak_rate(profile: &RateProfile) -> f64 {
    profile.effective().map(|s| s.rate).fold(0.0, f64::max)
}

/// Runs short flat probes at the profile's peak rate, scaled down the ladder,
/// and returns the first factor whose slippage stays under the limit.
fn choose_scale(def: &ScenarioDef, probe_seconds: u64) -> Result<(f64, Vec<(f64, f64)>), ScenarioError> {
    let peak = peak_rate(&def.spec.profile);
    let mut probes = Vec::new();
    for &factor in DOWNSCALE_LADDER {
        let mut spec = def.spec.clone();
        spec.profile = RateProfile::flat(probe_seconds, peak)?.scaled(factor)?;
        let run = run_loopback(
            &spec,
            &def.settings.transport,
            &def.publisher_config(),
            LogWriter::new(std::io::sink())?,
        )?;
        let slip = run.publisher.stats.slippage();
        probes.push((factor, slip));
        log::info!("downscale probe x{factor}: slippage {slip:.5}");
        if run.publisher.complete && slip < DOWNSCALE_MAX_SLIPPAGE {
            return Ok((factor, probes));
        }
    }
    let last = *DOWNSCALE_LADDER.last().expect("non-empty ladder");
    Ok((last, probes))
}

/// Runs a scenario end to end and writes its artifacts into `dir`.
pub fn run_scenario(def: &ScenarioDef, dir: &Path) -> Result<ScenarioOutcome, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = RunPaths::in_dir(dir);
    let (scale, probes) = match def.auto_downscale {
        Some(secs) => choose_scale(def, secs)?,
        None => (1.0, Vec::new()),
    };
    let mut spec = def.spec.clone();
    if scale != 1.0 {
        spec.profile = spec.profile.scaled(scale)?;
    }

    let run = run_loopback(
        &spec,
        &def.settings.transport,
        &def.publisher_config(),
        LogWriter::create(&paths.log)?,
    )?;
    if let Some(f) = &run.subscriber.failure {
        return Err(ScenarioError::Invalid(format!("subscriber failed: {f}")));
    }
    let manifest = run.publisher.manifest(
        &format!("{}-{}", def.name, run.publisher.start_wall_ns),
        &def.name,
        &def.settings.transport.kind.to_string(),
        spec.seed,
        spec.profile.scale(),
        run.faults.clone(),
    );
    manifest.write(&paths.manifest)?;
    write_file(&paths.rates, &run.publisher.rates.to_csv())?;

    let (report, _) = verify_log(&paths.log, Some(&manifest), def.settings.slo)?;
    let summary = summarize(&paths.log, GroupBy::Stream)?;
    let criteria: Vec<(Criterion, bool)> = def.criteria.iter().map(|c| (*c, c.check(&report))).collect();
    let outcome = ScenarioOutcome {
        name: def.name.clone(),
        scale,
        probes,
        manifest,
        publisher: run.publisher,
        report,
        summary,
        criteria,
        paths,
    };
    write_file(
        &outcome.paths.report_txt,
        &format!("{}\n{}\n{}", outcome.render(), outcome.report.to_table(), outcome.summary.to_table()),
    )?;
    write_file(&outcome.paths.report_csv, &outcome.report.to_csv())?;
    write_file(&outcome.paths.summary_csv, &outcome.summary.to_csv())?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latlog::record_count_for_len;

    #[test]
    fn builtins_parse() {
        for name in builtin_names() {
            let def = ScenarioDef::builtin(name).unwrap();
            assert_eq!(def.name, name);
            assert!(!def.criteria.is_empty());
        }
        let smoke = ScenarioDef::builtin("desk-smoke").unwrap();
        assert_eq!(smoke.spec.profile.expected_total().unwrap(), 6_000_000);
        let snap = ScenarioDef::builtin("snapshot60").unwrap();
        assert_eq!(snap.auto_downscale, Some(3));
        assert_eq!(snap.spec.profile.expected_total().unwrap(), 18_023_640);
        let peak = ScenarioDef::builtin("peak-burst").unwrap();
        assert_eq!(peak.spec.profile.total_duration_s(), 10);
        assert_eq!(peak_rate(&peak.spec.profile), 700_000.0);
        let faults = ScenarioDef::builtin("fault-oracle").unwrap();
        assert_eq!(faults.settings.transport.faults.seed, 42);
        assert_eq!(faults.criteria, vec![Criterion::LedgerMatch]);
    }

    #[test]
    fn unknown_scenario_lists_known_ones() {
        let err = ScenarioDef::builtin("nope").unwrap_err().to_string();
        assert!(err.contains("desk-smoke"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_criteria() {
        assert!(ScenarioDef::parse("name = x\nbogus = 1\n", Path::new(".")).is_err());
        assert!(ScenarioDef::parse("name = x\ncriteria = fast\n", Path::new(".")).is_err());
        assert!(ScenarioDef::parse("name = x\ntransport = tcp\nendpoint = 127.0.0.1:1\n", Path::new(".")).is_err());
        assert!(ScenarioDef::parse("segment = 1,10\n", Path::new(".")).is_err());
    }

    #[test]
    fn small_scenario_writes_artifacts() {
        let def = ScenarioDef::parse(
            "name = tiny\nsegment = 1,2000\nworkers = 2\ncriteria = complete,exactly_once,ordered,latency_slo\n",
            Path::new("."),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&def, dir.path()).unwrap();
        assert!(out.passed(), "{}", out.render());
        let len = std::fs::metadata(&out.paths.log).unwrap().len();
        assert_eq!(record_count_for_len(len), (2000, 0));
        let m = RunManifest::read(&out.paths.manifest).unwrap();
        assert_eq!(m.total_sent(), 2000);
        assert_eq!(m.streams.len(), 2);
        for p in [&out.paths.rates, &out.paths.report_txt, &out.paths.report_csv, &out.paths.summary_csv] {
            assert!(p.exists(), "{}", p.display());
        }
    }

    #[test]
    fn faulty_scenario_matches_ledger() {
        let def = ScenarioDef::parse(
            "name = f\nsegment = 1,3000\nseed = 5\ntransport = loopback-faulty\ndrop_prob = 0.05\n\
             dup_prob = 0.05\nreorder_prob = 0.05\nworkers = 1\ncriteria = ledger_match\n",
            Path::new("."),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&def, dir.path()).unwrap();
        assert!(out.passed(), "{}", out.render());
        assert!(!out.report.verdicts.exactly_once);
    }

    #[test]
    fn downscale_picks_a_factor_from_the_ladder() {
        let def = ScenarioDef::parse(
            "name = d\nsegment = 1,1000\nauto_downscale = true\nprobe_seconds = 1\nworkers = 1\n",
            Path::new("."),
        )
        .unwrap();
        let (factor, probes) = choose_scale(&def, 1).unwrap();
        assert!(DOWNSCALE_LADDER.contains(&factor));
        assert_eq!(probes.last().unwrap().0, factor);
    }
}
