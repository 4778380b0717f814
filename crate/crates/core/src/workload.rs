//! Workload definitions: rate profiles, notification size models, event-type
//! mixes and the deterministic notification sampler built from them.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Triangular;

use crate::codec::{HEADER_LEN, MAX_NOTIFICATION_LEN};
use crate::kv::{KvDoc, KvError};

/// Smallest notification (a tick) in the modeled feed.
pub const MIN_TICK_BYTES: u32 = 80;
/// Largest notification (a news item) in the modeled feed.
pub const MAX_NEWS_BYTES: u32 = 31_744;
/// Distinct symbols in the reference snapshot.
pub const DEFAULT_SYMBOL_COUNT: u32 = 2_890_000;
/// Mean rate of the reference 60 s snapshot (18,023,662 notifications / 60 s).
pub const SNAPSHOT_MEAN_RATE: f64 = 300_394.0;
pub const SNAPSHOT_SECONDS: u64 = 60;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("rate profile line {line}: {reason}")]
    ProfileLine { line: usize, reason: String },
    #[error("rate profile has no segments")]
    EmptyProfile,
    #[error("segment duration must be at least 1 s, got {0}")]
    ZeroDuration(u64),
    #[error("segment rate must be a finite non-negative number, got {0}")]
    BadRate(f64),
    #[error("scale factor must be finite and positive, got {0}")]
    BadScale(f64),
    #[error("expected notification count overflows a signed 64-bit integer")]
    Overflow,
    #[error("size model: {0}")]
    SizeModel(String),
    #[error("event type mix: {0}")]
    TypeMix(String),
    #[error("symbol count must be positive")]
    NoSymbols,
    #[error(transparent)]
    Config(#[from] KvError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Round-half-to-even count of notifications for `duration_s` seconds at `rate`.
pub fn segment_count(duration_s: u64, rate: f64) -> Result<u64, WorkloadError> {
    let exact = duration_s as f64 * rate;
    let rounded = exact.round_ties_even();
    if !rounded.is_finite() || rounded > i64::MAX as f64 {
        return Err(WorkloadError::Overflow);
    }
    Ok(rounded as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSegment {
    pub duration_s: u64,
    /// Notifications per second. Zero is a deliberate pause.
    pub rate: f64,
}

impl RateSegment {
    pub fn new(duration_s: u64, rate: f64) -> Result<Self, WorkloadError> {
        if duration_s < 1 {
            return Err(WorkloadError::ZeroDuration(duration_s));
        }
        if !rate.is_finite() || rate < 0.0 {
            return Err(WorkloadError::BadRate(rate));
        }
        Ok(Self { duration_s, rate })
    }

    pub fn count(&self) -> Result<u64, WorkloadError> {
        segment_count(self.duration_s, self.rate)
    }
}

/// Ordered `(duration, rate)` segments plus the scale applied to them.
///
/// The stored segments are the base values as parsed; [`RateProfile::effective`]
/// yields what a publisher actually runs: rates multiplied by `scale` and,
/// when duration scaling was requested, durations multiplied by
/// `duration_scale` (rounded half-to-even, at least 1 s).
#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile {
    segments: Vec<RateSegment>,
    scale: f64,
    duration_scale: f64,
}

impl RateProfile {
    pub fn new(segments: Vec<RateSegment>) -> Result<Self, WorkloadError> {
        if segments.is_empty() {
            return Err(WorkloadError::EmptyProfile);
        }
        for s in &segments {
            RateSegment::new(s.duration_s, s.rate)?;
        }
        Ok(Self {
            segments,
            scale: 1.0,
            duration_scale: 1.0,
        })
    }

    /// Flat profile: one segment.
    pub fn flat(duration_s: u64, rate: f64) -> Result<Self, WorkloadError> {
        Self::new(vec![RateSegment::new(duration_s, rate)?])
    }

    /// The 60 s profile at the reference snapshot's mean rate.
    pub fn snapshot_mean() -> Self {
        Self::flat(SNAPSHOT_SECONDS, SNAPSHOT_MEAN_RATE).expect("constant profile is valid")
    }

    /// Parses `duration_s,rate` lines. `#` starts a comment line; LF and CRLF
    /// are both accepted.
    pub fn parse_csv(text: &str) -> Result<Self, WorkloadError> {
        let mut segments = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| WorkloadError::ProfileLine {
                line: line_no,
                reason,
            };
            let mut fields = line.split(',').map(str::trim);
            let (Some(d), Some(r), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad(format!("expected `duration_s,rate`, got {line:?}")));
            };
            let duration_s: i64 = d
                .parse()
                .map_err(|_| bad(format!("duration {d:?} is not an integer")))?;
            if duration_s < 1 {
                return Err(bad(format!("duration must be at least 1 s, got {duration_s}")));
            }
            let rate: f64 = r
                .parse()
                .map_err(|_| bad(format!("rate {r:?} is not a number")))?;
            if !rate.is_finite() || rate < 0.0 {
                return Err(bad(format!("rate must be finite and non-negative, got {r}")));
            }
            segments.push(RateSegment {
                duration_s: duration_s as u64,
                rate,
            });
        }
        Self::new(segments)
    }

    pub fn read_csv(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    /// Renders the effective segments as a profile CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# duration_s,rate\n");
        for s in self.effective() {
            out.push_str(&format!("{},{}\n", s.duration_s, s.rate));
        }
        out
    }

    /// Base segments, before scaling.
    pub fn base_segments(&self) -> &[RateSegment] {
        &self.segments
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn duration_scale(&self) -> f64 {
        self.duration_scale
    }

    /// Segments as they will be run.
    pub fn effective(&self) -> impl Iterator<Item = RateSegment> + '_ {
        self.segments.iter().map(move |s| RateSegment {
            duration_s: self.effective_duration(s.duration_s),
            rate: s.rate * self.scale,
        })
    }

    fn effective_duration(&self, duration_s: u64) -> u64 {
        if self.duration_scale == 1.0 {
            duration_s
        } else {
            ((duration_s as f64 * self.duration_scale).round_ties_even() as u64).max(1)
        }
    }

    /// Multiplies every rate by `factor`; durations are unchanged.
    pub fn scaled(&self, factor: f64) -> Result<Self, WorkloadError> {
        check_factor(factor)?;
        Ok(Self {
            scale: self.scale * factor,
            ..self.clone()
        })
    }

    /// Multiplies rates and durations by `factor`.
    pub fn scaled_with_durations(&self, factor: f64) -> Result<Self, WorkloadError> {
        check_factor(factor)?;
        Ok(Self {
            segments: self.segments.clone(),
            scale: self.scale * factor,
            duration_scale: self.duration_scale * factor,
        })
    }

    /// Per-worker share of the profile: every base rate divided by `workers`.
    pub fn split(&self, workers: usize) -> Self {
        let w = workers.max(1) as f64;
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| RateSegment {
                    duration_s: s.duration_s,
                    rate: s.rate / w,
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn total_duration_s(&self) -> u64 {
        self.effective().map(|s| s.duration_s).sum()
    }

    /// Σ round(duration × rate × scale) over the effective segments.
    pub fn expected_total(&self) -> Result<u64, WorkloadError> {
        let mut total: u64 = 0;
        for s in self.effective() {
            total = total
                .checked_add(s.count()?)
                .filter(|t| *t <= i64::MAX as u64)
                .ok_or(WorkloadError::Overflow)?;
        }
        Ok(total)
    }
}

fn check_factor(factor: f64) -> Result<(), WorkloadError> {
    if factor.is_finite() && factor > 0.0 {
        Ok(())
    } else {
        Err(WorkloadError::BadScale(factor))
    }
}

/// Inclusive byte range with a selection weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeBucket {
    pub lower: u32,
    pub upper: u32,
    pub weight: f64,
}

/// Piecewise-uniform histogram of total notification sizes (header included).
#[derive(Debug, Clone)]
pub struct SizeModel {
    buckets: Vec<SizeBucket>,
    index: WeightedIndex<f64>,
}

impl PartialEq for SizeModel {
    fn eq(&self, other: &Self) -> bool {
        self.buckets == other.buckets
    }
}

impl SizeModel {
    /// Buckets must lie within [80, 31744] bytes.
    pub fn new(buckets: Vec<SizeBucket>) -> Result<Self, WorkloadError> {
        Self::with_floor(buckets, MIN_TICK_BYTES)
    }

    /// Like [`SizeModel::new`] but only requires room for the header, for
    /// workloads that deliberately go below the smallest tick.
    pub fn allow_small(buckets: Vec<SizeBucket>) -> Result<Self, WorkloadError> {
        Self::with_floor(buckets, HEADER_LEN as u32)
    }

    fn with_floor(buckets: Vec<SizeBucket>, floor: u32) -> Result<Self, WorkloadError> {
        let err = |m: String| WorkloadError::SizeModel(m);
        if buckets.is_empty() {
            return Err(err("no buckets".into()));
        }
        let mut sum = 0.0;
        for (i, b) in buckets.iter().enumerate() {
            if b.lower > b.upper {
                return Err(err(format!("bucket {i}: lower {} > upper {}", b.lower, b.upper)));
            }
            if i > 0 && b.lower <= buckets[i - 1].upper {
                return Err(err(format!("bucket {i} overlaps or is out of order")));
            }
            if !b.weight.is_finite() || b.weight < 0.0 {
                return Err(err(format!("bucket {i}: bad weight {}", b.weight)));
            }
            sum += b.weight;
        }
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(err(format!("weights sum to {sum}, not 1")));
        }
        let min = buckets[0].lower;
        let max = buckets[buckets.len() - 1].upper;
        if min < floor {
            return Err(err(format!("minimum size {min} is below {floor} bytes")));
        }
        if max > MAX_NEWS_BYTES {
            return Err(err(format!("maximum size {max} exceeds {MAX_NEWS_BYTES} bytes")));
        }
        let index = WeightedIndex::new(buckets.iter().map(|b| b.weight))
            .map_err(|e| err(e.to_string()))?;
        Ok(Self { buckets, index })
    }

    /// Every notification exactly `bytes` long.
    pub fn fixed(bytes: u32) -> Result<Self, WorkloadError> {
        Self::allow_small(vec![SizeBucket {
            lower: bytes,
            upper: bytes,
            weight: 1.0,
        }])
    }

    /// Approximation of the reference feed's size distribution: 80..900 bytes,
    /// right-skewed, mean 127.587 bytes.
    pub fn feed_default() -> Self {
        const TABLE: [(u32, u32, f64); 9] = [
            (80, 95, 0.2850),
            (96, 111, 0.2800),
            (112, 127, 0.1700),
            (128, 159, 0.1220),
            (160, 191, 0.0660),
            (192, 255, 0.0410),
            (256, 383, 0.0200),
            (384, 511, 0.0100),
            (512, 900, 0.0060),
        ];
        Self::new(
            TABLE
                .iter()
                .map(|&(lower, upper, weight)| SizeBucket {
                    lower,
                    upper,
                    weight,
                })
                .collect(),
        )
        .expect("default size table is valid")
    }

    pub fn buckets(&self) -> &[SizeBucket] {
        &self.buckets
    }

    pub fn min_bytes(&self) -> u32 {
        self.buckets[0].lower
    }

    pub fn max_bytes(&self) -> u32 {
        self.buckets[self.buckets.len() - 1].upper
    }

    /// Analytic mean of the model.
    pub fn mean(&self) -> f64 {
        self.buckets
            .iter()
            .map(|b| b.weight * (b.lower as f64 + b.upper as f64) / 2.0)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let b = &self.buckets[self.index.sample(rng)];
        if b.lower == b.upper {
            b.lower
        } else {
            rng.random_range(b.lower..=b.upper)
        }
    }

    /// Parses `lower-upper:weight` items separated by commas.
    pub fn parse_buckets(text: &str) -> Result<Vec<SizeBucket>, WorkloadError> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                let bad = || WorkloadError::SizeModel(format!("bad bucket {item:?}"));
                let (range, weight) = item.split_once(':').ok_or_else(bad)?;
                let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
                Ok(SizeBucket {
                    lower: lo.trim().parse().map_err(|_| bad())?,
                    upper: hi.trim().parse().map_err(|_| bad())?,
                    weight: weight.trim().parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

/// Attribute-count statistics for one event type.
///
/// Sampled from two triangular halves joined at the median, each chosen with
/// probability ½, so the median of the discretized draw is the configured one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttrCountModel {
    pub min: u16,
    pub median: u16,
    pub max: u16,
}

impl AttrCountModel {
    pub const FEED_DEFAULT: Self = Self {
        min: 6,
        median: 16,
        max: 129,
    };

    pub fn new(min: u16, median: u16, max: u16) -> Result<Self, WorkloadError> {
        if min < 1 || max > 255 || !(min <= median && median <= max) {
            return Err(WorkloadError::TypeMix(format!(
                "attribute bounds must satisfy 1 <= min <= median <= max <= 255, got {min}/{median}/{max}"
            )));
        }
        Ok(Self { min, median, max })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u16 {
        let (lo, hi) = if rng.random_bool(0.5) {
            (self.min, self.median)
        } else {
            (self.median, self.max)
        };
        if lo == hi {
            return lo;
        }
        let mode = self.median as f64;
        let tri = Triangular::new(lo as f64, hi as f64, mode).expect("ordered bounds");
        (tri.sample(rng).round() as u16).clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTypeEntry {
    pub event_type: u8,
    pub weight: f64,
    pub attrs: AttrCountModel,
}

#[derive(Debug, Clone)]
pub struct EventTypeMix {
    entries: Vec<EventTypeEntry>,
    index: WeightedIndex<f64>,
}

impl PartialEq for EventTypeMix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl EventTypeMix {
    pub fn new(entries: Vec<EventTypeEntry>) -> Result<Self, WorkloadError> {
        let err = |m: String| WorkloadError::TypeMix(m);
        if entries.is_empty() || entries.len() > 255 {
            return Err(err(format!("need 1..=255 entries, got {}", entries.len())));
        }
        let mut seen = [false; 256];
        let mut sum = 0.0;
        for e in &entries {
            if std::mem::replace(&mut seen[e.event_type as usize], true) {
                return Err(err(format!("event type {} listed twice", e.event_type)));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(err(format!("event type {}: bad weight {}", e.event_type, e.weight)));
            }
            AttrCountModel::new(e.attrs.min, e.attrs.median, e.attrs.max)?;
            sum += e.weight;
        }
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(err(format!("weights sum to {sum}, not 1")));
        }
        let index =
            WeightedIndex::new(entries.iter().map(|e| e.weight)).map_err(|e| err(e.to_string()))?;
        Ok(Self { entries, index })
    }

    /// Eight event types with a skewed mix, all using the feed's 6/16/129
    /// attribute statistics.
    pub fn feed_default() -> Self {
        const WEIGHTS: [f64; 8] = [0.35, 0.25, 0.15, 0.10, 0.06, 0.04, 0.03, 0.02];
        Self::new(
            WEIGHTS
                .iter()
                .enumerate()
                .map(|(i, &weight)| EventTypeEntry {
                    event_type: i as u8,
                    weight,
                    attrs: AttrCountModel::FEED_DEFAULT,
                })
                .collect(),
        )
        .expect("default mix is valid")
    }

    pub fn single(event_type: u8, attrs: AttrCountModel) -> Self {
        Self::new(vec![EventTypeEntry {
            event_type,
            weight: 1.0,
            attrs,
        }])
        .expect("single entry mix is valid")
    }

    pub fn entries(&self) -> &[EventTypeEntry] {
        &self.entries
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &EventTypeEntry {
        &self.entries[self.index.sample(rng)]
    }

    /// Parses `type:weight:min/median/max`.
    pub fn parse_entry(text: &str) -> Result<EventTypeEntry, WorkloadError> {
        let bad = || WorkloadError::TypeMix(format!("bad entry {text:?}, want type:weight:min/median/max"));
        let mut parts = text.split(':').map(str::trim);
        let (Some(t), Some(w), Some(a), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let attrs: Vec<u16> = a
            .split('/')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [min, median, max] = attrs[..] else {
            return Err(bad());
        };
        Ok(EventTypeEntry {
            event_type: t.parse().map_err(|_| bad())?,
            weight: w.parse().map_err(|_| bad())?,
            attrs: AttrCountModel::new(min, median, max)?,
        })
    }
}

/// Parameters of one generated notification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NotificationParams {
    pub event_type: u8,
    pub symbol_id: u32,
    pub attr_count: u16,
    /// Total encoded size in bytes, header included.
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub profile: RateProfile,
    pub size_model: SizeModel,
    pub type_mix: EventTypeMix,
    pub symbol_count: u32,
    pub seed: u64,
    /// Priority per publisher stream, cycled over workers.
    pub stream_priorities: Vec<u8>,
}

pub const WORKLOAD_KEYS: &[&str] = &[
    "profile",
    "segment",
    "scale",
    "scale_durations",
    "symbols",
    "seed",
    "size_buckets",
    "size_fixed",
    "allow_small",
    "event_type",
    "stream_priorities",
];

impl WorkloadSpec {
    /// Reference-feed workload: the 60 s snapshot-mean profile, default size
    /// model and event mix, 2.89 M symbols.
    pub fn feed_default() -> Self {
        Self {
            profile: RateProfile::snapshot_mean(),
            size_model: SizeModel::feed_default(),
            type_mix: EventTypeMix::feed_default(),
            symbol_count: DEFAULT_SYMBOL_COUNT,
            seed: 0,
            stream_priorities: vec![0],
        }
    }

    pub fn with_profile(profile: RateProfile) -> Self {
        Self {
            profile,
            ..Self::feed_default()
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.symbol_count == 0 {
            return Err(WorkloadError::NoSymbols);
        }
        self.profile.expected_total()?;
        Ok(())
    }

    pub fn priority_for_worker(&self, worker: usize) -> u8 {
        if self.stream_priorities.is_empty() {
            0
        } else {
            self.stream_priorities[worker % self.stream_priorities.len()]
        }
    }

    /// Independent deterministic sampler for one stream.
    pub fn sampler(&self, stream_id: u32) -> NotificationSampler<'_> {
        NotificationSampler::new(self, stream_id)
    }

    /// Reads a workload file. A relative `profile` path is resolved against
    /// the file's directory.
    pub fn read(path: &Path) -> Result<Self, WorkloadError> {
        let doc = KvDoc::read(path)?;
        Self::from_kv(&doc, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_kv(doc: &KvDoc, base_dir: &Path) -> Result<Self, WorkloadError> {
        doc.check_keys(WORKLOAD_KEYS)?;
        let mut spec = Self::feed_default();

        let inline: Vec<RateSegment> = doc
            .get_all("segment")
            .map(|e| {
                let p = RateProfile::parse_csv(&e.value).map_err(|err| e.invalid(err))?;
                Ok::<_, KvError>(p.base_segments()[0])
            })
            .collect::<Result<_, _>>()?;
        match (doc.get("profile"), inline.is_empty()) {
            (Some(e), true) => {
                let p = Path::new(&e.value);
                let p = if p.is_relative() { base_dir.join(p) } else { p.to_path_buf() };
                spec.profile = RateProfile::read_csv(&p)?;
            }
            (None, false) => spec.profile = RateProfile::new(inline)?,
            (Some(e), false) => return Err(e.invalid("use either `profile` or `segment`, not both").into()),
            (None, true) => {}
        }
        if let Some(e) = doc.get("scale") {
            let factor: f64 = e.parse()?;
            let durations = match doc.get("scale_durations") {
                Some(d) => d.parse_bool()?,
                None => false,
            };
            spec.profile = if durations {
                spec.profile.scaled_with_durations(factor)?
            } else {
                spec.profile.scaled(factor)?
            };
        }
        if let Some(e) = doc.get("symbols") {
            spec.symbol_count = e.parse()?;
        }
        if let Some(e) = doc.get("seed") {
            spec.seed = e.parse()?;
        }
        let allow_small = match doc.get("allow_small") {
            Some(e) => e.parse_bool()?,
            None => false,
        };
        match (doc.get("size_buckets"), doc.get("size_fixed")) {
            (Some(e), None) => {
                let buckets = SizeModel::parse_buckets(&e.value)?;
                spec.size_model = if allow_small {
                    SizeModel::allow_small(buckets)?
                } else {
                    SizeModel::new(buckets)?
                };
            }
            (None, Some(e)) => {
                let bytes: u32 = e.parse()?;
                if !allow_small && bytes < MIN_TICK_BYTES {
                    return Err(e.invalid(format!("below {MIN_TICK_BYTES} bytes; set allow_small = true")).into());
                }
                spec.size_model = SizeModel::fixed(bytes)?;
            }
            (Some(e), Some(_)) => {
                return Err(e.invalid("use either `size_buckets` or `size_fixed`").into())
            }
            (None, None) => {}
        }
        let types: Vec<EventTypeEntry> = doc
            .get_all("event_type")
            .map(|e| EventTypeMix::parse_entry(&e.value))
            .collect::<Result<_, _>>()?;
        if !types.is_empty() {
            spec.type_mix = EventTypeMix::new(types)?;
        }
        if let Some(e) = doc.get("stream_priorities") {
            spec.stream_priorities = e
                .value
                .split(',')
                .map(|p| p.trim().parse::<u8>().map_err(|err| e.invalid(err)))
                .collect::<Result<_, _>>()?;
            if spec.stream_priorities.is_empty() {
                return Err(e.invalid("empty list").into());
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-stream notification parameter generator.
///
/// Each stream draws from its own ChaCha stream keyed by `(seed, stream_id)`,
/// so parallel workers produce the same sequences regardless of scheduling.
pub struct NotificationSampler<'a> {
    spec: &'a WorkloadSpec,
    rng: ChaCha8Rng,
    symbols: Uniform<u32>,
}

impl<'a> NotificationSampler<'a> {
    fn new(spec: &'a WorkloadSpec, stream_id: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream_id as u64);
        Self {
            spec,
            rng,
            symbols: Uniform::new(0, spec.symbol_count.max(1)).expect("non-empty symbol range"),
        }
    }

    pub fn next_params(&mut self) -> NotificationParams {
        let entry = self.spec.type_mix.sample(&mut self.rng);
        let attr_count = entry.attrs.sample(&mut self.rng);
        let size = self.spec.size_model.sample(&mut self.rng);
        NotificationParams {
            event_type: entry.event_type,
            symbol_id: self.symbols.sample(&mut self.rng),
            attr_count,
            size,
        }
    }
}

impl Iterator for NotificationSampler<'_> {
    type Item = NotificationParams;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_params())
    }
}

const _: () = assert!(MAX_NEWS_BYTES as usize + HEADER_LEN == MAX_NOTIFICATION_LEN);
