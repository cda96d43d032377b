//! Spike files, candidate logs, run configuration and JSON reports.
//!
//! Spike files come in two formats:
//!
//! * CSV with header `time,neuron`, rows sorted by time. Times are written
//!   in shortest round-trip decimal form, padded to at least 12 significant
//!   digits. The format carries no horizon; on reading it defaults to the
//!   last spike time and the recording is flagged `horizon_inferred`.
//! * `SPK1`: the 4 magic bytes, a little-endian `u64` record count, an
//!   `f64` horizon, then `count` records of `f64` time and `u32` neuron id,
//!   sorted by time. Neurons without spikes are not represented.
//!
//! The configuration is TOML; see `docs/config.md` in the repository for
//! the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    thresholds, validate_network, DerivedConstants, ModelError, Network, NetworkSpec, NeuronId,
    RateFunction,
};
use crate::simulator::{Candidate, CandidateLog, SimError, SimulationConfig, SpikeRecording};

pub const SPK1_MAGIC: &[u8; 4] = b"SPK1";
const SPK1_HEADER: usize = 4 + 8 + 8;
const SPK1_RECORD: usize = 8 + 4;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: time goes backwards")]
    UnsortedTimes { line: u64 },
    #[error("line {line}: neuron {neuron} spikes twice at time {time}")]
    DuplicateTimestamp {
        line: u64,
        neuron: NeuronId,
        time: f64,
    },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("not a spike file: {0}")]
    BadHeader(String),
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Validation(#[from] ModelError),
    #[error(transparent)]
    Recording(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeFormat {
    Csv,
    Spk1,
}

impl SpikeFormat {
    /// `.spk`, `.spk1` and `.bin` are binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("spk" | "spk1" | "bin") => SpikeFormat::Spk1,
            _ => SpikeFormat::Csv,
        }
    }

    /// Sniffs the magic bytes.
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(SPK1_MAGIC) {
            SpikeFormat::Spk1
        } else {
            SpikeFormat::Csv
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpikeSource {
    Simulated { seed: u64 },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeFileHeader {
    pub format: SpikeFormat,
    pub horizon: f64,
    pub neuron_count: usize,
    pub record_count: usize,
    pub source: SpikeSource,
}

impl SpikeFileHeader {
    pub fn of(rec: &SpikeRecording, format: SpikeFormat) -> Self {
        Self {
            format,
            horizon: rec.horizon(),
            neuron_count: rec.trains().len(),
            record_count: rec.total_spikes(),
            source: match rec.seed {
                Some(seed) => SpikeSource::Simulated { seed },
                None => SpikeSource::External,
            },
        }
    }
}

/// Shortest round-trip decimal of `t`, padded with zeros to at least 12
/// significant digits.
pub fn format_time(t: f64) -> String {
    let mut s = format!("{t}");
    let significant = s
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if significant < 12 {
        if !s.contains('.') {
            s.push('.');
        }
        // Leading zeros after the point are not significant either.
        let missing = if significant == 0 {
            12
        } else {
            12 - significant
        };
        s.extend(std::iter::repeat_n('0', missing));
    }
    s
}

/// Accumulates globally sorted `(time, neuron)` rows into trains.
struct TrainBuilder {
    trains: BTreeMap<NeuronId, Vec<f64>>,
    last: f64,
    max_time: f64,
}

impl TrainBuilder {
    fn new() -> Self {
        Self {
            trains: BTreeMap::new(),
            last: f64::NEG_INFINITY,
            max_time: 0.0,
        }
    }

    fn push(&mut self, line: u64, time: f64, neuron: NeuronId) -> Result<(), IoError> {
        if !(time.is_finite() && time > 0.0) {
            return Err(IoError::MalformedRow {
                line,
                reason: format!("spike time must be finite and positive, got {time}"),
            });
        }
        if time < self.last {
            return Err(IoError::UnsortedTimes { line });
        }
        let train = self.trains.entry(neuron).or_default();
        if train.last() == Some(&time) {
            return Err(IoError::DuplicateTimestamp { line, neuron, time });
        }
        train.push(time);
        self.last = time;
        self.max_time = self.max_time.max(time);
        Ok(())
    }
}

pub fn parse_csv(bytes: &[u8]) -> Result<SpikeRecording, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| IoError::BadHeader(e.to_string()))?
        .clone();
    if header.is_empty() {
        let mut rec = SpikeRecording::empty(&[], 0.0);
        rec.horizon_inferred = true;
        return Ok(rec);
    }
    if header.len() != 2 || &header[0] != "time" || &header[1] != "neuron" {
        return Err(IoError::BadHeader(format!(
            "expected header `time,neuron`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut builder = TrainBuilder::new();
    for row in reader.records() {
        let row = row.map_err(|e| IoError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| IoError::MalformedRow { line, reason };
        if row.len() != 2 {
            return Err(bad(format!("expected 2 fields, got {}", row.len())));
        }
        let time: f64 = row[0]
            .parse()
            .map_err(|_| bad(format!("bad time `{}`", &row[0])))?;
        let neuron: NeuronId = row[1]
            .parse()
            .map_err(|_| bad(format!("bad neuron id `{}`", &row[1])))?;
        builder.push(line, time, neuron)?;
    }
    let mut rec = SpikeRecording::from_trains(builder.trains, builder.max_time)?;
    rec.horizon_inferred = true;
    Ok(rec)
}

pub fn to_csv(rec: &SpikeRecording) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "neuron"]).expect("in-memory write");
    for (t, id) in rec.merged() {
        w.write_record([format_time(t), id.to_string()])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn parse_spk1(bytes: &[u8]) -> Result<SpikeRecording, IoError> {
    if bytes.len() < SPK1_HEADER || &bytes[..4] != SPK1_MAGIC {
        return Err(IoError::BadHeader("missing SPK1 magic or header".into()));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let horizon = f64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(IoError::BadHeader(format!("invalid horizon {horizon}")));
    }
    let body = bytes.len() - SPK1_HEADER;
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(SPK1_RECORD));
    if expected != Some(body) {
        return Err(IoError::BadHeader(format!(
            "record count {count} does not match {body} body bytes"
        )));
    }
    let mut builder = TrainBuilder::new();
    for (k, rec) in bytes[SPK1_HEADER..].chunks_exact(SPK1_RECORD).enumerate() {
        let time = f64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
        let neuron = u32::from_le_bytes(rec[8..].try_into().expect("4 bytes"));
        let line = k as u64 + 1;
        builder.push(line, time, neuron)?;
        if time > horizon {
            return Err(IoError::MalformedRow {
                line,
                reason: format!("time {time} beyond horizon {horizon}"),
            });
        }
    }
    Ok(SpikeRecording::from_trains(builder.trains, horizon)?)
}

pub fn to_spk1(rec: &SpikeRecording) -> Vec<u8> {
    let merged = rec.merged();
    let mut out = Vec::with_capacity(SPK1_HEADER + SPK1_RECORD * merged.len());
    out.extend_from_slice(SPK1_MAGIC);
    out.extend_from_slice(&(merged.len() as u64).to_le_bytes());
    out.extend_from_slice(&rec.horizon().to_le_bytes());
    for (t, id) in merged {
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

/// Reads a spike file; `format = None` sniffs the magic bytes.
pub fn read_spikes(path: &Path, format: Option<SpikeFormat>) -> Result<SpikeRecording, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match format.unwrap_or_else(|| SpikeFormat::detect(&bytes)) {
        SpikeFormat::Csv => parse_csv(&bytes),
        SpikeFormat::Spk1 => parse_spk1(&bytes),
    }
}

pub fn write_spikes(rec: &SpikeRecording, path: &Path, format: SpikeFormat) -> Result<(), IoError> {
    let bytes = match format {
        SpikeFormat::Csv => to_csv(rec),
        SpikeFormat::Spk1 => to_spk1(rec),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_candidate_log(log: &CandidateLog, path: &Path) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let wrap = |e: csv::Error| IoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record(["time", "mark", "neuron", "accepted"])
        .map_err(wrap)?;
    for c in &log.candidates {
        w.write_record([
            format_time(c.time),
            format_time(c.mark),
            c.neuron.to_string(),
            (c.accepted as u8).to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a candidate log; `beta` is the mark range it was drawn with.
pub fn read_candidate_log(path: &Path, beta: f64) -> Result<CandidateLog, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut candidates = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for row in reader.records() {
        let row = row.map_err(|e| IoError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: &str| IoError::MalformedRow {
            line,
            reason: reason.into(),
        };
        if row.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let time: f64 = row[0].parse().map_err(|_| bad("bad time"))?;
        let mark: f64 = row[1].parse().map_err(|_| bad("bad mark"))?;
        let neuron: NeuronId = row[2].parse().map_err(|_| bad("bad neuron id"))?;
        let accepted = match &row[3] {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("accepted must be 0 or 1")),
        };
        if time.partial_cmp(&last) != Some(std::cmp::Ordering::Greater) {
            return Err(IoError::UnsortedTimes { line });
        }
        if !(0.0..=beta).contains(&mark) {
            return Err(bad("mark outside [0, beta]"));
        }
        last = time;
        candidates.push(Candidate {
            time,
            mark,
            neuron,
            accepted,
        });
    }
    Ok(CandidateLog { candidates, beta })
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Estimation settings read from a config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateSettings {
    pub delta_override: Option<f64>,
    pub heuristic: bool,
}

/// Settings of `recover-graph`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverSettings {
    pub seeds: u64,
    /// Slot length as a multiple of `delta_star` when no explicit slot
    /// length is given.
    pub delta_multiple: f64,
}

impl Default for RecoverSettings {
    fn default() -> Self {
        Self {
            seeds: 20,
            delta_multiple: 16.0,
        }
    }
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `None` when the config only asserts bounds for external data.
    pub network: Option<Network>,
    /// Constants of the network, or the reason they do not exist.
    pub constants: Option<Result<DerivedConstants, ModelError>>,
    /// User-asserted bounds from `[bounds]`.
    pub bounds: Option<DerivedConstants>,
    pub sim: SimulationConfig,
    pub estimate: EstimateSettings,
    pub recover: RecoverSettings,
    /// Whether the config lists edges, which makes its graph usable as
    /// ground truth.
    pub has_ground_truth: bool,
}

impl RunConfig {
    /// Bounds for estimation: asserted bounds win over derived ones.
    pub fn estimation_bounds(&self) -> Option<Result<DerivedConstants, ModelError>> {
        match (&self.bounds, &self.constants) {
            (Some(b), _) => Some(Ok(b.clone())),
            (None, Some(c)) => Some(c.clone()),
            (None, None) => None,
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "neurons",
    "edges",
    "rate",
    "u0",
    "horizon",
    "seed",
    "log_candidates",
    "delta_override",
    "heuristic",
    "bounds",
    "recover",
];

fn get_f64(v: &toml::Value, path: &str) -> Result<f64, IoError> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(schema(path, "expected a number")),
    }
}

fn get_u64(v: &toml::Value, path: &str) -> Result<u64, IoError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(schema(path, "expected a non-negative integer")),
    }
}

fn get_id(v: &toml::Value, path: &str) -> Result<NeuronId, IoError> {
    get_u64(v, path)?
        .try_into()
        .map_err(|_| schema(path, "neuron id does not fit in 32 bits"))
}

fn get_bool(v: &toml::Value, path: &str) -> Result<bool, IoError> {
    v.as_bool()
        .ok_or_else(|| schema(path, "expected a boolean"))
}

fn get_table<'a>(v: &'a toml::Value, path: &str) -> Result<&'a toml::Table, IoError> {
    v.as_table().ok_or_else(|| schema(path, "expected a table"))
}

fn parse_rate(v: &toml::Value, path: &str) -> Result<RateFunction, IoError> {
    RateFunction::deserialize(v.clone()).map_err(|e| schema(path, e.message().to_string()))
}

fn check_keys(t: &toml::Table, allowed: &[&str], path: &str) -> Result<(), IoError> {
    for key in t.keys() {
        if !allowed.contains(&key.as_str()) {
            let full = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            return Err(schema(full, "unknown key"));
        }
    }
    Ok(())
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| schema("", e.message().to_string()))?;
    check_keys(&root, TOP_KEYS, "")?;

    let mut sim = SimulationConfig::new(1.0, 0);
    let mut has_horizon = false;
    if let Some(v) = root.get("horizon") {
        sim.horizon = get_f64(v, "horizon")?;
        if !(sim.horizon.is_finite() && sim.horizon > 0.0) {
            return Err(schema("horizon", "must be positive and finite"));
        }
        has_horizon = true;
    }
    if let Some(v) = root.get("seed") {
        sim.seed = get_u64(v, "seed")?;
    }
    if let Some(v) = root.get("log_candidates") {
        sim.log_candidates = get_bool(v, "log_candidates")?;
    }
    let mut estimate = EstimateSettings::default();
    if let Some(v) = root.get("delta_override") {
        let d = get_f64(v, "delta_override")?;
        if !(d.is_finite() && d > 0.0) {
            return Err(schema("delta_override", "must be positive and finite"));
        }
        estimate.delta_override = Some(d);
    }
    if let Some(v) = root.get("heuristic") {
        estimate.heuristic = get_bool(v, "heuristic")?;
    }

    let mut recover = RecoverSettings::default();
    if let Some(v) = root.get("recover") {
        let t = get_table(v, "recover")?;
        check_keys(t, &["seeds", "delta_multiple"], "recover")?;
        if let Some(v) = t.get("seeds") {
            recover.seeds = get_u64(v, "recover.seeds")?;
        }
        if let Some(v) = t.get("delta_multiple") {
            recover.delta_multiple = get_f64(v, "recover.delta_multiple")?;
            if !(recover.delta_multiple.is_finite() && recover.delta_multiple > 0.0) {
                return Err(schema("recover.delta_multiple", "must be positive"));
            }
        }
    }

    let bounds = match root.get("bounds") {
        None => None,
        Some(v) => {
            let t = get_table(v, "bounds")?;
            check_keys(t, &["alpha", "beta", "delta", "d"], "bounds")?;
            let need = |k: &str| {
                t.get(k)
                    .ok_or_else(|| schema(format!("bounds.{k}"), "missing"))
            };
            let alpha = get_f64(need("alpha")?, "bounds.alpha")?;
            let beta = get_f64(need("beta")?, "bounds.beta")?;
            let d = get_u64(need("d")?, "bounds.d")? as usize;
            let delta = t
                .get("delta")
                .map(|v| get_f64(v, "bounds.delta"))
                .transpose()?;
            Some(DerivedConstants::from_bounds(alpha, beta, delta, d)?)
        }
    };

    let has_ground_truth = root.contains_key("edges");
    let network = match root.get("neurons") {
        None => {
            for k in ["edges", "rate", "u0"] {
                if root.contains_key(k) {
                    return Err(schema("neurons", format!("required when `{k}` is given")));
                }
            }
            if bounds.is_none() {
                return Err(schema("neurons", "config needs `neurons` or `[bounds]`"));
            }
            None
        }
        Some(v) => {
            let list = v
                .as_array()
                .ok_or_else(|| schema("neurons", "expected a list of ids"))?;
            let ids = list
                .iter()
                .enumerate()
                .map(|(k, v)| get_id(v, &format!("neurons[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let mut spec = NetworkSpec::new(ids.clone());
            if let Some(v) = root.get("edges") {
                let edges = v
                    .as_array()
                    .ok_or_else(|| schema("edges", "expected a list of tables"))?;
                for (k, e) in edges.iter().enumerate() {
                    let path = format!("edges[{k}]");
                    let t = get_table(e, &path)?;
                    check_keys(t, &["from", "to", "weight"], &path)?;
                    let field = |f: &str| {
                        t.get(f)
                            .ok_or_else(|| schema(format!("{path}.{f}"), "missing"))
                    };
                    let from = get_id(field("from")?, &format!("{path}.from"))?;
                    let to = get_id(field("to")?, &format!("{path}.to"))?;
                    let w = get_f64(field("weight")?, &format!("{path}.weight"))?;
                    spec = spec.with_edge(from, to, w);
                }
            }
            let rates = match root.get("rate") {
                Some(v) => get_table(v, "rate")?.clone(),
                None => toml::Table::new(),
            };
            let default = rates
                .get("default")
                .map(|v| parse_rate(v, "rate.default"))
                .transpose()?;
            for key in rates.keys() {
                if key != "default" {
                    let id: NeuronId = key.parse().map_err(|_| {
                        schema(
                            format!("rate.{key}"),
                            "key must be a neuron id or `default`",
                        )
                    })?;
                    if !ids.contains(&id) {
                        return Err(schema(format!("rate.{key}"), "not a declared neuron"));
                    }
                }
            }
            for &id in &ids {
                let path = format!("rate.{id}");
                let rate = match rates.get(&id.to_string()) {
                    Some(v) => parse_rate(v, &path)?,
                    None => default.clone().ok_or_else(|| {
                        schema(&path, format!("missing rate function for neuron {id}"))
                    })?,
                };
                spec = spec.with_rate(id, rate);
            }
            if let Some(v) = root.get("u0") {
                for (key, val) in get_table(v, "u0")? {
                    let path = format!("u0.{key}");
                    let id: NeuronId = key
                        .parse()
                        .map_err(|_| schema(&path, "key must be a neuron id"))?;
                    if !ids.contains(&id) {
                        return Err(schema(&path, "not a declared neuron"));
                    }
                    let u = get_f64(val, &path)?;
                    if !u.is_finite() {
                        return Err(schema(&path, "must be finite"));
                    }
                    sim.u0.insert(id, u);
                }
            }
            Some(Network::new(spec)?)
        }
    };
    if network.is_some() && !has_horizon {
        return Err(schema("horizon", "missing"));
    }

    let constants = network.as_ref().map(|n| validate_network(n.spec()));
    // An explicit slot length must be admissible under the bounds in force.
    if let Some(delta) = estimate.delta_override {
        let c = match (&bounds, &constants) {
            (Some(b), _) => Some(b.clone()),
            (None, Some(Ok(c))) => Some(c.clone()),
            _ => None,
        };
        if let Some(c) = c {
            thresholds(&c, delta, estimate.heuristic)?;
        }
    }
    Ok(RunConfig {
        network,
        constants,
        bounds,
        sim,
        estimate,
        recover,
        has_ground_truth,
    })
}

pub fn read_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text)
}

/// Ids present in a recording, sorted.
pub fn neuron_ids(rec: &SpikeRecording) -> BTreeSet<NeuronId> {
    rec.neurons().collect()
}
