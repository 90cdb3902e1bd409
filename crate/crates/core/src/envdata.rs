//! Environmental measurements per node and timestamp: CSV ingestion,
//! completeness checks, gap filling and contamination scenarios.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use chrono::{DateTime, Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbp::{DbpError, DbpModel, Family};
use crate::kriging::{krige, Variogram, VariogramModel};
use crate::network::Network;
use crate::transport::TransportResult;

/// Column headers of the environmental data file, in order.
pub const ENV_COLUMNS: [&str; 9] = [
    "Timestamp",
    "Node",
    "Contracts",
    "Chlorine (mg/L)",
    "Temperature",
    "pH",
    "TOC (mg/L)",
    "DON (mg/L)",
    "BR (mg/L)",
];

pub const CONTRACT_COLUMNS: [&str; 2] = ["Node", "Contracts"];

/// Name of the reaction-time variable (hours) seen by the models.
pub const TIME_VAR: &str = "time";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("header mismatch: expected {expected:?}, got {got:?}")]
    Header { expected: String, got: String },
    #[error("record references unknown node {0}")]
    UnknownNode(String),
    #[error("no observations for {0} and no default range configured")]
    NoObservations(String),
    #[error("duplicate record for node {node} at {timestamp}")]
    Duplicate { node: String, timestamp: NaiveDateTime },
    #[error("cannot push node {node} above the {family} threshold within physical bounds")]
    InfeasibleTarget { node: String, family: String },
    #[error("dataset is not complete: {0}")]
    NotComplete(String),
    #[error("model evaluation failed at node {node}: {source}")]
    Model { node: String, source: DbpError },
    #[error("fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
}

/// The fixed measured parameters, excluding chlorine and contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Param {
    Chlorine,
    Temperature,
    Ph,
    Toc,
    Don,
    Br,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::Chlorine, Param::Temperature, Param::Ph, Param::Toc, Param::Don, Param::Br];
    /// Parameters filled by synthesis; chlorine comes from transport.
    pub const SYNTHESIZED: [Param; 5] = [Param::Temperature, Param::Ph, Param::Toc, Param::Don, Param::Br];

    pub fn name(self) -> &'static str {
        match self {
            Param::Chlorine => "Chlorine",
            Param::Temperature => "Temperature",
            Param::Ph => "pH",
            Param::Toc => "TOC",
            Param::Don => "DON",
            Param::Br => "BR",
        }
    }

    /// Canonical name for a variable, resolving the short aliases used in formulas.
    pub fn from_name(name: &str) -> Option<Param> {
        Some(match name {
            "Chlorine" | "Cl2" => Param::Chlorine,
            "Temperature" | "Temp" => Param::Temperature,
            "pH" => Param::Ph,
            "TOC" => Param::Toc,
            "DON" => Param::Don,
            "BR" | "Br" => Param::Br,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub timestamp: NaiveDateTime,
    pub node: String,
    pub contracts: Option<f64>,
    pub chlorine: Option<f64>,
    pub temperature: Option<f64>,
    pub ph: Option<f64>,
    pub toc: Option<f64>,
    pub don: Option<f64>,
    pub br: Option<f64>,
    pub extras: BTreeMap<String, f64>,
}

impl EnvRecord {
    pub fn empty(node: &str, timestamp: NaiveDateTime) -> Self {
        Self {
            timestamp,
            node: node.to_string(),
            contracts: None,
            chlorine: None,
            temperature: None,
            ph: None,
            toc: None,
            don: None,
            br: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn param(&self, p: Param) -> Option<f64> {
        match p {
            Param::Chlorine => self.chlorine,
            Param::Temperature => self.temperature,
            Param::Ph => self.ph,
            Param::Toc => self.toc,
            Param::Don => self.don,
            Param::Br => self.br,
        }
    }

    pub fn param_mut(&mut self, p: Param) -> &mut Option<f64> {
        match p {
            Param::Chlorine => &mut self.chlorine,
            Param::Temperature => &mut self.temperature,
            Param::Ph => &mut self.ph,
            Param::Toc => &mut self.toc,
            Param::Don => &mut self.don,
            Param::Br => &mut self.br,
        }
    }

    /// Looks up a variable by column name (or alias). `SUVA` falls back to
    /// `100 · UVA254 / DOC` when not supplied.
    pub fn get(&self, name: &str) -> Option<f64> {
        if let Some(p) = Param::from_name(name) {
            return self.param(p);
        }
        if name == "Contracts" {
            return self.contracts;
        }
        if let Some(v) = self.extras.get(name) {
            return Some(*v);
        }
        if name == "SUVA" {
            let uva = self.extras.get("UVA254")?;
            let doc = self.extras.get("DOC")?;
            if *doc > 0.0 {
                return Some(100.0 * uva / doc);
            }
        }
        None
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(p) = Param::from_name(name) {
            *self.param_mut(p) = Some(value);
        } else if name == "Contracts" {
            self.contracts = Some(value);
        } else {
            self.extras.insert(name.to_string(), value);
        }
    }

    /// Value of a fillable variable: a fixed parameter or an extras key.
    fn var(&self, v: &Var) -> Option<f64> {
        match v {
            Var::Fixed(p) => self.param(*p),
            Var::Extra(k) => self.extras.get(k).copied(),
        }
    }

    fn set_var(&mut self, v: &Var, value: f64) {
        match v {
            Var::Fixed(p) => *self.param_mut(*p) = Some(value),
            Var::Extra(k) => {
                self.extras.insert(k.clone(), value);
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let Some(ph) = self.ph {
            if !(0.0..=14.0).contains(&ph) {
                return Err(format!("pH {ph} outside [0, 14]"));
            }
        }
        for p in [Param::Chlorine, Param::Toc, Param::Don, Param::Br] {
            if let Some(v) = self.param(p) {
                if v < 0.0 {
                    return Err(format!("{} must be non-negative, got {v}", p.name()));
                }
            }
        }
        if let Some(c) = self.contracts {
            if c < 0.0 {
                return Err(format!("contracts must be non-negative, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Var {
    Fixed(Param),
    Extra(String),
}

impl Var {
    fn name(&self) -> &str {
        match self {
            Var::Fixed(p) => p.name(),
            Var::Extra(k) => k,
        }
    }
}

/// Parses `DD-MM-YY H:MM` or ISO-8601.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%d-%m-%y %H:%M", "%d-%m-%y %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc())
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Records keyed by (timestamp, node), iterated in that order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvDataset {
    pub records: Vec<EnvRecord>,
}

impl EnvDataset {
    pub fn new(mut records: Vec<EnvRecord>) -> Result<Self, EnvError> {
        records.sort_by(|a, b| (a.timestamp, &a.node).cmp(&(b.timestamp, &b.node)));
        for w in records.windows(2) {
            if w[0].timestamp == w[1].timestamp && w[0].node == w[1].node {
                return Err(EnvError::Duplicate { node: w[0].node.clone(), timestamp: w[0].timestamp });
            }
        }
        Ok(Self { records })
    }

    pub fn timestamps(&self) -> Vec<NaiveDateTime> {
        let set: BTreeSet<NaiveDateTime> = self.records.iter().map(|r| r.timestamp).collect();
        set.into_iter().collect()
    }

    pub fn nodes_covered(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.node.clone()).collect()
    }

    /// Largest gap between consecutive timestamps.
    pub fn interval(&self) -> Option<Duration> {
        let ts = self.timestamps();
        ts.windows(2).map(|w| w[1] - w[0]).max()
    }

    /// Extras keys present in any record.
    pub fn extra_names(&self) -> BTreeSet<String> {
        self.records.iter().flat_map(|r| r.extras.keys().cloned()).collect()
    }

    /// Every record has every fixed parameter, and the record grid is full.
    pub fn is_full(&self, net: &Network) -> bool {
        self.is_filled(net, true)
    }

    /// As [`EnvDataset::is_full`], optionally ignoring chlorine.
    pub fn is_filled(&self, net: &Network, include_chlorine: bool) -> bool {
        let extras = self.extra_names();
        let params: &[Param] = if include_chlorine { &Param::ALL } else { &Param::SYNTHESIZED };
        !self.records.is_empty()
            && self.records.len() == self.timestamps().len() * net.nodes.len()
            && self.records.iter().all(|r| {
                params.iter().all(|p| r.param(*p).is_some()) && extras.iter().all(|k| r.extras.contains_key(k))
            })
    }

    /// Per-node contracts taken from the first record that carries them.
    pub fn contracts(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let Some(c) = r.contracts {
                out.entry(r.node.clone()).or_insert(c);
            }
        }
        out
    }

    fn observed(&self, v: &Var) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.var(v)).collect()
    }
}

fn parse_optional(field: &str, line: usize, column: &str) -> Result<Option<f64>, EnvError> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    let v: f64 = f.parse().map_err(|_| EnvError::Malformed {
        line,
        message: format!("{column}: not a number: {f:?}"),
    })?;
    if !v.is_finite() {
        return Err(EnvError::Malformed { line, message: format!("{column}: not finite") });
    }
    Ok(Some(v))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> EnvError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    EnvError::Malformed { line, message: e.to_string() }
}

/// Reads environmental data. Blank cells are missing measurements.
pub fn read_env_csv(text: &str) -> Result<EnvDataset, EnvError> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < ENV_COLUMNS.len() || got[..ENV_COLUMNS.len()] != ENV_COLUMNS {
        return Err(EnvError::Header { expected: ENV_COLUMNS.join(","), got: got.join(",") });
    }
    let extra_names: Vec<String> = got[ENV_COLUMNS.len()..].iter().map(|s| s.to_string()).collect();
    for name in &extra_names {
        let ok = !name.is_empty()
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !name.starts_with(|c: char| c.is_ascii_digit());
        if !ok || Param::from_name(name).is_some() || name == "Contracts" {
            return Err(EnvError::Header {
                expected: "extra columns named as identifiers".into(),
                got: name.clone(),
            });
        }
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let timestamp = parse_timestamp(&row[0]).ok_or_else(|| EnvError::Malformed {
            line,
            message: format!("bad timestamp {:?}", &row[0]),
        })?;
        let node = row[1].to_string();
        if node.is_empty() {
            return Err(EnvError::Malformed { line, message: "empty node id".into() });
        }
        let mut r = EnvRecord::empty(&node, timestamp);
        r.contracts = parse_optional(&row[2], line, ENV_COLUMNS[2])?;
        for (i, p) in Param::ALL.iter().enumerate() {
            *r.param_mut(*p) = parse_optional(&row[3 + i], line, ENV_COLUMNS[3 + i])?;
        }
        for (i, name) in extra_names.iter().enumerate() {
            if let Some(v) = parse_optional(&row[ENV_COLUMNS.len() + i], line, name)? {
                r.extras.insert(name.clone(), v);
            }
        }
        r.validate().map_err(|message| EnvError::Malformed { line, message })?;
        records.push(r);
    }
    EnvDataset::new(records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_env_csv(ds: &EnvDataset) -> String {
    let extras: Vec<String> = ds.extra_names().into_iter().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ENV_COLUMNS.to_vec();
    header.extend(extras.iter().map(String::as_str));
    w.write_record(&header).expect("in-memory write");
    for r in &ds.records {
        let mut row = vec![format_timestamp(&r.timestamp), r.node.clone(), fmt_opt(r.contracts)];
        row.extend(Param::ALL.iter().map(|p| fmt_opt(r.param(*p))));
        row.extend(extras.iter().map(|k| fmt_opt(r.extras.get(k).copied())));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Reads a two-column `Node,Contracts` table.
pub fn read_contracts_csv(text: &str) -> Result<BTreeMap<String, f64>, EnvError> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != CONTRACT_COLUMNS {
        return Err(EnvError::Header { expected: CONTRACT_COLUMNS.join(","), got: got.join(",") });
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let v = parse_optional(&row[1], line, "Contracts")?.unwrap_or(0.0);
        if v < 0.0 {
            return Err(EnvError::Malformed { line, message: format!("negative contracts {v}") });
        }
        out.insert(row[0].to_string(), v);
    }
    Ok(out)
}

pub fn write_contracts_csv(contracts: &BTreeMap<String, f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONTRACT_COLUMNS).expect("in-memory write");
    for (node, c) in contracts {
        w.write_record([node.clone(), c.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Example environmental data file.
pub fn env_template() -> String {
    let mut s = ENV_COLUMNS.join(",");
    s.push('\n');
    for row in [
        "20-10-24 0:00,1_1000,0,1.41,19.03,8.3,0.14,4.26,3.62",
        "20-10-24 0:00,1_1001,5,0.72,13.05,7.4,5.77,12.86,4.36",
        "20-10-24 0:00,1_1002,0,0.32,14.25,6.7,9.57,10.53,2.82",
        "20-10-24 0:00,1_1003,12.5,1.47,12.12,8.2,9.87,10.49,4.81",
        "20-10-24 0:00,1_1004,0,0.29,20.95,6.7,12.13,10.57,3.08",
        "20-10-24 0:00,1_1005,2.5,1.36,15.62,7,1.06,12.43,4.88",
        "20-10-24 0:00,1_1006,0,0.49,12.85,8.3,5.22,6.38,4.9",
        "20-10-24 0:00,1_1007,5,0.93,23.09,7.1,0.46,2.04,4.47",
        "20-10-24 0:00,1_1009,0,0.86,23.91,7.9,8.74,8.65,4.61",
        "20-10-24 0:00,1_1010,0,0.8,21.67,7.1,10.38,13.8,2.87",
    ] {
        s.push_str(row);
        s.push('\n');
    }
    s
}

pub fn contracts_template() -> String {
    "Node,Contracts\n1_1000,0\n1_1001,5\n1_1003,12.5\n1_1005,2.5\n1_1007,5\n".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletenessThresholds {
    /// Minimum fraction of network nodes with any record.
    pub min_node_coverage: f64,
    /// Maximum spacing between timestamps, hours.
    pub max_interval_hours: f64,
}

impl Default for CompletenessThresholds {
    fn default() -> Self {
        Self { min_node_coverage: 0.30, max_interval_hours: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub node_count: usize,
    pub nodes_covered: usize,
    pub node_coverage: f64,
    pub timestamp_count: usize,
    pub interval_hours: Option<f64>,
    pub record_count: usize,
    /// Every (node, timestamp) present with every parameter.
    pub full: bool,
    /// Sparse enough that synthetic data must be generated.
    pub incomplete: bool,
    pub reasons: Vec<String>,
}

pub fn assess_completeness(
    ds: &EnvDataset,
    net: &Network,
    thresholds: &CompletenessThresholds,
) -> Result<CompletenessReport, EnvError> {
    if let Some(r) = ds.records.iter().find(|r| net.node_index(&r.node).is_none()) {
        return Err(EnvError::UnknownNode(r.node.clone()));
    }
    let covered = ds.nodes_covered().len();
    let coverage = covered as f64 / net.nodes.len() as f64;
    let interval_hours = ds.interval().map(|d| d.num_seconds() as f64 / 3600.0);
    let mut reasons = Vec::new();
    if coverage < thresholds.min_node_coverage {
        reasons.push(format!(
            "node coverage {coverage:.3} below {:.2}",
            thresholds.min_node_coverage
        ));
    }
    match interval_hours {
        Some(h) if h > thresholds.max_interval_hours => {
            reasons.push(format!("measurement interval {h} h exceeds {} h", thresholds.max_interval_hours))
        }
        None => reasons.push("fewer than two timestamps".into()),
        _ => {}
    }
    Ok(CompletenessReport {
        node_count: net.nodes.len(),
        nodes_covered: covered,
        node_coverage: coverage,
        timestamp_count: ds.timestamps().len(),
        interval_hours,
        record_count: ds.records.len(),
        full: ds.is_full(net),
        incomplete: !reasons.is_empty(),
        reasons,
    })
}

/// How missing values are filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFillOptions {
    pub horizon_hours: u32,
    pub interval_minutes: u32,
    pub seed: u64,
    /// Ranges used for parameters with no observations at all.
    pub default_ranges: BTreeMap<String, (f64, f64)>,
    pub use_kriging: bool,
    /// Overrides the default variogram (sill from sample variance,
    /// range a third of the coordinate bounding-box diagonal).
    pub variogram: Option<Variogram>,
}

impl Default for GapFillOptions {
    fn default() -> Self {
        Self {
            horizon_hours: 168,
            interval_minutes: 60,
            seed: 42,
            default_ranges: template_ranges(),
            use_kriging: true,
            variogram: None,
        }
    }
}

/// Parameter ranges spanning the example data file.
pub fn template_ranges() -> BTreeMap<String, (f64, f64)> {
    BTreeMap::from([
        ("Temperature".to_string(), (12.12, 23.91)),
        ("pH".to_string(), (6.7, 8.3)),
        ("TOC".to_string(), (0.14, 12.13)),
        ("DON".to_string(), (2.04, 13.8)),
        ("BR".to_string(), (2.82, 4.9)),
    ])
}

/// Outcome of a gap fill, including values flagged by kriging.
#[derive(Debug, Clone, PartialEq)]
pub struct GapFill {
    pub dataset: EnvDataset,
    pub kriged_values: usize,
    pub drawn_values: usize,
    pub warnings: Vec<String>,
}

/// Builds the timestamp grid for gap filling.
fn grid(ds: &EnvDataset, horizon_hours: u32, interval_minutes: u32) -> Vec<NaiveDateTime> {
    let start = ds
        .timestamps()
        .first()
        .copied()
        .unwrap_or_else(|| parse_timestamp("2024-01-01T00:00:00").expect("literal"));
    let step = Duration::minutes(interval_minutes as i64);
    let count = (horizon_hours as i64 * 60 / interval_minutes as i64).max(1);
    (0..count).map(|i| start + step * i as i32).collect()
}

/// Fills every missing (node, timestamp, parameter) by a uniform draw from
/// the observed range of that parameter. Chlorine is left untouched.
pub fn synthesize_ranges(
    ds: &EnvDataset,
    net: &Network,
    horizon_hours: u32,
    interval_minutes: u32,
    seed: u64,
    default_ranges: &BTreeMap<String, (f64, f64)>,
) -> Result<EnvDataset, EnvError> {
    let opts = GapFillOptions {
        horizon_hours,
        interval_minutes,
        seed,
        default_ranges: default_ranges.clone(),
        use_kriging: false,
        variogram: None,
    };
    Ok(gap_fill(ds, net, &opts)?.dataset)
}

/// Completes a dataset on the configured grid. With kriging enabled, a
/// parameter at a timestamp with at least two measured nodes is
/// interpolated spatially; everything else is drawn from the observed range.
pub fn gap_fill(ds: &EnvDataset, net: &Network, opts: &GapFillOptions) -> Result<GapFill, EnvError> {
    if let Some(r) = ds.records.iter().find(|r| net.node_index(&r.node).is_none()) {
        return Err(EnvError::UnknownNode(r.node.clone()));
    }
    let existing = ds.timestamps();
    let regular = ds
        .interval()
        .map(|d| d <= Duration::minutes(opts.interval_minutes as i64))
        .unwrap_or(false);
    let timestamps = if regular && existing.len() > 1 {
        existing
    } else {
        grid(ds, opts.horizon_hours, opts.interval_minutes)
    };

    let mut vars: Vec<Var> = Param::SYNTHESIZED.iter().map(|p| Var::Fixed(*p)).collect();
    vars.extend(ds.extra_names().into_iter().filter(|k| k != TIME_VAR).map(Var::Extra));

    let mut ranges = Vec::with_capacity(vars.len());
    for v in &vars {
        let obs = ds.observed(v);
        let range = if obs.is_empty() {
            *opts
                .default_ranges
                .get(v.name())
                .ok_or_else(|| EnvError::NoObservations(v.name().to_string()))?
        } else {
            obs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
        };
        ranges.push(range);
    }

    let by_key: HashMap<(NaiveDateTime, &str), &EnvRecord> =
        ds.records.iter().map(|r| ((r.timestamp, r.node.as_str()), r)).collect();
    let contracts = ds.contracts();

    let mut records = Vec::with_capacity(timestamps.len() * net.nodes.len());
    for &t in &timestamps {
        for node in &net.nodes {
            let mut r = by_key
                .get(&(t, node.id.as_str()))
                .map(|r| (*r).clone())
                .unwrap_or_else(|| EnvRecord::empty(&node.id, t));
            if r.contracts.is_none() {
                r.contracts = contracts.get(&node.id).copied();
            }
            records.push(r);
        }
    }

    let n = net.nodes.len();
    let coords: Vec<Option<(f64, f64)>> = net.nodes.iter().map(|n| n.coord).collect();
    let default_range_len = coordinate_diagonal(net) / 3.0;

    // spatial pass, independent per timestamp
    let outcomes: Vec<Vec<KrigeOutcome>> = if opts.use_kriging {
        records
            .par_chunks_mut(n)
            .map(|slice| {
                vars.iter()
                    .map(|v| krige_slice(slice, v, &coords, opts.variogram, default_range_len))
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut kriged = 0;
    let mut warnings = Vec::new();
    for (vi, v) in vars.iter().enumerate() {
        let (mut clamped, mut failed) = (0, 0);
        for per_ts in &outcomes {
            kriged += per_ts[vi].filled;
            clamped += per_ts[vi].clamped;
            failed += per_ts[vi].failed as usize;
        }
        if clamped > 0 {
            warnings.push(format!(
                "{clamped} kriged {} values left the sample range through negative weights and were clamped",
                v.name()
            ));
        }
        if failed > 0 {
            warnings.push(format!("kriging {} failed at {failed} timestamps; range draws used instead", v.name()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut drawn = 0;
    for slice in records.chunks_mut(n) {
        for (v, &(lo, hi)) in vars.iter().zip(&ranges) {
            for r in slice.iter_mut() {
                if r.var(v).is_none() {
                    let value = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                    r.set_var(v, value);
                    drawn += 1;
                }
            }
        }
    }
    Ok(GapFill { dataset: EnvDataset { records }, kriged_values: kriged, drawn_values: drawn, warnings })
}

#[derive(Debug, Default)]
struct KrigeOutcome {
    filled: usize,
    clamped: usize,
    failed: bool,
}

/// Krigs one variable over the nodes of one timestamp. Needs at least two
/// measured nodes with distinct coordinates.
fn krige_slice(
    slice: &mut [EnvRecord],
    v: &Var,
    coords: &[Option<(f64, f64)>],
    variogram: Option<Variogram>,
    default_range: f64,
) -> KrigeOutcome {
    let mut out = KrigeOutcome::default();
    let targets: Vec<usize> = (0..slice.len()).filter(|&i| slice[i].var(v).is_none() && coords[i].is_some()).collect();
    if targets.is_empty() {
        return out;
    }
    let samples: Vec<((f64, f64), f64)> = (0..slice.len())
        .filter_map(|i| Some((coords[i]?, slice[i].var(v)?)))
        .collect();
    let distinct: BTreeSet<(u64, u64)> = samples.iter().map(|(c, _)| (c.0.to_bits(), c.1.to_bits())).collect();
    if distinct.len() < 2 || distinct.len() != samples.len() {
        return out;
    }
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let variance = sample_variance(&values);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if variance == 0.0 {
        for &i in &targets {
            slice[i].set_var(v, values[0]);
        }
        out.filled = targets.len();
        return out;
    }
    let variogram = variogram.unwrap_or(Variogram {
        model: VariogramModel::Exponential,
        nugget: 0.0,
        sill: variance,
        range: default_range.max(f64::MIN_POSITIVE),
    });
    let pts: Vec<(f64, f64)> = targets.iter().map(|&i| coords[i].expect("filtered")).collect();
    match krige(&samples, &pts, &variogram) {
        Ok(est) => {
            for (&i, e) in targets.iter().zip(est) {
                let mut value = e.value;
                if value < lo || value > hi {
                    out.clamped += 1;
                    value = value.clamp(lo, hi);
                }
                slice[i].set_var(v, value);
            }
            out.filled = targets.len();
        }
        Err(_) => out.failed = true,
    }
    out
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn coordinate_diagonal(net: &Network) -> f64 {
    let pts: Vec<(f64, f64)> = net.nodes.iter().filter_map(|n| n.coord).collect();
    if pts.is_empty() {
        return 1.0;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (x1 - x0).hypot(y1 - y0)
}

/// Sets chlorine from the transport solution wherever it was not measured.
pub fn fill_chlorine(ds: &mut EnvDataset, net: &Network, transport: &TransportResult) {
    for r in &mut ds.records {
        if r.chlorine.is_none() {
            if let Some(i) = net.node_index(&r.node) {
                r.chlorine = Some(transport.chlorine[i]);
            }
        }
    }
}

/// Sets the reaction time (hours) on every record that lacks one.
pub fn attach_reaction_time(ds: &mut EnvDataset, hours_by_node: &BTreeMap<String, f64>) {
    for r in &mut ds.records {
        if !r.extras.contains_key(TIME_VAR) {
            if let Some(h) = hours_by_node.get(&r.node) {
                r.extras.insert(TIME_VAR.into(), *h);
            }
        }
    }
}

/// Rounds half away from zero.
pub fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// Node indices ordered by graph eccentricity (hop count over open pipes),
/// ascending, ties by node id.
pub fn center_outward(net: &Network) -> Vec<usize> {
    let adj = net.open_adjacency();
    let n = net.nodes.len();
    let ecc: Vec<usize> = (0..n)
        .map(|s| {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            let mut far = 0;
            while let Some(u) = q.pop_front() {
                far = far.max(dist[u]);
                for &(v, _) in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            if dist.contains(&usize::MAX) {
                usize::MAX
            } else {
                far
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (ecc[a], &net.nodes[a].id).cmp(&(ecc[b], &net.nodes[b].id)));
    order
}

/// Upper physical bounds for raised precursors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecursorBounds {
    pub toc: f64,
    pub temperature: f64,
    pub chlorine: f64,
    pub don: f64,
}

impl Default for PrecursorBounds {
    fn default() -> Self {
        Self { toc: 30.0, temperature: 35.0, chlorine: 4.0, don: 20.0 }
    }
}

/// Models and thresholds a contamination scenario must push past.
#[derive(Debug, Clone)]
pub struct ContaminationTarget<'a> {
    pub models: &'a BTreeMap<Family, DbpModel>,
    pub thresholds: &'a BTreeMap<Family, f64>,
    pub bounds: PrecursorBounds,
    /// Share of timestamps that must exceed the threshold.
    pub min_exceedance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contamination {
    pub dataset: EnvDataset,
    pub contaminated: Vec<String>,
    /// Selected nodes with zero reaction time, where every model yields 0.
    pub skipped: Vec<String>,
}

fn evaluate(model: &DbpModel, r: &EnvRecord) -> Result<f64, EnvError> {
    let time = r
        .extras
        .get(TIME_VAR)
        .copied()
        .ok_or_else(|| EnvError::Model { node: r.node.clone(), source: DbpError::MissingVariable(TIME_VAR.into()) })?;
    model.evaluate(r, time).map_err(|source| EnvError::Model { node: r.node.clone(), source })
}

/// Raises precursors at the most central `round(fraction · nodes)` nodes
/// until each targeted family exceeds its threshold.
pub fn contaminate(
    ds: &EnvDataset,
    net: &Network,
    fraction: f64,
    families: &BTreeSet<Family>,
    seed: u64,
    target: &ContaminationTarget<'_>,
) -> Result<Contamination, EnvError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EnvError::BadFraction(fraction));
    }
    if !ds.is_full(net) {
        return Err(EnvError::NotComplete("contaminate needs a gap-filled dataset".into()));
    }
    let count = round_count(fraction * net.nodes.len() as f64).min(net.nodes.len());
    let chosen: Vec<usize> = center_outward(net).into_iter().take(count).collect();
    let mut chosen_ids: BTreeSet<&str> = chosen.iter().map(|&i| net.nodes[i].id.as_str()).collect();
    let mut has_contact: BTreeSet<&str> = BTreeSet::new();
    for r in &ds.records {
        if r.extras.get(TIME_VAR).is_some_and(|&t| t > 0.0) {
            has_contact.insert(r.node.as_str());
        }
    }
    let skipped: Vec<String> = chosen_ids.iter().filter(|id| !has_contact.contains(*id)).map(|s| s.to_string()).collect();
    chosen_ids.retain(|id| has_contact.contains(id));

    // one margin per contaminated node, drawn in node order
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin: BTreeMap<&str, f64> = BTreeMap::new();
    for id in &chosen_ids {
        margin.insert(id, rng.random_range(1.1..=1.5));
    }

    let mut out = ds.clone();
    let mut hits: BTreeMap<(&str, &Family), usize> = BTreeMap::new();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for r in out.records.iter_mut() {
        let Some(&m) = margin.get(r.node.as_str()) else { continue };
        *totals.entry(chosen_ids.get(r.node.as_str()).copied().expect("chosen")).or_default() += 1;
        for family in families {
            let (Some(model), Some(&threshold)) = (target.models.get(family), target.thresholds.get(family)) else {
                return Err(EnvError::InfeasibleTarget { node: r.node.clone(), family: family.to_string() });
            };
            raise_until(r, model, threshold * m, &target.bounds)?;
        }
        for family in families {
            let model = &target.models[family];
            if evaluate(model, r)? > target.thresholds[family] {
                let id = chosen_ids.get(r.node.as_str()).copied().expect("chosen");
                *hits.entry((id, family)).or_default() += 1;
            }
        }
    }
    for (&id, &total) in &totals {
        for family in families {
            let h = hits.get(&(id, family)).copied().unwrap_or(0);
            if (h as f64) < target.min_exceedance * total as f64 {
                return Err(EnvError::InfeasibleTarget { node: id.to_string(), family: family.to_string() });
            }
        }
    }
    Ok(Contamination {
        dataset: out,
        contaminated: chosen
            .iter()
            .map(|&i| net.nodes[i].id.clone())
            .filter(|id| chosen_ids.contains(id.as_str()))
            .collect(),
        skipped,
    })
}

/// Moves TOC, temperature, chlorine and DON toward their bounds by the
/// smallest fraction that lifts the model output above `goal`.
fn raise_until(r: &mut EnvRecord, model: &DbpModel, goal: f64, bounds: &PrecursorBounds) -> Result<(), EnvError> {
    if evaluate(model, r)? > goal {
        return Ok(());
    }
    let base = r.clone();
    let lift = |lambda: f64| {
        let mut x = base.clone();
        for (p, hi) in [
            (Param::Toc, bounds.toc),
            (Param::Temperature, bounds.temperature),
            (Param::Chlorine, bounds.chlorine),
            (Param::Don, bounds.don),
        ] {
            if let Some(v) = base.param(p) {
                *x.param_mut(p) = Some(v.max(v + lambda * (hi - v)));
            }
        }
        x
    };
    let top = lift(1.0);
    if evaluate(model, &top).map(|v| v <= goal).unwrap_or(true) {
        // leave the record at the bounds; the exceedance check decides feasibility
        *r = top;
        return Ok(());
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if evaluate(model, &lift(mid))? > goal {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    *r = lift(hi);
    Ok(())
}
