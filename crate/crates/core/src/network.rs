//! Water distribution network model and EPANET `.inp` reader/writer.
//!
//! Only the subset of the format needed for steady-state, bulk-decay
//! simulation is interpreted. Pumps and valves are kept as metadata and
//! any section we do not understand is carried through verbatim so that
//! [`write_inp`] reproduces it.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("missing section: {0}")]
    MissingSection(String),
    #[error("line {line}: link {link} references unknown node {node}")]
    DanglingReference { line: usize, link: String, node: String },
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unsupported option: {message}")]
    UnsupportedOption { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Junction,
    Reservoir,
    Tank,
}

impl NodeKind {
    pub fn is_fixed_head(self) -> bool {
        !matches!(self, NodeKind::Junction)
    }
}

/// Raw tank geometry, retained so the file can be written back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankGeometry {
    pub init_level: f64,
    pub min_level: f64,
    pub max_level: f64,
    pub diameter: f64,
    pub min_volume: f64,
    pub volume_curve: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// meters
    pub elevation: f64,
    /// L/s, junctions only
    pub base_demand: f64,
    /// Fixed total head in meters for reservoirs and tanks.
    pub head: Option<f64>,
    pub coord: Option<(f64, f64)>,
    /// mg/L chlorine
    pub initial_quality: f64,
    pub pattern: Option<String>,
    pub tank: Option<TankGeometry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipeStatus {
    Open,
    Closed,
    /// Check valve; simulated as an open pipe.
    Cv,
}

impl PipeStatus {
    pub fn is_open(self) -> bool {
        !matches!(self, PipeStatus::Closed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// meters
    pub length: f64,
    /// millimeters
    pub diameter: f64,
    /// Hazen-Williams C
    pub roughness: f64,
    pub minor_loss: f64,
    pub status: PipeStatus,
}

/// A pump or valve row. Only its endpoints matter to us.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsupportedElement {
    pub section: String,
    pub id: String,
    pub from: String,
    pub to: String,
    /// Remaining columns after the endpoints, verbatim.
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub title: Vec<String>,
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
    pub unsupported_elements: Vec<UnsupportedElement>,
    /// `Global Bulk` from `[REACTIONS]`, in file units (1/day, negative for decay).
    pub global_bulk: f64,
    /// Bulk reaction order.
    pub reaction_order: f64,
    /// seconds
    pub quality_timestep: u64,
    /// `[OPTIONS]` key/value rows other than units.
    pub options: Vec<(String, String)>,
    /// `[TIMES]` key/value rows other than the quality timestep.
    pub times: Vec<(String, String)>,
    /// Sections that are carried through without interpretation.
    pub opaque_sections: BTreeMap<String, Vec<String>>,
    #[serde(skip)]
    node_index: HashMap<String, usize>,
}

impl Default for Network {
    fn default() -> Self {
        Self {
            title: Vec::new(),
            nodes: Vec::new(),
            pipes: Vec::new(),
            unsupported_elements: Vec::new(),
            global_bulk: 0.0,
            reaction_order: 1.0,
            quality_timestep: 300,
            options: Vec::new(),
            times: Vec::new(),
            opaque_sections: BTreeMap::new(),
            node_index: HashMap::new(),
        }
    }
}

impl Network {
    /// Bulk decay coefficient K_b in 1/hour (positive means decay).
    pub fn bulk_decay_per_hour(&self) -> f64 {
        -self.global_bulk / 24.0
    }

    pub fn set_bulk_decay_per_hour(&mut self, kb: f64) {
        self.global_bulk = -kb * 24.0;
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub fn junction_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Junction).count()
    }

    /// Adds a node, rejecting duplicate ids.
    pub fn add_node(&mut self, node: Node) -> Result<usize, NetworkError> {
        if self.node_index.contains_key(&node.id) {
            return Err(NetworkError::DuplicateId { line: 0, id: node.id });
        }
        let idx = self.nodes.len();
        self.node_index.insert(node.id.clone(), idx);
        self.nodes.push(node);
        Ok(idx)
    }

    pub fn add_pipe(&mut self, pipe: Pipe) -> Result<(), NetworkError> {
        for end in [&pipe.from, &pipe.to] {
            if !self.node_index.contains_key(end) {
                return Err(NetworkError::DanglingReference {
                    line: 0,
                    link: pipe.id.clone(),
                    node: end.clone(),
                });
            }
        }
        self.pipes.push(pipe);
        Ok(())
    }

    /// Rebuilds the id lookup after deserialization.
    pub fn reindex(&mut self) {
        self.node_index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
    }

    /// Pipe endpoints as node indices.
    pub fn pipe_ends(&self, pipe: &Pipe) -> (usize, usize) {
        (self.node_index[&pipe.from], self.node_index[&pipe.to])
    }

    /// Undirected adjacency over open pipes: `adj[node] = [(neighbor, pipe index)]`.
    pub fn open_adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, p) in self.pipes.iter().enumerate() {
            if !p.status.is_open() {
                continue;
            }
            let (a, b) = self.pipe_ends(p);
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        adj
    }

    /// Nodes reachable from any fixed-head node through open pipes
    /// and, optionally, pumps and valves.
    pub fn reachable_from_sources(&self, include_unsupported: bool) -> Vec<bool> {
        let mut adj: Vec<Vec<usize>> = self
            .open_adjacency()
            .into_iter()
            .map(|v| v.into_iter().map(|(n, _)| n).collect())
            .collect();
        if include_unsupported {
            for e in &self.unsupported_elements {
                if let (Some(a), Some(b)) = (self.node_index(&e.from), self.node_index(&e.to)) {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind.is_fixed_head() {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Node and edge geometry for rendering.
    pub fn geometry(&self) -> Geometry {
        Geometry {
            nodes: self
                .nodes
                .iter()
                .map(|n| GeometryNode {
                    id: n.id.clone(),
                    kind: n.kind,
                    x: n.coord.map(|c| c.0),
                    y: n.coord.map(|c| c.1),
                })
                .collect(),
            edges: self
                .pipes
                .iter()
                .map(|p| GeometryEdge {
                    id: p.id.clone(),
                    from: p.from.clone(),
                    to: p.to.clone(),
                    kind: "pipe".into(),
                })
                .chain(self.unsupported_elements.iter().map(|e| GeometryEdge {
                    id: e.id.clone(),
                    from: e.from.clone(),
                    to: e.to.clone(),
                    kind: e.section.to_lowercase(),
                }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub nodes: Vec<GeometryNode>,
    pub edges: Vec<GeometryEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryNode {
    pub id: String,
    pub kind: NodeKind,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryEdge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Title,
    Junctions,
    Reservoirs,
    Tanks,
    Pipes,
    Pumps,
    Valves,
    Demands,
    Coordinates,
    Quality,
    Reactions,
    Options,
    Times,
    End,
    Opaque,
}

fn section_from_header(name: &str) -> Section {
    match name.to_ascii_uppercase().as_str() {
        "TITLE" => Section::Title,
        "JUNCTIONS" => Section::Junctions,
        "RESERVOIRS" => Section::Reservoirs,
        "TANKS" => Section::Tanks,
        "PIPES" => Section::Pipes,
        "PUMPS" => Section::Pumps,
        "VALVES" => Section::Valves,
        "DEMANDS" => Section::Demands,
        "COORDINATES" => Section::Coordinates,
        "QUALITY" => Section::Quality,
        "REACTIONS" => Section::Reactions,
        "OPTIONS" => Section::Options,
        "TIMES" => Section::Times,
        "END" => Section::End,
        _ => Section::Opaque,
    }
}

struct Row<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl Row<'_> {
    fn num(&self, i: usize, what: &str) -> Result<f64, NetworkError> {
        let raw = self.fields.get(i).ok_or_else(|| NetworkError::MalformedRow {
            line: self.line,
            message: format!("missing {what}"),
        })?;
        let v: f64 = raw.parse().map_err(|_| NetworkError::MalformedRow {
            line: self.line,
            message: format!("{what} is not numeric: {raw:?}"),
        })?;
        if !v.is_finite() {
            return Err(NetworkError::MalformedRow {
                line: self.line,
                message: format!("{what} is not finite"),
            });
        }
        Ok(v)
    }

    fn opt_num(&self, i: usize, what: &str) -> Result<Option<f64>, NetworkError> {
        if self.fields.len() > i {
            self.num(i, what).map(Some)
        } else {
            Ok(None)
        }
    }

    fn expect_len(&self, min: usize, max: usize, section: &str) -> Result<(), NetworkError> {
        let n = self.fields.len();
        if n < min || n > max {
            return Err(NetworkError::MalformedRow {
                line: self.line,
                message: format!("[{section}] row has {n} fields, expected {min}..={max}"),
            });
        }
        Ok(())
    }

    fn positive(&self, i: usize, what: &str) -> Result<f64, NetworkError> {
        let v = self.num(i, what)?;
        if v <= 0.0 {
            return Err(NetworkError::MalformedRow {
                line: self.line,
                message: format!("{what} must be positive, got {v}"),
            });
        }
        Ok(v)
    }
}

/// Parses an EPANET-format network description.
pub fn parse_inp(text: &str) -> Result<Network, NetworkError> {
    let mut net = Network::default();
    let mut section: Option<(Section, String)> = None;
    let mut seen_junctions = false;
    // Rows whose node references must be resolved once every node section is read.
    let mut pipe_rows = Vec::new();
    let mut link_rows = Vec::new();
    let mut node_attr_rows = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = match raw.find(';') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') {
            let name = trimmed
                .trim_start_matches('[')
                .trim_end_matches(']')
                .trim()
                .to_string();
            let kind = section_from_header(&name);
            if kind == Section::Junctions {
                seen_junctions = true;
            }
            section = Some((kind, name.to_ascii_uppercase()));
            continue;
        }
        let Some((kind, name)) = &section else {
            return Err(NetworkError::MalformedRow {
                line,
                message: "data before first section header".into(),
            });
        };
        let row = Row { line, fields: trimmed.split_whitespace().collect() };
        match kind {
            Section::Title => net.title.push(trimmed.to_string()),
            Section::Junctions => {
                row.expect_len(2, 4, "JUNCTIONS")?;
                let demand = row.opt_num(2, "demand")?.unwrap_or(0.0);
                if demand < 0.0 {
                    return Err(NetworkError::MalformedRow {
                        line,
                        message: format!("negative demand {demand}"),
                    });
                }
                push_node(
                    &mut net,
                    line,
                    Node {
                        id: row.fields[0].to_string(),
                        kind: NodeKind::Junction,
                        elevation: row.num(1, "elevation")?,
                        base_demand: demand,
                        head: None,
                        coord: None,
                        initial_quality: 0.0,
                        pattern: row.fields.get(3).map(|s| s.to_string()),
                        tank: None,
                    },
                )?;
            }
            Section::Reservoirs => {
                row.expect_len(2, 3, "RESERVOIRS")?;
                let head = row.num(1, "head")?;
                push_node(
                    &mut net,
                    line,
                    Node {
                        id: row.fields[0].to_string(),
                        kind: NodeKind::Reservoir,
                        elevation: head,
                        base_demand: 0.0,
                        head: Some(head),
                        coord: None,
                        initial_quality: 0.0,
                        pattern: row.fields.get(2).map(|s| s.to_string()),
                        tank: None,
                    },
                )?;
            }
            Section::Tanks => {
                row.expect_len(7, 9, "TANKS")?;
                let elevation = row.num(1, "elevation")?;
                let init_level = row.num(2, "initial level")?;
                let geometry = TankGeometry {
                    init_level,
                    min_level: row.num(3, "minimum level")?,
                    max_level: row.num(4, "maximum level")?,
                    diameter: row.num(5, "diameter")?,
                    min_volume: row.num(6, "minimum volume")?,
                    volume_curve: row
                        .fields
                        .get(7)
                        .filter(|s| **s != "*")
                        .map(|s| s.to_string()),
                };
                push_node(
                    &mut net,
                    line,
                    Node {
                        id: row.fields[0].to_string(),
                        kind: NodeKind::Tank,
                        elevation,
                        base_demand: 0.0,
                        head: Some(elevation + init_level),
                        coord: None,
                        initial_quality: 0.0,
                        pattern: None,
                        tank: Some(geometry),
                    },
                )?;
            }
            Section::Pipes => {
                row.expect_len(6, 8, "PIPES")?;
                let status = match row.fields.get(7).map(|s| s.to_ascii_uppercase()) {
                    None => PipeStatus::Open,
                    Some(s) if s == "OPEN" => PipeStatus::Open,
                    Some(s) if s == "CLOSED" => PipeStatus::Closed,
                    Some(s) if s == "CV" => PipeStatus::Cv,
                    Some(s) => {
                        return Err(NetworkError::MalformedRow {
                            line,
                            message: format!("unknown pipe status {s}"),
                        })
                    }
                };
                let pipe = Pipe {
                    id: row.fields[0].to_string(),
                    from: row.fields[1].to_string(),
                    to: row.fields[2].to_string(),
                    length: row.positive(3, "length")?,
                    diameter: row.positive(4, "diameter")?,
                    roughness: row.positive(5, "roughness")?,
                    minor_loss: row.opt_num(6, "minor loss")?.unwrap_or(0.0),
                    status,
                };
                if pipe.from == pipe.to {
                    return Err(NetworkError::MalformedRow {
                        line,
                        message: format!("pipe {} connects node {} to itself", pipe.id, pipe.from),
                    });
                }
                pipe_rows.push((line, pipe));
            }
            Section::Pumps | Section::Valves => {
                if row.fields.len() < 3 {
                    return Err(NetworkError::MalformedRow {
                        line,
                        message: format!("[{name}] row needs at least 3 fields"),
                    });
                }
                link_rows.push((
                    line,
                    UnsupportedElement {
                        section: name.clone(),
                        id: row.fields[0].to_string(),
                        from: row.fields[1].to_string(),
                        to: row.fields[2].to_string(),
                        fields: row.fields[3..].iter().map(|s| s.to_string()).collect(),
                    },
                ));
            }
            Section::Demands | Section::Coordinates | Section::Quality => {
                node_attr_rows.push((*kind, line, row.fields.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
            }
            Section::Reactions => parse_reaction(&mut net, &row)?,
            Section::Options => {
                let (key, value) = split_key_value(trimmed);
                if key.eq_ignore_ascii_case("UNITS") {
                    if !value.eq_ignore_ascii_case("LPS") {
                        return Err(NetworkError::UnsupportedOption {
                            line,
                            message: format!("flow units {value} (only LPS is supported)"),
                        });
                    }
                } else if key.eq_ignore_ascii_case("HEADLOSS") {
                    if !value.eq_ignore_ascii_case("H-W") {
                        return Err(NetworkError::UnsupportedOption {
                            line,
                            message: format!("headloss formula {value} (only H-W is supported)"),
                        });
                    }
                } else {
                    net.options.push((key, value));
                }
            }
            Section::Times => {
                let (key, value) = split_key_value(trimmed);
                if key.eq_ignore_ascii_case("QUALITY TIMESTEP") {
                    net.quality_timestep = parse_clock(&value).ok_or_else(|| NetworkError::MalformedRow {
                        line,
                        message: format!("bad time value {value:?}"),
                    })?;
                } else {
                    net.times.push((key, value));
                }
            }
            Section::End => {}
            Section::Opaque => net
                .opaque_sections
                .entry(name.clone())
                .or_default()
                .push(trimmed.to_string()),
        }
    }

    if !seen_junctions || net.junction_count() == 0 {
        return Err(NetworkError::MissingSection("JUNCTIONS".into()));
    }
    if !net.nodes.iter().any(|n| n.kind.is_fixed_head()) {
        return Err(NetworkError::MissingSection("RESERVOIRS or TANKS".into()));
    }

    let check = |net: &Network, line: usize, link: &str, node: &str| {
        if net.node_index(node).is_none() {
            Err(NetworkError::DanglingReference { line, link: link.into(), node: node.into() })
        } else {
            Ok(())
        }
    };
    if pipe_rows.is_empty() {
        return Err(NetworkError::MissingSection("PIPES".into()));
    }
    for (line, pipe) in pipe_rows {
        check(&net, line, &pipe.id, &pipe.from)?;
        check(&net, line, &pipe.id, &pipe.to)?;
        net.pipes.push(pipe);
    }
    for (line, e) in link_rows {
        check(&net, line, &e.id, &e.from)?;
        check(&net, line, &e.id, &e.to)?;
        net.unsupported_elements.push(e);
    }

    let mut demand_override: BTreeMap<usize, f64> = BTreeMap::new();
    for (kind, line, fields) in node_attr_rows {
        let row = Row { line, fields: fields.iter().map(String::as_str).collect() };
        let idx = net.node_index(&fields[0]).ok_or_else(|| NetworkError::DanglingReference {
            line,
            link: format!("{kind:?}").to_uppercase(),
            node: fields[0].clone(),
        })?;
        match kind {
            Section::Demands => {
                row.expect_len(2, 4, "DEMANDS")?;
                let d = row.num(1, "demand")?;
                if d < 0.0 {
                    return Err(NetworkError::MalformedRow { line, message: format!("negative demand {d}") });
                }
                *demand_override.entry(idx).or_insert(0.0) += d;
            }
            Section::Coordinates => {
                row.expect_len(3, 3, "COORDINATES")?;
                net.nodes[idx].coord = Some((row.num(1, "x")?, row.num(2, "y")?));
            }
            Section::Quality => {
                row.expect_len(2, 2, "QUALITY")?;
                let q = row.num(1, "initial quality")?;
                if q < 0.0 {
                    return Err(NetworkError::MalformedRow { line, message: format!("negative quality {q}") });
                }
                net.nodes[idx].initial_quality = q;
            }
            _ => unreachable!(),
        }
    }
    for (idx, d) in demand_override {
        if net.nodes[idx].kind == NodeKind::Junction {
            net.nodes[idx].base_demand = d;
        }
    }
    Ok(net)
}

fn push_node(net: &mut Network, line: usize, node: Node) -> Result<(), NetworkError> {
    net.add_node(node).map(|_| ()).map_err(|e| match e {
        NetworkError::DuplicateId { id, .. } => NetworkError::DuplicateId { line, id },
        other => other,
    })
}

fn parse_reaction(net: &mut Network, row: &Row<'_>) -> Result<(), NetworkError> {
    let upper: Vec<String> = row.fields.iter().map(|s| s.to_ascii_uppercase()).collect();
    match upper.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["ORDER", "BULK", _] => net.reaction_order = row.num(2, "bulk order")?,
        ["GLOBAL", "BULK", _] => net.global_bulk = row.num(2, "global bulk coefficient")?,
        _ => {
            net.opaque_sections
                .entry("REACTIONS".into())
                .or_default()
                .push(row.fields.join(" "));
        }
    }
    Ok(())
}

const TWO_WORD_KEYS: [&str; 14] = [
    "SPECIFIC GRAVITY",
    "DEMAND MULTIPLIER",
    "DEMAND MODEL",
    "EMITTER EXPONENT",
    "MINIMUM PRESSURE",
    "REQUIRED PRESSURE",
    "PRESSURE EXPONENT",
    "QUALITY TIMESTEP",
    "HYDRAULIC TIMESTEP",
    "PATTERN TIMESTEP",
    "PATTERN START",
    "REPORT TIMESTEP",
    "REPORT START",
    "START CLOCKTIME",
];

/// Splits an `[OPTIONS]`/`[TIMES]` row into key and value.
fn split_key_value(line: &str) -> (String, String) {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let split = if fields.len() > 2 && TWO_WORD_KEYS.contains(&format!("{} {}", fields[0], fields[1]).to_ascii_uppercase().as_str()) {
        2
    } else {
        1.min(fields.len())
    };
    (fields[..split].join(" "), fields[split..].join(" "))
}

/// Parses `H:MM[:SS]` or a plain number of hours into seconds.
fn parse_clock(value: &str) -> Option<u64> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        [h] => h.parse::<f64>().ok().map(|h| (h * 3600.0).round() as u64),
        [h, m] => Some(h.parse::<u64>().ok()? * 3600 + m.parse::<u64>().ok()? * 60),
        [h, m, s] => Some(h.parse::<u64>().ok()? * 3600 + m.parse::<u64>().ok()? * 60 + s.parse::<u64>().ok()?),
        _ => None,
    }
}

fn format_clock(seconds: u64) -> String {
    let (h, m, s) = (seconds / 3600, (seconds % 3600) / 60, seconds % 60);
    if s == 0 {
        format!("{h}:{m:02}")
    } else {
        format!("{h}:{m:02}:{s:02}")
    }
}

/// Serializes a network back to `.inp` text. Parsing the output yields an
/// identical [`Network`].
pub fn write_inp(net: &Network) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "[TITLE]");
    for t in &net.title {
        let _ = writeln!(w, "{t}");
    }
    let _ = writeln!(w, "\n[JUNCTIONS]\n;ID\tElev\tDemand\tPattern");
    for n in net.nodes.iter().filter(|n| n.kind == NodeKind::Junction) {
        let _ = write!(w, "{}\t{:?}\t{:?}", n.id, n.elevation, n.base_demand);
        if let Some(p) = &n.pattern {
            let _ = write!(w, "\t{p}");
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "\n[RESERVOIRS]\n;ID\tHead\tPattern");
    for n in net.nodes.iter().filter(|n| n.kind == NodeKind::Reservoir) {
        let _ = write!(w, "{}\t{:?}", n.id, n.head.unwrap_or(n.elevation));
        if let Some(p) = &n.pattern {
            let _ = write!(w, "\t{p}");
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "\n[TANKS]\n;ID\tElevation\tInitLevel\tMinLevel\tMaxLevel\tDiameter\tMinVol\tVolCurve");
    for n in net.nodes.iter().filter(|n| n.kind == NodeKind::Tank) {
        let t = n.tank.as_ref().expect("tank geometry");
        let _ = write!(
            w,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            n.id, n.elevation, t.init_level, t.min_level, t.max_level, t.diameter, t.min_volume
        );
        if let Some(c) = &t.volume_curve {
            let _ = write!(w, "\t{c}");
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "\n[PIPES]\n;ID\tNode1\tNode2\tLength\tDiameter\tRoughness\tMinorLoss\tStatus");
    for p in &net.pipes {
        let status = match p.status {
            PipeStatus::Open => "Open",
            PipeStatus::Closed => "Closed",
            PipeStatus::Cv => "CV",
        };
        let _ = writeln!(
            w,
            "{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{}",
            p.id, p.from, p.to, p.length, p.diameter, p.roughness, p.minor_loss, status
        );
    }
    for section in ["PUMPS", "VALVES"] {
        let rows: Vec<_> = net.unsupported_elements.iter().filter(|e| e.section == section).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(w, "\n[{section}]");
        for e in rows {
            let mut fields = vec![e.id.as_str(), e.from.as_str(), e.to.as_str()];
            fields.extend(e.fields.iter().map(String::as_str));
            let _ = writeln!(w, "{}", fields.join("\t"));
        }
    }
    let _ = writeln!(w, "\n[QUALITY]");
    for n in net.nodes.iter().filter(|n| n.initial_quality != 0.0) {
        let _ = writeln!(w, "{}\t{:?}", n.id, n.initial_quality);
    }
    let _ = writeln!(w, "\n[REACTIONS]\nOrder Bulk\t{:?}\nGlobal Bulk\t{:?}", net.reaction_order, net.global_bulk);
    if let Some(extra) = net.opaque_sections.get("REACTIONS") {
        for l in extra {
            let _ = writeln!(w, "{l}");
        }
    }
    let _ = writeln!(w, "\n[OPTIONS]\nUnits\tLPS\nHeadloss\tH-W");
    for (k, v) in &net.options {
        let _ = writeln!(w, "{k}\t{v}");
    }
    let _ = writeln!(w, "\n[TIMES]\nQuality Timestep\t{}", format_clock(net.quality_timestep));
    for (k, v) in &net.times {
        let _ = writeln!(w, "{k}\t{v}");
    }
    let _ = writeln!(w, "\n[COORDINATES]\n;Node\tX\tY");
    for n in &net.nodes {
        if let Some((x, y)) = n.coord {
            let _ = writeln!(w, "{}\t{:?}\t{:?}", n.id, x, y);
        }
    }
    for (name, lines) in net.opaque_sections.iter().filter(|(k, _)| k.as_str() != "REACTIONS") {
        let _ = writeln!(w, "\n[{name}]");
        for l in lines {
            let _ = writeln!(w, "{l}");
        }
    }
    let _ = writeln!(w, "\n[END]");
    out
}

/// Structural problems that do not prevent parsing but make a network
/// unusable for simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Junction not reachable from any fixed-head node through open pipes.
    Unreachable { node: String },
    /// Junction that would be reachable if closed pipes were opened.
    IsolatedByClosedPipe { node: String },
    /// No junction has a positive demand, so no water moves.
    ZeroDemand,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Unreachable { node } => write!(f, "junction {node} is not connected to any source"),
            Diagnostic::IsolatedByClosedPipe { node } => {
                write!(f, "isolated node {node}: only reachable through a closed pipe")
            }
            Diagnostic::ZeroDemand => write!(f, "network has zero total demand"),
        }
    }
}

pub fn validate_network(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let reach = net.reachable_from_sources(false);

    // Reachability when closed pipes are treated as open.
    let mut all_pipes = net.clone();
    for p in &mut all_pipes.pipes {
        p.status = PipeStatus::Open;
    }
    let reach_all = all_pipes.reachable_from_sources(false);

    for (i, n) in net.nodes.iter().enumerate() {
        if n.kind != NodeKind::Junction || reach[i] {
            continue;
        }
        if reach_all[i] {
            out.push(Diagnostic::IsolatedByClosedPipe { node: n.id.clone() });
        } else {
            out.push(Diagnostic::Unreachable { node: n.id.clone() });
        }
    }
    if net.nodes.iter().all(|n| n.base_demand <= 0.0) {
        out.push(Diagnostic::ZeroDemand);
    }
    out
}
