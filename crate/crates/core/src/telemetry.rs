//! Telemetry ingestion: the three channels (field measurements `d`, network
//! records `n`, application log `a`), the benign baseline, and the incident
//! event sequence.
//!
//! File formats:
//! - field/network CSV: header `timestamp_ms,variable,value`;
//! - application log: lines `ISO8601 <variable>=<value>`, free text ignored;
//! - event sequence CSV: header-less `id,type,value,description`;
//! - baseline CSV: `variable,value` rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;

/// One telemetry channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// Field measurement.
    D,
    /// Network record.
    N,
    /// Application log.
    A,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::D => write!(f, "d"),
            Channel::N => write!(f, "n"),
            Channel::A => write!(f, "a"),
        }
    }
}

/// A telemetry value: float or string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    F(f64),
    S(String),
}

impl Value {
    pub fn parse(text: &str) -> Value {
        let t = text.trim();
        match t.parse::<f64>() {
            Ok(f) if t.chars().next().map(|c| c.is_ascii_digit() || c == '-' || c == '+' || c == '.')
                == Some(true) =>
            {
                Value::F(f)
            }
            _ => Value::S(t.to_string()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::F(f) => Some(*f),
            Value::S(_) => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::F(_) => "float",
            Value::S(_) => "string",
        }
    }

    /// Cross-channel consistency with a relative tolerance for floats.
    pub fn consistent_with(&self, other: &Value, rel_tol: f64) -> bool {
        match (self, other) {
            (Value::F(a), Value::F(b)) => {
                let scale = a.abs().max(b.abs()).max(1.0);
                (a - b).abs() <= rel_tol * scale
            }
            (Value::S(a), Value::S(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::F(x) => write!(f, "{}", x),
            Value::S(s) => write!(f, "{}", s),
        }
    }
}

/// One observation of one variable in one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub variable: String,
    pub channel: Channel,
    /// Milliseconds since the epoch; strictly increasing per variable
    /// within a channel.
    pub t: i64,
    pub v: Value,
}

/// Incident event types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum EventType {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    E10,
    E11,
    E12,
    E13,
    E14,
    E15,
}

impl EventType {
    pub fn parse(text: &str) -> Option<EventType> {
        Some(match text.trim() {
            "E1" => EventType::E1,
            "E2" => EventType::E2,
            "E3" => EventType::E3,
            "E4" => EventType::E4,
            "E5" => EventType::E5,
            "E6" => EventType::E6,
            "E7" => EventType::E7,
            "E8" => EventType::E8,
            "E9" => EventType::E9,
            "E10" => EventType::E10,
            "E11" => EventType::E11,
            "E12" => EventType::E12,
            "E13" => EventType::E13,
            "E14" => EventType::E14,
            "E15" => EventType::E15,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::E1 => "E1",
            EventType::E2 => "E2",
            EventType::E3 => "E3",
            EventType::E4 => "E4",
            EventType::E5 => "E5",
            EventType::E6 => "E6",
            EventType::E7 => "E7",
            EventType::E8 => "E8",
            EventType::E9 => "E9",
            EventType::E10 => "E10",
            EventType::E11 => "E11",
            EventType::E12 => "E12",
            EventType::E13 => "E13",
            EventType::E14 => "E14",
            EventType::E15 => "E15",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// One row of the incident event CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInstance {
    pub id: u64,
    pub ty: EventType,
    pub value: Option<Value>,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub events: Vec<EventInstance>,
}

impl EventSequence {
    pub fn types(&self) -> Vec<EventType> {
        self.events.iter().map(|e| e.ty).collect()
    }
}

/// Benign values per variable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BaselineStore {
    pub values: BTreeMap<String, Vec<Value>>,
}

impl BaselineStore {
    pub fn get(&self, variable: &str) -> Option<&Vec<Value>> {
        self.values.get(variable)
    }
}

/// Direction of an aligned observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Physical side -> cyberspace: t_d < t_n < t_a.
    Response,
    /// Cyberspace -> physical side: t_d > t_n > t_a.
    Dispatch,
    Unknown,
}

/// Per-epoch match of one variable across channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignedTriple {
    pub variable: String,
    /// Epoch anchor: earliest timestamp in the cluster.
    pub t: i64,
    pub d: Option<ChannelRecord>,
    pub n: Option<ChannelRecord>,
    pub a: Option<ChannelRecord>,
    pub direction: Direction,
    /// Set when the ordering is mixed or a channel is missing.
    pub flag: Option<String>,
}

impl AlignedTriple {
    pub fn complete(&self) -> bool {
        self.d.is_some() && self.n.is_some() && self.a.is_some()
    }
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Load a field-measurement or network-record CSV.
pub fn load_channel(
    path: &Path,
    channel: Channel,
    rename: &BTreeMap<String, String>,
) -> Result<Vec<ChannelRecord>, IngestError> {
    let text = read_file(path)?;
    let pathstr = path.display().to_string();
    let mut records: Vec<ChannelRecord> = Vec::new();
    let mut last_t: BTreeMap<String, i64> = BTreeMap::new();
    let mut value_kind: BTreeMap<String, &'static str> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && trimmed == "timestamp_ms,variable,value" {
            continue;
        }
        let parts: Vec<&str> = trimmed.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(IngestError::SchemaError {
                path: pathstr,
                line: lineno,
                detail: format!("expected 3 columns, found {}", parts.len()),
            });
        }
        let t: i64 = parts[0].trim().parse().map_err(|_| IngestError::SchemaError {
            path: pathstr.clone(),
            line: lineno,
            detail: format!("bad timestamp `{}`", parts[0]),
        })?;
        let mut variable = parts[1].trim().to_string();
        if variable.is_empty() {
            return Err(IngestError::SchemaError {
                path: pathstr.clone(),
                line: lineno,
                detail: "empty variable name".into(),
            });
        }
        if let Some(renamed) = rename.get(&variable) {
            variable = renamed.clone();
        }
        let v = Value::parse(parts[2]);
        match last_t.get(&variable) {
            Some(&prev) if t < prev => {
                return Err(IngestError::NonMonotoneTimestamp {
                    path: pathstr,
                    line: lineno,
                    variable,
                });
            }
            Some(&prev) if t == prev => {
                return Err(IngestError::DuplicateRecord {
                    path: pathstr,
                    line: lineno,
                    variable,
                    t,
                });
            }
            _ => {}
        }
        let kind = v.type_name();
        match value_kind.get(&variable) {
            Some(&k) if k != kind => {
                return Err(IngestError::SchemaError {
                    path: pathstr,
                    line: lineno,
                    detail: format!("value type for `{}` changed from {} to {}", variable, k, kind),
                });
            }
            _ => {
                value_kind.insert(variable.clone(), kind);
            }
        }
        last_t.insert(variable.clone(), t);
        records.push(ChannelRecord {
            variable,
            channel,
            t,
            v,
        });
    }
    records.sort_by(|a, b| a.t.cmp(&b.t).then(a.variable.cmp(&b.variable)));
    Ok(records)
}

/// Serialize channel records back to the CSV schema.
pub fn channel_to_csv(records: &[ChannelRecord]) -> String {
    let mut s = String::from("timestamp_ms,variable,value\n");
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.t, r.variable, r.v));
    }
    s
}

/// Load the application log: `ISO8601 <variable>=<value>` lines; anything
/// else is ignored.
pub fn load_applog(
    path: &Path,
    rename: &BTreeMap<String, String>,
) -> Result<Vec<ChannelRecord>, IngestError> {
    let text = read_file(path)?;
    let pathstr = path.display().to_string();
    let mut records = Vec::new();
    let mut last_t: BTreeMap<String, i64> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((stamp, rest)) = trimmed.split_once(' ') else {
            continue;
        };
        let Ok(dt) = chrono::DateTime::parse_from_rfc3339(stamp) else {
            continue; // free-text line
        };
        let Some((variable, value)) = rest.split_once('=') else {
            continue; // free-text line
        };
        if variable.contains(' ') {
            continue;
        }
        let mut variable = variable.trim().to_string();
        if let Some(renamed) = rename.get(&variable) {
            variable = renamed.clone();
        }
        let t = dt.timestamp_millis();
        if let Some(&prev) = last_t.get(&variable) {
            if t < prev {
                return Err(IngestError::NonMonotoneTimestamp {
                    path: pathstr,
                    line: lineno,
                    variable,
                });
            }
        }
        last_t.insert(variable.clone(), t);
        records.push(ChannelRecord {
            variable,
            channel: Channel::A,
            t,
            v: Value::parse(value),
        });
    }
    records.sort_by(|a, b| a.t.cmp(&b.t).then(a.variable.cmp(&b.variable)));
    Ok(records)
}

/// Load the incident event sequence CSV (`id,type,value,description`).
pub fn load_event_sequence(path: &Path) -> Result<EventSequence, IngestError> {
    let text = read_file(path)?;
    parse_event_sequence(&text, &path.display().to_string())
}

pub fn parse_event_sequence(text: &str, pathstr: &str) -> Result<EventSequence, IngestError> {
    let mut events = Vec::new();
    let mut last_id: Option<u64> = None;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = trimmed.splitn(4, ',').collect();
        if parts.len() != 4 {
            return Err(IngestError::SchemaError {
                path: pathstr.into(),
                line: row,
                detail: format!("expected 4 columns, found {}", parts.len()),
            });
        }
        let id: u64 = parts[0].trim().parse().map_err(|_| IngestError::SchemaError {
            path: pathstr.to_string(),
            line: row,
            detail: format!("bad event id `{}`", parts[0]),
        })?;
        let ty = EventType::parse(parts[1]).ok_or_else(|| IngestError::UnknownEventType {
            path: pathstr.to_string(),
            row,
            ty: parts[1].trim().to_string(),
        })?;
        if let Some(prev) = last_id {
            if id <= prev {
                return Err(IngestError::NonIncreasingEventId {
                    path: pathstr.to_string(),
                    row,
                });
            }
        }
        last_id = Some(id);
        let raw_value = parts[2].trim();
        let value = if raw_value.is_empty() {
            None
        } else {
            Some(Value::parse(raw_value))
        };
        events.push(EventInstance {
            id,
            ty,
            value,
            description: parts[3].trim().to_string(),
        });
    }
    Ok(EventSequence { events })
}

/// Load benign baseline values (`variable,value` rows).
pub fn load_baseline(path: &Path) -> Result<BaselineStore, IngestError> {
    let text = read_file(path)?;
    let pathstr = path.display().to_string();
    let mut store = BaselineStore::default();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && trimmed == "variable,value" {
            continue;
        }
        let Some((variable, value)) = trimmed.split_once(',') else {
            return Err(IngestError::SchemaError {
                path: pathstr,
                line: i + 1,
                detail: "expected `variable,value`".into(),
            });
        };
        store
            .values
            .entry(variable.trim().to_string())
            .or_default()
            .push(Value::parse(value));
    }
    Ok(store)
}

/// Align one variable's records across channels into per-epoch triples.
///
/// Records are clustered greedily: a cluster opens at the earliest
/// unconsumed record and absorbs everything within `window_ms`. Two records
/// of one channel inside the same cluster is an ambiguity error. Direction
/// comes from the strict timestamp order; equal or mixed orders are flagged
/// and left `Unknown` but stay usable for consistency checks.
pub fn align(
    records: &[ChannelRecord],
    variable: &str,
    window_ms: i64,
) -> Result<Vec<AlignedTriple>, IngestError> {
    let mut mine: Vec<&ChannelRecord> = records
        .iter()
        .filter(|r| r.variable == variable)
        .collect();
    mine.sort_by_key(|r| (r.t, r.channel));
    let mut out = Vec::new();
    let mut i = 0;
    while i < mine.len() {
        let start = mine[i].t;
        let mut cluster: Vec<&ChannelRecord> = Vec::new();
        while i < mine.len() && mine[i].t - start <= window_ms {
            cluster.push(mine[i]);
            i += 1;
        }
        let mut d = None;
        let mut n = None;
        let mut a = None;
        for r in &cluster {
            let slot = match r.channel {
                Channel::D => &mut d,
                Channel::N => &mut n,
                Channel::A => &mut a,
            };
            if slot.is_some() {
                return Err(IngestError::AmbiguousAlignment {
                    variable: variable.to_string(),
                    t: start,
                    count: cluster.len(),
                });
            }
            *slot = Some((*r).clone());
        }
        let (direction, flag) = direction_of(&d, &n, &a);
        out.push(AlignedTriple {
            variable: variable.to_string(),
            t: start,
            d,
            n,
            a,
            direction,
            flag,
        });
    }
    Ok(out)
}

fn direction_of(
    d: &Option<ChannelRecord>,
    n: &Option<ChannelRecord>,
    a: &Option<ChannelRecord>,
) -> (Direction, Option<String>) {
    match (d, n, a) {
        (Some(d), Some(n), Some(a)) => {
            if d.t < n.t && n.t < a.t {
                (Direction::Response, None)
            } else if d.t > n.t && n.t > a.t {
                (Direction::Dispatch, None)
            } else {
                (
                    Direction::Unknown,
                    Some("timestamp order is neither response nor dispatch".into()),
                )
            }
        }
        _ => {
            let missing: Vec<&str> = [("d", d), ("n", n), ("a", a)]
                .iter()
                .filter(|(_, r)| r.is_none())
                .map(|(name, _)| *name)
                .collect();
            (
                Direction::Unknown,
                Some(format!("missing channels: {}", missing.join(","))),
            )
        }
    }
}

/// Distinct variable names across a record set.
pub fn variables(records: &[ChannelRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.variable.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmpfile(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn field_rows_parse() {
        let f = tmpfile("timestamp_ms,variable,value\n1000,angle,25.345\n1000,magnitude,1972301.79\n");
        let recs = load_channel(f.path(), Channel::D, &BTreeMap::new()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].variable, "angle");
        assert_eq!(recs[0].v, Value::F(25.345));
        assert_eq!(recs[1].v, Value::F(1972301.79));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = tmpfile("");
        let recs = load_channel(f.path(), Channel::N, &BTreeMap::new()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn duplicate_variable_timestamp_rejected() {
        let f = tmpfile("timestamp_ms,variable,value\n1000,angle,1.0\n1000,angle,2.0\n");
        let err = load_channel(f.path(), Channel::D, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateRecord { .. }));
    }

    #[test]
    fn non_monotone_rejected() {
        let f = tmpfile("timestamp_ms,variable,value\n2000,angle,1.0\n1000,angle,2.0\n");
        let err = load_channel(f.path(), Channel::D, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotoneTimestamp { .. }));
    }

    #[test]
    fn mixed_value_type_rejected() {
        let f = tmpfile("timestamp_ms,variable,value\n1000,v,1.0\n2000,v,OPEN\n");
        let err = load_channel(f.path(), Channel::D, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, IngestError::SchemaError { .. }));
    }

    #[test]
    fn roundtrip_modulo_order() {
        let f = tmpfile("timestamp_ms,variable,value\n2000,b,2\n1000,a,1\n");
        let recs = load_channel(f.path(), Channel::D, &BTreeMap::new()).unwrap();
        let csv = channel_to_csv(&recs);
        let f2 = tmpfile(&csv);
        let recs2 = load_channel(f2.path(), Channel::D, &BTreeMap::new()).unwrap();
        assert_eq!(recs, recs2);
    }

    #[test]
    fn applog_parses_and_ignores_free_text() {
        let log = "2031-05-02T10:15:03.122+00:00 angle=25.345\nstartup complete, entering poll loop\n2031-05-02T10:15:03.500+00:00 equipment_name=PV_UNIT_7\n";
        let f = tmpfile(log);
        let recs = load_applog(f.path(), &BTreeMap::new()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].variable, "angle");
        assert_eq!(recs[1].v, Value::S("PV_UNIT_7".into()));
        assert!(recs[0].t < recs[1].t);
    }

    #[test]
    fn event_row_parses_like_the_catalog() {
        let seq =
            parse_event_sequence("1,E1,25.345,'angle' sensing event\n2,E1,1972301.79,'magnitude' sensing event\n", "t")
                .unwrap();
        assert_eq!(seq.events.len(), 2);
        assert_eq!(seq.events[1].id, 2);
        assert_eq!(seq.events[1].ty, EventType::E1);
        assert_eq!(seq.events[1].value, Some(Value::F(1972301.79)));
        assert_eq!(seq.events[1].description, "'magnitude' sensing event");
    }

    #[test]
    fn single_row_sequence() {
        let seq = parse_event_sequence("1,E15,,message sent\n", "t").unwrap();
        assert_eq!(seq.events.len(), 1);
        assert_eq!(seq.events[0].value, None);
    }

    #[test]
    fn out_of_order_ids_rejected() {
        let err = parse_event_sequence("3,E1,,x\n1,E2,,y\n", "t").unwrap_err();
        assert!(matches!(err, IngestError::NonIncreasingEventId { .. }));
    }

    #[test]
    fn unknown_event_type_rejected() {
        let err = parse_event_sequence("1,E99,,x\n", "t").unwrap_err();
        assert!(matches!(err, IngestError::UnknownEventType { .. }));
    }

    #[test]
    fn align_response_order() {
        let recs = vec![
            ChannelRecord { variable: "x".into(), channel: Channel::D, t: 1000, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::N, t: 1140, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::A, t: 1290, v: Value::F(1.0) },
        ];
        let triples = align(&recs, "x", 500).unwrap();
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].direction, Direction::Response);
        assert!(triples[0].flag.is_none());
    }

    #[test]
    fn align_dispatch_order() {
        let recs = vec![
            ChannelRecord { variable: "x".into(), channel: Channel::A, t: 1000, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::N, t: 1100, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::D, t: 1200, v: Value::F(1.0) },
        ];
        let triples = align(&recs, "x", 500).unwrap();
        assert_eq!(triples[0].direction, Direction::Dispatch);
    }

    #[test]
    fn align_only_applog() {
        let recs = vec![ChannelRecord {
            variable: "x".into(),
            channel: Channel::A,
            t: 1000,
            v: Value::F(1.0),
        }];
        let triples = align(&recs, "x", 500).unwrap();
        assert_eq!(triples[0].direction, Direction::Unknown);
        assert!(!triples[0].complete());
        assert!(triples[0].flag.as_deref().unwrap().contains("d,n"));
    }

    #[test]
    fn equal_timestamps_unknown_but_usable() {
        let recs = vec![
            ChannelRecord { variable: "x".into(), channel: Channel::D, t: 1000, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::N, t: 1000, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::A, t: 1000, v: Value::F(1.0) },
        ];
        let triples = align(&recs, "x", 500).unwrap();
        assert_eq!(triples[0].direction, Direction::Unknown);
        assert!(triples[0].complete());
    }

    #[test]
    fn ambiguous_alignment_detected() {
        let recs = vec![
            ChannelRecord { variable: "x".into(), channel: Channel::D, t: 1000, v: Value::F(1.0) },
            ChannelRecord { variable: "x".into(), channel: Channel::D, t: 1100, v: Value::F(2.0) },
        ];
        let err = align(&recs, "x", 500).unwrap_err();
        assert!(matches!(err, IngestError::AmbiguousAlignment { .. }));
    }

    #[test]
    fn float_consistency_tolerance() {
        let a = Value::F(1430307.59);
        let b = Value::F(1430307.59);
        assert!(a.consistent_with(&b, 1e-9));
        let c = Value::F(1156739.528);
        assert!(!a.consistent_with(&c, 1e-9));
        assert!(!Value::S("X".into()).consistent_with(&Value::F(1.0), 1e-9));
    }
}
