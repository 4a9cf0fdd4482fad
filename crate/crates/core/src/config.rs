//! Run configuration: feature catalogs, thresholds, and the event binding map.
//!
//! The source/sink/callback catalogs are open-ended name-pattern lists. A
//! pattern is matched against the callee text with `*` as a wildcard, so
//! `*.get_response` matches `conn.get_response` and `_on_*` matches
//! `_on_message`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// Deviation thresholds on bin occupancy ratios. A scored value in bin `i`
/// with ratio `p_i < tau_h` is a high deviation, `p_i < tau_m` moderate,
/// `p_i < tau_l` low, and anything at or above `tau_l` is not deviated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Thresholds {
    pub tau_h: f64,
    pub tau_m: f64,
    pub tau_l: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau_h: 0.02,
            tau_m: 0.10,
            tau_l: 0.25,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.tau_h && self.tau_h < self.tau_m && self.tau_m < self.tau_l && self.tau_l < 1.0)
        {
            return Err(format!(
                "thresholds must satisfy 0 < tau_h < tau_m < tau_l < 1 (got {} / {} / {})",
                self.tau_h, self.tau_m, self.tau_l
            ));
        }
        Ok(())
    }
}

/// Selects graph nodes that can produce a given incident event type.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventBinding {
    /// Node kinds: "source", "sink", "p_var", "call", "object".
    #[serde(default)]
    pub kinds: Vec<String>,
    /// Exact entity names (e.g. `forward_value`).
    #[serde(default)]
    pub names: Vec<String>,
}

/// Full pipeline configuration.
///
/// Paths are resolved relative to the config file's directory when loaded
/// from disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Analyzed application source file.
    pub source: PathBuf,
    /// Virtual physical variable names (from the incident report).
    pub p_vars: Vec<String>,
    /// Callee name patterns with taint-source features: API calls,
    /// command-line handlers, query processors, read/input functions.
    pub source_catalog: Vec<String>,
    /// Callee name patterns treated as sinks.
    pub sink_catalog: Vec<String>,
    /// Method name patterns treated as callbacks.
    pub callback_catalog: Vec<String>,
    /// Benign baseline CSV (`variable,value` rows).
    pub baseline: PathBuf,
    /// Field-measurement CSV (channel d).
    pub field: PathBuf,
    /// Network-record CSV (channel n).
    pub network: PathBuf,
    /// Application log (channel a).
    pub applog: PathBuf,
    /// Incident event-sequence CSV.
    pub events: PathBuf,
    /// Histogram bin count for float deviation models.
    pub bins: usize,
    /// Minimum baseline sample count before a float model may be fit.
    pub min_baseline: usize,
    pub thresholds: Thresholds,
    /// Channel alignment window in milliseconds.
    pub align_window_ms: i64,
    /// Relative tolerance for cross-channel float equality.
    pub float_tol: f64,
    /// Telemetry variable name -> program variable name.
    pub rename_map: BTreeMap<String, String>,
    /// Entity name of the response object (the node that carries the
    /// matched global pattern).
    pub response_object: String,
    /// Event type -> node binding, seeded from the incident event catalog.
    pub node_event_map: BTreeMap<String, EventBinding>,
    /// Analyst path override: entity names the selected path must contain.
    pub path_override: Option<Vec<String>>,
    /// Cap on enumerated root-to-sink paths.
    pub max_paths: usize,
}

fn binding(kinds: &[&str], names: &[&str]) -> EventBinding {
    EventBinding {
        kinds: kinds.iter().map(|s| s.to_string()).collect(),
        names: names.iter().map(|s| s.to_string()).collect(),
    }
}

/// Default event bindings for the incident event catalog E1..E15.
pub fn default_node_event_map() -> BTreeMap<String, EventBinding> {
    let mut m = BTreeMap::new();
    // ADS evidence is anchored at the taint sources feeding the analysis.
    m.insert("E1".into(), binding(&["source"], &[]));
    m.insert("E2".into(), binding(&[], &["response_obj"]));
    m.insert("E3".into(), binding(&[], &["response_obj"]));
    m.insert("E4".into(), binding(&[], &[]));
    m.insert("E5".into(), binding(&["p_var"], &[]));
    m.insert("E6".into(), binding(&[], &["equipment_p_meas"]));
    m.insert("E7".into(), binding(&[], &["equipment_q_meas"]));
    m.insert(
        "E8".into(),
        binding(
            &[],
            &[
                "Yvalue_start",
                "rated_limit",
                "delta_measured",
                "reverse_step",
                "forward_step",
                "reverse_scaled",
                "nominalyvalues[i_equip]",
            ],
        ),
    );
    m.insert(
        "E9".into(),
        binding(
            &[],
            &[
                "Yvalue_start",
                "rated_limit",
                "delta_measured",
                "reverse_step",
                "forward_step",
                "reverse_scaled",
                "nominalyvalues[i_equip]",
            ],
        ),
    );
    m.insert("E10".into(), binding(&[], &["forward_value"]));
    m.insert("E11".into(), binding(&[], &["reverse_value"]));
    m.insert("E12".into(), binding(&[], &["equipment_p", "equipment_q"]));
    m.insert(
        "E13".into(),
        binding(&[], &["forward_diff", "reverse_diff", "differences"]),
    );
    m.insert(
        "E14".into(),
        binding(&[], &["forward_diff", "reverse_diff", "differences"]),
    );
    m.insert("E15".into(), binding(&["sink"], &[]));
    m
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: PathBuf::from("program.der"),
            p_vars: vec![
                "equipment_id4dispatch".into(),
                "equipment_name".into(),
                "equipment_p".into(),
                "equipment_q".into(),
                "equipment_p_meas".into(),
                "equipment_q_meas".into(),
                "equipment_maxIFault".into(),
                "equipment_ratedS".into(),
                "equipment_ratedU".into(),
                "equipment_type".into(),
            ],
            source_catalog: vec![
                "GridAPPSD".into(),
                "*.get_response".into(),
                "*.query*".into(),
                "*.read*".into(),
                "*.recv*".into(),
                "*.get_input".into(),
                "get_input".into(),
                "input".into(),
                "*.argv".into(),
                "*.parse_args".into(),
            ],
            sink_catalog: vec!["*.send".into(), "*.dispatch".into(), "*.publish".into()],
            callback_catalog: vec!["_on_*".into()],
            baseline: PathBuf::from("baseline.csv"),
            field: PathBuf::from("field.csv"),
            network: PathBuf::from("network.csv"),
            applog: PathBuf::from("app.log"),
            events: PathBuf::from("events.csv"),
            bins: 20,
            min_baseline: 30,
            thresholds: Thresholds::default(),
            align_window_ms: 500,
            float_tol: 1e-9,
            rename_map: BTreeMap::new(),
            response_object: "response_obj".into(),
            node_event_map: default_node_event_map(),
            path_override: None,
            max_paths: 20_000,
        }
    }
}

impl RunConfig {
    /// Load a config file and resolve its relative paths against the file's
    /// parent directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::error::io_err(path.display().to_string(), e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {}", path.display(), e)))?;
        cfg.thresholds
            .validate()
            .map_err(PipelineError::Config)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    /// Resolve every relative path against `dir`.
    pub fn rebase(&mut self, dir: &Path) {
        for p in [
            &mut self.source,
            &mut self.baseline,
            &mut self.field,
            &mut self.network,
            &mut self.applog,
            &mut self.events,
        ] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    /// Point the telemetry inputs at a case directory laid out as
    /// `field.csv`, `network.csv`, `app.log`, `events.csv`.
    pub fn with_case_dir(mut self, dir: &Path) -> Self {
        self.field = dir.join("field.csv");
        self.network = dir.join("network.csv");
        self.applog = dir.join("app.log");
        self.events = dir.join("events.csv");
        self
    }
}

/// Glob-ish pattern match with `*` wildcards. Patterns without `*` must
/// match exactly.
pub fn pattern_matches(pattern: &str, name: &str) -> bool {
    fn rec(p: &[u8], n: &[u8]) -> bool {
        match (p.first(), n.first()) {
            (None, None) => true,
            (Some(b'*'), _) => rec(&p[1..], n) || (!n.is_empty() && rec(p, &n[1..])),
            (Some(pc), Some(nc)) if pc == nc => rec(&p[1..], &n[1..]),
            _ => false,
        }
    }
    rec(pattern.as_bytes(), name.as_bytes())
}

/// True when any pattern in the catalog matches `name`.
pub fn catalog_matches(catalog: &[String], name: &str) -> bool {
    catalog.iter().any(|p| pattern_matches(p, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_patterns() {
        assert!(pattern_matches("*.get_response", "conn.get_response"));
        assert!(pattern_matches("_on_*", "_on_message"));
        assert!(pattern_matches("GridAPPSD", "GridAPPSD"));
        assert!(!pattern_matches("GridAPPSD", "gridappsd"));
        assert!(!pattern_matches("*.send", "send"));
        assert!(pattern_matches("*.query*", "conn.query_model"));
    }

    #[test]
    fn threshold_ordering_enforced() {
        let bad = Thresholds {
            tau_h: 0.5,
            tau_m: 0.1,
            tau_l: 0.25,
        };
        assert!(bad.validate().is_err());
        assert!(Thresholds::default().validate().is_ok());
    }

    #[test]
    fn config_roundtrip() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.p_vars, cfg.p_vars);
        assert_eq!(back.thresholds, cfg.thresholds);
    }
}
