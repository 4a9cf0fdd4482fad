//! Per-variable deviation models over benign baselines.
//!
//! Float variables get an equal-width histogram over the baseline range;
//! an observed value is deviated when it falls outside every bin or into a
//! bin whose occupancy ratio `p_i = n_i / n` is small. The degree ladder is
//! driven by configured thresholds: `p_i < tau_h` is high, `< tau_m`
//! moderate, `< tau_l` low. A value outside every bin is always high.
//! String variables keep the set of benign strings; any other string is a
//! high deviation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::Thresholds;
use crate::error::DeviationError;
use crate::telemetry::{BaselineStore, Value};

/// Degree of deviation, ordered `None < L < M < H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Delta {
    None,
    L,
    M,
    H,
}

impl Delta {
    pub fn as_str(&self) -> &'static str {
        match self {
            Delta::None => "0",
            Delta::L => "L",
            Delta::M => "M",
            Delta::H => "H",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelKind {
    Float {
        /// m+1 strictly increasing bin edges (degenerate baselines collapse
        /// to a single point bin).
        edges: Vec<f64>,
        counts: Vec<usize>,
        n: usize,
        ratios: Vec<f64>,
    },
    Str {
        benign: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationModel {
    pub variable: String,
    pub kind: ModelKind,
}

/// Result of scoring one value against a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationScore {
    pub deviated: bool,
    pub degree: Delta,
    /// 1-based bin index for float values inside the range.
    pub bin: Option<usize>,
    pub p: Option<f64>,
    pub out_of_range: bool,
}

impl DeviationScore {
    fn not_deviated(bin: Option<usize>, p: Option<f64>) -> Self {
        DeviationScore {
            deviated: false,
            degree: Delta::None,
            bin,
            p,
            out_of_range: false,
        }
    }
}

/// Fit a model for one variable.
pub fn fit(
    variable: &str,
    values: &[Value],
    bin_count: usize,
    min_samples: usize,
) -> Result<DeviationModel, DeviationError> {
    let floats: Vec<f64> = values.iter().filter_map(Value::as_f64).collect();
    let strings: Vec<&str> = values
        .iter()
        .filter_map(|v| match v {
            Value::S(s) => Some(s.as_str()),
            Value::F(_) => None,
        })
        .collect();
    if !floats.is_empty() && !strings.is_empty() {
        return Err(DeviationError::TypeMismatch {
            variable: variable.into(),
            expected: "a single value type".into(),
            got: "mixed float and string baseline".into(),
        });
    }
    if !strings.is_empty() {
        return Ok(DeviationModel {
            variable: variable.into(),
            kind: ModelKind::Str {
                benign: strings.iter().map(|s| s.to_string()).collect(),
            },
        });
    }
    let n = floats.len();
    if n < min_samples {
        return Err(DeviationError::InsufficientBaseline {
            variable: variable.into(),
            n,
            min: min_samples,
        });
    }
    let lo = floats.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = floats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = bin_count.max(1);
    if lo == hi {
        // all-identical baseline: one occupied point bin
        return Ok(DeviationModel {
            variable: variable.into(),
            kind: ModelKind::Float {
                edges: vec![lo, hi],
                counts: vec![n],
                n,
                ratios: vec![1.0],
            },
        });
    }
    let width = (hi - lo) / m as f64;
    let mut counts = vec![0usize; m];
    for &v in &floats {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= m {
            idx = m - 1; // the maximum belongs to the last bin
        }
        counts[idx] += 1;
    }
    let edges: Vec<f64> = (0..=m).map(|i| lo + width * i as f64).collect();
    let ratios: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(DeviationModel {
        variable: variable.into(),
        kind: ModelKind::Float {
            edges,
            counts,
            n,
            ratios,
        },
    })
}

/// Score one observed value against a fitted model.
pub fn score(
    model: &DeviationModel,
    value: &Value,
    thresholds: &Thresholds,
) -> Result<DeviationScore, DeviationError> {
    match (&model.kind, value) {
        (ModelKind::Float { edges, ratios, .. }, Value::F(v)) => {
            let lo = edges[0];
            let hi = *edges.last().expect("edges non-empty");
            if *v < lo || *v > hi {
                return Ok(DeviationScore {
                    deviated: true,
                    degree: Delta::H,
                    bin: None,
                    p: None,
                    out_of_range: true,
                });
            }
            let m = ratios.len();
            let idx = if lo == hi {
                0
            } else {
                (((v - lo) / (hi - lo)) * m as f64).min(m as f64 - 1.0) as usize
            };
            let p = ratios[idx];
            let degree = if p < thresholds.tau_h {
                Delta::H
            } else if p < thresholds.tau_m {
                Delta::M
            } else if p < thresholds.tau_l {
                Delta::L
            } else {
                return Ok(DeviationScore::not_deviated(Some(idx + 1), Some(p)));
            };
            Ok(DeviationScore {
                deviated: true,
                degree,
                bin: Some(idx + 1),
                p: Some(p),
                out_of_range: false,
            })
        }
        (ModelKind::Str { benign }, Value::S(s)) => {
            if benign.contains(s) {
                Ok(DeviationScore::not_deviated(None, None))
            } else {
                // a string-type deviation is always high
                Ok(DeviationScore {
                    deviated: true,
                    degree: Delta::H,
                    bin: None,
                    p: None,
                    out_of_range: true,
                })
            }
        }
        (ModelKind::Float { .. }, Value::S(_)) => Err(DeviationError::TypeMismatch {
            variable: model.variable.clone(),
            expected: "float".into(),
            got: "string".into(),
        }),
        (ModelKind::Str { .. }, Value::F(_)) => Err(DeviationError::TypeMismatch {
            variable: model.variable.clone(),
            expected: "string".into(),
            got: "float".into(),
        }),
    }
}

/// All fitted models for a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelStore {
    pub models: BTreeMap<String, DeviationModel>,
    /// Variables skipped with the reason (e.g. insufficient baseline).
    pub skipped: BTreeMap<String, String>,
}

impl ModelStore {
    pub fn get(&self, variable: &str) -> Option<&DeviationModel> {
        self.models.get(variable)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }
}

/// Fit models for every baseline variable; variables that cannot be fitted
/// are recorded in `skipped` rather than failing the run.
pub fn fit_all(baseline: &BaselineStore, bin_count: usize, min_samples: usize) -> ModelStore {
    let mut store = ModelStore::default();
    for (variable, values) in &baseline.values {
        match fit(variable, values, bin_count, min_samples) {
            Ok(m) => {
                store.models.insert(variable.clone(), m);
            }
            Err(e) => {
                store.skipped.insert(variable.clone(), e.to_string());
            }
        }
    }
    store
}
