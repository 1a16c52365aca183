//! Run reports, comparison tables and their determinism hashes.

use std::fmt::Write as _;
use std::path::Path;

use opidmd_core::spectral::EigenSummary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::hex;
use crate::{io_error, CliError};

/// Eigenvalues listed in a report, largest modulus first.
const LISTED_EIGENVALUES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub count: usize,
    pub spectral_radius: f64,
    pub max_unit_circle_distance: f64,
    /// `[re, im]` pairs.
    pub leading: Vec<[f64; 2]>,
}

impl From<&EigenSummary> for EigenReport {
    fn from(s: &EigenSummary) -> Self {
        Self {
            count: s.eigenvalues.len(),
            spectral_radius: s.spectral_radius,
            max_unit_circle_distance: s.unit_circle_distance.iter().copied().fold(0.0, f64::max),
            leading: s.eigenvalues.iter().take(LISTED_EIGENVALUES).map(|v| [v.re, v.im]).collect(),
        }
    }
}

/// Per-update wall times in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateTiming {
    pub count: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl UpdateTiming {
    pub fn from_seconds(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut us: Vec<f64> = samples.iter().map(|s| s * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let rank = |p: f64| us[((p * us.len() as f64).ceil() as usize).clamp(1, us.len()) - 1];
        Some(Self {
            count: us.len(),
            mean_us: us.iter().sum::<f64>() / us.len() as f64,
            p50_us: rank(0.5),
            p90_us: rank(0.9),
            p99_us: rank(0.99),
            max_us: us[us.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_update: Option<UpdateTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub method: String,
    pub label: String,
    pub constraint: Option<String>,
    /// Absent when the score is not a finite number or the run failed.
    pub r2: Option<f64>,
    /// The score as text, including `-inf` and huge magnitudes.
    pub r2_text: String,
    pub r_used: Option<usize>,
    pub horizon: usize,
    pub n_state: usize,
    pub n_train_pairs: usize,
    pub diverged: bool,
    pub divergence: Option<String>,
    pub error: Option<String>,
    pub eigen: Option<EigenReport>,
    pub timing: Timing,
    /// SHA-256 of this report without `timing` and `hash`.
    pub hash: String,
}

/// Hash of a serializable value with the given top-level keys removed.
pub fn hash_without<T: Serialize>(value: &T, skip: &[&str]) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    if let Some(map) = v.as_object_mut() {
        for k in skip {
            map.remove(*k);
        }
    }
    hex(&Sha256::digest(v.to_string().as_bytes()))
}

impl RunReport {
    pub fn seal(mut self) -> Self {
        self.hash = hash_without(&self, &["timing", "hash"]);
        self
    }
}

pub fn r2_text(r2: Option<f64>, raw: Option<f64>) -> String {
    match (r2, raw) {
        (Some(v), _) => format!("{v:.6}"),
        (None, Some(v)) => format!("{v}"),
        (None, None) => "n/a".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<RunReport>,
    /// SHA-256 over the row hashes, in order.
    pub hash: String,
}

impl ComparisonReport {
    pub fn new(rows: Vec<RunReport>) -> Self {
        let mut h = Sha256::new();
        for r in &rows {
            h.update(r.hash.as_bytes());
            h.update(b"\n");
        }
        Self { hash: hex(&h.finalize()), rows }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "experiment,method,label,constraint,r2,diverged,r_used,horizon,fit_seconds,updates,update_mean_us,update_p50_us,update_p90_us,update_p99_us,update_max_us,error\n",
        );
        for r in &self.rows {
            let t = r.timing.per_update.as_ref();
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{},{},{}",
                csv_field(&r.experiment),
                r.method,
                csv_field(&r.label),
                r.constraint.as_deref().unwrap_or(""),
                r.r2_text,
                r.diverged,
                r.r_used.map(|v| v.to_string()).unwrap_or_default(),
                r.horizon,
                r.timing.fit_seconds,
                t.map(|t| t.count.to_string()).unwrap_or_default(),
                opt(t.map(|t| t.mean_us)),
                opt(t.map(|t| t.p50_us)),
                opt(t.map(|t| t.p90_us)),
                opt(t.map(|t| t.p99_us)),
                opt(t.map(|t| t.max_us)),
                csv_field(r.error.as_deref().or(r.divergence.as_deref()).unwrap_or("")),
            );
        }
        s
    }

    /// Fixed-width table in the layout of the comparison tables.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<44} {:>14} {:>5} {:>10} {:>10} {:>10}",
            "experiment", "method", "R^2", "div", "fit [s]", "p50 [us]", "p99 [us]"
        );
        for r in &self.rows {
            let t = r.timing.per_update.as_ref();
            let r2 = if r.error.is_some() { "error".to_string() } else { short_r2(r) };
            let _ = writeln!(
                s,
                "{:<16} {:<44} {:>14} {:>5} {:>10.3} {:>10} {:>10}",
                r.experiment,
                r.label,
                r2,
                if r.diverged { "yes" } else { "" },
                r.timing.fit_seconds,
                t.map(|t| format!("{:.2}", t.p50_us)).unwrap_or_else(|| "-".into()),
                t.map(|t| format!("{:.2}", t.p99_us)).unwrap_or_else(|| "-".into()),
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        crate::data::write_json(&dir.join("compare.json"), self)?;
        let csv = dir.join("compare.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| io_error(&csv, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn short_r2(r: &RunReport) -> String {
    match r.r2 {
        Some(v) if v.abs() < 1e4 => format!("{v:.3}"),
        Some(v) => format!("{v:.2e}"),
        None => r.r2_text.clone(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
