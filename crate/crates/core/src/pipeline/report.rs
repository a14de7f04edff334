use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::eval::{write_task_results, TaskResult};
use crate::tensor_io::write_atomic;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One layer's value over all sample sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStat {
    pub layer: usize,
    pub mean: f64,
    /// max - min across sample sets.
    pub spread: f64,
    pub n_sets: usize,
    pub per_set: Vec<f64>,
    /// Secondary per-layer quantities averaged over sets (e.g. label entropy).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl LayerStat {
    pub fn from_sets(layer: usize, per_set: Vec<f64>) -> Result<LayerStat> {
        if per_set.is_empty() {
            return Err(Error::Input(format!("layer {layer} has no sample-set values")));
        }
        let n = per_set.len();
        let mean = per_set.iter().sum::<f64>() / n as f64;
        let max = per_set.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = per_set.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(LayerStat {
            layer,
            mean,
            spread: max - min,
            n_sets: n,
            per_set,
            extra: BTreeMap::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub experiment: ExperimentKind,
    pub metric: String,
    pub model_tag: String,
    pub layers: Vec<LayerStat>,
    /// Layer-independent reference values (e.g. word-sim baselines).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baselines: BTreeMap<String, f64>,
    /// Per-task rows, written to `tasks.csv` when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TaskResult>,
}

impl LayerReport {
    pub fn means(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.mean).collect()
    }

    pub fn max_spread(&self) -> f64 {
        self.layers.iter().map(|l| l.spread).fold(0.0, f64::max)
    }

    /// Layer index with the largest mean (first one on ties).
    pub fn argmax_layer(&self) -> Option<usize> {
        self.extreme(|a, b| a > b)
    }

    /// Layer index with the smallest mean (first one on ties).
    pub fn argmin_layer(&self) -> Option<usize> {
        self.extreme(|a, b| a < b)
    }

    fn extreme(&self, better: impl Fn(f64, f64) -> bool) -> Option<usize> {
        let mut best: Option<&LayerStat> = None;
        for l in &self.layers {
            if best.is_none_or(|b| better(l.mean, b.mean)) {
                best = Some(l);
            }
        }
        best.map(|l| l.layer)
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub report: LayerReport,
}

/// `layer,mean,spread,set_0..set_{n-1}` rows.
pub fn curve_csv(r: &LayerReport) -> Result<String> {
    let n_sets = r.layers.first().map_or(0, |l| l.n_sets);
    if r.layers
        .iter()
        .any(|l| l.n_sets != n_sets || l.per_set.len() != n_sets)
    {
        return Err(Error::Input(
            "layers disagree on the number of sample sets".into(),
        ));
    }
    let mut out = String::from("layer,mean,spread");
    for s in 0..n_sets {
        write!(out, ",set_{s}").unwrap();
    }
    out.push('\n');
    for l in &r.layers {
        write!(out, "{},{},{}", l.layer, l.mean, l.spread).unwrap();
        for v in &l.per_set {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `curve.csv`, `report.json` and, when the report has task rows,
/// `tasks.csv` into `dir`. Existing outputs are replaced only when
/// `overwrite` is set.
pub fn emit_report(
    r: &LayerReport,
    cfg: &ExperimentConfig,
    dir: impl AsRef<Path>,
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if r.layers.is_empty() {
        return Err(Error::Input("report has no layers".into()));
    }
    let curve = dir.join("curve.csv");
    let json = dir.join("report.json");
    let tasks = dir.join("tasks.csv");
    if !overwrite {
        if let Some(existing) = [&curve, &json, &tasks].into_iter().find(|p| p.exists()) {
            return Err(Error::Refusal(existing.clone()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let doc = ReportDocument {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: cfg.clone(),
        report: r.clone(),
    };
    let body = serde_json::to_vec_pretty(&doc)
        .map_err(|e| Error::data("report", format!("cannot serialize: {e}")))?;
    write_atomic(&curve, curve_csv(r)?.as_bytes())?;
    write_atomic(&json, &body)?;
    let mut written = vec![curve, json];
    if !r.tasks.is_empty() {
        write_task_results(&r.tasks, &tasks)?;
        written.push(tasks);
    } else if tasks.exists() {
        std::fs::remove_file(&tasks).map_err(|e| Error::io(&tasks, e))?;
    }
    Ok(written)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::format(
            format!("{}:{}:{}", path.display(), e.line(), e.column()),
            e.to_string(),
        )
    })
}
