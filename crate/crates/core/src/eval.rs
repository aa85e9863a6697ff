//! Error metrics over the evaluation grid, field/error exports, and
//! cross-model comparison tables.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cases::CaseSpec;
use crate::network::batch::batch_forward;
use crate::network::{NetworkConfig, ParamVector};

/// Metric tables list fields in this order (channel order is u, v, p, phi, T).
pub const METRIC_FIELD_ORDER: [&str; 5] = ["p", "u", "v", "phi", "T"];
const CHANNEL_OF_METRIC: [usize; 5] = [2, 0, 1, 3, 4];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("grid shape mismatch: {pred} prediction nodes vs {reference} reference nodes")]
    GridMismatch { pred: usize, reference: usize },
    #[error("comparison needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("duplicate model tag `{0}`")]
    DuplicateTag(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub rel_l2: f64,
    /// Set when the reference norm is zero and rel_l2 holds the absolute
    /// error norm instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rel_l2_is_absolute: bool,
}

/// Per-field error metrics in table order (p, u, v, phi, T) plus their
/// unweighted average and the training wall time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub p: FieldMetrics,
    pub u: FieldMetrics,
    pub v: FieldMetrics,
    pub phi: FieldMetrics,
    #[serde(rename = "T")]
    pub temp: FieldMetrics,
    pub avg: FieldMetrics,
    pub wall_time_hours: f64,
}

impl MetricsRecord {
    pub fn by_table_order(&self) -> [&FieldMetrics; 5] {
        [&self.p, &self.u, &self.v, &self.phi, &self.temp]
    }

    pub fn to_json(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(io_err(path))
    }

    pub fn from_json(path: &Path) -> Result<MetricsRecord, EvalError> {
        Ok(serde_json::from_str(&fs::read_to_string(path).map_err(io_err(path))?)?)
    }
}

fn field_metrics(pred: &[f64], reference: &[f64]) -> FieldMetrics {
    let n = pred.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut ref_sq = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        let d = p - r;
        se += d * d;
        ae += d.abs();
        ref_sq += r * r;
    }
    let mse = se / n;
    let err_norm = se.sqrt();
    let ref_norm = ref_sq.sqrt();
    let (rel_l2, rel_l2_is_absolute) =
        if ref_norm == 0.0 { (err_norm, true) } else { (err_norm / ref_norm, false) };
    FieldMetrics { mse, rmse: mse.sqrt(), mae: ae / n, rel_l2, rel_l2_is_absolute }
}

/// Field-wise error metrics of predicted grids against reference grids,
/// both in channel order (u, v, p, phi, T).
pub fn compute_metrics(
    pred: &[Vec<f64>; 5],
    reference: &[Vec<f64>; 5],
) -> Result<MetricsRecord, EvalError> {
    for (p, r) in pred.iter().zip(reference) {
        if p.len() != r.len() || p.is_empty() {
            return Err(EvalError::GridMismatch { pred: p.len(), reference: r.len() });
        }
    }
    let per: [FieldMetrics; 5] =
        std::array::from_fn(|i| field_metrics(&pred[CHANNEL_OF_METRIC[i]], &reference[CHANNEL_OF_METRIC[i]]));
    let mean = |f: fn(&FieldMetrics) -> f64| per.iter().map(f).sum::<f64>() / 5.0;
    let avg = FieldMetrics {
        mse: mean(|m| m.mse),
        rmse: mean(|m| m.rmse),
        mae: mean(|m| m.mae),
        rel_l2: mean(|m| m.rel_l2),
        rel_l2_is_absolute: per.iter().any(|m| m.rel_l2_is_absolute),
    };
    Ok(MetricsRecord {
        p: per[0],
        u: per[1],
        v: per[2],
        phi: per[3],
        temp: per[4],
        avg,
        wall_time_hours: 0.0,
    })
}

/// Network field values on the case evaluation grid, channel order.
pub fn predict_grid(params: &ParamVector, cfg: &NetworkConfig, case: &CaseSpec) -> [Vec<f64>; 5] {
    let pts = case.grid_points();
    let cache = batch_forward(params, cfg, &pts, 1);
    std::array::from_fn(|f| (0..pts.len()).map(|i| cache.out.slots[0][[i, f]]).collect())
}

fn write_grid(path: &Path, pts: &[[f64; 2]], values: &[f64]) -> Result<(), EvalError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut f = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(f, "x,y,value")?;
        for (&[x, y], v) in pts.iter().zip(values) {
            writeln!(f, "{x},{y},{v}")?;
        }
        Ok(())
    };
    emit().map_err(io_err(path))
}

/// Read back a `x,y,value` grid CSV written by this module.
pub fn read_grid(path: &Path) -> Result<Vec<f64>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap_or("0").parse().unwrap_or(f64::NAN))
        .collect())
}

/// Per-field prediction, reference, and absolute-error grids as
/// `case{N}_{model}_{field}_{pred|ref|err}.csv` under `dir`.
pub fn export_fields(
    pred: &[Vec<f64>; 5],
    reference: &[Vec<f64>; 5],
    case: &CaseSpec,
    model: &str,
    dir: &Path,
) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let pts = case.grid_points();
    for (f, name) in crate::network::FIELD_NAMES.iter().enumerate() {
        let base = |kind: &str| dir.join(format!("case{}_{}_{}_{}.csv", case.id, model, name, kind));
        write_grid(&base("pred"), &pts, &pred[f])?;
        write_grid(&base("ref"), &pts, &reference[f])?;
        let err: Vec<f64> = pred[f].iter().zip(&reference[f]).map(|(p, r)| (p - r).abs()).collect();
        write_grid(&base("err"), &pts, &err)?;
    }
    Ok(())
}

/// Cross-model comparison of metric records.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// (tag, record), input order preserved.
    pub records: Vec<(String, MetricsRecord)>,
}

const COMPARE_METRICS: [(&str, fn(&MetricsRecord) -> f64); 4] = [
    ("avg_mse", |r| r.avg.mse),
    ("avg_rmse", |r| r.avg.rmse),
    ("avg_mae", |r| r.avg.mae),
    ("avg_rel_l2", |r| r.avg.rel_l2),
];

pub fn compare_runs(records: &[(String, MetricsRecord)]) -> Result<Comparison, EvalError> {
    if records.len() < 2 {
        return Err(EvalError::TooFewRecords(records.len()));
    }
    let mut seen = std::collections::HashSet::new();
    for (tag, _) in records {
        if !seen.insert(tag.as_str()) {
            return Err(EvalError::DuplicateTag(tag.clone()));
        }
    }
    Ok(Comparison { records: records.to_vec() })
}

impl Comparison {
    /// Tags sorted best-first for one metric; ties resolve by tag so the
    /// order is stable.
    pub fn ranking(&self, metric: fn(&MetricsRecord) -> f64) -> Vec<&str> {
        let mut tags: Vec<(&str, f64)> =
            self.records.iter().map(|(t, r)| (t.as_str(), metric(r))).collect();
        tags.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(b.0)));
        tags.into_iter().map(|(t, _)| t).collect()
    }

    fn best_tag(&self, metric: fn(&MetricsRecord) -> f64) -> &str {
        self.ranking(metric)[0]
    }

    /// Markdown table, one row per model; the best value per metric column
    /// is bolded. Wall time is reported in hours with two decimals.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| model | avg_mse | avg_rmse | avg_mae | avg_rel_l2 | wall_time_h |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for (tag, rec) in &self.records {
            out.push_str(&format!("| {tag} |"));
            for (_, metric) in COMPARE_METRICS {
                let cell = format!("{:.3e}", metric(rec));
                if tag == self.best_tag(metric) {
                    out.push_str(&format!(" **{cell}** |"));
                } else {
                    out.push_str(&format!(" {cell} |"));
                }
            }
            out.push_str(&format!(" {:.2} |\n", rec.wall_time_hours));
        }
        out
    }

    pub fn to_csv(&self, path: &Path) -> Result<(), EvalError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut f = std::io::BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(f, "model,avg_mse,avg_rmse,avg_mae,avg_rel_l2,wall_time_hours,best_rel_l2")?;
            let best = self.best_tag(|r| r.avg.rel_l2).to_string();
            for (tag, rec) in &self.records {
                writeln!(
                    f,
                    "{tag},{},{},{},{},{:.2},{}",
                    rec.avg.mse,
                    rec.avg.rmse,
                    rec.avg.mae,
                    rec.avg.rel_l2,
                    rec.wall_time_hours,
                    (*tag == best) as u8
                )?;
            }
            Ok(())
        };
        emit().map_err(io_err(path))
    }
}
