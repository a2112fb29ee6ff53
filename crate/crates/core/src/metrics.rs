//! Evaluation scores: regression errors, confusion-matrix metrics, ROC AUC,
//! and global Moran's I.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::tensor::sigmoid;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub r2: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub morans_i: Option<f64>,
    pub n_eval: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Metric names in report order.
    pub const NAMES: [&'static str; 9] = [
        "mae",
        "rmse",
        "r2",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "auc",
        "morans_i",
    ];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mae" => self.mae,
            "rmse" => self.rmse,
            "r2" => self.r2,
            "accuracy" => self.accuracy,
            "precision" => self.precision,
            "recall" => self.recall,
            "f1" => self.f1,
            "auc" => self.auc,
            "morans_i" => self.morans_i,
            _ => None,
        }
    }

    fn slot(&mut self, name: &str) -> &mut Option<f64> {
        match name {
            "mae" => &mut self.mae,
            "rmse" => &mut self.rmse,
            "r2" => &mut self.r2,
            "accuracy" => &mut self.accuracy,
            "precision" => &mut self.precision,
            "recall" => &mut self.recall,
            "f1" => &mut self.f1,
            "auc" => &mut self.auc,
            "morans_i" => &mut self.morans_i,
            _ => unreachable!("unknown metric {}", name),
        }
    }

    /// `name=value` lines with 6 significant digits; absent metrics are omitted.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for name in Self::NAMES {
            if let Some(v) = self.get(name) {
                out.push_str(&format!("{}={}\n", name, fmt_sig(v, 6)));
            }
        }
        out.push_str(&format!("n_eval={}\n", self.n_eval));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.txt` (key-value) and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let txt = dir.join(format!("{}.txt", stem));
        std::fs::write(&txt, self.to_kv_text()).map_err(|e| Error::io(&txt, e))?;
        let json = dir.join(format!("{}.json", stem));
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))
    }

    /// Field-wise mean over reports; a metric is present only when present
    /// in every report.
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        let mut out = MetricsReport::default();
        if reports.is_empty() {
            return out;
        }
        for name in Self::NAMES {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.get(name)).collect();
            *out.slot(name) = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64);
        }
        out.n_eval = reports.iter().map(|r| r.n_eval).sum::<usize>() / reports.len();
        out
    }
}

/// Formats like C's `%.{sig}g`.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -4 || exp >= sig as i32 {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, v))
    }
}

/// `(MAE, RMSE, R²)`; R² errors when the targets have zero variance.
pub fn regression_metrics(pred: &[f64], target: &[f64]) -> Result<(f64, f64, f64)> {
    let (mae, rmse) = mae_rmse(pred, target)?;
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let sst: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Undefined {
            metric: "r2",
            reason: "targets have zero variance",
        });
    }
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((mae, rmse, 1.0 - sse / sst))
}

pub(crate) fn mae_rmse(pred: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != target.len() {
        return Err(Error::dim(
            "regression_metrics",
            format!("{} predictions vs {} targets", pred.len(), target.len()),
        ));
    }
    if pred.len() < 2 {
        return Err(Error::Usage("regression metrics need at least 2 samples".into()));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    Ok((mae, mse.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

/// Confusion-matrix metrics at `sigmoid(logit) > threshold_prob` plus the
/// rank-statistic AUC. Precision and recall with empty denominators are 0.
pub fn classification_metrics(
    logits: &[f64],
    labels: &[bool],
    threshold_prob: f64,
) -> Result<ClassificationScores> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::dim(
            "classification_metrics",
            format!("{} logits vs {} labels", logits.len(), labels.len()),
        ));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&z, &y) in logits.iter().zip(labels) {
        match (sigmoid(z) > threshold_prob, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassificationScores {
        accuracy: ratio(tp + tn, logits.len()),
        precision,
        recall,
        f1,
        auc: roc_auc(logits, labels).ok(),
    })
}

/// Mann–Whitney AUC with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined {
            metric: "auc",
            reason: "only one class present",
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Global Moran's I of `values` under the edge weights, self-loops excluded.
pub fn morans_i(values: &[f64], edges: &[Edge]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Undefined {
            metric: "morans_i",
            reason: "fewer than 2 values",
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 || values.iter().all(|&v| v == values[0]) {
        return Err(Error::Undefined {
            metric: "morans_i",
            reason: "constant field",
        });
    }
    let mut w_total = 0.0;
    let mut num = 0.0;
    for e in edges.iter().filter(|e| !e.is_loop()) {
        if e.src >= n || e.dst >= n {
            return Err(Error::dim("morans_i", format!("edge ({}, {}) out of range", e.dst, e.src)));
        }
        w_total += e.weight;
        num += e.weight * dev[e.dst] * dev[e.src];
    }
    if w_total <= 0.0 {
        return Err(Error::Undefined {
            metric: "morans_i",
            reason: "no weighted edges",
        });
    }
    Ok(n as f64 / w_total * num / denom)
}

/// Restricts an edge list to `nodes`, renumbering endpoints by position.
pub fn induced_subgraph(edges: &[Edge], n_nodes: usize, nodes: &[usize]) -> Vec<Edge> {
    let mut pos = vec![usize::MAX; n_nodes];
    for (k, &i) in nodes.iter().enumerate() {
        pos[i] = k;
    }
    edges
        .iter()
        .filter(|e| pos[e.src] != usize::MAX && pos[e.dst] != usize::MAX)
        .map(|e| Edge {
            src: pos[e.src],
            dst: pos[e.dst],
            ..*e
        })
        .collect()
}
