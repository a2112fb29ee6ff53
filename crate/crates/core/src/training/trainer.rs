use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::data::{NodeTable, Split, Standardizer};
use crate::error::{Error, Result};
use crate::geometry::{standardize_coords, CoordTransform, Coordinates};
use crate::graph::{build_dual_graph, DualGraph, GraphConfig};
use crate::loss::{total_loss, LossConfig, LossTargets};
use crate::metrics::{classification_metrics, induced_subgraph, morans_i, regression_metrics, MetricsReport};
use crate::model::{GraphInputs, SddGat, Task};
use crate::tensor::{sigmoid, Tape};

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lambda_smooth: f64,
    pub task: Task,
}

impl TrainConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            lr: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 500,
            patience: 30,
            seed,
            lambda_smooth: crate::loss::DEFAULT_LAMBDA_SMOOTH,
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{} must be in (0, 1), got {}", name, b)));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be > 0, got {}", self.adam_eps)));
        }
        self.loss_config().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda_smooth: self.lambda_smooth,
            ..LossConfig::new(self.task)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Task loss on the validation rows; `None` without validation rows.
    pub val_loss: Option<f64>,
    /// Validation MAE, or accuracy in classification mode.
    pub val_metric: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainLog {
    /// Same losses and metrics epoch by epoch, ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.map(f64::to_bits) == b.val_loss.map(f64::to_bits)
                    && a.val_metric.map(f64::to_bits) == b.val_metric.map(f64::to_bits)
            })
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{:?}", x));
        let mut out = String::from("epoch,train_loss,val_loss,val_metric,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{},{},{:.6}\n",
                e.epoch,
                e.train_loss,
                opt(e.val_loss),
                opt(e.val_metric),
                e.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Tracks the best monitored loss and how long it has gone unimproved.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Records one epoch. Returns `true` when the loss is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            true
        } else {
            self.wait += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.wait >= self.patience
    }
}

/// A split dataset with standardized features and its graphs.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Numeric features standardized with training-row statistics.
    pub table: NodeTable,
    pub standardizer: Standardizer,
    pub coords: Vec<Coordinates>,
    pub coord_transform: CoordTransform,
    pub graph: DualGraph,
    pub split: Split,
}

/// Standardizes features (train rows) and coordinates (all rows), then builds
/// both graphs over every node.
pub fn prepare(raw: &NodeTable, split: Split, graph_cfg: &GraphConfig) -> Result<Prepared> {
    let standardizer = Standardizer::fit(raw, &split.train)?;
    let table = standardizer.apply(raw)?;
    let (coords, coord_transform) = standardize_coords(&raw.coords)?;
    let graph = build_dual_graph(&coords, &table.features, graph_cfg)?;
    Ok(Prepared {
        table,
        standardizer,
        coords,
        coord_transform,
        graph,
        split,
    })
}

fn targets_for(table: &NodeTable, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let dfi = rows.iter().map(|&r| table.dfi[r]).collect();
    let labels = rows.iter().map(|&r| if table.label[r] { 1.0 } else { 0.0 }).collect();
    (dfi, labels)
}

/// Plain-value task loss and validation metric on `rows`.
fn task_values(reg: &[f64], cls: &[f64], table: &NodeTable, rows: &[usize], task: Task) -> (f64, f64) {
    let m = rows.len() as f64;
    let mse = rows.iter().map(|&r| (reg[r] - table.dfi[r]).powi(2)).sum::<f64>() / m;
    let mae = rows.iter().map(|&r| (reg[r] - table.dfi[r]).abs()).sum::<f64>() / m;
    let bce = rows
        .iter()
        .map(|&r| {
            let (z, y) = (cls[r], if table.label[r] { 1.0 } else { 0.0 });
            z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
        })
        .sum::<f64>()
        / m;
    let acc = rows
        .iter()
        .filter(|&&r| (sigmoid(cls[r]) > 0.5) == table.label[r])
        .count() as f64
        / m;
    match task {
        Task::Regression => (mse, mae),
        Task::Classification => (bce, acc),
        Task::Dual => (mse + bce, mae),
    }
}

/// Full-graph training with the loss masked to the training rows.
///
/// The smoothness penalty covers the edges whose endpoints are both training
/// or validation nodes. Early stopping monitors the validation task loss
/// (the training loss when there are no validation rows) and the returned
/// model holds the parameters of the best epoch.
pub fn train(
    model: &SddGat,
    table: &NodeTable,
    graph: &DualGraph,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(SddGat, TrainLog)> {
    cfg.validate()?;
    if model.config.task != cfg.task {
        return Err(Error::Config(format!(
            "model task `{}` differs from training task `{}`",
            model.config.task, cfg.task
        )));
    }
    if split.train.is_empty() {
        return Err(Error::Split("train split is empty".into()));
    }
    let mut loss_cfg = cfg.loss_config();
    if !model.variant.uses_smoothness() {
        loss_cfg.lambda_smooth = 0.0;
    }
    let inputs = GraphInputs::new(graph, model.variant);
    let mut labelled = vec![false; table.len()];
    for &r in split.train.iter().chain(&split.val) {
        labelled[r] = true;
    }
    let (dfi, labels) = targets_for(table, &split.train);
    let targets = LossTargets {
        rows: Arc::from(split.train.as_slice()),
        dfi,
        labels,
        smooth_edges: inputs.smoothness.filter(|s, d| s != d && labelled[s] && labelled[d]),
    };

    let mut current = model.clone();
    let mut best = model.clone();
    let mut state = AdamState::new(current.params());
    let adam = cfg.adam();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut log = TrainLog::default();

    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let diverged = |loss: f64, best: &SddGat| Error::Diverged {
            epoch,
            loss,
            last_good: Box::new(best.clone()),
        };
        let mut tape = Tape::new();
        let step = (|| {
            let out = current.forward(&mut tape, &table.features, &inputs)?;
            let parts = total_loss(&mut tape, &out, &targets, &loss_cfg)?;
            Ok::<_, Error>((out, parts))
        })();
        let (out, parts) = match step {
            Ok(v) => v,
            Err(Error::Numeric { .. }) => return Err(diverged(f64::NAN, &best)),
            Err(e) => return Err(e),
        };
        let train_loss = tape.value(parts.total).item();
        if !(train_loss <= DIVERGENCE_LOSS) {
            return Err(diverged(train_loss, &best));
        }
        let (val_loss, val_metric) = if split.val.is_empty() {
            (None, None)
        } else {
            let (l, m) = task_values(
                tape.value(out.reg).data(),
                tape.value(out.cls).data(),
                table,
                &split.val,
                cfg.task,
            );
            (Some(l), Some(m))
        };
        let monitored = val_loss.unwrap_or(train_loss);
        if stopper.observe(epoch, monitored) {
            best = current.clone();
        }

        let mut grads = match tape.backward(parts.total) {
            Ok(g) => g,
            Err(Error::Numeric { .. }) => return Err(diverged(train_loss, &best)),
            Err(e) => return Err(e),
        };
        let g = current.collect_grads(&out, &mut grads);
        adam_step(current.params_mut(), &g, &mut state, &adam)?;

        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {} train {:.6} val {:?}", epoch, train_loss, val_loss);
        if stopper.should_stop() {
            break;
        }
    }
    log.best_epoch = stopper.best_epoch;
    Ok((best, log))
}

/// Builds a report from plain predictions over `rows`. Moran's I uses the
/// spatial edges induced by `rows`; undefined metrics are left out with a note.
pub fn report_from_predictions(
    reg: &[f64],
    logits: &[f64],
    table: &NodeTable,
    graph: &DualGraph,
    rows: &[usize],
    task: Task,
) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Usage("cannot evaluate on zero rows".into()));
    }
    let mut report = MetricsReport {
        n_eval: rows.len(),
        ..MetricsReport::default()
    };
    let pick = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<f64>>();
    let note = |e: Error, report: &mut MetricsReport| match e {
        Error::Undefined { metric, reason } => {
            report.notes.push(format!("{}: {}", metric, reason));
            Ok(())
        }
        other => Err(other),
    };
    if task.uses_regression() {
        let p = pick(reg);
        let y = pick(&table.dfi);
        match regression_metrics(&p, &y) {
            Ok((mae, rmse, r2)) => {
                report.mae = Some(mae);
                report.rmse = Some(rmse);
                report.r2 = Some(r2);
            }
            Err(e @ Error::Undefined { .. }) => {
                // R² alone is undefined; keep the error-based scores
                let (mae, rmse) = crate::metrics::mae_rmse(&p, &y)?;
                report.mae = Some(mae);
                report.rmse = Some(rmse);
                note(e, &mut report)?;
            }
            Err(e) => return Err(e),
        }
    }
    if task.uses_classification() {
        let z = pick(logits);
        let y: Vec<bool> = rows.iter().map(|&r| table.label[r]).collect();
        let s = classification_metrics(&z, &y, 0.5)?;
        report.accuracy = Some(s.accuracy);
        report.precision = Some(s.precision);
        report.recall = Some(s.recall);
        report.f1 = Some(s.f1);
        report.auc = s.auc;
        if s.auc.is_none() {
            report.notes.push("auc: only one class present".into());
        }
    }
    let field = if task.uses_regression() { pick(reg) } else { pick(logits) };
    let edges = induced_subgraph(&graph.spatial_edges, graph.n_nodes, rows);
    match morans_i(&field, &edges) {
        Ok(i) => report.morans_i = Some(i),
        Err(e) => note(e, &mut report)?,
    }
    Ok(report)
}

/// Forward pass over the whole graph, scored on `rows`.
pub fn evaluate(
    model: &SddGat,
    table: &NodeTable,
    graph: &DualGraph,
    rows: &[usize],
) -> Result<MetricsReport> {
    let inputs = GraphInputs::new(graph, model.variant);
    let (reg, logits) = model.predict(&table.features, &inputs)?;
    report_from_predictions(&reg, &logits, table, graph, rows, model.config.task)
}
