//! Training objectives: task loss plus weighted spatial smoothness penalty.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EdgeArrays;
use crate::model::{ForwardOutput, Task};
use crate::tensor::{Index, Tape, Tensor, Var};

/// DFI above this value is labelled positive.
pub const DFI_THRESHOLD: f64 = 1.5;

/// Default smoothness weight. The penalty is a sum over edges while the task
/// loss is a mean over nodes, so useful values are small.
pub const DEFAULT_LAMBDA_SMOOTH: f64 = 3e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_smooth: f64,
    pub task: Task,
    pub cls_threshold_dfi: f64,
}

impl LossConfig {
    pub fn new(task: Task) -> Self {
        Self {
            lambda_smooth: DEFAULT_LAMBDA_SMOOTH,
            task,
            cls_threshold_dfi: DFI_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_smooth >= 0.0) || !self.lambda_smooth.is_finite() {
            return Err(Error::Config(format!(
                "lambda_smooth must be >= 0, got {}",
                self.lambda_smooth
            )));
        }
        Ok(())
    }
}

/// Mean squared error against fixed targets.
pub fn mse(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    if target.is_empty() {
        return Err(Error::Usage("task loss over zero samples".into()));
    }
    let t = tape.constant(Tensor::new(tape.value(pred).shape().to_vec(), target.to_vec())?)?;
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// Mean binary cross-entropy on logits.
pub fn bce(tape: &mut Tape, logits: Var, labels: &[f64]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::Usage("task loss over zero samples".into()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Usage(format!("classification target {} is not 0 or 1", bad)));
    }
    let l = tape.bce_with_logits(logits, Arc::from(labels))?;
    tape.mean(l)
}

/// Task loss for already-selected rows. `reg` / `cls` are `[M]` outputs and
/// the targets are aligned with them. Dual mode adds both with unit weight.
pub fn task_loss(
    tape: &mut Tape,
    reg: Var,
    cls: Var,
    dfi: &[f64],
    labels: &[f64],
    task: Task,
) -> Result<Var> {
    match task {
        Task::Regression => mse(tape, reg, dfi),
        Task::Classification => bce(tape, cls, labels),
        Task::Dual => {
            let a = mse(tape, reg, dfi)?;
            let b = bce(tape, cls, labels)?;
            tape.add(a, b)
        }
    }
}

/// `Σ_{(i,j)} w_ij (ŷ_i − ŷ_j)²` over the given directed edges; a symmetric
/// edge set counts every unordered pair twice.
pub fn smoothness_loss(tape: &mut Tape, pred: Var, edges: &EdgeArrays) -> Result<Var> {
    if edges.is_empty() {
        return tape.constant(Tensor::scalar(0.0));
    }
    let a = tape.gather_rows(pred, edges.dst.clone())?;
    let b = tape.gather_rows(pred, edges.src.clone())?;
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    let w = tape.constant(Tensor::vector(edges.weight.to_vec()))?;
    let wsq = tape.mul(sq, w)?;
    tape.sum(wsq)
}

/// Supervision for one loss evaluation: rows of the full-graph output that
/// enter the task loss, their targets, and the smoothness edge scope.
#[derive(Clone, Debug)]
pub struct LossTargets {
    pub rows: Index,
    pub dfi: Vec<f64>,
    pub labels: Vec<f64>,
    pub smooth_edges: EdgeArrays,
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub task: Var,
    pub smooth: Option<Var>,
}

/// `L = L_task + λ_smooth · L_smooth`. The smoothness term acts on regression
/// outputs, or on logits in classification mode.
pub fn total_loss(
    tape: &mut Tape,
    out: &ForwardOutput,
    targets: &LossTargets,
    cfg: &LossConfig,
) -> Result<LossParts> {
    cfg.validate()?;
    let reg = tape.gather_rows(out.reg, targets.rows.clone())?;
    let cls = tape.gather_rows(out.cls, targets.rows.clone())?;
    let task = task_loss(tape, reg, cls, &targets.dfi, &targets.labels, cfg.task)?;
    if cfg.lambda_smooth == 0.0 {
        return Ok(LossParts {
            total: task,
            task,
            smooth: None,
        });
    }
    let pred = if cfg.task == Task::Classification {
        out.cls
    } else {
        out.reg
    };
    let smooth = smoothness_loss(tape, pred, &targets.smooth_edges)?;
    let scaled = tape.scale(smooth, cfg.lambda_smooth)?;
    let total = tape.add(task, scaled)?;
    Ok(LossParts {
        total,
        task,
        smooth: Some(smooth),
    })
}

/// Plain-value smoothness penalty, for reporting.
pub fn smoothness_value(pred: &[f64], edges: &EdgeArrays) -> f64 {
    edges
        .src
        .iter()
        .zip(edges.dst.iter())
        .zip(edges.weight.iter())
        .map(|((&s, &d), &w)| w * (pred[d] - pred[s]).powi(2))
        .sum()
}
