use nalgebra::{DMatrix, DVector};

use super::trainer::{report_from_predictions, Prepared};
use crate::error::{Error, Result};
use crate::loss::DFI_THRESHOLD;
use crate::metrics::MetricsReport;
use crate::model::Task;

/// Diagonal jitter added to `XᵀX`.
pub const RIDGE_JITTER: f64 = 1e-8;

/// Least squares through the normal equations `(XᵀX + εI) β = Xᵀy`.
pub fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::dim(
            "fit_linear",
            format!("{} design rows vs {} targets", x.nrows(), y.len()),
        ));
    }
    let xt = x.transpose();
    let mut a = &xt * x;
    for i in 0..a.nrows() {
        a[(i, i)] += RIDGE_JITTER;
    }
    let b = xt * y;
    a.clone()
        .cholesky()
        .map(|c| c.solve(&b))
        .or_else(|| a.lu().solve(&b))
        .ok_or_else(|| Error::Numeric {
            op: "linear baseline solve".into(),
        })
}

/// Design rows `[features ‖ standardized lon, lat ‖ 1]`.
pub fn design_matrix(prep: &Prepared, rows: &[usize]) -> DMatrix<f64> {
    let f = prep.table.n_features();
    DMatrix::from_fn(rows.len(), f + 3, |i, j| {
        let r = rows[i];
        match j {
            j if j < f => prep.table.features.get2(r, j),
            j if j == f => prep.coords[r].lon,
            j if j == f + 1 => prep.coords[r].lat,
            _ => 1.0,
        }
    })
}

/// Ordinary least squares on the training rows, scored on the test rows.
/// In classification mode the logit is the predicted index minus the label
/// threshold.
pub fn linear_baseline(prep: &Prepared, task: Task) -> Result<MetricsReport> {
    linear_baseline_scored(prep, prep, task)
}

/// Fits on `fit_on`'s training rows and scores the test rows of `score_on`
/// (the same dataset, possibly with perturbed features).
pub fn linear_baseline_scored(fit_on: &Prepared, score_on: &Prepared, task: Task) -> Result<MetricsReport> {
    let train = &fit_on.split.train;
    let y = DVector::from_iterator(train.len(), train.iter().map(|&r| fit_on.table.dfi[r]));
    let beta = fit_linear(&design_matrix(fit_on, train), &y)?;
    let all: Vec<usize> = (0..score_on.table.len()).collect();
    let reg: Vec<f64> = (design_matrix(score_on, &all) * beta).iter().copied().collect();
    let logits: Vec<f64> = reg.iter().map(|v| v - DFI_THRESHOLD).collect();
    report_from_predictions(&reg, &logits, &score_on.table, &score_on.graph, &score_on.split.test, task)
}
