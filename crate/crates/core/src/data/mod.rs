//! Node tables: ingestion, preprocessing, synthetic generation,
//! perturbation, and train/validation/test splitting.

mod csv_io;
mod perturb;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, write_csv, REQUIRED_COLUMNS};
pub use perturb::{perturb_dropout, perturb_noise};
pub use split::{make_split, Split, SplitKind, SplitSpec};
pub use synthetic::{generate_synthetic, generate_synthetic_with_truth, Plume, SyntheticSpec, SyntheticTruth};

use crate::error::{Error, Result};
use crate::geometry::Coordinates;
use crate::loss::DFI_THRESHOLD;
use crate::tensor::Tensor;

/// Numeric feature columns, in feature-matrix order.
pub const NUMERIC_COLUMNS: [&str; 3] = ["fluoride", "ph", "detection_freq"];

/// One row per sampling site.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    pub ids: Vec<String>,
    pub coords: Vec<Coordinates>,
    /// `[n × F]`: the numeric columns followed by one-hot soil columns.
    pub features: Tensor,
    pub feature_names: Vec<String>,
    /// Leading feature columns that are numeric (the rest are one-hot).
    pub n_numeric: usize,
    pub soil_type: Vec<String>,
    pub dfi: Vec<f64>,
    pub label: Vec<bool>,
    pub region: Vec<u32>,
}

impl NodeTable {
    /// Assembles a table, one-hot encoding soil types in sorted category order.
    pub fn from_columns(
        ids: Vec<String>,
        coords: Vec<Coordinates>,
        numeric: Vec<[f64; 3]>,
        soil_type: Vec<String>,
        dfi: Vec<f64>,
        region: Vec<u32>,
    ) -> Result<Self> {
        let n = ids.len();
        if [coords.len(), numeric.len(), soil_type.len(), dfi.len(), region.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::dim("node_table", "column lengths differ"));
        }
        let mut categories: Vec<String> = soil_type.clone();
        categories.sort();
        categories.dedup();
        let width = NUMERIC_COLUMNS.len() + categories.len();
        let mut data = Vec::with_capacity(n * width);
        for (row, soil) in numeric.iter().zip(&soil_type) {
            data.extend_from_slice(row);
            data.extend(categories.iter().map(|c| if c == soil { 1.0 } else { 0.0 }));
        }
        let mut feature_names: Vec<String> = NUMERIC_COLUMNS.iter().map(|s| s.to_string()).collect();
        feature_names.extend(categories.iter().map(|c| format!("soil_type={}", c)));
        let label = dfi.iter().map(|&d| d > DFI_THRESHOLD).collect();
        Ok(Self {
            ids,
            coords,
            features: Tensor::matrix(n, width, data)?,
            feature_names,
            n_numeric: NUMERIC_COLUMNS.len(),
            soil_type,
            dfi,
            label,
            region,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Labels as 0/1 floats.
    pub fn label_f64(&self) -> Vec<f64> {
        self.label.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect()
    }

    pub fn regions(&self) -> Vec<u32> {
        let mut r = self.region.clone();
        r.sort_unstable();
        r.dedup();
        r
    }
}

/// Per-column affine transform for the numeric feature columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Fits means and population standard deviations on `rows`.
    pub fn fit(table: &NodeTable, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Split("cannot fit a standardizer on zero rows".into()));
        }
        let mut means = Vec::with_capacity(table.n_numeric);
        let mut scales = Vec::with_capacity(table.n_numeric);
        for c in 0..table.n_numeric {
            let vals: Vec<f64> = rows.iter().map(|&r| table.features.get2(r, c)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::Preprocess {
                    column: table.feature_names[c].clone(),
                    detail: "has zero variance on the training rows".into(),
                });
            }
            means.push(m);
            scales.push(sd);
        }
        Ok(Self {
            columns: table.feature_names[..table.n_numeric].to_vec(),
            means,
            scales,
        })
    }

    /// Transforms the numeric columns of every row; one-hot columns are kept.
    pub fn apply(&self, table: &NodeTable) -> Result<NodeTable> {
        if table.feature_names[..table.n_numeric] != self.columns[..] {
            return Err(Error::Preprocess {
                column: self.columns.join(","),
                detail: "do not match the table's numeric columns".into(),
            });
        }
        let mut out = table.clone();
        let cols = out.features.cols();
        for (k, v) in out.features.data_mut().iter_mut().enumerate() {
            let c = k % cols;
            if c < self.means.len() {
                *v = (*v - self.means[c]) / self.scales[c];
            }
        }
        Ok(out)
    }

    /// Flat `key=value` pairs for checkpoints and manifests.
    pub fn to_meta(&self) -> Vec<(String, String)> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{:?}", x)).collect::<Vec<_>>().join(",");
        vec![
            ("standardizer.columns".into(), self.columns.join(",")),
            ("standardizer.means".into(), join(&self.means)),
            ("standardizer.scales".into(), join(&self.scales)),
        ]
    }

    pub fn from_meta(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let field = |k: &str| get(k).ok_or_else(|| Error::Checkpoint(format!("missing `{}`", k)));
        let floats = |s: String| -> Result<Vec<f64>> {
            s.split(',')
                .map(|x| x.parse().map_err(|_| Error::Checkpoint(format!("bad value `{}`", x))))
                .collect()
        };
        Ok(Self {
            columns: field("standardizer.columns")?.split(',').map(str::to_string).collect(),
            means: floats(field("standardizer.means")?)?,
            scales: floats(field("standardizer.scales")?)?,
        })
    }
}

/// Fits on `train_rows` and standardizes the whole table.
pub fn fit_and_apply_standardizer(
    table: &NodeTable,
    train_rows: &[usize],
) -> Result<(NodeTable, Standardizer)> {
    let s = Standardizer::fit(table, train_rows)?;
    Ok((s.apply(table)?, s))
}
