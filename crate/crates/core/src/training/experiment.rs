//! Ablation, robustness, and region-holdout sweeps.
//!
//! Replicate `r` of a sweep uses seed `seed + r` for its split, initialization
//! and perturbations; region fold `k` uses `seed + k`. Robustness sweeps train
//! once per replicate on clean data and perturb the standardized test-time
//! inputs at every level with the same perturbation seed.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::linear_baseline_scored;
use super::trainer::{evaluate, prepare, train, Prepared, TrainConfig};
use crate::data::{make_split, perturb_dropout, perturb_noise, NodeTable, SplitKind, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::metrics::{fmt_sig, MetricsReport};
use crate::model::{ModelConfig, SddGat, Variant};

pub const NOISE_LEVELS: [f64; 4] = [0.01, 0.05, 0.10, 0.20];
pub const DROPOUT_RATES: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Ablation,
    Noise,
    Dropout,
    Region,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::Noise => "noise",
            ExperimentKind::Dropout => "dropout",
            ExperimentKind::Region => "region",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ablation" => Ok(ExperimentKind::Ablation),
            "noise" | "noise_sweep" => Ok(ExperimentKind::Noise),
            "dropout" | "dropout_sweep" => Ok(ExperimentKind::Dropout),
            "region" | "region_holdout" => Ok(ExperimentKind::Region),
            _ => Err(Error::Usage(format!(
                "unknown experiment kind `{}` (expected ablation, noise, dropout or region)",
                s
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Replicates averaged per row (ignored by region holdout, which runs
    /// one fold per region).
    pub n_seeds: usize,
    pub hidden_dim: usize,
    /// Model trained in robustness and region sweeps.
    pub variant: Variant,
    /// Adds a σ = 0 row to the noise sweep.
    pub include_zero_noise: bool,
    pub graph: GraphConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, train: TrainConfig) -> Self {
        Self {
            kind,
            seed: train.seed,
            n_seeds: 1,
            hidden_dim: 32,
            variant: Variant::Full,
            include_zero_noise: false,
            graph: GraphConfig::default(),
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds < 1 {
            return Err(Error::Config("n_seeds must be >= 1".into()));
        }
        self.graph.validate()?;
        self.train.validate()
    }
}

/// One report line: what was run, the model's scores, and the linear
/// baseline's scores under the same split and perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub variant: Variant,
    /// Perturbation level (σ or missing rate); `None` outside robustness sweeps.
    pub level: Option<f64>,
    /// Held-out region for region folds.
    pub region: Option<u32>,
    pub seeds: Vec<u64>,
    pub report: MetricsReport,
    pub baseline: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
}

struct Run {
    prep: Prepared,
    model: SddGat,
}

fn train_run(raw: &NodeTable, split: SplitSpec, variant: Variant, cfg: &ExperimentConfig, seed: u64) -> Result<Run> {
    let split = make_split(raw, &split)?;
    let prep = prepare(raw, split, &cfg.graph)?;
    let model_cfg = ModelConfig {
        hidden_dim: cfg.hidden_dim,
        ..ModelConfig::new(prep.table.n_features(), cfg.train.task)
    };
    let init = SddGat::new(model_cfg, variant, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train };
    let (model, _) = train(&init, &prep.table, &prep.graph, &prep.split, &tcfg)?;
    Ok(Run { prep, model })
}

fn perturbed(prep: &Prepared, kind: ExperimentKind, level: f64, seed: u64) -> Prepared {
    let table = match kind {
        ExperimentKind::Noise => perturb_noise(&prep.table, level, seed),
        ExperimentKind::Dropout => perturb_dropout(&prep.table, level, seed),
        _ => prep.table.clone(),
    };
    Prepared {
        table,
        ..prep.clone()
    }
}

fn score(run: &Run, prep: &Prepared, cfg: &ExperimentConfig) -> Result<(MetricsReport, MetricsReport)> {
    let model = evaluate(&run.model, &prep.table, &prep.graph, &prep.split.test)?;
    let baseline = linear_baseline_scored(&run.prep, prep, cfg.train.task)?;
    Ok((model, baseline))
}

fn mean_row(label: &str, variant: Variant, level: Option<f64>, rows: &[ExperimentRow]) -> ExperimentRow {
    let reports: Vec<MetricsReport> = rows.iter().map(|r| r.report.clone()).collect();
    let baselines: Vec<MetricsReport> = rows.iter().map(|r| r.baseline.clone()).collect();
    ExperimentRow {
        label: label.to_string(),
        variant,
        level,
        region: None,
        seeds: rows.iter().flat_map(|r| r.seeds.clone()).collect(),
        report: MetricsReport::mean(&reports),
        baseline: MetricsReport::mean(&baselines),
    }
}

pub fn run_experiment(raw: &NodeTable, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.n_seeds as u64).map(|r| cfg.seed + r).collect();
    let rows = match cfg.kind {
        ExperimentKind::Ablation => {
            let jobs: Vec<(Variant, u64)> = Variant::ALL
                .iter()
                .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
                .collect();
            let runs = jobs
                .par_iter()
                .map(|&(v, s)| {
                    let run = train_run(raw, SplitSpec::random(s), v, cfg, s)?;
                    let (report, baseline) = score(&run, &run.prep, cfg)?;
                    Ok(ExperimentRow {
                        label: v.to_string(),
                        variant: v,
                        level: None,
                        region: None,
                        seeds: vec![s],
                        report,
                        baseline,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Variant::ALL
                .iter()
                .map(|&v| {
                    let group: Vec<ExperimentRow> = runs.iter().filter(|r| r.variant == v).cloned().collect();
                    mean_row(&v.to_string(), v, None, &group)
                })
                .collect()
        }
        ExperimentKind::Noise | ExperimentKind::Dropout => {
            let levels: Vec<f64> = if cfg.kind == ExperimentKind::Noise {
                let mut l = NOISE_LEVELS.to_vec();
                if cfg.include_zero_noise {
                    l.insert(0, 0.0);
                }
                l
            } else {
                DROPOUT_RATES.to_vec()
            };
            let per_seed = seeds
                .par_iter()
                .map(|&s| {
                    let run = train_run(raw, SplitSpec::random(s), cfg.variant, cfg, s)?;
                    levels
                        .iter()
                        .map(|&level| {
                            let p = perturbed(&run.prep, cfg.kind, level, s);
                            let (report, baseline) = score(&run, &p, cfg)?;
                            Ok(ExperimentRow {
                                label: format!("{}={}", level_name(cfg.kind), level),
                                variant: cfg.variant,
                                level: Some(level),
                                region: None,
                                seeds: vec![s],
                                report,
                                baseline,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            levels
                .iter()
                .enumerate()
                .map(|(k, &level)| {
                    let group: Vec<ExperimentRow> = per_seed.iter().map(|rows| rows[k].clone()).collect();
                    mean_row(&group[0].label, cfg.variant, Some(level), &group)
                })
                .collect()
        }
        ExperimentKind::Region => {
            let regions = raw.regions();
            if regions.len() < 2 {
                return Err(Error::Split("region holdout needs at least 2 regions".into()));
            }
            let folds = regions
                .par_iter()
                .enumerate()
                .map(|(k, &region)| {
                    let s = cfg.seed + k as u64;
                    let spec = SplitSpec {
                        kind: SplitKind::RegionHoldout { region },
                        seed: s,
                    };
                    let run = train_run(raw, spec, cfg.variant, cfg, s)?;
                    let (report, baseline) = score(&run, &run.prep, cfg)?;
                    Ok(ExperimentRow {
                        label: format!("fold={} region={}", k, region),
                        variant: cfg.variant,
                        level: None,
                        region: Some(region),
                        seeds: vec![s],
                        report,
                        baseline,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mean = mean_row("mean", cfg.variant, None, &folds);
            folds.into_iter().chain(std::iter::once(mean)).collect()
        }
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
    })
}

fn level_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Noise => "sigma",
        ExperimentKind::Dropout => "rate",
        _ => "level",
    }
}

impl ExperimentReport {
    fn fingerprint(&self, row: &ExperimentRow) -> Vec<String> {
        let c = &self.config;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        vec![
            c.kind.to_string(),
            row.label.clone(),
            row.variant.to_string(),
            opt(row.level),
            row.region.map_or(String::new(), |r| r.to_string()),
            row.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
            c.train.task.to_string(),
            c.hidden_dim.to_string(),
            c.train.lr.to_string(),
            c.train.lambda_smooth.to_string(),
            c.train.max_epochs.to_string(),
            c.train.patience.to_string(),
            c.graph.epsilon.map_or("auto".into(), |e| e.to_string()),
            c.graph.sigma.to_string(),
            c.graph.lambda_edge.to_string(),
            c.graph.delta.to_string(),
            c.graph.k.to_string(),
        ]
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "kind", "row", "variant", "level", "region", "seeds", "task", "hidden_dim", "lr",
            "lambda_smooth", "max_epochs", "patience", "epsilon", "sigma", "lambda_edge", "delta", "k",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(MetricsReport::NAMES.iter().map(|s| s.to_string()));
        h.push("n_eval".into());
        h.extend(MetricsReport::NAMES.iter().map(|s| format!("baseline_{}", s)));
        h
    }

    fn metric_cells(r: &MetricsReport, with_n: bool) -> Vec<String> {
        let mut v: Vec<String> = MetricsReport::NAMES
            .iter()
            .map(|n| r.get(n).map_or(String::new(), |x| fmt_sig(x, 6)))
            .collect();
        if with_n {
            v.push(r.n_eval.to_string());
        }
        v
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Usage(format!("csv encoding failed: {}", e));
        w.write_record(Self::header()).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = self.fingerprint(row);
            rec.extend(Self::metric_cells(&row.report, true));
            rec.extend(Self::metric_cells(&row.baseline, false));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned text table of the row labels and the populated metrics.
    pub fn to_table(&self) -> String {
        let names: Vec<&str> = MetricsReport::NAMES
            .iter()
            .copied()
            .filter(|n| self.rows.iter().any(|r| r.report.get(n).is_some()))
            .collect();
        let mut header = vec!["row".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        header.extend(
            names
                .iter()
                .filter(|n| ["mae", "r2", "accuracy", "auc"].contains(n))
                .map(|n| format!("lin_{}", n)),
        );
        let mut lines = vec![header];
        for r in &self.rows {
            let mut line = vec![r.label.clone()];
            let cell = |m: &MetricsReport, n: &str| m.get(n).map_or("-".into(), |x| format!("{:.4}", x));
            line.extend(names.iter().map(|n| cell(&r.report, n)));
            line.extend(
                names
                    .iter()
                    .filter(|n| ["mae", "r2", "accuracy", "auc"].contains(n))
                    .map(|n| cell(&r.baseline, n)),
            );
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{:<w$}", s, w = widths[c]) } else { format!("{:>w$}", s, w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Writes `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))
    }
}
