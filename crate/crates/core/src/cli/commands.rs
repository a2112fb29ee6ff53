use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sddgat::data::{
    generate_synthetic, load_csv, make_split, perturb_dropout, perturb_noise, write_csv, SplitKind, SplitSpec,
    Standardizer, SyntheticSpec,
};
use sddgat::geometry::standardize_coords;
use sddgat::graph::{self, build_dual_graph, export_edges_csv, GraphConfig};
use sddgat::model::{Checkpoint, ModelConfig, SddGat, Task, Variant};
use sddgat::training::{self, evaluate, prepare, run_experiment, ExperimentConfig, ExperimentKind, TrainConfig};
use sddgat::{Error, Result};

use super::manifest::RunManifest;
use super::settings::Resolver;
use super::{EvalArgs, ExperimentArgs, GenDataArgs, GraphArgs, GraphStatsArgs, OptimArgs, Output, SplitArgs, TrainArgs};

const FEATURE_SEP: &str = ";";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn prepare_out(output: &Output) -> Result<PathBuf> {
    std::fs::create_dir_all(&output.out).map_err(io_err(&output.out))?;
    Ok(output.out.clone())
}

/// Parses a string flag as a typed value; failures are usage errors.
fn typed<T>(flag: &str, raw: Option<&String>) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    raw.map(|s| {
        s.parse().map_err(|e: T::Err| {
            let text = e.to_string();
            let detail = ["invalid configuration: ", "usage error: "]
                .iter()
                .find_map(|p| text.strip_prefix(p))
                .unwrap_or(&text)
                .to_string();
            Error::Usage(format!("--{}: {}", flag.replace('_', "-"), detail))
        })
    })
    .transpose()
}

fn path_flag(r: &mut Resolver, key: &str, flag: &Option<PathBuf>) -> Result<PathBuf> {
    r.require::<String>(key, flag.as_ref().map(|p| p.display().to_string()))
        .map(PathBuf::from)
}

fn resolve_graph(r: &mut Resolver, a: &GraphArgs) -> Result<GraphConfig> {
    let d = GraphConfig::default();
    let eps: String = r.get("epsilon", a.epsilon.clone(), "auto".to_string())?;
    let epsilon = if eps == "auto" {
        None
    } else {
        Some(
            eps.parse::<f64>()
                .map_err(|_| Error::Usage(format!("--epsilon: expected a number or `auto`, got `{}`", eps)))?,
        )
    };
    let cfg = GraphConfig {
        epsilon,
        sigma: r.get("sigma", a.sigma, d.sigma)?,
        lambda_edge: r.get("lambda_edge", a.lambda_edge, d.lambda_edge)?,
        delta: r.get("delta", a.delta, d.delta)?,
        k: r.get("k", a.k, d.k)?,
    };
    Ok(cfg)
}

fn resolve_optim(r: &mut Resolver, a: &OptimArgs) -> Result<(TrainConfig, usize)> {
    let task: Task = r.get("task", typed("task", a.task.as_ref())?, Task::Regression)?;
    let seed = r.get("seed", a.seed, 0u64)?;
    let d = TrainConfig::new(task, seed);
    let cfg = TrainConfig {
        lr: r.get("lr", a.lr, d.lr)?,
        adam_beta1: r.get("beta1", a.beta1, d.adam_beta1)?,
        adam_beta2: r.get("beta2", a.beta2, d.adam_beta2)?,
        adam_eps: r.get("adam_eps", a.adam_eps, d.adam_eps)?,
        max_epochs: r.get("epochs", a.epochs, d.max_epochs)?,
        patience: r.get("patience", a.patience, d.patience)?,
        lambda_smooth: r.get("lambda_smooth", a.lambda_smooth, d.lambda_smooth)?,
        ..d
    };
    let hidden = r.get("hidden", a.hidden, 32usize)?;
    Ok((cfg, hidden))
}

fn resolve_split(r: &mut Resolver, a: &SplitArgs, seed: u64) -> Result<SplitSpec> {
    let kind: String = r.get("split", a.split.clone(), "random".to_string())?;
    match kind.as_str() {
        "random" => {
            let d = match SplitSpec::random(seed).kind {
                SplitKind::Random { train, val, test } => (train, val, test),
                SplitKind::RegionHoldout { .. } => unreachable!(),
            };
            Ok(SplitSpec {
                kind: SplitKind::Random {
                    train: r.get("train_frac", a.train_frac, d.0)?,
                    val: r.get("val_frac", a.val_frac, d.1)?,
                    test: r.get("test_frac", a.test_frac, d.2)?,
                },
                seed,
            })
        }
        "region" => Ok(SplitSpec::region_holdout(r.require("holdout_region", a.holdout_region)?, seed)),
        other => Err(Error::Usage(format!("--split: expected `random` or `region`, got `{}`", other))),
    }
}

fn hidden_ok(hidden: usize) -> Result<()> {
    ModelConfig {
        input_dim: 1,
        hidden_dim: hidden,
        task: Task::Regression,
    }
    .validate()
}

fn graph_meta(g: &GraphConfig) -> Vec<(String, String)> {
    let eps = g.epsilon.map_or("auto".to_string(), |e| e.to_string());
    vec![
        ("graph.epsilon".into(), eps),
        ("graph.sigma".into(), g.sigma.to_string()),
        ("graph.lambda_edge".into(), g.lambda_edge.to_string()),
        ("graph.delta".into(), g.delta.to_string()),
        ("graph.k".into(), g.k.to_string()),
    ]
}

fn split_meta(s: &SplitSpec) -> Vec<(String, String)> {
    let mut out = vec![("split.seed".to_string(), s.seed.to_string())];
    match s.kind {
        SplitKind::Random { train, val, test } => {
            out.push(("split.kind".into(), "random".into()));
            out.push(("split.train".into(), train.to_string()));
            out.push(("split.val".into(), val.to_string()));
            out.push(("split.test".into(), test.to_string()));
        }
        SplitKind::RegionHoldout { region } => {
            out.push(("split.kind".into(), "region".into()));
            out.push(("split.region".into(), region.to_string()));
        }
    }
    out
}

fn meta_value<T: FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    let raw = ckpt
        .meta(key)
        .ok_or_else(|| Error::Checkpoint(format!("missing `{}`", key)))?;
    raw.parse()
        .map_err(|_| Error::Checkpoint(format!("bad value `{}` for `{}`", raw, key)))
}

fn graph_from_meta(ckpt: &Checkpoint) -> Result<GraphConfig> {
    let eps: String = meta_value(ckpt, "graph.epsilon")?;
    Ok(GraphConfig {
        epsilon: if eps == "auto" {
            None
        } else {
            Some(meta_value(ckpt, "graph.epsilon")?)
        },
        sigma: meta_value(ckpt, "graph.sigma")?,
        lambda_edge: meta_value(ckpt, "graph.lambda_edge")?,
        delta: meta_value(ckpt, "graph.delta")?,
        k: meta_value(ckpt, "graph.k")?,
    })
}

fn split_from_meta(ckpt: &Checkpoint) -> Result<SplitSpec> {
    let seed = meta_value(ckpt, "split.seed")?;
    let kind: String = meta_value(ckpt, "split.kind")?;
    Ok(match kind.as_str() {
        "random" => SplitSpec {
            kind: SplitKind::Random {
                train: meta_value(ckpt, "split.train")?,
                val: meta_value(ckpt, "split.val")?,
                test: meta_value(ckpt, "split.test")?,
            },
            seed,
        },
        "region" => SplitSpec::region_holdout(meta_value(ckpt, "split.region")?, seed),
        other => return Err(Error::Checkpoint(format!("unknown split kind `{}`", other))),
    })
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut m = RunManifest::start("gen-data");
    let mut r = Resolver::load(a.output.config.as_deref())?;
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_nodes: r.get("n", a.n, d.n_nodes)?,
        bearing_deg: r.get("bearing", a.bearing, d.bearing_deg)?,
        len_along: r.get("len_along", a.len_along, d.len_along)?,
        len_across: r.get("len_across", a.len_across, d.len_across)?,
        noise_sd: r.get("noise_sd", a.noise_sd, d.noise_sd)?,
        n_regions: r.get("regions", a.regions, d.n_regions)?,
        seed: r.get("seed", a.seed, d.seed)?,
    };
    r.finish()?;
    spec.validate()?;

    let out = prepare_out(&a.output)?;
    let table = generate_synthetic(&spec)?;
    let path = out.join("data.csv");
    write_csv(&table, &path)?;
    log::info!("wrote {} rows to {}", table.len(), path.display());

    m.seed = Some(spec.seed);
    m.config = r.resolved;
    m.output(&path);
    m.finish(&out)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut m = RunManifest::start("train");
    let mut r = Resolver::load(a.output.config.as_deref())?;
    let data = path_flag(&mut r, "data", &a.data)?;
    let variant: Variant = r.get("variant", typed("variant", a.variant.as_ref())?, Variant::Full)?;
    let (tcfg, hidden) = resolve_optim(&mut r, &a.optim)?;
    let gcfg = resolve_graph(&mut r, &a.graph)?;
    let split_spec = resolve_split(&mut r, &a.split, tcfg.seed)?;
    r.finish()?;
    tcfg.validate()?;
    gcfg.validate()?;
    hidden_ok(hidden)?;

    let raw = load_csv(&data)?;
    let split = make_split(&raw, &split_spec)?;
    let prep = prepare(&raw, split, &gcfg)?;
    let model_cfg = ModelConfig {
        hidden_dim: hidden,
        ..ModelConfig::new(prep.table.n_features(), tcfg.task)
    };
    let init = SddGat::new(model_cfg, variant, tcfg.seed)?;
    let out = prepare_out(&a.output)?;
    let (model, log) = match training::train(&init, &prep.table, &prep.graph, &prep.split, &tcfg) {
        Ok(v) => v,
        Err(Error::Diverged {
            epoch,
            loss,
            last_good,
        }) => {
            let path = out.join("model.last_good.ckpt");
            Checkpoint::new(*last_good.clone()).save(&path)?;
            log::error!("training diverged; last good parameters saved to {}", path.display());
            return Err(Error::Diverged {
                epoch,
                loss,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    let report = evaluate(&model, &prep.table, &prep.graph, &prep.split.test)?;

    let mut ckpt = Checkpoint::new(model)
        .with_meta("data.features", prep.table.feature_names.join(FEATURE_SEP))
        .with_meta("train.seed", tcfg.seed)
        .with_meta("train.lambda_smooth", tcfg.lambda_smooth)
        .with_meta("train.best_epoch", log.best_epoch)
        .with_meta("train.epochs_run", log.epochs.len());
    ckpt.meta.extend(prep.standardizer.to_meta());
    ckpt.meta.extend(graph_meta(&prep.graph.config));
    ckpt.meta.extend(split_meta(&split_spec));

    let ckpt_path = out.join("model.ckpt");
    ckpt.save(&ckpt_path)?;
    let log_path = out.join("train_log.csv");
    log.write_csv(&log_path)?;
    report.write(&out, "metrics")?;
    print!("{}", report.to_kv_text());
    log::info!(
        "best epoch {} of {}; outputs in {}",
        log.best_epoch,
        log.epochs.len(),
        out.display()
    );

    m.seed = Some(tcfg.seed);
    m.config = r.resolved;
    m.config.insert(
        "epsilon_resolved".into(),
        prep.graph.config.epsilon.map_or(String::new(), |e| e.to_string()),
    );
    m.input("data", &data);
    for p in [ckpt_path, log_path, out.join("metrics.txt"), out.join("metrics.json")] {
        m.output(&p);
    }
    m.finish(&out)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut m = RunManifest::start("eval");
    let mut r = Resolver::load(a.output.config.as_deref())?;
    let ckpt_path = path_flag(&mut r, "checkpoint", &a.checkpoint)?;
    let data = path_flag(&mut r, "data", &a.data)?;
    let rows_name: String = r.get("split", a.rows.clone(), "test".to_string())?;
    let noise = r.get("noise", a.noise, 0.0)?;
    let dropout = r.get("dropout", a.dropout, 0.0)?;
    let seed_flag = r.get_opt("seed", a.seed)?;
    r.finish()?;
    if !["train", "val", "test", "all"].contains(&rows_name.as_str()) {
        return Err(Error::Usage(format!(
            "--split: expected train, val, test or all, got `{}`",
            rows_name
        )));
    }
    if !(noise >= 0.0) {
        return Err(Error::Config(format!("noise must be >= 0, got {}", noise)));
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::Config(format!("dropout must be in [0, 1], got {}", dropout)));
    }

    let ckpt = Checkpoint::load(&ckpt_path)?;
    let raw = load_csv(&data)?;
    let expected = ckpt.model.config.input_dim;
    if raw.n_features() != expected {
        return Err(Error::Dimension {
            op: "eval",
            detail: format!(
                "checkpoint expects {} input features, dataset has {} ({})",
                expected,
                raw.n_features(),
                raw.feature_names.join(", ")
            ),
        });
    }
    if let Some(names) = ckpt.meta("data.features") {
        let found = raw.feature_names.join(FEATURE_SEP);
        if names != found {
            return Err(Error::Dimension {
                op: "eval",
                detail: format!("checkpoint features [{}] differ from dataset features [{}]", names, found),
            });
        }
    }
    let standardizer = Standardizer::from_meta(|k| ckpt.meta(k).map(str::to_string))?;
    let split = make_split(&raw, &split_from_meta(&ckpt)?)?;
    let gcfg = graph_from_meta(&ckpt)?;

    let clean = standardizer.apply(&raw)?;
    let (coords, _) = standardize_coords(&raw.coords)?;
    let graph = build_dual_graph(&coords, &clean.features, &gcfg)?;
    let seed = match seed_flag {
        Some(s) => s,
        None => meta_value(&ckpt, "train.seed")?,
    };
    // graphs come from clean inputs; only node features are perturbed
    let mut table = perturb_noise(&clean, noise, seed);
    if dropout > 0.0 {
        table = perturb_dropout(&table, dropout, seed);
    }
    let all: Vec<usize> = (0..table.len()).collect();
    let rows = if rows_name == "all" {
        &all[..]
    } else {
        split.named(&rows_name).expect("validated split name")
    };
    let report = evaluate(&ckpt.model, &table, &graph, rows)?;

    let out = prepare_out(&a.output)?;
    report.write(&out, "metrics")?;
    print!("{}", report.to_kv_text());

    m.seed = Some(seed);
    m.config = r.resolved;
    m.config.insert("seed".into(), seed.to_string());
    m.input("checkpoint", &ckpt_path);
    m.input("data", &data);
    m.output(&out.join("metrics.txt"));
    m.output(&out.join("metrics.json"));
    m.finish(&out)
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut m = RunManifest::start("experiment");
    let mut r = Resolver::load(a.output.config.as_deref())?;
    let data = path_flag(&mut r, "data", &a.data)?;
    let kind: ExperimentKind = r.require("kind", typed("kind", a.kind.as_ref())?)?;
    let variant: Variant = r.get("variant", typed("variant", a.variant.as_ref())?, Variant::Full)?;
    let n_seeds = r.get("n_seeds", a.n_seeds, 1usize)?;
    let zero = r.get("include_zero_noise", a.include_zero_noise.then_some(true), false)?;
    let (tcfg, hidden) = resolve_optim(&mut r, &a.optim)?;
    let gcfg = resolve_graph(&mut r, &a.graph)?;
    r.finish()?;
    hidden_ok(hidden)?;
    let cfg = ExperimentConfig {
        n_seeds,
        hidden_dim: hidden,
        variant,
        include_zero_noise: zero,
        graph: gcfg,
        ..ExperimentConfig::new(kind, tcfg)
    };
    cfg.validate()?;

    let raw = load_csv(&data)?;
    let report = run_experiment(&raw, &cfg)?;
    let out = prepare_out(&a.output)?;
    report.write(&out)?;
    print!("{}", report.to_table());

    m.seed = Some(tcfg.seed);
    m.config = r.resolved;
    m.input("data", &data);
    m.output(&out.join("report.csv"));
    m.output(&out.join("report.txt"));
    m.finish(&out)
}

pub fn graph_stats(a: GraphStatsArgs) -> Result<()> {
    let mut m = RunManifest::start("graph-stats");
    let mut r = Resolver::load(a.output.config.as_deref())?;
    let data = path_flag(&mut r, "data", &a.data)?;
    let want_edges = r.get("edges", a.edges.then_some(true), false)?;
    let gcfg = resolve_graph(&mut r, &a.graph)?;
    r.finish()?;
    gcfg.validate()?;

    let raw = load_csv(&data)?;
    let all: Vec<usize> = (0..raw.len()).collect();
    let table = Standardizer::fit(&raw, &all)?.apply(&raw)?;
    let (coords, _) = standardize_coords(&raw.coords)?;
    let graph = build_dual_graph(&coords, &table.features, &gcfg)?;
    let stats = graph::graph_stats(&graph);

    let out = prepare_out(&a.output)?;
    let path = out.join("graph_stats.json");
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(&path, text.clone() + "\n").map_err(io_err(&path))?;
    println!("{}", text);
    m.output(&path);
    if want_edges {
        let edges = out.join("edges.csv");
        export_edges_csv(&graph, &edges)?;
        m.output(&edges);
    }

    m.config = r.resolved;
    m.config.insert(
        "epsilon_resolved".into(),
        graph.config.epsilon.map_or(String::new(), |e| e.to_string()),
    );
    m.input("data", &data);
    m.finish(&out)
}
