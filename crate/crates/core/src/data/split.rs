use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::NodeTable;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

/// Train/validation share of the non-test rows in region holdout.
const HOLDOUT_TRAIN_SHARE: f64 = 0.85;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    Random { train: f64, val: f64, test: f64 },
    RegionHoldout { region: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
}

impl SplitSpec {
    pub fn random(seed: u64) -> Self {
        Self {
            kind: SplitKind::Random {
                train: 0.70,
                val: 0.15,
                test: 0.15,
            },
            seed,
        }
    }

    pub fn region_holdout(region: u32, seed: u64) -> Self {
        Self {
            kind: SplitKind::RegionHoldout { region },
            seed,
        }
    }
}

/// Disjoint, sorted row index sets covering the table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn named(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

fn shuffled(mut rows: Vec<usize>, seed: u64) -> Vec<usize> {
    rows.shuffle(&mut rng_for(seed, stream::SPLIT));
    rows
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

pub fn make_split(table: &NodeTable, spec: &SplitSpec) -> Result<Split> {
    let n = table.len();
    let split = match spec.kind {
        SplitKind::Random { train, val, test } => {
            if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f))
                || (train + val + test - 1.0).abs() > 1e-9
            {
                return Err(Error::Split(format!(
                    "fractions must be in [0, 1] and sum to 1, got {}/{}/{}",
                    train, val, test
                )));
            }
            let rows = shuffled((0..n).collect(), spec.seed);
            let n_train = (train * n as f64).round() as usize;
            let n_val = ((val * n as f64).round() as usize).min(n - n_train);
            let s = Split {
                train: sorted(rows[..n_train].to_vec()),
                val: sorted(rows[n_train..n_train + n_val].to_vec()),
                test: sorted(rows[n_train + n_val..].to_vec()),
            };
            for (name, frac, set) in [("train", train, &s.train), ("val", val, &s.val), ("test", test, &s.test)] {
                if frac > 0.0 && set.is_empty() {
                    return Err(Error::Split(format!("{} split is empty", name)));
                }
            }
            s
        }
        SplitKind::RegionHoldout { region } => {
            if table.regions().len() < 2 {
                return Err(Error::Split("region holdout needs at least 2 regions".into()));
            }
            let (test, rest): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| table.region[i] == region);
            if test.is_empty() {
                return Err(Error::Split(format!("region {} has no rows", region)));
            }
            let rest = shuffled(rest, spec.seed);
            let n_train = (HOLDOUT_TRAIN_SHARE * rest.len() as f64).round() as usize;
            Split {
                train: sorted(rest[..n_train].to_vec()),
                val: sorted(rest[n_train..].to_vec()),
                test,
            }
        }
    };
    if split.train.is_empty() {
        return Err(Error::Split("train split is empty".into()));
    }
    Ok(split)
}
