//! Input perturbations for robustness runs. Only the numeric feature columns
//! change; coordinates, one-hot columns, targets and regions are untouched.
//! Draws are made for every entry in row-major order regardless of the
//! level, so a fixed seed gives nested dropout masks and proportional noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NodeTable;
use crate::rng::{rng_for, stream};

/// Adds `N(0, σ²)` noise to every numeric feature entry.
pub fn perturb_noise(table: &NodeTable, sigma: f64, seed: u64) -> NodeTable {
    let mut out = table.clone();
    if sigma == 0.0 {
        return out;
    }
    let mut rng = rng_for(seed, stream::NOISE);
    let cols = out.features.cols();
    let k = out.n_numeric;
    for row in out.features.data_mut().chunks_mut(cols) {
        for v in &mut row[..k] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    out
}

/// Zeroes each numeric feature entry independently with probability `rate`.
pub fn perturb_dropout(table: &NodeTable, rate: f64, seed: u64) -> NodeTable {
    let mut out = table.clone();
    let mut rng = rng_for(seed, stream::DROPOUT);
    let cols = out.features.cols();
    let k = out.n_numeric;
    for row in out.features.data_mut().chunks_mut(cols) {
        for v in &mut row[..k] {
            let u: f64 = rng.random();
            if u < rate {
                *v = 0.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn table() -> NodeTable {
        generate_synthetic(&SyntheticSpec {
            n_nodes: 3400,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn numeric_diffs(a: &NodeTable, b: &NodeTable) -> Vec<f64> {
        let mut d = Vec::new();
        for r in 0..a.len() {
            for c in 0..a.n_numeric {
                d.push(b.features.get2(r, c) - a.features.get2(r, c));
            }
        }
        d
    }

    #[test]
    fn zero_levels_are_identity() {
        let t = table();
        assert_eq!(perturb_noise(&t, 0.0, 9), t);
        assert_eq!(perturb_dropout(&t, 0.0, 9), t);
    }

    #[test]
    fn noise_sd_matches_sigma() {
        let t = table();
        let p = perturb_noise(&t, 0.1, 4);
        let d = numeric_diffs(&t, &p);
        assert!(d.len() >= 10_000);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.005, "sd {}", sd);
        assert_eq!(p.dfi, t.dfi);
        assert_eq!(p.label, t.label);
        assert_eq!(p.coords, t.coords);
        assert_eq!(p.region, t.region);
        for r in 0..t.len() {
            assert_eq!(p.features.row(r)[t.n_numeric..], t.features.row(r)[t.n_numeric..]);
        }
        assert_eq!(perturb_noise(&t, 0.1, 4), p);
    }

    #[test]
    fn dropout_rates() {
        let t = table();
        let all = perturb_dropout(&t, 1.0, 1);
        assert!(!numeric_diffs(&t, &all).is_empty());
        for r in 0..t.len() {
            assert!(all.features.row(r)[..t.n_numeric].iter().all(|&v| v == 0.0));
        }
        let p = perturb_dropout(&t, 0.3, 1);
        let total = t.len() * t.n_numeric;
        let zeros = (0..t.len())
            .flat_map(|r| p.features.row(r)[..t.n_numeric].to_vec())
            .filter(|&v| v == 0.0)
            .count();
        let frac = zeros as f64 / total as f64;
        assert!((frac - 0.3).abs() < 0.02, "zero fraction {}", frac);
        assert_eq!(p.label, t.label);
    }

    #[test]
    fn dropout_masks_are_nested() {
        let t = table();
        let lo = perturb_dropout(&t, 0.1, 5);
        let hi = perturb_dropout(&t, 0.3, 5);
        for (a, b) in lo.features.data().iter().zip(hi.features.data()) {
            if *a == 0.0 {
                assert_eq!(*b, 0.0);
            }
        }
    }
}
