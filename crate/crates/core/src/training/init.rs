use rand::Rng;

use crate::rng::{rng_for, stream};
use crate::tensor::Tensor;

/// Glorot bound `√(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform Glorot draw. A 1-D shape `[n]` is treated as `n × 1`.
///
/// # Panics
/// If `shape` is not 1-D or 2-D.
pub fn xavier_uniform<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let (fan_in, fan_out) = match *shape {
        [n] => (n, 1),
        [r, c] => (r, c),
        _ => panic!("xavier init needs a 1-D or 2-D shape, got {:?}", shape),
    };
    let bound = xavier_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

pub fn xavier_init(shape: &[usize], seed: u64) -> Tensor {
    xavier_uniform(shape, &mut rng_for(seed, stream::INIT))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, SddGat, Task, Variant};

    #[test]
    fn within_bound_and_spread() {
        let t = xavier_init(&[32, 32], 3);
        let b = (6.0f64 / 64.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= b));
        let max = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 0.9 * b);
        // uniform on [−b, b] has variance b²/3
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        assert!((var - b * b / 3.0).abs() < 0.1 * b * b / 3.0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(xavier_init(&[4, 7], 9), xavier_init(&[4, 7], 9));
        assert_ne!(xavier_init(&[4, 7], 9), xavier_init(&[4, 7], 10));
        assert_eq!(xavier_init(&[13], 1).shape(), &[13]);
    }

    #[test]
    fn biases_and_fusion_start_at_zero() {
        let m = SddGat::new(ModelConfig::new(6, Task::Dual), Variant::Full, 1).unwrap();
        for name in ["reg.bias", "cls.bias", "fusion.alpha_raw"] {
            assert_eq!(m.param(name).unwrap().item(), 0.0);
        }
    }
}
