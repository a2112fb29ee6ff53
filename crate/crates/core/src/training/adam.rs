use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Param;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when any gradient is
/// non-finite.
pub fn adam_step(
    params: &mut [Param],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::dim(
                "adam_step",
                format!("gradient of `{}` has shape {:?}, expected {:?}", p.name, g.shape(), p.value.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::Numeric {
                op: format!("gradient of parameter `{}`", p.name),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let w = p.value.data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            let mk = &mut m.data_mut()[k];
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
            let vk = &mut v.data_mut()[k];
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m.data()[k] / c1;
            let v_hat = v.data()[k] / c2;
            w[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(vals: &[f64]) -> Vec<Param> {
        vec![Param {
            name: "w".into(),
            value: Tensor::vector(vals.to_vec()),
        }]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = param(&[0.5, -2.0]);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::zeros(&[2])], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p[0].value.data(), &[0.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = param(&[1.0, 1.0, 1.0]);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[Tensor::vector(vec![3.0, -0.01, 250.0])], &mut s, &cfg).unwrap();
        for (w, sign) in p[0].value.data().iter().zip([1.0, -1.0, 1.0]) {
            assert!((1.0 - w - cfg.lr * sign).abs() < 1e-8);
        }
    }

    #[test]
    fn two_steps_match_reference() {
        let cfg = AdamConfig {
            lr: 0.05,
            beta1: 0.8,
            beta2: 0.95,
            eps: 1e-6,
        };
        let grads = [[0.3, -1.2], [-0.7, 0.4]];
        let mut p = param(&[0.1, 0.2]);
        let mut s = AdamState::new(&p);
        for g in grads {
            adam_step(&mut p, &[Tensor::vector(g.to_vec())], &mut s, &cfg).unwrap();
        }
        // reference: scalar loop written out per coordinate
        for k in 0..2 {
            let (mut w, mut m, mut v) = ([0.1, 0.2][k], 0.0f64, 0.0f64);
            for (t, g) in grads.iter().enumerate() {
                let t = (t + 1) as i32;
                m = 0.8 * m + 0.2 * g[k];
                v = 0.95 * v + 0.05 * g[k] * g[k];
                let mh = m / (1.0 - 0.8f64.powi(t));
                let vh = v / (1.0 - 0.95f64.powi(t));
                w -= 0.05 * mh / (vh.sqrt() + 1e-6);
            }
            assert!((p[0].value.data()[k] - w).abs() < 1e-12);
        }
        assert_eq!(s.step, 2);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = param(&[1.0]);
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &[Tensor::vector(vec![f64::NAN])], &mut s, &AdamConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("`w`"), "{}", err);
        assert_eq!(p[0].value.data(), &[1.0]);
        assert_eq!(s.step, 0);
    }
}
