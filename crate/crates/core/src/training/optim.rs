use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sgd_step, Module};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Gd,
    SgdMomentum,
    Adam,
}

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn check_len(p: usize, g: usize, s: usize) -> Result<()> {
    if p != g || p != s {
        return Err(Error::ShapeMismatch {
            op: "optimizer step",
            lhs: vec![p],
            rhs: vec![g, s],
        });
    }
    Ok(())
}

/// Classical momentum: `v <- m*v - lr*g; p <- p + v`.
pub fn sgd_momentum_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, m: f64) -> Result<()> {
    check_len(params.len(), grads.len(), velocity.len())?;
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = m * *v - lr * g;
        *p += *v;
    }
    Ok(())
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        AdamMoments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update; `step` is the 1-based step count after this update.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamMoments,
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    check_len(params.len(), grads.len(), state.m.len())?;
    check_len(params.len(), grads.len(), state.v.len())?;
    if step == 0 {
        return Err(Error::invalid("adam step counter starts at 1"));
    }
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Optimizer state for every parameter tensor of one model.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    momentum: f64,
    adam: AdamConfig,
    velocity: Vec<Vec<f64>>,
    moments: Vec<AdamMoments>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, momentum: f64, adam: AdamConfig) -> Self {
        Optimizer {
            kind,
            momentum,
            adam,
            velocity: Vec::new(),
            moments: Vec::new(),
            step: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every parameter of `m` from its accumulated gradient. With `alpha > 0`
    /// the gradient is augmented by `alpha * p` (L2 weight decay).
    pub fn step(&mut self, m: &mut dyn Module, lr: f64, alpha: f64) -> Result<()> {
        let mut params = m.parameters_mut();
        if self.step == 0 {
            let sizes: Vec<usize> = params.iter().map(|p| p.value.len()).collect();
            self.velocity = sizes.iter().map(|&n| vec![0.0; n]).collect();
            self.moments = sizes.iter().map(|&n| AdamMoments::zeros(n)).collect();
        } else if params.len() != self.velocity.len() {
            return Err(Error::invalid("optimizer reused with a different model"));
        }
        self.step += 1;
        for (i, p) in params.iter_mut().enumerate() {
            let decayed;
            let g: &[f64] = if alpha != 0.0 {
                decayed = p
                    .grad
                    .data()
                    .iter()
                    .zip(p.value.data())
                    .map(|(g, w)| g + alpha * w)
                    .collect::<Vec<f64>>();
                &decayed
            } else {
                p.grad.data()
            };
            match self.kind {
                OptimizerKind::Gd => {
                    if alpha == 0.0 {
                        sgd_step(p.value, p.grad, lr);
                    } else {
                        p.value.data_mut().iter_mut().zip(g).for_each(|(w, &g)| *w -= lr * g);
                    }
                }
                OptimizerKind::SgdMomentum => {
                    sgd_momentum_step(p.value.data_mut(), g, &mut self.velocity[i], lr, self.momentum)?
                }
                OptimizerKind::Adam => {
                    adam_step(p.value.data_mut(), g, &mut self.moments[i], self.step, lr, &self.adam)?
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{get_parameters, Linear, Sequential, WeightDecayWrapper};
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    #[test]
    fn momentum_hand_iteration() {
        let mut w = [1.0];
        let mut v = [0.0];
        sgd_momentum_step(&mut w, &[0.5], &mut v, 0.1, 0.9).unwrap();
        assert!((w[0] - 0.95).abs() < 1e-15);
        sgd_momentum_step(&mut w, &[0.5], &mut v, 0.1, 0.9).unwrap();
        assert!((v[0] + 0.095).abs() < 1e-15);
        assert!((w[0] - 0.855).abs() < 1e-15);
        // with zero gradient the velocity decays geometrically
        let mut last = v[0].abs();
        for _ in 0..20 {
            sgd_momentum_step(&mut w, &[0.0], &mut v, 0.1, 0.9).unwrap();
            assert!((v[0].abs() - 0.9 * last).abs() < 1e-15);
            last = v[0].abs();
        }
        assert!(sgd_momentum_step(&mut w, &[0.0, 1.0], &mut v, 0.1, 0.9).is_err());
    }

    #[test]
    fn adam_first_step() {
        let cfg = AdamConfig::default();
        let mut p = [0.3, -2.0, 5.0];
        let before = p;
        let g = [1.0, -3.0, 1e-3];
        let mut s = AdamMoments::zeros(3);
        adam_step(&mut p, &g, &mut s, 1, 1e-4, &cfg).unwrap();
        assert!((p[0] - before[0] + 1e-4).abs() < 1e-11);
        for i in 0..3 {
            assert_eq!((p[i] - before[i]).signum(), -g[i].signum());
        }
        let mut q = [1.0];
        let mut s = AdamMoments::zeros(1);
        adam_step(&mut q, &[0.0], &mut s, 1, 1e-4, &cfg).unwrap();
        assert_eq!(q, [1.0]);
    }

    fn model() -> Sequential {
        let mut rng = Rng::new(5);
        Sequential::new().with(Linear::uniform(3, 2, -1.0, 1.0, &mut rng).unwrap())
    }

    fn with_grads(mut m: Sequential) -> Sequential {
        let x = Tensor::from_vec(vec![2, 3], vec![0.1, 0.2, -0.3, 1.0, 0.5, -0.5]).unwrap();
        m.forward(&x).unwrap();
        m.backward(&x, &Tensor::ones(&[2, 2])).unwrap();
        m
    }

    #[test]
    fn plain_paths_match_update_parameters() {
        let mut reference = with_grads(model());
        reference.update_parameters(0.1);
        for (kind, mom) in [(OptimizerKind::Gd, 0.7), (OptimizerKind::SgdMomentum, 0.0)] {
            let mut m = with_grads(model());
            Optimizer::new(kind, mom, AdamConfig::default()).step(&mut m, 0.1, 0.0).unwrap();
            let (a, b) = (get_parameters(&mut m).params(), get_parameters(&mut reference).params());
            if kind == OptimizerKind::Gd {
                assert_eq!(a, b);
            } else {
                // p + (0 - lr g) vs p - lr g
                a.iter().zip(&b).for_each(|(x, y)| assert!((x - y).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn decayed_gd_matches_wrapper() {
        let mut wrapped = WeightDecayWrapper::new(with_grads(model()));
        wrapped.update_parameters_decayed(0.1, 0.01).unwrap();
        let mut m = with_grads(model());
        Optimizer::new(OptimizerKind::Gd, 0.0, AdamConfig::default()).step(&mut m, 0.1, 0.01).unwrap();
        assert_eq!(get_parameters(&mut m).params(), get_parameters(&mut wrapped).params());
    }
}
