use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Module, ModuleState};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    Relu,
    /// Row-wise softmax over the trailing extents.
    Softmax,
    /// Heaviside step: 1 for `x >= 0`, else 0. Its gradient is zero everywhere.
    Hardlim,
    Identity,
    /// `sigmoid(slope * x)`; a differentiable stand-in for `Hardlim`.
    SteepSigmoid(f64),
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Hardlim => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => x,
            ActivationKind::SteepSigmoid(k) => sigmoid(k * x),
            ActivationKind::Softmax => panic!("softmax is not elementwise"),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of each row, shifted by the row maximum.
pub(crate) fn softmax_rows(x: &Tensor) -> Tensor {
    let w = x.row_len();
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Parameter-free transfer function layer.
#[derive(Clone, Debug)]
pub struct Activation {
    kind: ActivationKind,
    state: ModuleState,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Activation {
            kind,
            state: ModuleState::default(),
        }
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }
}

impl Module for Activation {
    fn name(&self) -> String {
        format!("{:?}", self.kind)
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        let y = match self.kind {
            ActivationKind::Softmax => {
                if input.rank() < 2 {
                    return Err(Error::invalid("softmax expects a [batch x classes] input"));
                }
                softmax_rows(input)
            }
            k => input.map(|x| k.apply(x)),
        };
        Ok(self.state.set_output(input, y))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        input.same_shape(grad_output, "activation backward")?;
        let y = self.state.stored_output();
        let g = grad_output.data();
        let data: Vec<f64> = match self.kind {
            ActivationKind::Identity => g.to_vec(),
            ActivationKind::Hardlim => vec![0.0; g.len()],
            ActivationKind::Tanh => y.data().iter().zip(g).map(|(&y, &g)| g * (1.0 - y * y)).collect(),
            ActivationKind::Sigmoid => y.data().iter().zip(g).map(|(&y, &g)| g * y * (1.0 - y)).collect(),
            ActivationKind::SteepSigmoid(k) => {
                y.data().iter().zip(g).map(|(&y, &g)| g * k * y * (1.0 - y)).collect()
            }
            ActivationKind::Relu => input
                .data()
                .iter()
                .zip(g)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect(),
            ActivationKind::Softmax => {
                let w = y.row_len();
                let mut out = Vec::with_capacity(g.len());
                for (yr, gr) in y.data().chunks_exact(w).zip(g.chunks_exact(w)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    out.extend(yr.iter().zip(gr).map(|(&y, &g)| y * (g - dot)));
                }
                out
            }
        };
        let gi = Tensor::raw(input.shape().to_vec(), data);
        Ok(self.state.set_grad_input(gi))
    }

    fn output(&self) -> Option<&Tensor> {
        self.state.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.state.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(input_shape.to_vec())
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(kind: ActivationKind, x: &[f64]) -> Vec<f64> {
        let t = Tensor::from_vec(vec![1, x.len()], x.to_vec()).unwrap();
        Activation::new(kind).forward(&t).unwrap().data().to_vec()
    }

    #[test]
    fn analytic_values() {
        assert_eq!(run(ActivationKind::Sigmoid, &[0.0]), vec![0.5]);
        assert_eq!(run(ActivationKind::Tanh, &[0.0]), vec![0.0]);
        assert_eq!(run(ActivationKind::Relu, &[-1.0]), vec![0.0]);
        assert_eq!(run(ActivationKind::Hardlim, &[-0.5, 0.0, 0.5]), vec![0.0, 1.0, 1.0]);
        let sm = run(ActivationKind::Softmax, &[3.0; 10]);
        assert!(sm.iter().all(|&p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shift() {
        let x = Tensor::from_vec(vec![2, 4], vec![1.0, -2.0, 0.5, 3.0, 100.0, 101.0, 99.0, 98.5]).unwrap();
        let y = softmax_rows(&x);
        for r in 0..2 {
            assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = softmax_rows(&x.add_scalar(17.25));
        for (a, b) in y.data().iter().zip(shifted.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_dead_relu_gradients() {
        let x = Tensor::from_vec(vec![1, 3], vec![-1.0, 2.0, 0.5]).unwrap();
        let g = Tensor::from_vec(vec![1, 3], vec![3.0, -4.0, 5.0]).unwrap();
        let mut id = Activation::new(ActivationKind::Identity);
        id.forward(&x).unwrap();
        assert_eq!(id.backward(&x, &g).unwrap(), &g);
        let mut relu = Activation::new(ActivationKind::Relu);
        relu.forward(&x).unwrap();
        assert_eq!(relu.backward(&x, &g).unwrap().data()[0], 0.0);
        let mut step = Activation::new(ActivationKind::Hardlim);
        step.forward(&x).unwrap();
        assert!(step.backward(&x, &g).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_grad_on_activation_is_noop() {
        let mut a = Activation::new(ActivationKind::Tanh);
        a.zero_grad_parameters();
        a.update_parameters(0.1);
        assert!(a.parameters().is_empty());
    }
}
