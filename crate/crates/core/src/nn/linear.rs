use crate::error::{Error, Result};
use crate::gemm;
use crate::nn::{Module, ModuleState, Param, ParamMut};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Fully connected layer `y = x * W^T + b` over a batch of rows.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
    grad_weight: Tensor,
    grad_bias: Tensor,
    state: ModuleState,
}

impl Linear {
    /// Layer from explicit weights `[out x in]` and bias `[out]`.
    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        let out = match weight.shape() {
            [o, _] => *o,
            s => return Err(Error::invalid(format!("linear weight must be rank 2, got {s:?}"))),
        };
        if bias.shape() != [out] {
            return Err(Error::ShapeMismatch {
                op: "linear bias",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Linear {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            state: ModuleState::default(),
        })
    }

    /// Weights and biases uniform in `[lo, hi)`.
    pub fn uniform(inputs: usize, outputs: usize, lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        let w = Tensor::rand_uniform(&[outputs, inputs], lo, hi, rng)?;
        let b = Tensor::rand_uniform(&[outputs], lo, hi, rng)?;
        Linear::from_parts(w, b)
    }

    /// Weights uniform in `[lo, hi)`, zero biases.
    pub fn uniform_zero_bias(inputs: usize, outputs: usize, lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        let w = Tensor::rand_uniform(&[outputs, inputs], lo, hi, rng)?;
        Linear::from_parts(w, Tensor::zeros(&[outputs]))
    }

    /// Truncated-normal weights and constant biases.
    pub fn truncated_normal(inputs: usize, outputs: usize, std: f64, bias: f64, rng: &mut Rng) -> Result<Self> {
        let w = Tensor::truncated_normal(&[outputs, inputs], std, rng)?;
        Linear::from_parts(w, Tensor::full(&[outputs], bias))
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Tensor {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.bias
    }

    pub fn grad_weight(&self) -> &Tensor {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &Tensor {
        &self.grad_bias
    }

    fn check_input(&self, shape: &[usize]) -> Result<usize> {
        match shape {
            [b, i] if *i == self.inputs() => Ok(*b),
            _ => Err(Error::ShapeMismatch {
                op: "linear input",
                lhs: vec![0, self.inputs()],
                rhs: shape.to_vec(),
            }),
        }
    }
}

impl Module for Linear {
    fn name(&self) -> String {
        format!("Linear({} -> {})", self.inputs(), self.outputs())
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        let batch = self.check_input(input.shape())?;
        let (inp, out) = (self.inputs(), self.outputs());
        let wt = gemm::transpose(out, inp, self.weight.data());
        let mut y = vec![0.0; batch * out];
        gemm::gemm(batch, inp, out, input.data(), &wt, &mut y);
        let mut y = Tensor::raw(vec![batch, out], y);
        y.add_row_vector_inplace(&self.bias)?;
        Ok(self.state.set_output(input, y))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        let batch = self.check_input(input.shape())?;
        let (inp, out) = (self.inputs(), self.outputs());
        if grad_output.shape() != [batch, out] {
            return Err(Error::ShapeMismatch {
                op: "linear grad_output",
                lhs: vec![batch, out],
                rhs: grad_output.shape().to_vec(),
            });
        }
        // gradW += g^T x
        let gt = gemm::transpose(batch, out, grad_output.data());
        let mut gw = vec![0.0; out * inp];
        gemm::gemm(out, batch, inp, &gt, input.data(), &mut gw);
        self.grad_weight
            .data_mut()
            .iter_mut()
            .zip(&gw)
            .for_each(|(a, &d)| *a += d);
        // gradb += column sums of g
        for row in grad_output.data().chunks_exact(out) {
            self.grad_bias
                .data_mut()
                .iter_mut()
                .zip(row)
                .for_each(|(a, &d)| *a += d);
        }
        // grad_input = g W
        let mut gi = vec![0.0; batch * inp];
        gemm::gemm(batch, out, inp, grad_output.data(), self.weight.data(), &mut gi);
        Ok(self.state.set_grad_input(Tensor::raw(vec![batch, inp], gi)))
    }

    fn output(&self) -> Option<&Tensor> {
        self.state.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.state.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let batch = self.check_input(input_shape)?;
        Ok(vec![batch, self.outputs()])
    }

    fn parameters(&self) -> Vec<Param<'_>> {
        vec![
            Param {
                name: "weight".into(),
                value: &self.weight,
                grad: &self.grad_weight,
            },
            Param {
                name: "bias".into(),
                value: &self.bias,
                grad: &self.grad_bias,
            },
        ]
    }

    fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        vec![
            ParamMut {
                name: "weight".into(),
                value: &mut self.weight,
                grad: &mut self.grad_weight,
            },
            ParamMut {
                name: "bias".into(),
                value: &mut self.bias,
                grad: &mut self.grad_bias,
            },
        ]
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parity_pair() -> Linear {
        let w = Tensor::from_vec(vec![2, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![2], vec![-0.5, -0.5]).unwrap();
        Linear::from_parts(w, b).unwrap()
    }

    #[test]
    fn forward_hand_value() {
        let mut l = parity_pair();
        let x = Tensor::from_vec(vec![1, 2], vec![1.0, 0.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), &[0.5, -1.5]);
    }

    #[test]
    fn grad_weight_is_outer_product() {
        let mut l = Linear::from_parts(Tensor::zeros(&[3, 4]), Tensor::zeros(&[3])).unwrap();
        let mut x = Tensor::zeros(&[1, 4]);
        x.set(&[0, 2], 1.0);
        let mut g = Tensor::zeros(&[1, 3]);
        g.set(&[0, 1], 1.0);
        l.forward(&x).unwrap();
        l.backward(&x, &g).unwrap();
        let gw = l.grad_weight();
        for i in 0..3 {
            for j in 0..4 {
                let expect = if (i, j) == (1, 2) { 1.0 } else { 0.0 };
                assert_eq!(gw.at(&[i, j]), expect);
            }
        }
    }

    #[test]
    fn accumulates_across_backward_calls() {
        let mut rng = Rng::new(4);
        let fresh = Linear::uniform(3, 2, -1.0, 1.0, &mut rng).unwrap();
        let x1 = Tensor::rand_uniform(&[4, 3], -1.0, 1.0, &mut rng).unwrap();
        let g1 = Tensor::rand_uniform(&[4, 2], -1.0, 1.0, &mut rng).unwrap();
        let x2 = Tensor::rand_uniform(&[2, 3], -1.0, 1.0, &mut rng).unwrap();
        let g2 = Tensor::rand_uniform(&[2, 2], -1.0, 1.0, &mut rng).unwrap();

        let run = |x: &Tensor, g: &Tensor| {
            let mut l = fresh.clone();
            l.forward(x).unwrap();
            l.backward(x, g).unwrap();
            l.grad_weight().clone()
        };
        let sep = run(&x1, &g1).add(&run(&x2, &g2)).unwrap();

        let mut l = fresh.clone();
        l.forward(&x1).unwrap();
        l.backward(&x1, &g1).unwrap();
        l.forward(&x2).unwrap();
        l.backward(&x2, &g2).unwrap();
        for (a, b) in l.grad_weight().data().iter().zip(sep.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        l.zero_grad_parameters();
        assert!(l.grad_weight().data().iter().all(|&v| v == 0.0));
        assert!(l.grad_bias().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn update_rules() {
        let mut l = Linear::from_parts(Tensor::ones(&[1, 1]), Tensor::zeros(&[1])).unwrap();
        l.grad_weight.fill(0.5);
        l.update_parameters(0.0);
        assert_eq!(l.weight().data(), &[1.0]);
        l.update_parameters(0.05);
        assert_eq!(l.weight().data(), &[0.975]);
    }

    #[test]
    fn backward_requires_forward() {
        let mut l = parity_pair();
        let x = Tensor::zeros(&[1, 2]);
        assert!(matches!(
            l.backward(&x, &Tensor::zeros(&[1, 2])),
            Err(Error::BackwardBeforeForward(_))
        ));
        l.forward(&x).unwrap();
        let other = Tensor::zeros(&[3, 2]);
        assert!(matches!(
            l.backward(&other, &Tensor::zeros(&[3, 2])),
            Err(Error::StaleForward { .. })
        ));
        assert!(l.forward(&Tensor::zeros(&[1, 3])).is_err());
    }
}
