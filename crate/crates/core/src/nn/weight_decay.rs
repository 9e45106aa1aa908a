use crate::error::{Error, Result};
use crate::nn::{Module, Param, ParamMut, Sequential};
use crate::tensor::Tensor;

/// A [`Sequential`] container with an L2 penalty `(alpha / 2) * ||p||^2` on every
/// parameter tensor, applied as an extra `alpha * p` term in the update.
#[derive(Clone, Default)]
pub struct WeightDecayWrapper {
    inner: Sequential,
    weight_decay: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!("weight decay alpha must be >= 0, got {alpha}")));
    }
    Ok(())
}

impl WeightDecayWrapper {
    pub fn new(inner: Sequential) -> Self {
        WeightDecayWrapper {
            inner,
            weight_decay: 0.0,
        }
    }

    pub fn inner(&self) -> &Sequential {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut Sequential {
        &mut self.inner
    }

    pub fn into_inner(self) -> Sequential {
        self.inner
    }

    /// Penalty stored by the last [`WeightDecayWrapper::penalty`] call.
    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    /// Computes and stores the sum over parameter tensors of `(alpha/2) * <p, p>`.
    pub fn penalty(&mut self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        self.weight_decay = penalty_of(&self.inner.parameters(), alpha);
        Ok(self.weight_decay)
    }

    /// `p <- p - lr * (grad(p) + alpha * p)` for every parameter.
    pub fn update_parameters_decayed(&mut self, lr: f64, alpha: f64) -> Result<()> {
        check_alpha(alpha)?;
        for p in self.inner.parameters_mut() {
            decayed_step(p.value, p.grad, lr, alpha);
        }
        Ok(())
    }
}

pub(crate) fn penalty_of(params: &[Param<'_>], alpha: f64) -> f64 {
    params
        .iter()
        .map(|p| p.value.data().iter().map(|v| v * v).sum::<f64>() * alpha / 2.0)
        .sum()
}

pub(crate) fn decayed_step(value: &mut Tensor, grad: &Tensor, lr: f64, alpha: f64) {
    if alpha == 0.0 {
        crate::nn::sgd_step(value, grad, lr);
        return;
    }
    value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .for_each(|(p, &g)| *p -= lr * (g + alpha * *p));
}

impl Module for WeightDecayWrapper {
    fn name(&self) -> String {
        format!("WeightDecay{}", self.inner.name())
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        self.inner.forward(input)
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.inner.backward(input, grad_output)
    }

    fn output(&self) -> Option<&Tensor> {
        self.inner.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.inner.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.inner.output_shape(input_shape)
    }

    fn parameters(&self) -> Vec<Param<'_>> {
        self.inner.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.inner.parameters_mut()
    }

    fn zero_grad_parameters(&mut self) {
        self.inner.zero_grad_parameters()
    }

    /// Plain step; equivalent to `update_parameters_decayed(lr, 0.0)`.
    fn update_parameters(&mut self, lr: f64) {
        self.inner.update_parameters(lr)
    }

    fn set_training(&mut self, training: bool) {
        self.inner.set_training(training)
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{get_parameters, Activation, ActivationKind, Linear};
    use crate::rng::Rng;

    fn single(values: &[f64]) -> WeightDecayWrapper {
        let w = Tensor::from_vec(vec![1, values.len()], values.to_vec()).unwrap();
        let lin = Linear::from_parts(w, Tensor::zeros(&[1])).unwrap();
        WeightDecayWrapper::new(Sequential::new().with(lin))
    }

    #[test]
    fn penalty_values() {
        let mut m = single(&[1.0, 2.0]);
        assert_eq!(m.penalty(0.1).unwrap(), 0.25);
        assert_eq!(m.weight_decay(), 0.25);
        assert_eq!(m.penalty(0.0).unwrap(), 0.0);
        assert_eq!(single(&[0.0, 0.0]).penalty(3.0).unwrap(), 0.0);
        assert!(m.penalty(-1.0).is_err());
        assert!(m.update_parameters_decayed(0.1, -0.5).is_err());
    }

    #[test]
    fn pure_decay_step() {
        let mut m = single(&[1.0]);
        m.update_parameters_decayed(0.1, 0.5).unwrap();
        assert_eq!(m.parameters()[0].value.data(), &[0.95]);
    }

    #[test]
    fn pure_decay_contracts_monotonically() {
        let mut m = single(&[3.0, -4.0]);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            m.update_parameters_decayed(0.2, 0.5).unwrap();
            let norm = m.penalty(1.0).unwrap();
            assert!(norm < last);
            last = norm;
        }
    }

    #[test]
    fn zero_alpha_matches_plain_container() {
        let mut rng = Rng::new(3);
        let net = Sequential::new()
            .with(Linear::uniform(2, 3, -1.0, 1.0, &mut rng).unwrap())
            .with(Activation::new(ActivationKind::Tanh))
            .with(Linear::uniform(3, 1, -1.0, 1.0, &mut rng).unwrap());
        let mut plain = net.clone();
        let mut wrapped = WeightDecayWrapper::new(net);
        let x = Tensor::rand_uniform(&[4, 2], -0.5, 0.5, &mut rng).unwrap();
        let g = Tensor::rand_uniform(&[4, 1], -0.5, 0.5, &mut rng).unwrap();
        for _ in 0..3 {
            assert_eq!(plain.forward(&x).unwrap(), wrapped.forward(&x).unwrap());
            plain.zero_grad_parameters();
            wrapped.zero_grad_parameters();
            plain.backward(&x, &g).unwrap();
            wrapped.backward(&x, &g).unwrap();
            plain.update_parameters(0.05);
            wrapped.update_parameters_decayed(0.05, 0.0).unwrap();
        }
        assert_eq!(get_parameters(&mut plain).params(), get_parameters(&mut wrapped).params());
    }
}
