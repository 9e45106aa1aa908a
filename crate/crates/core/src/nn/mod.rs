//! Layer modules and containers.
//!
//! Every layer follows the same contract: `forward` computes and stores the output,
//! `backward` receives the forward input and the gradient with respect to the output,
//! stores and returns the gradient with respect to the input, and *adds* parameter
//! gradients into per-layer accumulators. `zero_grad_parameters` clears the
//! accumulators and `update_parameters` takes one plain gradient-descent step.

mod activation;
mod checkpoint;
mod linear;
mod sequential;
mod weight_decay;

pub use activation::{Activation, ActivationKind};
pub(crate) use activation::softmax_rows;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointTensor};
pub use linear::Linear;
pub use sequential::Sequential;
pub use weight_decay::WeightDecayWrapper;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Read-only view of one parameter tensor and its gradient accumulator.
pub struct Param<'a> {
    pub name: String,
    pub value: &'a Tensor,
    pub grad: &'a Tensor,
}

/// Mutable view of one parameter tensor and its gradient accumulator.
pub struct ParamMut<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
    pub grad: &'a mut Tensor,
}

pub trait Module: Send {
    /// Short human-readable description, e.g. `Linear(784 -> 300)`.
    fn name(&self) -> String;

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor>;

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor>;

    /// Output of the last forward call.
    fn output(&self) -> Option<&Tensor>;

    /// Result of the last backward call.
    fn grad_input(&self) -> Option<&Tensor>;

    /// Output shape for a given input shape, without running the layer.
    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>>;

    fn parameters(&self) -> Vec<Param<'_>> {
        Vec::new()
    }

    fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        Vec::new()
    }

    fn zero_grad_parameters(&mut self) {
        for p in self.parameters_mut() {
            p.grad.fill(0.0);
        }
    }

    /// `p <- p - lr * grad(p)` for every parameter.
    fn update_parameters(&mut self, lr: f64) {
        for p in self.parameters_mut() {
            sgd_step(p.value, p.grad, lr);
        }
    }

    /// Switches train/eval behaviour (only dropout cares).
    fn set_training(&mut self, _training: bool) {}

    fn box_clone(&self) -> Box<dyn Module>;
}

impl Clone for Box<dyn Module> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub(crate) fn sgd_step(value: &mut Tensor, grad: &Tensor, lr: f64) {
    value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .for_each(|(p, &g)| *p -= lr * g);
}

/// Per-layer bookkeeping shared by every module: the last output, the last input
/// gradient, and the shape of the last forward input.
#[derive(Clone, Debug, Default)]
pub struct ModuleState {
    output: Option<Tensor>,
    grad_input: Option<Tensor>,
    input_shape: Option<Vec<usize>>,
}

impl ModuleState {
    pub fn output(&self) -> Option<&Tensor> {
        self.output.as_ref()
    }

    pub fn grad_input(&self) -> Option<&Tensor> {
        self.grad_input.as_ref()
    }

    pub(crate) fn set_output(&mut self, input: &Tensor, output: Tensor) -> &Tensor {
        self.input_shape = Some(input.shape().to_vec());
        self.output.insert(output)
    }

    pub(crate) fn check_backward(&self, layer: &str, input: &Tensor) -> Result<()> {
        match &self.input_shape {
            None => Err(Error::BackwardBeforeForward(layer.to_string())),
            Some(shape) if shape.as_slice() != input.shape() => Err(Error::StaleForward {
                layer: layer.to_string(),
                expected: shape.clone(),
                got: input.shape().to_vec(),
            }),
            Some(_) => Ok(()),
        }
    }

    pub(crate) fn set_grad_input(&mut self, grad: Tensor) -> &Tensor {
        self.grad_input.insert(grad)
    }

    pub(crate) fn stored_output(&self) -> &Tensor {
        self.output.as_ref().expect("checked by check_backward")
    }
}

/// Flat view over every parameter and gradient of a module, in layer order.
///
/// Index `i` addresses the `i`-th scalar of the concatenation of all parameter
/// tensors; writes go straight to the layer storage.
pub struct FlatParams<'a> {
    slots: Vec<ParamMut<'a>>,
    starts: Vec<usize>,
    len: usize,
}

impl<'a> FlatParams<'a> {
    pub fn new(slots: Vec<ParamMut<'a>>) -> Self {
        let mut starts = Vec::with_capacity(slots.len());
        let mut len = 0;
        for s in &slots {
            starts.push(len);
            len += s.value.len();
        }
        FlatParams { slots, starts, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn locate(&self, i: usize) -> (usize, usize) {
        assert!(i < self.len, "flat index {i} out of range {}", self.len);
        let slot = self.starts.partition_point(|&s| s <= i) - 1;
        (slot, i - self.starts[slot])
    }

    pub fn param(&self, i: usize) -> f64 {
        let (s, o) = self.locate(i);
        self.slots[s].value.data()[o]
    }

    pub fn grad(&self, i: usize) -> f64 {
        let (s, o) = self.locate(i);
        self.slots[s].grad.data()[o]
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (s, o) = self.locate(i);
        self.slots[s].value.data_mut()[o] = v;
    }

    pub fn params(&self) -> Vec<f64> {
        self.slots.iter().flat_map(|s| s.value.data().iter().copied()).collect()
    }

    pub fn grads(&self) -> Vec<f64> {
        self.slots.iter().flat_map(|s| s.grad.data().iter().copied()).collect()
    }

    /// Visits every `(param, grad)` scalar pair in flat order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64, f64)) {
        for s in &mut self.slots {
            for (p, &g) in s.value.data_mut().iter_mut().zip(s.grad.data()) {
                f(p, g);
            }
        }
    }

    pub fn grad_inf_norm(&self) -> f64 {
        self.slots.iter().fold(0.0, |m, s| m.max(s.grad.max_abs()))
    }
}

/// Both flat vectors of a module (parameters and gradients) as one aliasing view.
pub fn get_parameters(m: &mut dyn Module) -> FlatParams<'_> {
    FlatParams::new(m.parameters_mut())
}

pub fn parameter_count(m: &dyn Module) -> usize {
    m.parameters().iter().map(|p| p.value.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn mlp(sizes: &[usize], rng: &mut Rng) -> Sequential {
        let mut net = Sequential::new();
        for (i, w) in sizes.windows(2).enumerate() {
            net.add(Linear::uniform(w[0], w[1], -1.0, 1.0, rng).unwrap());
            if i + 2 < sizes.len() {
                net.add(Activation::new(ActivationKind::Tanh));
            }
        }
        net
    }

    #[test]
    fn parameter_counts() {
        let mut rng = Rng::new(0);
        let mut small = mlp(&[2, 3, 1], &mut rng);
        assert_eq!(get_parameters(&mut small).len(), 13);
        let mut mnist = mlp(&[784, 300, 10], &mut rng);
        assert_eq!(get_parameters(&mut mnist).len(), 238_510);
        let mut empty = Sequential::new();
        empty.add(Activation::new(ActivationKind::Relu));
        let view = get_parameters(&mut empty);
        assert!(view.is_empty());
        assert!(view.params().is_empty() && view.grads().is_empty());
    }

    #[test]
    fn flat_view_aliases_layers() {
        let mut rng = Rng::new(1);
        let mut net = mlp(&[2, 3, 1], &mut rng);
        {
            let mut view = get_parameters(&mut net);
            view.set_param(0, 42.0);
            view.set_param(12, -7.0);
        }
        let params = net.parameters();
        assert_eq!(params[0].value.data()[0], 42.0);
        assert_eq!(params[3].value.data()[0], -7.0);
    }

    #[test]
    fn view_update_matches_update_parameters() {
        let mut rng = Rng::new(2);
        let mut a = mlp(&[2, 3, 1], &mut rng);
        let x = Tensor::rand_uniform(&[5, 2], -1.0, 1.0, &mut rng).unwrap();
        let g = Tensor::rand_uniform(&[5, 1], -1.0, 1.0, &mut rng).unwrap();
        a.forward(&x).unwrap();
        a.backward(&x, &g).unwrap();
        let mut b = a.clone();
        a.update_parameters(0.05);
        get_parameters(&mut b).for_each_mut(|p, g| *p -= 0.05 * g);
        let pa: Vec<u64> = get_parameters(&mut a).params().iter().map(|v| v.to_bits()).collect();
        let pb: Vec<u64> = get_parameters(&mut b).params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(pa, pb);
    }
}
