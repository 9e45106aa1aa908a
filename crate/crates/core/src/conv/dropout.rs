use crate::error::{Error, Result};
use crate::nn::{Module, ModuleState};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Inverted dropout: in training mode each unit is zeroed with probability `rate` and
/// survivors are scaled by `1 / (1 - rate)`; in evaluation mode the layer is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    training: bool,
    rng: Rng,
    mask: Vec<f64>,
    state: ModuleState,
}

impl Dropout {
    pub fn new(rate: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout {
            rate,
            training: true,
            rng,
            mask: Vec::new(),
            state: ModuleState::default(),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    fn active(&self) -> bool {
        self.training && self.rate > 0.0
    }
}

impl Module for Dropout {
    fn name(&self) -> String {
        format!("Dropout({})", self.rate)
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        if !self.active() {
            return Ok(self.state.set_output(input, input.clone()));
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let rng = &mut self.rng;
        self.mask.clear();
        self.mask
            .extend((0..input.len()).map(|_| if rng.uniform() < keep { scale } else { 0.0 }));
        let data = input.data().iter().zip(&self.mask).map(|(x, m)| x * m).collect();
        Ok(self.state.set_output(input, Tensor::raw(input.shape().to_vec(), data)))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        input.same_shape(grad_output, "dropout backward")?;
        let gi = if self.active() {
            let data = grad_output.data().iter().zip(&self.mask).map(|(g, m)| g * m).collect();
            Tensor::raw(input.shape().to_vec(), data)
        } else {
            grad_output.clone()
        };
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

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}
