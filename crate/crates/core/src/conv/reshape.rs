use crate::error::{Error, Result};
use crate::nn::{Module, ModuleState};
use crate::tensor::Tensor;

/// Reinterprets each sample with new trailing dimensions; the batch extent and the
/// buffer order are kept.
#[derive(Clone, Debug)]
pub struct Reshape {
    dims: Vec<usize>,
    state: ModuleState,
}

impl Reshape {
    pub fn new(dims: &[usize]) -> Self {
        Reshape {
            dims: dims.to_vec(),
            state: ModuleState::default(),
        }
    }

    /// `[batch x ...] -> [batch x len]`.
    pub fn flatten(len: usize) -> Self {
        Reshape::new(&[len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn target(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let per_sample: usize = input_shape.iter().skip(1).product();
        let want: usize = self.dims.iter().product();
        if input_shape.len() < 2 || per_sample != want {
            return Err(Error::invalid(format!(
                "cannot reshape {input_shape:?} to [batch x {:?}]",
                self.dims
            )));
        }
        let mut shape = vec![input_shape[0]];
        shape.extend(&self.dims);
        Ok(shape)
    }
}

impl Module for Reshape {
    fn name(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        format!("Reshape({})", dims.join("x"))
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        let y = input.reshape(&self.target(input.shape())?)?;
        Ok(self.state.set_output(input, y))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        let gi = grad_output.reshape(input.shape())?;
        Ok(self.state.set_grad_input(gi))
    }

    fn output(&self) -> Option<&Tensor> {
        self.state.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.state.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.target(input_shape)
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}
