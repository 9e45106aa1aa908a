use crate::error::Result;
use crate::nn::{Module, Param, ParamMut};
use crate::tensor::Tensor;

/// Feed-forward container: forward runs children in order, backward in reverse.
#[derive(Clone, Default)]
pub struct Sequential {
    children: Vec<Box<dyn Module>>,
    input_shape: Option<Vec<usize>>,
    grad_input: Option<Tensor>,
}

impl Sequential {
    pub fn new() -> Self {
        Sequential::default()
    }

    pub fn add(&mut self, m: impl Module + 'static) -> &mut Self {
        self.children.push(Box::new(m));
        self
    }

    pub fn add_boxed(&mut self, m: Box<dyn Module>) -> &mut Self {
        self.children.push(m);
        self
    }

    pub fn with(mut self, m: impl Module + 'static) -> Self {
        self.add(m);
        self
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self) -> &[Box<dyn Module>] {
        &self.children
    }

    pub fn children_mut(&mut self) -> &mut [Box<dyn Module>] {
        &mut self.children
    }

    /// Shape after each child, starting from `input_shape`.
    pub fn shape_trace(&self, input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![input_shape.to_vec()];
        for (i, c) in self.children.iter().enumerate() {
            let next = c
                .output_shape(shapes.last().unwrap())
                .map_err(|e| e.in_layer(i, &c.name()))?;
            shapes.push(next);
        }
        Ok(shapes)
    }
}

impl Module for Sequential {
    fn name(&self) -> String {
        let inner: Vec<String> = self.children.iter().map(|c| c.name()).collect();
        format!("Sequential[{}]", inner.join(", "))
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        self.input_shape = Some(input.shape().to_vec());
        for i in 0..self.children.len() {
            let (before, rest) = self.children.split_at_mut(i);
            let x = match before.last() {
                Some(prev) => prev.output().expect("previous child ran forward"),
                None => input,
            };
            let cur = &mut rest[0];
            if let Err(e) = cur.forward(x) {
                return Err(e.in_layer(i, &cur.name()));
            }
        }
        match self.children.last() {
            Some(last) => Ok(last.output().expect("forward just ran")),
            None => Err(crate::error::Error::invalid("empty Sequential container")),
        }
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        let n = self.children.len();
        if n == 0 {
            return Err(crate::error::Error::invalid("empty Sequential container"));
        }
        for i in (0..n).rev() {
            let (before, rest) = self.children.split_at_mut(i);
            let (cur, after) = rest.split_first_mut().unwrap();
            let x = match before.last() {
                Some(prev) => match prev.output() {
                    Some(o) => o,
                    None => {
                        return Err(crate::error::Error::BackwardBeforeForward(cur.name())
                            .in_layer(i, &cur.name()))
                    }
                },
                None => input,
            };
            let g = match after.first() {
                Some(next) => next.grad_input().expect("later child ran backward"),
                None => grad_output,
            };
            if let Err(e) = cur.backward(x, g) {
                return Err(e.in_layer(i, &cur.name()));
            }
        }
        self.grad_input = self.children[0].grad_input().cloned();
        Ok(self.grad_input.as_ref().unwrap())
    }

    fn output(&self) -> Option<&Tensor> {
        self.children.last().and_then(|c| c.output())
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.grad_input.as_ref()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(self.shape_trace(input_shape)?.pop().unwrap())
    }

    fn parameters(&self) -> Vec<Param<'_>> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                c.parameters().into_iter().map(move |p| Param {
                    name: format!("{i}.{}", p.name),
                    ..p
                })
            })
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.children
            .iter_mut()
            .enumerate()
            .flat_map(|(i, c)| {
                c.parameters_mut().into_iter().map(move |p| ParamMut {
                    name: format!("{i}.{}", p.name),
                    ..p
                })
            })
            .collect()
    }

    fn zero_grad_parameters(&mut self) {
        self.children.iter_mut().for_each(|c| c.zero_grad_parameters());
    }

    fn update_parameters(&mut self, lr: f64) {
        self.children.iter_mut().for_each(|c| c.update_parameters(lr));
    }

    fn set_training(&mut self, training: bool) {
        self.children.iter_mut().for_each(|c| c.set_training(training));
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}
