//! Hand-weighted parity networks: a deep chain of XOR blocks and a shallow
//! one-hidden-layer disjunction of minterms, plus exhaustive verification.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationKind, Linear, Module, ModuleState, Param, ParamMut, Sequential};
use crate::tensor::Tensor;

/// Largest arity the shallow construction accepts (`2^19` hidden units).
pub const MAX_SHALLOW_ARITY: usize = 20;
/// Largest arity `verify_truth_table` will enumerate.
pub const MAX_VERIFY_ARITY: usize = 24;

const VERIFY_CHUNK: usize = 256;

fn check_arity(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("parity arity must be >= 2, got {n}")));
    }
    Ok(())
}

fn linear(weight: Vec<Vec<f64>>, bias: Vec<f64>) -> Linear {
    let w = Tensor::from_rows(&weight).expect("non-empty weight rows");
    let b = Tensor::from_vec(vec![bias.len()], bias).expect("bias length");
    Linear::from_parts(w, b).expect("consistent parity layer")
}

/// One XOR block over `(state, bit)`: two one-sided AND units followed by their OR.
fn xor_block(act: ActivationKind) -> Sequential {
    Sequential::new()
        .with(linear(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![-0.5, -0.5]))
        .with(Activation::new(act))
        .with(linear(vec![vec![1.0, 1.0]], vec![-0.5]))
        .with(Activation::new(act))
}

/// `(neurons, layers)`: one neuron per bias entry, one layer per bias tensor.
fn census(m: &dyn Module) -> (usize, usize) {
    m.parameters()
        .iter()
        .filter(|p| p.name.ends_with("bias"))
        .fold((0, 0), |(n, l), p| (n + p.value.len(), l + 1))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerSpec {
    pub inputs: Vec<String>,
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetSpec {
    pub kind: &'static str,
    pub n: usize,
    pub neurons: usize,
    pub layers: usize,
    pub layer_specs: Vec<LayerSpec>,
}

impl NetSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

fn layer_spec(weight: &Tensor, bias: &Tensor, inputs: Vec<String>, activation: ActivationKind) -> LayerSpec {
    let cols = weight.shape()[1];
    LayerSpec {
        inputs,
        weight: weight.data().chunks_exact(cols).map(|r| r.to_vec()).collect(),
        bias: bias.data().to_vec(),
        activation,
    }
}

/// Chain of `n - 1` XOR blocks. Block `k` sees the running parity of bits `0..=k`
/// and bit `k + 1`; column 0 of the input seeds the state.
#[derive(Clone)]
pub struct DeepParityNet {
    n: usize,
    activation: ActivationKind,
    blocks: Vec<Sequential>,
    block_inputs: Vec<Tensor>,
    state: ModuleState,
}

impl DeepParityNet {
    pub fn new(n: usize) -> Result<Self> {
        DeepParityNet::with_activation(n, ActivationKind::Hardlim)
    }

    /// Same weights with `sigmoid(slope * x)` in place of the step, so gradients flow.
    pub fn trainable(n: usize, slope: f64) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(Error::invalid(format!("slope must be positive, got {slope}")));
        }
        DeepParityNet::with_activation(n, ActivationKind::SteepSigmoid(slope))
    }

    pub fn with_activation(n: usize, activation: ActivationKind) -> Result<Self> {
        check_arity(n)?;
        Ok(DeepParityNet {
            n,
            activation,
            blocks: (1..n).map(|_| xor_block(activation)).collect(),
            block_inputs: Vec::new(),
            state: ModuleState::default(),
        })
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Sequential] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Sequential] {
        &mut self.blocks
    }

    pub fn neuron_count(&self) -> usize {
        census(self).0
    }

    pub fn layer_count(&self) -> usize {
        census(self).1
    }

    /// Output of every block from the last forward pass; entry `k` covers bits `0..=k+1`.
    pub fn block_outputs(&self) -> Vec<&Tensor> {
        self.blocks.iter().filter_map(|b| b.output()).collect()
    }

    pub fn spec(&self) -> NetSpec {
        let mut layer_specs = Vec::new();
        for k in 0..self.blocks.len() {
            let state = if k == 0 { "x1".to_string() } else { format!("block{k}") };
            let p = self.blocks[k].parameters();
            layer_specs.push(layer_spec(
                p[0].value,
                p[1].value,
                vec![state, format!("x{}", k + 2)],
                self.activation,
            ));
            layer_specs.push(layer_spec(
                p[2].value,
                p[3].value,
                vec!["and0".into(), "and1".into()],
                self.activation,
            ));
        }
        let (neurons, layers) = census(self);
        NetSpec {
            kind: "deep",
            n: self.n,
            neurons,
            layers,
            layer_specs,
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        match shape {
            [_, w] if *w == self.n => Ok(()),
            _ => Err(Error::ShapeMismatch {
                op: "deep parity input",
                lhs: vec![0, self.n],
                rhs: shape.to_vec(),
            }),
        }
    }
}

impl Module for DeepParityNet {
    fn name(&self) -> String {
        format!("DeepParity({})", self.n)
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        self.check_input(input.shape())?;
        self.block_inputs.clear();
        let mut state = input.narrow(1, 0, 1)?;
        for k in 0..self.blocks.len() {
            let x = Tensor::concat(&[state, input.narrow(1, k + 1, 1)?], 1)?;
            state = self.blocks[k].forward(&x)?.clone();
            self.block_inputs.push(x);
        }
        Ok(self.state.set_output(input, state))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        let b = input.rows();
        grad_output.same_shape(&Tensor::zeros(&[b, 1]), "deep parity backward")?;
        let mut grad = Tensor::zeros(input.shape());
        let mut g = grad_output.clone();
        for k in (0..self.blocks.len()).rev() {
            let gk = self.blocks[k].backward(&self.block_inputs[k], &g)?;
            for r in 0..b {
                grad.data_mut()[r * self.n + k + 1] += gk.data()[2 * r + 1];
            }
            g = gk.narrow(1, 0, 1)?;
        }
        for r in 0..b {
            grad.data_mut()[r * self.n] += g.data()[r];
        }
        Ok(self.state.set_grad_input(grad))
    }

    fn output(&self) -> Option<&Tensor> {
        self.state.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.state.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.check_input(input_shape)?;
        Ok(vec![input_shape[0], 1])
    }

    fn parameters(&self) -> Vec<Param<'_>> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(k, blk)| {
                blk.parameters().into_iter().map(move |p| Param {
                    name: format!("block{k}.{}", p.name),
                    ..p
                })
            })
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.blocks
            .iter_mut()
            .enumerate()
            .flat_map(|(k, blk)| {
                blk.parameters_mut().into_iter().map(move |p| ParamMut {
                    name: format!("block{k}.{}", p.name),
                    ..p
                })
            })
            .collect()
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

/// One hidden unit per odd-parity pattern (fires only on that pattern), ORed at
/// the output.
#[derive(Clone)]
pub struct ShallowParityNet {
    n: usize,
    activation: ActivationKind,
    net: Sequential,
}

impl ShallowParityNet {
    pub fn new(n: usize) -> Result<Self> {
        ShallowParityNet::with_activation(n, ActivationKind::Hardlim)
    }

    pub fn trainable(n: usize, slope: f64) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(Error::invalid(format!("slope must be positive, got {slope}")));
        }
        ShallowParityNet::with_activation(n, ActivationKind::SteepSigmoid(slope))
    }

    pub fn with_activation(n: usize, activation: ActivationKind) -> Result<Self> {
        check_arity(n)?;
        if n > MAX_SHALLOW_ARITY {
            return Err(Error::invalid(format!(
                "shallow parity net limited to n <= {MAX_SHALLOW_ARITY}, got {n}"
            )));
        }
        let hidden = 1usize << (n - 1);
        let mut w = Vec::with_capacity(hidden * n);
        let mut b = Vec::with_capacity(hidden);
        for code in (0u64..1 << n).filter(|c| c.count_ones() % 2 == 1) {
            w.extend((0..n).map(|j| if (code >> (n - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 }));
            b.push(0.5 - code.count_ones() as f64);
        }
        let hidden_layer = Linear::from_parts(
            Tensor::from_vec(vec![hidden, n], w)?,
            Tensor::from_vec(vec![hidden], b)?,
        )?;
        let out = Linear::from_parts(Tensor::ones(&[1, hidden]), Tensor::full(&[1], -0.5))?;
        Ok(ShallowParityNet {
            n,
            activation,
            net: Sequential::new()
                .with(hidden_layer)
                .with(Activation::new(activation))
                .with(out)
                .with(Activation::new(activation)),
        })
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn hidden_units(&self) -> usize {
        1 << (self.n - 1)
    }

    pub fn inner(&self) -> &Sequential {
        &self.net
    }

    pub fn neuron_count(&self) -> usize {
        census(self).0
    }

    pub fn layer_count(&self) -> usize {
        census(self).1
    }

    /// Hidden-layer activations from the last forward pass, `[B x 2^(n-1)]`.
    pub fn hidden_output(&self) -> Option<&Tensor> {
        self.net.children()[1].output()
    }

    pub fn spec(&self) -> NetSpec {
        let p = self.net.parameters();
        let xs: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        let hs: Vec<String> = (0..self.hidden_units()).map(|i| format!("h{i}")).collect();
        let (neurons, layers) = census(self);
        NetSpec {
            kind: "shallow",
            n: self.n,
            neurons,
            layers,
            layer_specs: vec![
                layer_spec(p[0].value, p[1].value, xs, self.activation),
                layer_spec(p[2].value, p[3].value, hs, self.activation),
            ],
        }
    }
}

impl Module for ShallowParityNet {
    fn name(&self) -> String {
        format!("ShallowParity({})", self.n)
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        self.net.forward(input)
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.net.backward(input, grad_output)
    }

    fn output(&self) -> Option<&Tensor> {
        self.net.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.net.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.net.output_shape(input_shape)
    }

    fn parameters(&self) -> Vec<Param<'_>> {
        self.net.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.net.parameters_mut()
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTableReport {
    pub n: usize,
    pub accuracy: f64,
    pub errors: usize,
    /// Smallest input (in counting order, first bit most significant) the net gets wrong.
    pub first_failure: Option<Vec<u8>>,
}

impl TruthTableReport {
    pub fn exact(&self) -> bool {
        self.errors == 0
    }
}

/// Reference parity: `-prod((-1)^x_i) > 0`.
pub fn parity_oracle(bits: &[f64]) -> bool {
    -bits.iter().map(|&b| (-1f64).powf(b)).product::<f64>() > 0.0
}

/// Runs `net` on all `2^n` boolean inputs and compares `output > 0.5` with the oracle.
pub fn verify_truth_table(net: &mut dyn Module, n: usize) -> Result<TruthTableReport> {
    check_arity(n)?;
    if n > MAX_VERIFY_ARITY {
        return Err(Error::invalid(format!("truth table limited to n <= {MAX_VERIFY_ARITY}")));
    }
    let total = 1usize << n;
    let mut errors = 0;
    let mut first_failure = None;
    for start in (0..total).step_by(VERIFY_CHUNK) {
        let rows = VERIFY_CHUNK.min(total - start);
        let mut data = Vec::with_capacity(rows * n);
        for code in start..start + rows {
            data.extend((0..n).map(|j| ((code >> (n - 1 - j)) & 1) as f64));
        }
        let x = Tensor::from_vec(vec![rows, n], data)?;
        let y = net.forward(&x)?;
        if y.len() != rows {
            return Err(Error::invalid(format!("expected one output per input, got {:?}", y.shape())));
        }
        for (r, &out) in y.data().iter().enumerate() {
            let bits = x.row(r);
            if (out > 0.5) != parity_oracle(bits) {
                errors += 1;
                if first_failure.is_none() {
                    first_failure = Some(bits.iter().map(|&b| b as u8).collect());
                }
            }
        }
    }
    Ok(TruthTableReport {
        n,
        accuracy: (total - errors) as f64 / total as f64,
        errors,
        first_failure,
    })
}
