use serde::{Deserialize, Serialize};

use crate::conv::{check_nchw, Axis, Padding, Window};
use crate::error::{Error, Result};
use crate::nn::{Module, ModuleState};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolKind {
    Max,
    Average,
}

/// Spatial max or average pooling. Padding cells never win a max and are not counted
/// in an average.
#[derive(Clone, Debug)]
pub struct Pool2D {
    kind: PoolKind,
    window: Window,
    /// Flat input index of each output's maximum (max pooling only).
    argmax: Vec<usize>,
    state: ModuleState,
}

impl Pool2D {
    pub fn new(kind: PoolKind, window: Window) -> Self {
        Pool2D {
            kind,
            window,
            argmax: Vec::new(),
            state: ModuleState::default(),
        }
    }

    /// Square `k x k` max pooling with stride `k` and no padding.
    pub fn max(k: usize) -> Self {
        Pool2D::new(PoolKind::Max, Window::new((k, k), (k, k), Padding::Explicit(0, 0)))
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    fn geometry(&self, shape: &[usize]) -> Result<([usize; 4], Axis, Axis)> {
        let dims = check_nchw("pool2d", shape, None)?;
        let (ay, ax) = self.window.axes(dims[2], dims[3])?;
        Ok((dims, ay, ax))
    }
}

impl Module for Pool2D {
    fn name(&self) -> String {
        let (kh, kw) = self.window.kernel;
        format!("{:?}Pool2D({kh}x{kw})", self.kind)
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        let ([b, c, h, w], ay, ax) = self.geometry(input.shape())?;
        let (oh, ow) = (ay.output, ax.output);
        let x = input.data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        self.argmax.clear();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let (ylo, yhi) = ay.valid(oy);
                let y0 = ay.start(oy);
                for ox in 0..ow {
                    let (xlo, xhi) = ax.valid(ox);
                    let x0 = ax.start(ox);
                    let cells = (ylo..yhi).flat_map(|ky| {
                        let row = base + (y0 + ky as isize) as usize * w;
                        (xlo..xhi).map(move |kx| row + (x0 + kx as isize) as usize)
                    });
                    match self.kind {
                        PoolKind::Max => {
                            let mut best = usize::MAX;
                            let mut val = f64::NEG_INFINITY;
                            for i in cells {
                                if best == usize::MAX || x[i] > val {
                                    best = i;
                                    val = x[i];
                                }
                            }
                            self.argmax.push(best);
                            out.push(val);
                        }
                        PoolKind::Average => {
                            let n = ((yhi - ylo) * (xhi - xlo)) as f64;
                            out.push(cells.map(|i| x[i]).sum::<f64>() / n);
                        }
                    }
                }
            }
        }
        Ok(self.state.set_output(input, Tensor::raw(vec![b, c, oh, ow], out)))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        let ([b, c, h, w], ay, ax) = self.geometry(input.shape())?;
        let (oh, ow) = (ay.output, ax.output);
        if grad_output.shape() != [b, c, oh, ow] {
            return Err(Error::ShapeMismatch {
                op: "pool2d grad_output",
                lhs: vec![b, c, oh, ow],
                rhs: grad_output.shape().to_vec(),
            });
        }
        let g = grad_output.data();
        let mut gx = vec![0.0; input.len()];
        match self.kind {
            PoolKind::Max => {
                for (&i, &gv) in self.argmax.iter().zip(g) {
                    gx[i] += gv;
                }
            }
            PoolKind::Average => {
                let mut o = 0;
                for plane in 0..b * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        let (ylo, yhi) = ay.valid(oy);
                        let y0 = ay.start(oy);
                        for ox in 0..ow {
                            let (xlo, xhi) = ax.valid(ox);
                            let x0 = ax.start(ox);
                            let share = g[o] / ((yhi - ylo) * (xhi - xlo)) as f64;
                            for ky in ylo..yhi {
                                let row = base + (y0 + ky as isize) as usize * w;
                                for kx in xlo..xhi {
                                    gx[row + (x0 + kx as isize) as usize] += share;
                                }
                            }
                            o += 1;
                        }
                    }
                }
            }
        }
        Ok(self.state.set_grad_input(Tensor::raw(input.shape().to_vec(), gx)))
    }

    fn output(&self) -> Option<&Tensor> {
        self.state.output()
    }

    fn grad_input(&self) -> Option<&Tensor> {
        self.state.grad_input()
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let ([b, c, _, _], ay, ax) = self.geometry(input_shape)?;
        Ok(vec![b, c, ay.output, ax.output])
    }

    fn box_clone(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}
