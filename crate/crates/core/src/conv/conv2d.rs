use crate::conv::{check_nchw, Axis, Padding, Window};
use crate::error::{Error, Result};
use crate::gemm;
use crate::nn::{Module, ModuleState, Param, ParamMut};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Samples lowered to a patch matrix at once.
const CHUNK: usize = 64;

/// 2-D cross-correlation with per-channel bias and zero padding.
///
/// Weights are `[out_ch x in_ch x kh x kw]`. The forward pass lowers each chunk of
/// samples to a patch matrix with one row per output pixel and one column per
/// `(in_ch, ky, kx)` tap, then multiplies by the transposed filter bank.
#[derive(Clone, Debug)]
pub struct Conv2D {
    window: Window,
    weight: Tensor,
    bias: Tensor,
    grad_weight: Tensor,
    grad_bias: Tensor,
    state: ModuleState,
}

struct Geometry {
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    ay: Axis,
    ax: Axis,
}

impl Geometry {
    fn pixels(&self) -> usize {
        self.ay.output * self.ax.output
    }

    fn taps(&self) -> usize {
        self.channels * self.ay.kernel * self.ax.kernel
    }
}

impl Conv2D {
    pub fn from_parts(weight: Tensor, bias: Tensor, stride: (usize, usize), padding: Padding) -> Result<Self> {
        let [oc, _, kh, kw] = match weight.shape() {
            &[o, i, kh, kw] => [o, i, kh, kw],
            s => return Err(Error::invalid(format!("conv weight must be [out x in x kh x kw], got {s:?}"))),
        };
        if bias.shape() != [oc] {
            return Err(Error::ShapeMismatch {
                op: "conv bias",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Conv2D {
            window: Window::new((kh, kw), stride, padding),
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            state: ModuleState::default(),
        })
    }

    /// Truncated-normal weights (std 0.1, cut at two deviations) and biases of 0.1.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        rng: &mut Rng,
    ) -> Result<Self> {
        Conv2D::with_init(in_channels, out_channels, kernel, stride, padding, 0.1, 0.1, rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_init(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        std: f64,
        bias: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w = Tensor::truncated_normal(&[out_channels, in_channels, kernel.0, kernel.1], std, rng)?;
        Conv2D::from_parts(w, Tensor::full(&[out_channels], bias), stride, padding)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn window(&self) -> &Window {
        &self.window
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

    pub fn grad_weight(&self) -> &Tensor {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &Tensor {
        &self.grad_bias
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let [batch, channels, h, w] = check_nchw("conv2d", shape, Some(self.in_channels()))?;
        let (ay, ax) = self.window.axes(h, w)?;
        Ok(Geometry {
            batch,
            channels,
            h,
            w,
            ay,
            ax,
        })
    }

    /// Weights as `[taps x out_ch]`.
    fn weight_t(&self) -> Vec<f64> {
        let taps = self.weight.len() / self.out_channels();
        gemm::transpose(self.out_channels(), taps, self.weight.data())
    }
}

/// Patch matrix rows for samples `[b0, b0 + n)`: row `(b, oy, ox)`, column `(c, ky, kx)`.
fn im2col(g: &Geometry, x: &[f64], b0: usize, n: usize, cols: &mut Vec<f64>) {
    let (p, k) = (g.pixels(), g.taps());
    let (kh, kw) = (g.ay.kernel, g.ax.kernel);
    cols.clear();
    cols.resize(n * p * k, 0.0);
    let sample = g.channels * g.h * g.w;
    for b in 0..n {
        let xs = &x[(b0 + b) * sample..(b0 + b + 1) * sample];
        for oy in 0..g.ay.output {
            let (ylo, yhi) = g.ay.valid(oy);
            let y0 = g.ay.start(oy);
            for ox in 0..g.ax.output {
                let (xlo, xhi) = g.ax.valid(ox);
                let x0 = g.ax.start(ox);
                let row = &mut cols[((b * g.ay.output + oy) * g.ax.output + ox) * k..][..k];
                for c in 0..g.channels {
                    for ky in ylo..yhi {
                        let iy = (y0 + ky as isize) as usize;
                        let src = &xs[(c * g.h + iy) * g.w..][..g.w];
                        let dst = &mut row[(c * kh + ky) * kw..][..kw];
                        for kx in xlo..xhi {
                            dst[kx] = src[(x0 + kx as isize) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back into `gx`.
fn col2im(g: &Geometry, cols: &[f64], b0: usize, n: usize, gx: &mut [f64]) {
    let k = g.taps();
    let (kh, kw) = (g.ay.kernel, g.ax.kernel);
    let sample = g.channels * g.h * g.w;
    for b in 0..n {
        let gs = &mut gx[(b0 + b) * sample..(b0 + b + 1) * sample];
        for oy in 0..g.ay.output {
            let (ylo, yhi) = g.ay.valid(oy);
            let y0 = g.ay.start(oy);
            for ox in 0..g.ax.output {
                let (xlo, xhi) = g.ax.valid(ox);
                let x0 = g.ax.start(ox);
                let row = &cols[((b * g.ay.output + oy) * g.ax.output + ox) * k..][..k];
                for c in 0..g.channels {
                    for ky in ylo..yhi {
                        let iy = (y0 + ky as isize) as usize;
                        let dst = &mut gs[(c * g.h + iy) * g.w..][..g.w];
                        let src = &row[(c * kh + ky) * kw..][..kw];
                        for kx in xlo..xhi {
                            dst[(x0 + kx as isize) as usize] += src[kx];
                        }
                    }
                }
            }
        }
    }
}

impl Module for Conv2D {
    fn name(&self) -> String {
        let (kh, kw) = self.window.kernel;
        format!("Conv2D({} -> {}, {kh}x{kw})", self.in_channels(), self.out_channels())
    }

    fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        let g = self.geometry(input.shape())?;
        let (oc, p, k) = (self.out_channels(), g.pixels(), g.taps());
        let wt = self.weight_t();
        let mut out = vec![0.0; g.batch * oc * p];
        let mut cols = Vec::new();
        let mut prod = Vec::new();
        for b0 in (0..g.batch).step_by(CHUNK) {
            let n = CHUNK.min(g.batch - b0);
            im2col(&g, input.data(), b0, n, &mut cols);
            prod.clear();
            prod.resize(n * p * oc, 0.0);
            gemm::gemm(n * p, k, oc, &cols, &wt, &mut prod);
            for b in 0..n {
                let dst = &mut out[(b0 + b) * oc * p..][..oc * p];
                let src = &prod[b * p * oc..][..p * oc];
                for (c, &bias) in self.bias.data().iter().enumerate() {
                    for q in 0..p {
                        dst[c * p + q] = src[q * oc + c] + bias;
                    }
                }
            }
        }
        let y = Tensor::raw(vec![g.batch, oc, g.ay.output, g.ax.output], out);
        Ok(self.state.set_output(input, y))
    }

    fn backward(&mut self, input: &Tensor, grad_output: &Tensor) -> Result<&Tensor> {
        self.state.check_backward(&self.name(), input)?;
        let g = self.geometry(input.shape())?;
        let (oc, p, k) = (self.out_channels(), g.pixels(), g.taps());
        let expect = [g.batch, oc, g.ay.output, g.ax.output];
        if grad_output.shape() != expect {
            return Err(Error::ShapeMismatch {
                op: "conv2d grad_output",
                lhs: expect.to_vec(),
                rhs: grad_output.shape().to_vec(),
            });
        }
        let go = grad_output.data();
        for (c, gb) in self.grad_bias.data_mut().iter_mut().enumerate() {
            for b in 0..g.batch {
                *gb += go[(b * oc + c) * p..][..p].iter().sum::<f64>();
            }
        }
        let mut gx = vec![0.0; input.len()];
        let mut gw_t = vec![0.0; k * oc];
        let mut cols = Vec::new();
        let mut g_rows = Vec::new();
        let mut grad_cols = Vec::new();
        for b0 in (0..g.batch).step_by(CHUNK) {
            let n = CHUNK.min(g.batch - b0);
            // grad_output for the chunk as [(b, pixel) x out_ch]
            g_rows.clear();
            g_rows.resize(n * p * oc, 0.0);
            for b in 0..n {
                let src = &go[(b0 + b) * oc * p..][..oc * p];
                let t = gemm::transpose(oc, p, src);
                g_rows[b * p * oc..][..p * oc].copy_from_slice(&t);
            }
            im2col(&g, input.data(), b0, n, &mut cols);
            // gradW^T [taps x out_ch] += cols^T * G
            let cols_t = gemm::transpose(n * p, k, &cols);
            gemm::gemm(k, n * p, oc, &cols_t, &g_rows, &mut gw_t);
            for (a, &d) in self.grad_weight.data_mut().iter_mut().zip(&gemm::transpose(k, oc, &gw_t)) {
                *a += d;
            }
            // patch gradients [(b, pixel) x taps] = G * W
            grad_cols.clear();
            grad_cols.resize(n * p * k, 0.0);
            gemm::gemm(n * p, oc, k, &g_rows, self.weight.data(), &mut grad_cols);
            col2im(&g, &grad_cols, b0, n, &mut gx);
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
        let g = self.geometry(input_shape)?;
        Ok(vec![g.batch, self.out_channels(), g.ay.output, g.ax.output])
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

    fn conv(weight: Tensor, pad: usize) -> Conv2D {
        let oc = weight.shape()[0];
        Conv2D::from_parts(weight, Tensor::zeros(&[oc]), (1, 1), Padding::Explicit(pad, pad)).unwrap()
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = Rng::new(1);
        let x = Tensor::rand_uniform(&[2, 1, 4, 5], -1.0, 1.0, &mut rng).unwrap();
        let mut c = conv(Tensor::ones(&[1, 1, 1, 1]), 0);
        assert_eq!(c.forward(&x).unwrap(), &x);
    }

    #[test]
    fn all_ones_counts_covered_cells() {
        let mut c = conv(Tensor::ones(&[1, 1, 3, 3]), 1);
        let y = c.forward(&Tensor::ones(&[1, 1, 3, 3])).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn impulse_response_is_unflipped_kernel() {
        let mut rng = Rng::new(2);
        let w = Tensor::rand_uniform(&[2, 1, 3, 3], -1.0, 1.0, &mut rng).unwrap();
        let mut c = conv(w.clone(), 1);
        let mut x = Tensor::zeros(&[1, 1, 5, 5]);
        x.set(&[0, 0, 2, 2], 1.0);
        let y = c.forward(&x).unwrap();
        // out[oy, ox] = sum w[ky, kx] x[oy + ky - 1, ox + kx - 1]; the delta at (2,2)
        // is picked up by tap (ky, kx) at output (3 - ky, 3 - kx)
        for oc in 0..2 {
            for ky in 0..3 {
                for kx in 0..3 {
                    assert_eq!(y.at(&[0, oc, 3 - ky, 3 - kx]), w.at(&[oc, 0, ky, kx]));
                }
            }
        }
    }

    #[test]
    fn bias_gradient_sums_grad_output() {
        let mut rng = Rng::new(3);
        let mut c = Conv2D::new(2, 3, (3, 3), (2, 2), Padding::Same, &mut rng).unwrap();
        let x = Tensor::rand_uniform(&[2, 2, 5, 5], -1.0, 1.0, &mut rng).unwrap();
        let shape = c.forward(&x).unwrap().shape().to_vec();
        let g = Tensor::rand_uniform(&shape, -1.0, 1.0, &mut rng).unwrap();
        c.backward(&x, &g).unwrap();
        for oc in 0..3 {
            let mut s = 0.0;
            for b in 0..2 {
                for i in 0..shape[2] {
                    for j in 0..shape[3] {
                        s += g.at(&[b, oc, i, j]);
                    }
                }
            }
            assert!((c.grad_bias().data()[oc] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_grad_output_leaves_accumulators() {
        let mut rng = Rng::new(4);
        let mut c = Conv2D::new(1, 2, (3, 3), (1, 1), Padding::Explicit(1, 1), &mut rng).unwrap();
        let x = Tensor::rand_uniform(&[1, 1, 4, 4], -1.0, 1.0, &mut rng).unwrap();
        c.forward(&x).unwrap();
        let gi = c.backward(&x, &Tensor::zeros(&[1, 2, 4, 4])).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(c.grad_weight().data().iter().all(|&v| v == 0.0));
        assert!(c.grad_bias().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_and_backward_order() {
        let mut rng = Rng::new(5);
        let mut c = Conv2D::new(3, 2, (3, 3), (1, 1), Padding::Same, &mut rng).unwrap();
        assert!(c.forward(&Tensor::zeros(&[1, 1, 4, 4])).is_err());
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        assert!(matches!(
            c.backward(&x, &Tensor::zeros(&[1, 2, 4, 4])),
            Err(Error::BackwardBeforeForward(_))
        ));
    }

    #[test]
    fn default_init() {
        let mut rng = Rng::new(6);
        let c = Conv2D::new(12, 16, (5, 5), (1, 1), Padding::Same, &mut rng).unwrap();
        assert!(c.bias().data().iter().all(|&b| b == 0.1));
        assert!(c.weight().data().iter().all(|w| w.abs() <= 0.2));
    }
}
