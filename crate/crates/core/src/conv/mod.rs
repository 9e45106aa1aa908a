//! Convolution, pooling, dropout and reshape layers over `[batch x channels x height x width]`
//! tensors.

mod conv2d;
mod dropout;
mod pool;
mod reshape;

pub use conv2d::Conv2D;
pub use dropout::Dropout;
pub use pool::{Pool2D, PoolKind};
pub use reshape::Reshape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Symmetric zero padding of `(rows, cols)` cells on each side.
    Explicit(usize, usize),
    /// Output extent `ceil(in / stride)`; odd totals put the extra cell bottom/right.
    Same,
}

/// Sliding-window geometry shared by convolution and pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
}

/// Window placement along one axis: output extent and padding before the first cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Axis {
    pub input: usize,
    pub output: usize,
    pub before: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Axis {
    /// First input coordinate covered by output cell `o` (may be negative).
    #[inline]
    pub fn start(&self, o: usize) -> isize {
        (o * self.stride) as isize - self.before as isize
    }

    /// Range of kernel offsets that fall inside the input for output cell `o`.
    #[inline]
    pub fn valid(&self, o: usize) -> (usize, usize) {
        let s = self.start(o);
        let lo = (-s).max(0) as usize;
        let hi = (self.input as isize - s).clamp(0, self.kernel as isize) as usize;
        (lo, hi.max(lo))
    }
}

fn axis(input: usize, kernel: usize, stride: usize, pad: Option<usize>) -> Result<Axis> {
    if input == 0 || kernel == 0 || stride == 0 {
        return Err(Error::invalid(format!(
            "window extents must be positive (input {input}, kernel {kernel}, stride {stride})"
        )));
    }
    let (output, before) = match pad {
        Some(p) => {
            if p >= kernel {
                return Err(Error::invalid(format!("padding {p} must be smaller than kernel {kernel}")));
            }
            if input + 2 * p < kernel {
                return Err(Error::invalid(format!(
                    "kernel {kernel} exceeds padded input {}",
                    input + 2 * p
                )));
            }
            ((input + 2 * p - kernel) / stride + 1, p)
        }
        None => {
            let output = input.div_ceil(stride);
            let total = ((output - 1) * stride + kernel).saturating_sub(input);
            (output, total / 2)
        }
    };
    Ok(Axis {
        input,
        output,
        before,
        kernel,
        stride,
    })
}

impl Window {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> Self {
        Window {
            kernel,
            stride,
            padding,
        }
    }

    pub(crate) fn axes(&self, h: usize, w: usize) -> Result<(Axis, Axis)> {
        let (ph, pw) = match self.padding {
            Padding::Explicit(ph, pw) => (Some(ph), Some(pw)),
            Padding::Same => (None, None),
        };
        Ok((
            axis(h, self.kernel.0, self.stride.0, ph)?,
            axis(w, self.kernel.1, self.stride.1, pw)?,
        ))
    }
}

/// Spatial output extent of a convolution or pooling window applied to `(h, w)`.
pub fn conv_output_shape(input: (usize, usize), window: &Window) -> Result<(usize, usize)> {
    let (ay, ax) = window.axes(input.0, input.1)?;
    Ok((ay.output, ax.output))
}

pub(crate) fn check_nchw(op: &str, shape: &[usize], channels: Option<usize>) -> Result<[usize; 4]> {
    match shape {
        &[b, c, h, w] if channels.is_none_or(|ch| ch == c) => Ok([b, c, h, w]),
        _ => Err(Error::invalid(format!(
            "{op} expects [batch x {} x height x width], got {shape:?}",
            channels.map_or("channels".to_string(), |c| c.to_string())
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(k: usize, s: usize, p: Padding) -> Window {
        Window::new((k, k), (s, s), p)
    }

    #[test]
    fn reference_shapes() {
        assert_eq!(conv_output_shape((28, 28), &win(5, 1, Padding::Explicit(2, 2))).unwrap(), (28, 28));
        let pool = win(3, 3, Padding::Same);
        assert_eq!(conv_output_shape((28, 28), &pool).unwrap(), (10, 10));
        assert_eq!(conv_output_shape((10, 10), &pool).unwrap(), (4, 4));
        assert_eq!(conv_output_shape((28, 28), &win(2, 2, Padding::Explicit(0, 0))).unwrap(), (14, 14));
        assert_eq!(conv_output_shape((14, 14), &win(3, 1, Padding::Explicit(1, 1))).unwrap(), (14, 14));
    }

    #[test]
    fn same_padding_puts_extra_cell_after() {
        let (ay, _) = win(3, 3, Padding::Same).axes(28, 28).unwrap();
        // (10 - 1) * 3 + 3 - 28 = 2 cells: one before, one after
        assert_eq!((ay.output, ay.before), (10, 1));
        let (ay, _) = win(2, 1, Padding::Same).axes(5, 5).unwrap();
        assert_eq!((ay.output, ay.before), (5, 0));
        let (ay, _) = win(3, 3, Padding::Same).axes(10, 10).unwrap();
        assert_eq!((ay.output, ay.before), (4, 1));
    }

    #[test]
    fn rejects_degenerate_windows() {
        assert!(conv_output_shape((3, 3), &win(5, 1, Padding::Explicit(0, 0))).is_err());
        assert!(conv_output_shape((3, 3), &win(3, 0, Padding::Same)).is_err());
        assert!(conv_output_shape((0, 3), &win(1, 1, Padding::Same)).is_err());
        assert!(conv_output_shape((4, 4), &win(2, 1, Padding::Explicit(2, 2))).is_err());
    }

    #[test]
    fn valid_offsets_clip_at_borders() {
        let (ay, _) = win(3, 1, Padding::Explicit(1, 1)).axes(4, 4).unwrap();
        assert_eq!(ay.valid(0), (1, 3));
        assert_eq!(ay.valid(1), (0, 3));
        assert_eq!(ay.valid(3), (0, 2));
    }
}
