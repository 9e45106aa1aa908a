//! Loss functions. Mean reduction divides by the batch size (and, for MSE, by the
//! output width); the gradients returned by `backward` carry the same scaling, so
//! layers never rescale anything.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax_rows;
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Mse,
    CrossEntropyLogits,
    NllProbabilities,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Targets are either 0-based class indices (one per row) or a dense tensor shaped
/// like the predictions.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Classes(&'a [usize]),
    Dense(&'a Tensor),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub kind: CriterionKind,
    pub reduction: Reduction,
}

impl Criterion {
    pub fn new(kind: CriterionKind, reduction: Reduction) -> Self {
        Criterion { kind, reduction }
    }

    pub fn mse() -> Self {
        Criterion::new(CriterionKind::Mse, Reduction::Mean)
    }

    /// Sum of squared errors over the whole batch.
    pub fn sum_squared() -> Self {
        Criterion::new(CriterionKind::Mse, Reduction::Sum)
    }

    pub fn cross_entropy() -> Self {
        Criterion::new(CriterionKind::CrossEntropyLogits, Reduction::Mean)
    }

    pub fn nll() -> Self {
        Criterion::new(CriterionKind::NllProbabilities, Reduction::Mean)
    }

    pub fn forward(&self, pred: &Tensor, target: Target<'_>) -> Result<f64> {
        let (b, d) = rows(pred)?;
        let p = pred.data();
        let total = match self.kind {
            CriterionKind::Mse => {
                let t = dense(pred, target)?;
                p.iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            CriterionKind::CrossEntropyLogits => {
                let cls = classes(pred, target)?;
                let mut s = 0.0;
                for (r, &c) in p.chunks_exact(d).zip(&cls) {
                    let max = r.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let lse = max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    s += lse - r[c];
                }
                s
            }
            CriterionKind::NllProbabilities => {
                let cls = classes(pred, target)?;
                p.chunks_exact(d)
                    .zip(&cls)
                    .map(|(r, &c)| -r[c].max(PROB_FLOOR).ln())
                    .sum::<f64>()
            }
        };
        Ok(total / self.denominator(b, d))
    }

    pub fn backward(&self, pred: &Tensor, target: Target<'_>) -> Result<Tensor> {
        let (b, d) = rows(pred)?;
        let scale = 1.0 / self.denominator(b, d);
        let mut grad = match self.kind {
            CriterionKind::Mse => {
                let t = dense(pred, target)?;
                let data = pred.data().iter().zip(t.data()).map(|(a, b)| 2.0 * (a - b)).collect();
                Tensor::raw(pred.shape().to_vec(), data)
            }
            CriterionKind::CrossEntropyLogits => {
                let cls = classes(pred, target)?;
                let mut g = softmax_rows(pred);
                for (r, &c) in g.data_mut().chunks_exact_mut(d).zip(&cls) {
                    r[c] -= 1.0;
                }
                g
            }
            CriterionKind::NllProbabilities => {
                let cls = classes(pred, target)?;
                let mut g = Tensor::zeros(pred.shape());
                for ((gr, pr), &c) in g.data_mut().chunks_exact_mut(d).zip(pred.data().chunks_exact(d)).zip(&cls) {
                    if pr[c] > PROB_FLOOR {
                        gr[c] = -1.0 / pr[c];
                    }
                }
                g
            }
        };
        if scale != 1.0 {
            grad.map_inplace(|v| v * scale);
        }
        Ok(grad)
    }

    fn denominator(&self, b: usize, d: usize) -> f64 {
        match (self.reduction, self.kind) {
            (Reduction::Sum, _) => 1.0,
            (Reduction::Mean, CriterionKind::Mse) => (b * d) as f64,
            (Reduction::Mean, _) => b as f64,
        }
    }
}

fn rows(pred: &Tensor) -> Result<(usize, usize)> {
    if pred.rank() == 0 {
        return Err(Error::invalid("criterion expects a batch of predictions"));
    }
    Ok((pred.rows(), pred.row_len()))
}

fn dense<'a>(pred: &Tensor, target: Target<'a>) -> Result<std::borrow::Cow<'a, Tensor>> {
    match target {
        Target::Dense(t) => {
            pred.same_shape(t, "criterion target")?;
            Ok(std::borrow::Cow::Borrowed(t))
        }
        Target::Classes(c) => {
            let (b, d) = rows(pred)?;
            check_classes(c, b, d)?;
            let mut t = Tensor::zeros(pred.shape());
            for (r, &k) in t.data_mut().chunks_exact_mut(d).zip(c) {
                r[k] = 1.0;
            }
            Ok(std::borrow::Cow::Owned(t))
        }
    }
}

fn check_classes(c: &[usize], b: usize, d: usize) -> Result<()> {
    if c.len() != b {
        return Err(Error::ShapeMismatch {
            op: "criterion target",
            lhs: vec![b, d],
            rhs: vec![c.len()],
        });
    }
    match c.iter().find(|&&k| k >= d) {
        Some(&index) => Err(Error::ClassOutOfRange { index, classes: d }),
        None => Ok(()),
    }
}

/// Class index per row; dense targets must be exactly one-hot.
fn classes(pred: &Tensor, target: Target<'_>) -> Result<Vec<usize>> {
    let (b, d) = rows(pred)?;
    match target {
        Target::Classes(c) => {
            check_classes(c, b, d)?;
            Ok(c.to_vec())
        }
        Target::Dense(t) => {
            pred.same_shape(t, "criterion target")?;
            t.data()
                .chunks_exact(d)
                .map(|r| {
                    let ones: Vec<usize> = (0..d).filter(|&i| r[i] == 1.0).collect();
                    let zeros = r.iter().filter(|&&v| v == 0.0).count();
                    match ones.as_slice() {
                        [k] if zeros == d - 1 => Ok(*k),
                        _ => Err(Error::invalid(format!("target row {r:?} is not one-hot"))),
                    }
                })
                .collect()
        }
    }
}
