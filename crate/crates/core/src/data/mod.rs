//! Datasets: MNIST ingestion, encoding, shuffling, splitting, batching and the
//! synthetic XOR / parity generators.

pub mod idx;
mod synthetic;

pub use idx::{parse_idx_images, parse_idx_labels, serialize_idx_images, serialize_idx_labels, Mnist};
pub use synthetic::{make_parity_dataset, make_xor_dataset, ParityMode, XorEncoding};

use serde::{Deserialize, Serialize};

use crate::criteria::Target;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Samples (axis 0 of `data`) paired with class labels and, optionally, dense
/// regression targets used instead of the labels by losses such as MSE.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    data: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    targets: Option<Tensor>,
}

impl LabeledDataset {
    pub fn new(data: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if data.rank() < 2 || data.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for data of shape {:?}",
                labels.len(),
                data.shape()
            )));
        }
        if let Some(&index) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::ClassOutOfRange {
                index,
                classes: num_classes,
            });
        }
        Ok(LabeledDataset {
            data,
            labels,
            num_classes,
            targets: None,
        })
    }

    pub fn with_targets(mut self, targets: Tensor) -> Result<Self> {
        if targets.rows() != self.len() || targets.rank() < 2 {
            return Err(Error::invalid(format!(
                "targets {:?} do not match {} samples",
                targets.shape(),
                self.len()
            )));
        }
        self.targets = Some(targets);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn targets(&self) -> Option<&Tensor> {
        self.targets.as_ref()
    }

    /// What a criterion should compare predictions against.
    pub fn target(&self) -> Target<'_> {
        match &self.targets {
            Some(t) => Target::Dense(t),
            None => Target::Classes(&self.labels),
        }
    }

    pub fn one_hot(&self) -> Tensor {
        one_hot(&self.labels, self.num_classes).expect("labels validated on construction")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    /// Same samples with each one reinterpreted under `dims`.
    pub fn reshape_samples(mut self, dims: &[usize]) -> Result<Self> {
        let mut shape = vec![self.len()];
        shape.extend_from_slice(dims);
        self.data = self.data.into_reshape(&shape)?;
        Ok(self)
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(LabeledDataset {
            data: self.data.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            targets: self.targets.as_ref().map(|t| t.select_rows(indices)).transpose()?,
        })
    }

    /// Samples `start..start + len`.
    pub fn range(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(LabeledDataset {
            data: self.data.narrow(0, start, len)?,
            labels: self.labels[start..start + len].to_vec(),
            num_classes: self.num_classes,
            targets: self.targets.as_ref().map(|t| t.narrow(0, start, len)).transpose()?,
        })
    }

    /// Applies one random permutation to samples, labels and targets alike.
    pub fn shuffle(&self, rng: &mut Rng) -> Self {
        let perm = rng.permutation(self.len());
        self.select(&perm).expect("non-empty dataset")
    }

    /// Front gets `floor(p * N)` samples in order, back the rest. A `p` outside `(0, 1]`
    /// falls back to 0.9. The back part is `None` when it would be empty.
    pub fn split(&self, p: f64) -> Result<(Self, Option<Self>)> {
        let p = if p > 0.0 && p <= 1.0 { p } else { 0.9 };
        let front = (p * self.len() as f64).floor() as usize;
        let head = self.range(0, front)?;
        let tail = if front < self.len() {
            Some(self.range(front, self.len() - front)?)
        } else {
            None
        };
        Ok((head, tail))
    }

    pub fn concat(parts: &[&LabeledDataset]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let data: Vec<Tensor> = parts.iter().map(|p| p.data.clone()).collect();
        let mut out = LabeledDataset::new(
            Tensor::concat(&data, 0)?,
            parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            first.num_classes,
        )?;
        if parts.iter().all(|p| p.targets.is_some()) {
            let t: Vec<Tensor> = parts.iter().map(|p| p.targets.clone().unwrap()).collect();
            out = out.with_targets(Tensor::concat(&t, 0)?)?;
        }
        Ok(out)
    }
}

/// `[N x num_classes]` indicator rows.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len().max(1), num_classes.max(1)]);
    if labels.is_empty() || num_classes == 0 {
        return Err(Error::EmptyDataset);
    }
    for (r, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::ClassOutOfRange {
                index: l,
                classes: num_classes,
            });
        }
        t.set(&[r, l], 1.0);
    }
    Ok(t)
}

/// Scales raw bytes `[0, 255]` to `[0, 1]`; with `flatten`, `[N x r x c] -> [N x r*c]`.
pub fn normalize_images(t: &Tensor, flatten: bool) -> Result<Tensor> {
    let out = t.map(|v| v / 255.0);
    if flatten {
        out.into_reshape(&[t.rows(), t.row_len()])
    } else {
        Ok(out)
    }
}

/// TF-style batch source: walks a shuffled order and reshuffles when the order runs
/// out. A batch that straddles the boundary takes the tail of the old order and the
/// head of the new one, so each pass covers every sample exactly once.
#[derive(Clone, Debug)]
pub struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
    epochs: usize,
    rng: Rng,
}

impl BatchCursor {
    pub fn new(n: usize, rng: Rng) -> Self {
        let mut c = BatchCursor {
            order: Vec::new(),
            pos: 0,
            epochs: 0,
            rng,
        };
        c.order = c.rng.permutation(n);
        c
    }

    /// Completed passes over the data.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn next_indices(&mut self, size: usize) -> Result<Vec<usize>> {
        let n = self.order.len();
        if size == 0 || size > n {
            return Err(Error::invalid(format!("batch size {size} for {n} samples")));
        }
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            let take = (size - out.len()).min(n - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
            if self.pos == n {
                self.order = self.rng.permutation(n);
                self.pos = 0;
                self.epochs += 1;
            }
        }
        Ok(out)
    }

    pub fn next_batch(&mut self, ds: &LabeledDataset, size: usize) -> Result<LabeledDataset> {
        if ds.len() != self.order.len() {
            return Err(Error::invalid("cursor was created for a different dataset"));
        }
        let idx = self.next_indices(size)?;
        ds.select(&idx)
    }
}

/// How the MNIST training file is divided into training and validation sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPolicy {
    /// Shuffle, then the first `train_rate` fraction trains and the rest validates.
    Shuffled { train_rate: f64 },
    /// Unshuffled: the first three quarters train (samples 1..45000 of the full file)
    /// and the remainder validates (45001..60000).
    Index,
    /// First `N - validation` samples train, the last `validation` validate.
    Holdout { validation: usize },
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: LabeledDataset,
    pub validation: Option<LabeledDataset>,
    pub test: LabeledDataset,
}

impl SplitPolicy {
    pub fn apply(&self, train_file: &LabeledDataset, test: LabeledDataset, rng: &mut Rng) -> Result<Splits> {
        let n = train_file.len();
        let (train, validation) = match *self {
            SplitPolicy::Shuffled { train_rate } => train_file.shuffle(rng).split(train_rate)?,
            SplitPolicy::Index => train_file.split(0.75)?,
            SplitPolicy::Holdout { validation } => {
                if validation >= n {
                    return Err(Error::invalid(format!("holdout of {validation} from {n} samples")));
                }
                let head = train_file.range(0, n - validation)?;
                let tail = if validation > 0 {
                    Some(train_file.range(n - validation, validation)?)
                } else {
                    None
                };
                (head, tail)
            }
        };
        Ok(Splits { train, validation, test })
    }
}

impl Mnist {
    /// Normalized datasets; images flattened to 784 columns unless `flatten` is false,
    /// in which case they are `[N x 1 x 28 x 28]`. `subset` keeps only the first samples
    /// of the training file.
    pub fn datasets(&self, flatten: bool, subset: Option<usize>) -> Result<(LabeledDataset, LabeledDataset)> {
        let build = |images: &Tensor, labels: &[usize], keep: usize| -> Result<LabeledDataset> {
            let images = if keep < images.rows() { images.narrow(0, 0, keep)? } else { images.clone() };
            let x = normalize_images(&images, true)?;
            let ds = LabeledDataset::new(x, labels[..images.rows()].to_vec(), idx::MNIST_CLASSES)?;
            if flatten {
                Ok(ds)
            } else {
                let (r, c) = (self.train_images.shape()[1], self.train_images.shape()[2]);
                ds.reshape_samples(&[1, r, c])
            }
        };
        let n = self.train_images.rows();
        let train = build(&self.train_images, &self.train_labels, subset.unwrap_or(n).min(n))?;
        let test = build(&self.test_images, &self.test_labels, self.test_images.rows())?;
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagged(n: usize) -> LabeledDataset {
        let data = Tensor::from_vec(vec![n, 2], (0..n).flat_map(|i| [i as f64, (i % 10) as f64]).collect()).unwrap();
        LabeledDataset::new(data, (0..n).map(|i| i % 10).collect(), 10).unwrap()
    }

    fn check_pairs(ds: &LabeledDataset) {
        for (i, &l) in ds.labels().iter().enumerate() {
            assert_eq!(ds.data().row(i)[1], l as f64);
        }
    }

    #[test]
    fn one_hot_rows() {
        let t = one_hot(&[3, 0, 9], 10).unwrap();
        assert_eq!(t.row(0)[3], 1.0);
        assert_eq!(t.sum_axis(1).unwrap().data(), &[1.0, 1.0, 1.0]);
        assert_eq!(t.argmax(1).unwrap(), vec![3, 0, 9]);
        assert!(one_hot(&[10], 10).is_err());
    }

    #[test]
    fn normalization() {
        let t = Tensor::from_vec(vec![2, 2, 2], vec![0.0, 255.0, 51.0, 102.0, 0.0, 0.0, 0.0, 255.0]).unwrap();
        let n = normalize_images(&t, true).unwrap();
        assert_eq!(n.shape(), &[2, 4]);
        assert_eq!(n.data()[..4], [0.0, 1.0, 0.2, 0.4]);
        assert_eq!(n.reshape(&[2, 2, 2]).unwrap().reshape(&[2, 4]).unwrap(), n);
    }

    #[test]
    fn shuffle_keeps_pairs_and_histogram() {
        let ds = tagged(100);
        let s = ds.shuffle(&mut Rng::new(3));
        check_pairs(&s);
        assert_eq!(s.class_counts(), ds.class_counts());
        assert_ne!(s.labels(), ds.labels());
        assert_eq!(s, ds.shuffle(&mut Rng::new(3)));
    }

    #[test]
    fn split_fractions() {
        let ds = tagged(60);
        let (a, b) = ds.split(0.75).unwrap();
        assert_eq!((a.len(), b.as_ref().unwrap().len()), (45, 15));
        let joined = LabeledDataset::concat(&[&a, b.as_ref().unwrap()]).unwrap();
        assert_eq!(joined, ds);
        for bad in [0.0, -1.0, 1.5] {
            assert_eq!(ds.split(bad).unwrap().0.len(), 54);
        }
        let (all, none) = ds.split(1.0).unwrap();
        assert_eq!(all.len(), 60);
        assert!(none.is_none());
    }

    #[test]
    fn cursor_covers_each_sample_once_per_pass() {
        let ds = tagged(100);
        let mut c = BatchCursor::new(100, Rng::new(9));
        let mut seen = vec![0; 100];
        for _ in 0..10 {
            let b = c.next_batch(&ds, 10).unwrap();
            check_pairs(&b);
            for i in 0..b.len() {
                seen[b.data().row(i)[0] as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert_eq!(c.epochs(), 1);
        // straddling batches still keep per-pass coverage
        let mut c = BatchCursor::new(100, Rng::new(1));
        let mut all = Vec::new();
        for _ in 0..10 {
            all.extend(c.next_indices(30).unwrap());
        }
        for pass in all.chunks(100) {
            let mut p = pass.to_vec();
            p.sort_unstable();
            assert_eq!(p, (0..100).collect::<Vec<_>>());
        }
        let mut c = BatchCursor::new(100, Rng::new(1));
        assert_eq!(c.next_batch(&ds, 100).unwrap().len(), 100);
        assert!(c.next_indices(101).is_err());
    }

    #[test]
    fn split_policies() {
        let ds = tagged(80);
        let test = tagged(10);
        let mut rng = Rng::new(0);
        let s = SplitPolicy::Shuffled { train_rate: 0.75 }.apply(&ds, test.clone(), &mut rng).unwrap();
        assert_eq!((s.train.len(), s.validation.unwrap().len()), (60, 20));
        let s = SplitPolicy::Index.apply(&ds, test.clone(), &mut rng).unwrap();
        assert_eq!(s.train.labels(), &ds.labels()[..60]);
        let s = SplitPolicy::Holdout { validation: 5 }.apply(&ds, test, &mut rng).unwrap();
        assert_eq!(s.validation.unwrap().labels(), &ds.labels()[75..]);
    }
}
