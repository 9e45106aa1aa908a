use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XorEncoding {
    /// Inputs and targets in `{0, 1}`.
    ZeroOne,
    /// Inputs and targets in `{-0.5, 0.5}`.
    Shifted,
}

impl XorEncoding {
    pub fn offset(self) -> f64 {
        match self {
            XorEncoding::ZeroOne => 0.0,
            XorEncoding::Shifted => -0.5,
        }
    }
}

/// The four XOR patterns in the order (0,0), (0,1), (1,0), (1,1), with a dense
/// `[4 x 1]` target column.
pub fn make_xor_dataset(encoding: XorEncoding) -> LabeledDataset {
    let ds = make_parity_dataset(2, ParityMode::Exhaustive).expect("n = 2 is valid");
    let off = encoding.offset();
    let data = ds.data().add_scalar(off);
    let targets = Tensor::from_vec(vec![4, 1], ds.labels().iter().map(|&l| l as f64 + off).collect())
        .expect("four targets");
    LabeledDataset::new(data, ds.labels().to_vec(), 2)
        .and_then(|d| d.with_targets(targets))
        .expect("consistent shapes")
}

#[derive(Clone, Debug)]
pub enum ParityMode {
    /// All `2^n` inputs, in binary counting order with bit 0 as the first column's MSB.
    Exhaustive,
    /// `m` inputs drawn uniformly (with replacement) from the `2^n` patterns.
    Random { m: usize, rng: Rng },
}

/// n-bit boolean inputs labelled 1 iff an odd number of bits are set.
pub fn make_parity_dataset(n: usize, mode: ParityMode) -> Result<LabeledDataset> {
    if n == 0 || n > 30 {
        return Err(Error::invalid(format!("parity width must be in 1..=30, got {n}")));
    }
    let codes: Vec<u64> = match mode {
        ParityMode::Exhaustive => (0..1u64 << n).collect(),
        ParityMode::Random { m, mut rng } => {
            if m == 0 {
                return Err(Error::EmptyDataset);
            }
            (0..m).map(|_| rng.below(1 << n)).collect()
        }
    };
    let mut data = Vec::with_capacity(codes.len() * n);
    for &c in &codes {
        data.extend((0..n).map(|j| ((c >> (n - 1 - j)) & 1) as f64));
    }
    let labels = codes.iter().map(|c| (c.count_ones() % 2) as usize).collect();
    LabeledDataset::new(Tensor::from_vec(vec![codes.len(), n], data)?, labels, 2)
}
