//! IDX container format used by the MNIST distribution: a big-endian `u32` magic
//! number, one big-endian `u32` per dimension, then unsigned-byte payload.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            expected: at + 4,
            actual: bytes.len(),
        })
}

/// Returns the dimension extents and the payload after checking magic and length.
fn parse(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::BadMagic { found, expected: magic });
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|i| read_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * rank;
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if dims.contains(&0) {
        return Err(Error::EmptyDataset);
    }
    Ok((dims, &bytes[header..]))
}

/// `[N x rows x cols]` tensor of raw pixel values in `[0, 255]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    let (dims, payload) = parse(bytes, IMAGES_MAGIC)?;
    Tensor::from_vec(dims, payload.iter().map(|&b| f64::from(b)).collect())
}

/// Class labels, each checked to lie in `[0, 9]`.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (_, payload) = parse(bytes, LABELS_MAGIC)?;
    payload
        .iter()
        .map(|&b| {
            let l = b as usize;
            if l < MNIST_CLASSES {
                Ok(l)
            } else {
                Err(Error::ClassOutOfRange {
                    index: l,
                    classes: MNIST_CLASSES,
                })
            }
        })
        .collect()
}

fn header(magic: u32, dims: &[usize]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out
}

fn to_byte(v: f64) -> Result<u8> {
    if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
        Ok(v as u8)
    } else {
        Err(Error::invalid(format!("{v} is not a byte value")))
    }
}

/// Inverse of [`parse_idx_images`]; values must be integers in `[0, 255]`.
pub fn serialize_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    if images.rank() != 3 {
        return Err(Error::invalid(format!("images must be [N x rows x cols], got {:?}", images.shape())));
    }
    let mut out = header(IMAGES_MAGIC, images.shape());
    for &v in images.data() {
        out.push(to_byte(v)?);
    }
    Ok(out)
}

pub fn serialize_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = header(LABELS_MAGIC, &[labels.len()]);
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} does not fit a byte")))?);
    }
    Ok(out)
}

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";
pub const MNIST_FILES: [&str; 4] = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS];

/// Raw MNIST arrays as read from disk (pixels still in `[0, 255]`).
#[derive(Clone, Debug)]
pub struct Mnist {
    pub train_images: Tensor,
    pub train_labels: Vec<usize>,
    pub test_images: Tensor,
    pub test_labels: Vec<usize>,
}

/// Finds `name` in `dir`, also accepting the `train-images.idx3-ubyte` spelling.
fn locate(dir: &Path, name: &str) -> Option<PathBuf> {
    let dotted = name.replacen("-idx", ".idx", 1);
    [name.to_string(), dotted]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

/// Paths of the four MNIST files, or [`Error::MissingData`] naming the absent ones.
pub fn mnist_paths(dir: &Path) -> Result<[PathBuf; 4]> {
    let found: Vec<Option<PathBuf>> = MNIST_FILES.iter().map(|n| locate(dir, n)).collect();
    let missing: Vec<String> = MNIST_FILES
        .iter()
        .zip(&found)
        .filter(|(_, p)| p.is_none())
        .map(|(n, _)| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData {
            dir: dir.to_path_buf(),
            expected: missing,
        });
    }
    let mut it = found.into_iter().map(Option::unwrap);
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

impl Mnist {
    pub fn load(dir: &Path) -> Result<Mnist> {
        let [ti, tl, si, sl] = mnist_paths(dir)?;
        let train_images = parse_idx_images(&fs::read(ti)?)?;
        let train_labels = parse_idx_labels(&fs::read(tl)?)?;
        let test_images = parse_idx_images(&fs::read(si)?)?;
        let test_labels = parse_idx_labels(&fs::read(sl)?)?;
        for (imgs, labels) in [(&train_images, &train_labels), (&test_images, &test_labels)] {
            if imgs.rows() != labels.len() {
                return Err(Error::invalid(format!(
                    "{} images but {} labels",
                    imgs.rows(),
                    labels.len()
                )));
            }
        }
        Ok(Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
        })
    }
}

/// Writes a tiny valid MNIST-layout directory: `n_train` / `n_test` random
/// `rows x cols` images with labels cycling through the ten digits. Each image
/// carries a class-dependent bright block so the classes are learnable.
pub fn write_fixture(dir: &Path, n_train: usize, n_test: usize, rows: usize, cols: usize, seed: u64) -> Result<()> {
    let mut rng = crate::rng::Rng::new(seed);
    fs::create_dir_all(dir)?;
    for (n, img_name, lbl_name) in [(n_train, TRAIN_IMAGES, TRAIN_LABELS), (n_test, TEST_IMAGES, TEST_LABELS)] {
        let labels: Vec<usize> = (0..n).map(|i| i % MNIST_CLASSES).collect();
        let mut pixels = Vec::with_capacity(n * rows * cols);
        for &l in &labels {
            for r in 0..rows {
                for c in 0..cols {
                    let lit = (r * MNIST_CLASSES / rows == l) || (c * MNIST_CLASSES / cols == l);
                    let noise = rng.below(64) as f64;
                    pixels.push(if lit { 255.0 - noise } else { noise });
                }
            }
        }
        let images = Tensor::from_vec(vec![n, rows, cols], pixels)?;
        fs::write(dir.join(img_name), serialize_idx_images(&images)?)?;
        fs::write(dir.join(lbl_name), serialize_idx_labels(&labels)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_zero_image() {
        let mut bytes = header(IMAGES_MAGIC, &[1, 28, 28]);
        assert_eq!(bytes.len(), 16);
        bytes.extend(std::iter::repeat(0u8).take(784));
        let t = parse_idx_images(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 28, 28]);
        assert!(t.data().iter().all(|&v| v == 0.0));
        assert_eq!(serialize_idx_images(&t).unwrap(), bytes);
    }

    #[test]
    fn label_fixture() {
        let bytes = serialize_idx_labels(&[5, 0, 4]).unwrap();
        assert_eq!(&bytes[..8], &[0, 0, 8, 1, 0, 0, 0, 3]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![5, 0, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut bytes = serialize_idx_labels(&[1, 2]).unwrap();
        bytes[9] = 255;
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::ClassOutOfRange { index: 255, .. })));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::BadMagic { found: LABELS_MAGIC, expected: IMAGES_MAGIC })
        ));
        let mut img = header(IMAGES_MAGIC, &[2, 2, 2]);
        img.extend([1, 2, 3]);
        assert!(matches!(
            parse_idx_images(&img),
            Err(Error::Truncated { expected: 24, actual: 19 })
        ));
        assert!(matches!(parse_idx_images(&[0, 0]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TRAIN_IMAGES), b"").unwrap();
        match mnist_paths(dir.path()) {
            Err(Error::MissingData { expected, .. }) => assert_eq!(expected.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), 30, 10, 8, 8, 1).unwrap();
        let m = Mnist::load(dir.path()).unwrap();
        assert_eq!(m.train_images.shape(), &[30, 8, 8]);
        assert_eq!(m.test_labels.len(), 10);
        assert_eq!(m.train_labels[13], 3);
    }
}
