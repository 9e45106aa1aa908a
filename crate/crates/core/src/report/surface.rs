use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Points are pushed through the model this many at a time.
pub const SURFACE_BATCH: usize = 10_000;

/// Axis-aligned box `[x.0, x.1) x [y.0, y.1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Region {
    pub fn square(lo: f64, hi: f64) -> Self {
        Region { x: (lo, hi), y: (lo, hi) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceSample {
    pub region: Region,
    pub n_points: usize,
    pub band: (f64, f64),
    /// Sampled inputs whose first model output lies in `band` (inclusive).
    pub points: Vec<[f64; 2]>,
}

/// Draws `n_points` uniform inputs in `region` and keeps those the model maps into
/// `band`, which traces the decision boundary.
pub fn sample_separation_surface(
    model: &mut dyn Module,
    region: Region,
    n_points: usize,
    band: (f64, f64),
    rng: &mut Rng,
) -> Result<SurfaceSample> {
    if !(band.0 <= band.1) || !(region.x.0 < region.x.1 && region.y.0 < region.y.1) {
        return Err(Error::invalid("surface region and band must be non-empty intervals"));
    }
    model.set_training(false);
    let mut points = Vec::new();
    let mut left = n_points;
    while left > 0 {
        let rows = left.min(SURFACE_BATCH);
        let mut xy = Vec::with_capacity(rows * 2);
        for _ in 0..rows {
            xy.push(rng.uniform_range(region.x.0, region.x.1));
            xy.push(rng.uniform_range(region.y.0, region.y.1));
        }
        let x = Tensor::from_vec(vec![rows, 2], xy)?;
        let y = model.forward(&x)?;
        let w = y.row_len();
        for r in 0..rows {
            let v = y.data()[r * w];
            if v >= band.0 && v <= band.1 {
                points.push([x.data()[2 * r], x.data()[2 * r + 1]]);
            }
        }
        left -= rows;
    }
    Ok(SurfaceSample {
        region,
        n_points,
        band,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ActivationKind, Linear, Sequential};

    #[test]
    fn constant_model_gives_empty_band() {
        let lin = Linear::from_parts(Tensor::zeros(&[1, 2]), Tensor::ones(&[1])).unwrap();
        let mut m = Sequential::new().with(lin);
        let s = sample_separation_surface(&mut m, Region::square(-0.5, 0.5), 5000, (-2e-3, 2e-3), &mut Rng::new(1))
            .unwrap();
        assert!(s.points.is_empty());
    }

    #[test]
    fn band_members_reevaluate_into_band() {
        let lin = Linear::from_parts(Tensor::from_rows(&[[1.0, -1.0]]).unwrap(), Tensor::zeros(&[1])).unwrap();
        let mut m = Sequential::new().with(lin).with(Activation::new(ActivationKind::Sigmoid));
        let band = (0.49, 0.51);
        let s = sample_separation_surface(&mut m, Region::square(-1.0, 2.0), 25_000, band, &mut Rng::new(2)).unwrap();
        assert!(!s.points.is_empty());
        let flat: Vec<f64> = s.points.iter().flat_map(|p| p.iter().copied()).collect();
        let y = m.forward(&Tensor::from_vec(vec![s.points.len(), 2], flat).unwrap()).unwrap();
        assert!(y.data().iter().all(|&v| v >= band.0 && v <= band.1));
        assert!(s.points.iter().all(|p| (p[0] - p[1]).abs() < 0.05));
    }
}
