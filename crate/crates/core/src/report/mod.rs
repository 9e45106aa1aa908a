//! Accuracy, confusion matrices, separation surfaces and CSV/SVG output.

mod surface;
mod svg;

pub use surface::{sample_separation_surface, Region, SurfaceSample, SURFACE_BATCH};
pub use svg::{render_filter_grid_svg, render_line_svg, render_scatter_svg, LinePlot, ScatterGroup, Series};

use std::path::Path;

use crate::criteria::Target;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::Tensor;
use crate::training::TrainReport;

fn as_rows(pred: &Tensor) -> Result<(usize, usize)> {
    if pred.rank() == 0 {
        return Err(Error::invalid("predictions need a batch axis"));
    }
    Ok((pred.rows(), pred.row_len()))
}

/// Predicted class per row: argmax for vector outputs, the nearest class index for
/// scalar outputs.
pub fn predicted_classes(pred: &Tensor, num_classes: usize) -> Result<Vec<usize>> {
    let (n, w) = as_rows(pred)?;
    if w == 1 {
        let top = num_classes.saturating_sub(1) as f64;
        return Ok(pred.data().iter().map(|&p| p.round().clamp(0.0, top) as usize).collect());
    }
    pred.reshape(&[n, w])?.argmax(1)
}

/// Number of rows counted as correct. Width-one predictions are correct when within
/// 0.5 of the target value; wider ones when the argmax matches.
pub fn correct_count(pred: &Tensor, target: Target<'_>) -> Result<usize> {
    let (n, w) = as_rows(pred)?;
    let expect_len = |len: usize| {
        if len == n {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op: "accuracy",
                lhs: pred.shape().to_vec(),
                rhs: vec![len],
            })
        }
    };
    if w == 1 {
        let truth: Vec<f64> = match target {
            Target::Dense(t) => t.data().to_vec(),
            Target::Classes(c) => c.iter().map(|&k| k as f64).collect(),
        };
        expect_len(truth.len())?;
        return Ok(pred.data().iter().zip(&truth).filter(|(p, t)| (*p - *t).abs() < 0.5).count());
    }
    let guess = pred.reshape(&[n, w])?.argmax(1)?;
    let truth = match target {
        Target::Classes(c) => c.to_vec(),
        Target::Dense(t) => {
            expect_len(t.rows())?;
            t.reshape(&[n, t.row_len()])?.argmax(1)?
        }
    };
    expect_len(truth.len())?;
    Ok(guess.iter().zip(&truth).filter(|(a, b)| a == b).count())
}

pub fn accuracy(pred: &Tensor, target: Target<'_>) -> Result<f64> {
    Ok(correct_count(pred, target)? as f64 / pred.rows() as f64)
}

/// Runs `m` in evaluation mode over `ds` in batches and collects the outputs.
pub fn predict(m: &mut dyn Module, ds: &LabeledDataset, batch_size: usize) -> Result<Tensor> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    m.set_training(false);
    let mut parts = Vec::new();
    for s in (0..ds.len()).step_by(batch_size.max(1)) {
        let b = ds.data().narrow(0, s, batch_size.max(1).min(ds.len() - s))?;
        parts.push(m.forward(&b)?.clone());
    }
    Tensor::concat(&parts, 0)
}

pub fn model_accuracy(m: &mut dyn Module, ds: &LabeledDataset, batch_size: usize) -> Result<f64> {
    let out = predict(m, ds, batch_size)?;
    accuracy(&out, ds.target())
}

/// `counts[i][j]`: samples predicted as class `i` whose true class is `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_labels(predicted: &[usize], truth: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::ShapeMismatch {
                op: "confusion matrix",
                lhs: vec![predicted.len()],
                rhs: vec![truth.len()],
            });
        }
        let mut counts = vec![0; classes * classes];
        for (&p, &t) in predicted.iter().zip(truth) {
            if let Some(&index) = [p, t].iter().find(|&&k| k >= classes) {
                return Err(Error::ClassOutOfRange { index, classes });
            }
            counts[p * classes + t] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn from_predictions(pred: &Tensor, truth: &[usize], classes: usize) -> Result<Self> {
        ConfusionMatrix::from_labels(&predicted_classes(pred, classes)?, truth, classes)
    }

    pub fn for_model(m: &mut dyn Module, ds: &LabeledDataset, batch_size: usize) -> Result<Self> {
        let out = predict(m, ds, batch_size)?;
        ConfusionMatrix::from_predictions(&out, ds.labels(), ds.num_classes())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, predicted: usize, truth: usize) -> usize {
        self.counts[predicted * self.classes + truth]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Per-class count of predictions (row sums).
    pub fn predicted_counts(&self) -> Vec<usize> {
        (0..self.classes).map(|i| (0..self.classes).map(|j| self.get(i, j)).sum()).collect()
    }

    /// Per-class count of true labels (column sums).
    pub fn true_counts(&self) -> Vec<usize> {
        (0..self.classes).map(|j| (0..self.classes).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            vec![self.classes, self.classes],
            self.counts.iter().map(|&c| c as f64).collect(),
        )
        .expect("square matrix")
    }

    /// Header `predicted\true,0,1,...`, then one row per predicted class.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["predicted\\true".to_string()];
        header.extend((0..self.classes).map(|j| j.to_string()));
        w.write_record(&header)?;
        for i in 0..self.classes {
            let mut row = vec![i.to_string()];
            row.extend((0..self.classes).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loss trend as CSV (`epoch,train_loss,val_loss,test_loss`).
pub fn export_loss_trend(report: &TrainReport, path: &Path) -> Result<()> {
    report.write_csv(path)
}

/// Line plot of every available loss series against the epoch index.
pub fn loss_plot(report: &TrainReport, log_y: bool) -> LinePlot {
    let series_of = |label: &str, v: &[f64]| Series {
        label: label.to_string(),
        points: v.iter().enumerate().map(|(i, &l)| ((i + 1) as f64, l)).collect(),
    };
    let mut series = vec![series_of("train", &report.train_loss)];
    if let Some(v) = &report.val_loss {
        series.push(series_of("validation", v));
    }
    if let Some(t) = &report.test_loss {
        series.push(series_of("test", t));
    }
    LinePlot {
        title: "loss".into(),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        log_y,
        series,
    }
}
