//! Optimizers, stopping rules and the epoch loop.

mod optim;
mod stopping;

pub use optim::{adam_step, sgd_momentum_step, AdamConfig, AdamMoments, Optimizer, OptimizerKind};
pub use stopping::{early_stop_check, grad_inf_norm, gradient_floor_check, EarlyStopper, StopPolicy};

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::data::{BatchCursor, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::rng::Rng;

/// How each epoch walks the training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    /// Consecutive fixed batches in dataset order (the last may be shorter).
    #[default]
    Split,
    /// Draws from a cursor that reshuffles after every pass; an epoch is
    /// `floor(N / batch_size)` draws unless overridden.
    NextBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub nepochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub improvement_factor: f64,
    pub stop_policy: StopPolicy,
    pub momentum: f64,
    pub weight_decay_alpha: f64,
    pub grad_inf_norm_floor: f64,
    pub goal: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamConfig,
    pub batch_mode: BatchMode,
    pub batches_per_epoch: Option<usize>,
    pub eval_batch_size: usize,
    /// Worker threads used by evaluation.
    pub threads: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            nepochs: 1000,
            learning_rate: 0.01,
            batch_size: 32,
            patience: 10,
            improvement_factor: 0.9999,
            stop_policy: StopPolicy::PreviousEpoch,
            momentum: 0.9,
            weight_decay_alpha: 0.0,
            grad_inf_norm_floor: 1e-6,
            goal: 0.0,
            optimizer: OptimizerKind::Gd,
            adam: AdamConfig::default(),
            batch_mode: BatchMode::Split,
            batches_per_epoch: None,
            eval_batch_size: 32,
            threads: 1,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("invalid training options: {what}")));
        if self.nepochs < 1 {
            return bad("nepochs must be >= 1");
        }
        if self.batch_size < 1 || self.eval_batch_size < 1 {
            return bad("batch sizes must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        if !(self.improvement_factor > 0.0 && self.improvement_factor <= 1.0) {
            return bad("improvement_factor must lie in (0, 1]");
        }
        if !(self.weight_decay_alpha >= 0.0) {
            return bad("weight_decay_alpha must be >= 0");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    ValidationPatience,
    GradientFloor,
    GoalReached,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max-epochs",
            StopReason::ValidationPatience => "validation-patience",
            StopReason::GradientFloor => "gradient-floor",
            StopReason::GoalReached => "goal-reached",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Option<Vec<f64>>,
    pub test_loss: Option<Vec<f64>>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub seconds: f64,
    /// Largest absolute gradient after the final batch.
    pub final_grad_inf_norm: f64,
}

fn cell(v: Option<&Vec<f64>>, i: usize) -> String {
    v.map(|l| l[i].to_string()).unwrap_or_default()
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,test_loss`; absent series leave empty cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss", "test_loss"])?;
        for i in 0..self.epochs_run {
            w.write_record([
                (i + 1).to_string(),
                self.train_loss[i].to_string(),
                cell(self.val_loss.as_ref(), i),
                cell(self.test_loss.as_ref(), i),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let last = |v: Option<&Vec<f64>>| v.and_then(|l| l.last().copied());
        serde_json::json!({
            "stop_reason": self.stop_reason.to_string(),
            "epochs_run": self.epochs_run,
            "seconds": self.seconds,
            "final_train_loss": self.train_loss.last(),
            "final_val_loss": last(self.val_loss.as_ref()),
            "final_test_loss": last(self.test_loss.as_ref()),
        })
    }
}

fn finite(epoch: usize, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { epoch, value })
    }
}

/// Mean of per-batch losses over consecutive batches of `batch_size`. Runs the model
/// in evaluation mode, leaves parameters untouched and zeroes gradients afterwards.
/// With `threads > 1` batches are spread over clones of the model; the mean is still
/// summed in batch order.
pub fn evaluate(
    m: &mut dyn Module,
    criterion: &Criterion,
    ds: &LabeledDataset,
    batch_size: usize,
    threads: usize,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    m.set_training(false);
    let starts: Vec<usize> = (0..ds.len()).step_by(batch_size).collect();
    let batch_loss = |m: &mut dyn Module, s: usize| -> Result<f64> {
        let b = ds.range(s, batch_size.min(ds.len() - s))?;
        let out = m.forward(b.data())?;
        criterion.forward(out, b.target())
    };
    let workers = threads.clamp(1, starts.len());
    let losses: Vec<f64> = if workers == 1 {
        starts.iter().map(|&s| batch_loss(&mut *m, s)).collect::<Result<_>>()?
    } else {
        let chunk = starts.len().div_ceil(workers);
        let parts: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = starts
                .chunks(chunk)
                .map(|part| {
                    let mut local = m.box_clone();
                    let batch_loss = &batch_loss;
                    scope.spawn(move || part.iter().map(|&s| batch_loss(local.as_mut(), s)).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(starts.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    m.zero_grad_parameters();
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Runs the epoch loop. Each batch: forward, criterion, zero gradients, backward,
/// optimizer step. After each epoch the validation (and test) losses are evaluated
/// and the stopping rules applied in order: goal, gradient floor, validation
/// patience, epoch budget.
pub fn train(
    m: &mut dyn Module,
    criterion: &Criterion,
    train_ds: &LabeledDataset,
    val_ds: Option<&LabeledDataset>,
    test_ds: Option<&LabeledDataset>,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    train_with_callback(m, criterion, train_ds, val_ds, test_ds, opts, &mut |_| {})
}

pub fn train_with_callback(
    m: &mut dyn Module,
    criterion: &Criterion,
    train_ds: &LabeledDataset,
    val_ds: Option<&LabeledDataset>,
    test_ds: Option<&LabeledDataset>,
    opts: &TrainOptions,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainReport> {
    opts.validate()?;
    if train_ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let started = Instant::now();
    let n = train_ds.len();
    let batch = opts.batch_size.min(n);
    let mut optimizer = Optimizer::new(opts.optimizer, opts.momentum, opts.adam);
    let mut stopper = EarlyStopper::new(opts.stop_policy, opts.improvement_factor, opts.patience);
    let mut cursor = BatchCursor::new(n, Rng::new(opts.seed).fork(1));
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: val_ds.map(|_| Vec::new()),
        test_loss: test_ds.map(|_| Vec::new()),
        epochs_run: 0,
        stop_reason: StopReason::MaxEpochs,
        seconds: 0.0,
        final_grad_inf_norm: 0.0,
    };

    for epoch in 1..=opts.nepochs {
        m.set_training(true);
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut step = |b: &LabeledDataset, m: &mut dyn Module| -> Result<()> {
            let out = m.forward(b.data())?;
            let loss = finite(epoch, criterion.forward(out, b.target())?)?;
            let grad = criterion.backward(out, b.target())?;
            m.zero_grad_parameters();
            m.backward(b.data(), &grad)?;
            optimizer.step(m, opts.learning_rate, opts.weight_decay_alpha)?;
            sum += loss;
            count += 1;
            Ok(())
        };
        match opts.batch_mode {
            BatchMode::Split => {
                if batch == n {
                    step(train_ds, &mut *m)?;
                } else {
                    for s in (0..n).step_by(batch) {
                        step(&train_ds.range(s, batch.min(n - s))?, &mut *m)?;
                    }
                }
            }
            BatchMode::NextBatch => {
                let draws = opts.batches_per_epoch.unwrap_or(n / batch).max(1);
                for _ in 0..draws {
                    step(&cursor.next_batch(train_ds, batch)?, &mut *m)?;
                }
            }
        }
        let train_loss = sum / count as f64;
        report.final_grad_inf_norm = grad_inf_norm(m);
        let below_floor = report.final_grad_inf_norm < opts.grad_inf_norm_floor;

        let val = val_ds
            .map(|v| evaluate(m, criterion, v, opts.eval_batch_size, opts.threads).and_then(|l| finite(epoch, l)))
            .transpose()?;
        let test = test_ds
            .map(|t| evaluate(m, criterion, t, opts.eval_batch_size, opts.threads).and_then(|l| finite(epoch, l)))
            .transpose()?;
        report.train_loss.push(train_loss);
        if let (Some(series), Some(v)) = (report.val_loss.as_mut(), val) {
            series.push(v);
        }
        if let (Some(series), Some(t)) = (report.test_loss.as_mut(), test) {
            series.push(t);
        }
        report.epochs_run = epoch;
        on_epoch(&EpochRecord {
            epoch,
            train_loss,
            val_loss: val,
            test_loss: test,
        });

        let patience_hit = val.map(|v| stopper.update(v)).unwrap_or(false);
        let reason = if train_loss <= opts.goal {
            Some(StopReason::GoalReached)
        } else if below_floor {
            Some(StopReason::GradientFloor)
        } else if patience_hit {
            Some(StopReason::ValidationPatience)
        } else {
            None
        };
        if let Some(r) = reason {
            report.stop_reason = r;
            break;
        }
    }
    m.set_training(false);
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
