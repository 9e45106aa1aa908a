//! Named replication presets and the runners shared by the command line and the
//! acceptance suite. Every hyperparameter of a preset is pinned here.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conv::{Conv2D, Padding, Pool2D, PoolKind, Reshape, Window};
use crate::criteria::Criterion;
use crate::data::{make_xor_dataset, LabeledDataset, Mnist, SplitPolicy, Splits, XorEncoding};
use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationKind, Linear, Module, Sequential};
use crate::report::{
    loss_plot, model_accuracy, predict, render_filter_grid_svg, render_line_svg, render_scatter_svg,
    sample_separation_surface, ConfusionMatrix, Region, ScatterGroup, SurfaceSample,
};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::training::{train, BatchMode, OptimizerKind, TrainOptions, TrainReport};

const MODEL_STREAM: u64 = 3;
const DATA_STREAM: u64 = 2;
const SURFACE_STREAM: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XorPreset {
    Torch,
    Tf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XorLoss {
    /// Mean squared error over the four patterns.
    Mse,
    /// Sum of squared errors.
    MseSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XorConfig {
    pub hidden: usize,
    pub activation: ActivationKind,
    pub output: ActivationKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub encoding: XorEncoding,
    pub loss: XorLoss,
    /// Biases start at zero instead of uniform like the weights.
    pub zero_bias: bool,
}

impl XorConfig {
    pub fn preset(p: XorPreset) -> Self {
        match p {
            XorPreset::Torch => XorConfig {
                hidden: 2,
                activation: ActivationKind::Tanh,
                output: ActivationKind::Identity,
                learning_rate: 0.05,
                epochs: 1000,
                encoding: XorEncoding::Shifted,
                loss: XorLoss::Mse,
                zero_bias: false,
            },
            XorPreset::Tf => XorConfig {
                hidden: 3,
                activation: ActivationKind::Sigmoid,
                output: ActivationKind::Sigmoid,
                learning_rate: 0.1,
                epochs: 5000,
                encoding: XorEncoding::ZeroOne,
                loss: XorLoss::MseSum,
                zero_bias: true,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::invalid("xor: hidden, epochs and lr must be positive"));
        }
        Ok(())
    }

    pub fn criterion(&self) -> Criterion {
        match self.loss {
            XorLoss::Mse => Criterion::mse(),
            XorLoss::MseSum => Criterion::sum_squared(),
        }
    }

    pub fn build(&self, rng: &mut Rng) -> Result<Sequential> {
        self.validate()?;
        let layer = |i, o, rng: &mut Rng| {
            if self.zero_bias {
                Linear::uniform_zero_bias(i, o, -1.0, 1.0, rng)
            } else {
                Linear::uniform(i, o, -1.0, 1.0, rng)
            }
        };
        let mut net = Sequential::new()
            .with(layer(2, self.hidden, rng)?)
            .with(Activation::new(self.activation))
            .with(layer(self.hidden, 1, rng)?);
        if self.output != ActivationKind::Identity {
            net.add(Activation::new(self.output));
        }
        Ok(net)
    }

    /// The output value halfway between the two targets.
    pub fn decision_level(&self) -> f64 {
        0.5 + self.encoding.offset()
    }

    /// Sampling box and output band that trace the decision boundary.
    pub fn surface(&self) -> (Region, (f64, f64)) {
        let level = self.decision_level();
        match self.encoding {
            XorEncoding::Shifted => (Region::square(-0.5, 0.5), (level - 2e-3, level + 2e-3)),
            XorEncoding::ZeroOne => (Region::square(-1.0, 2.0), (level - 0.01, level + 0.01)),
        }
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            nepochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: 4,
            grad_inf_norm_floor: 0.0,
            goal: 0.0,
            seed,
            ..TrainOptions::default()
        }
    }
}

pub struct XorRun {
    pub model: Sequential,
    pub report: TrainReport,
    pub outputs: Tensor,
    pub correct: usize,
}

impl XorRun {
    pub fn all_correct(&self) -> bool {
        self.correct == 4
    }
}

/// Full-batch training on the four XOR patterns for exactly `epochs` epochs.
pub fn run_xor(cfg: &XorConfig, seed: u64) -> Result<XorRun> {
    let ds = make_xor_dataset(cfg.encoding);
    let mut model = cfg.build(&mut Rng::new(seed).fork(MODEL_STREAM))?;
    let report = train(&mut model, &cfg.criterion(), &ds, None, None, &cfg.train_options(seed))?;
    let outputs = model.forward(ds.data())?.clone();
    let correct = crate::report::correct_count(&outputs, ds.target())?;
    Ok(XorRun {
        model,
        report,
        outputs,
        correct,
    })
}

/// Band samples plus the four training patterns, split by class.
pub fn xor_surface_svg(cfg: &XorConfig, run: &mut XorRun, n_points: usize, seed: u64) -> Result<(SurfaceSample, String)> {
    let (region, band) = cfg.surface();
    let mut rng = Rng::new(seed).fork(SURFACE_STREAM);
    let sample = sample_separation_surface(&mut run.model, region, n_points, band, &mut rng)?;
    let ds = make_xor_dataset(cfg.encoding);
    let class = |c: usize| -> Vec<[f64; 2]> {
        (0..4)
            .filter(|&i| ds.labels()[i] == c)
            .map(|i| [ds.data().row(i)[0], ds.data().row(i)[1]])
            .collect()
    };
    let groups = vec![
        ScatterGroup {
            label: "separation surface".into(),
            points: sample.points.clone(),
            radius: 1.0,
        },
        ScatterGroup {
            label: "class 0".into(),
            points: class(0),
            radius: 6.0,
        },
        ScatterGroup {
            label: "class 1".into(),
            points: class(1),
            radius: 6.0,
        },
    ];
    let svg = render_scatter_svg("separation surface", region.x, region.y, &groups);
    Ok((sample, svg))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpPreset {
    Torch,
    Tf,
}

/// How many samples of each split a run actually used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: ActivationKind,
    /// Weights and biases uniform in `[-init_range, init_range)`.
    pub init_range: f64,
    /// Appends a softmax layer in front of the logits loss (a softmax applied twice).
    pub double_softmax: bool,
    pub split: SplitPolicy,
    pub train: TrainOptions,
}

impl MlpConfig {
    pub fn preset(p: MlpPreset) -> Self {
        match p {
            MlpPreset::Torch => MlpConfig {
                hidden: vec![300],
                activation: ActivationKind::Relu,
                init_range: 0.1,
                double_softmax: false,
                split: SplitPolicy::Shuffled { train_rate: 0.75 },
                train: TrainOptions {
                    nepochs: 250,
                    learning_rate: 0.05,
                    batch_size: 64,
                    patience: 10,
                    improvement_factor: 0.9999,
                    batch_mode: BatchMode::Split,
                    ..TrainOptions::default()
                },
            },
            MlpPreset::Tf => MlpConfig {
                hidden: vec![300],
                activation: ActivationKind::Relu,
                init_range: 0.1,
                double_softmax: false,
                split: SplitPolicy::Holdout { validation: 5000 },
                train: TrainOptions {
                    nepochs: 5000,
                    learning_rate: 0.5,
                    batch_size: 50,
                    patience: 5,
                    improvement_factor: 0.9999,
                    weight_decay_alpha: 2e-4,
                    batch_mode: BatchMode::NextBatch,
                    ..TrainOptions::default()
                },
            },
        }
    }

    pub fn build(&self, inputs: usize, classes: usize, rng: &mut Rng) -> Result<Sequential> {
        if self.hidden.contains(&0) {
            return Err(Error::invalid("mlp: hidden sizes must be positive"));
        }
        let r = self.init_range;
        let mut net = Sequential::new();
        let mut prev = inputs;
        for &h in &self.hidden {
            net.add(Linear::uniform(prev, h, -r, r, rng)?);
            net.add(Activation::new(self.activation));
            prev = h;
        }
        net.add(Linear::uniform(prev, classes, -r, r, rng)?);
        if self.double_softmax {
            net.add(Activation::new(ActivationKind::Softmax));
        }
        Ok(net)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CnnArch {
    /// 5x5/12 pad 2, pool 2, 3x3/16 pad 1, pool 2, fc 256, fc 10 on 28x28 inputs.
    Figure,
    /// The same trunk after a 2x2 max pool of the input, without the second pool.
    HalfRes,
    /// 5x5/12 SAME, 3x3/3 SAME pool, 5x5/16 SAME, 3x3/3 SAME pool, fc 1024, fc 10.
    TfSame,
}

impl CnnArch {
    pub const ALL: [CnnArch; 3] = [CnnArch::Figure, CnnArch::HalfRes, CnnArch::TfSame];

    pub fn name(self) -> &'static str {
        match self {
            CnnArch::Figure => "figure",
            CnnArch::HalfRes => "half-res",
            CnnArch::TfSame => "tf-same",
        }
    }

    /// Width of the flattened feature vector fed to the first dense layer.
    pub fn flatten_len(self) -> usize {
        match self {
            CnnArch::Figure | CnnArch::HalfRes => 7 * 7 * 16,
            CnnArch::TfSame => 4 * 4 * 16,
        }
    }

    pub fn build(self, double_softmax: bool, rng: &mut Rng) -> Result<Sequential> {
        let relu = || Activation::new(ActivationKind::Relu);
        let pad = |p| Padding::Explicit(p, p);
        let mut net = Sequential::new();
        match self {
            CnnArch::Figure => {
                net.add(Conv2D::new(1, 12, (5, 5), (1, 1), pad(2), rng)?)
                    .add(relu())
                    .add(Pool2D::max(2))
                    .add(Conv2D::new(12, 16, (3, 3), (1, 1), pad(1), rng)?)
                    .add(relu())
                    .add(Pool2D::max(2))
                    .add(Reshape::flatten(784))
                    .add(Linear::truncated_normal(784, 256, 0.1, 0.1, rng)?)
                    .add(relu())
                    .add(Linear::truncated_normal(256, 10, 0.1, 0.1, rng)?);
            }
            CnnArch::HalfRes => {
                net.add(Pool2D::max(2))
                    .add(Conv2D::new(1, 12, (5, 5), (1, 1), pad(2), rng)?)
                    .add(relu())
                    .add(Pool2D::max(2))
                    .add(Conv2D::new(12, 16, (3, 3), (1, 1), pad(1), rng)?)
                    .add(relu())
                    .add(Reshape::flatten(784))
                    .add(Linear::truncated_normal(784, 256, 0.1, 0.1, rng)?)
                    .add(relu())
                    .add(Linear::truncated_normal(256, 10, 0.1, 0.1, rng)?);
            }
            CnnArch::TfSame => {
                let pool = || Pool2D::new(PoolKind::Max, Window::new((3, 3), (3, 3), Padding::Same));
                net.add(Conv2D::new(1, 12, (5, 5), (1, 1), Padding::Same, rng)?)
                    .add(relu())
                    .add(pool())
                    .add(Conv2D::new(12, 16, (5, 5), (1, 1), Padding::Same, rng)?)
                    .add(relu())
                    .add(pool())
                    .add(Reshape::flatten(256))
                    .add(Linear::truncated_normal(256, 1024, 0.1, 0.1, rng)?)
                    .add(relu())
                    .add(Linear::truncated_normal(1024, 10, 0.1, 0.1, rng)?);
            }
        }
        if double_softmax {
            net.add(Activation::new(ActivationKind::Softmax));
        }
        Ok(net)
    }

    /// Checks the shape pipeline of a built model on a single 28x28 image.
    pub fn check_shapes(self, model: &Sequential) -> Result<Vec<Vec<usize>>> {
        let trace = model.shape_trace(&[1, 1, 28, 28])?;
        let flat = trace.iter().find(|s| s.len() == 2).cloned();
        if flat != Some(vec![1, self.flatten_len()]) || trace.last() != Some(&vec![1, 10]) {
            return Err(Error::invalid(format!("{} shape pipeline is {trace:?}", self.name())));
        }
        Ok(trace)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub arch: CnnArch,
    pub double_softmax: bool,
    pub split: SplitPolicy,
    pub train: TrainOptions,
}

impl CnnConfig {
    pub fn preset(arch: CnnArch) -> Self {
        let holdout = SplitPolicy::Holdout { validation: 5000 };
        let train = match arch {
            CnnArch::Figure => TrainOptions {
                nepochs: 30,
                learning_rate: 0.01,
                batch_size: 128,
                momentum: 0.9,
                weight_decay_alpha: 1e-4,
                optimizer: OptimizerKind::SgdMomentum,
                patience: 6,
                ..TrainOptions::default()
            },
            CnnArch::HalfRes => TrainOptions {
                nepochs: 250,
                learning_rate: 0.05,
                batch_size: 64,
                patience: 10,
                ..TrainOptions::default()
            },
            CnnArch::TfSame => TrainOptions {
                nepochs: 100,
                learning_rate: 1e-4,
                batch_size: 1000,
                patience: 6,
                optimizer: OptimizerKind::Adam,
                batch_mode: BatchMode::NextBatch,
                batches_per_epoch: Some(60),
                ..TrainOptions::default()
            },
        };
        let split = match arch {
            CnnArch::HalfRes => SplitPolicy::Shuffled { train_rate: 0.75 },
            _ => holdout,
        };
        CnnConfig {
            arch,
            double_softmax: false,
            split,
            train,
        }
    }
}

impl CnnConfig {
    /// On a training subset an epoch is one pass over the subset rather than the
    /// preset's fixed number of draws.
    pub fn with_subset(mut self, subset: Option<usize>) -> Self {
        if subset.is_some() {
            self.train.batches_per_epoch = None;
        }
        self
    }
}

/// Outcome of a classifier run on MNIST-style data.
pub struct ClassifierRun {
    pub model: Sequential,
    pub report: TrainReport,
    pub test_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub sizes: SplitSizes,
}

/// Normalized train/validation/test splits; `subset` keeps the first samples of the
/// training file before splitting.
pub fn mnist_splits(mnist: &Mnist, flatten: bool, subset: Option<usize>, split: SplitPolicy, seed: u64) -> Result<Splits> {
    let (train_file, test) = mnist.datasets(flatten, subset)?;
    split.apply(&train_file, test, &mut Rng::new(seed).fork(DATA_STREAM))
}

fn fit(mut model: Sequential, splits: &Splits, opts: &TrainOptions) -> Result<ClassifierRun> {
    let report = train(
        &mut model,
        &Criterion::cross_entropy(),
        &splits.train,
        splits.validation.as_ref(),
        None,
        opts,
    )?;
    let batch = opts.eval_batch_size.max(256);
    let out = predict(&mut model, &splits.test, batch)?;
    let confusion = ConfusionMatrix::from_predictions(&out, splits.test.labels(), splits.test.num_classes())?;
    Ok(ClassifierRun {
        test_accuracy: confusion.accuracy(),
        confusion,
        report,
        model,
        sizes: SplitSizes {
            train: splits.train.len(),
            validation: splits.validation.as_ref().map_or(0, |v| v.len()),
            test: splits.test.len(),
        },
    })
}

pub fn run_mlp(cfg: &MlpConfig, splits: &Splits, seed: u64) -> Result<ClassifierRun> {
    let inputs = splits.train.data().row_len();
    let model = cfg.build(inputs, splits.train.num_classes(), &mut Rng::new(seed).fork(MODEL_STREAM))?;
    fit(model, splits, &TrainOptions { seed, ..cfg.train.clone() })
}

pub fn run_cnn(cfg: &CnnConfig, splits: &Splits, seed: u64) -> Result<ClassifierRun> {
    let model = cfg.arch.build(cfg.double_softmax, &mut Rng::new(seed).fork(MODEL_STREAM))?;
    cfg.arch.check_shapes(&model)?;
    fit(model, splits, &TrainOptions { seed, ..cfg.train.clone() })
}

/// Writes `loss.csv`, `loss.svg` and `confusion.csv` under `dir`.
pub fn write_classifier_artifacts(run: &ClassifierRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    run.report.write_csv(&dir.join("loss.csv"))?;
    std::fs::write(dir.join("loss.svg"), render_line_svg(&loss_plot(&run.report, true))?)?;
    run.confusion.write_csv(&dir.join("confusion.csv"))?;
    Ok(())
}

/// Filter grid of the first convolution in `model`.
pub fn first_conv_filters_svg(model: &Sequential) -> Result<String> {
    let w = model
        .parameters()
        .into_iter()
        .find(|p| p.name.ends_with("weight") && p.value.rank() == 4)
        .ok_or_else(|| Error::invalid("model has no convolution"))?;
    render_filter_grid_svg(w.value, 12)
}

pub fn summary_value(report: &TrainReport, extra: serde_json::Value) -> serde_json::Value {
    let mut v = report.summary_json();
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchArch {
    /// 784 -> 1000 -> 10.
    Mlp1000,
    /// 784 -> 300 -> 300 -> 300 -> 10.
    Mlp300x3,
    /// The figure CNN.
    Cnn,
}

impl BenchArch {
    pub fn name(self) -> &'static str {
        match self {
            BenchArch::Mlp1000 => "mlp-1000",
            BenchArch::Mlp300x3 => "mlp-300x3",
            BenchArch::Cnn => "cnn",
        }
    }

    pub fn build(self, rng: &mut Rng) -> Result<Sequential> {
        let mlp = |hidden: Vec<usize>, rng: &mut Rng| {
            let cfg = MlpConfig {
                hidden,
                ..MlpConfig::preset(MlpPreset::Torch)
            };
            cfg.build(784, 10, rng)
        };
        match self {
            BenchArch::Mlp1000 => mlp(vec![1000], rng),
            BenchArch::Mlp300x3 => mlp(vec![300, 300, 300], rng),
            BenchArch::Cnn => CnnArch::Figure.build(false, rng),
        }
    }

    pub fn flatten(self) -> bool {
        self != BenchArch::Cnn
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchBatch {
    /// One sample per update.
    Sgd,
    /// Batches of 1000.
    Mini,
    /// The whole training set per update.
    Full,
}

impl BenchBatch {
    pub fn name(self) -> &'static str {
        match self {
            BenchBatch::Sgd => "sgd",
            BenchBatch::Mini => "1000",
            BenchBatch::Full => "full",
        }
    }

    pub fn size(self, n: usize) -> usize {
        match self {
            BenchBatch::Sgd => 1,
            BenchBatch::Mini => 1000.min(n),
            BenchBatch::Full => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub arch: &'static str,
    pub batch_mode: &'static str,
    pub samples: usize,
    pub epochs: usize,
    pub repeats: usize,
    pub updates_per_run: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// Times `repeats` fresh training runs of `epochs` epochs each. No assertions.
pub fn run_bench(arch: BenchArch, mode: BenchBatch, train_ds: &LabeledDataset, epochs: usize, repeats: usize, seed: u64) -> Result<BenchRow> {
    if epochs == 0 || repeats == 0 {
        return Err(Error::invalid("bench: epochs and repeats must be positive"));
    }
    let batch = mode.size(train_ds.len());
    let opts = TrainOptions {
        nepochs: epochs,
        learning_rate: 0.01,
        batch_size: batch,
        grad_inf_norm_floor: 0.0,
        goal: f64::NEG_INFINITY,
        seed,
        ..TrainOptions::default()
    };
    let mut times = Vec::with_capacity(repeats);
    let mut updates = 0;
    for r in 0..repeats {
        let mut model = arch.build(&mut Rng::new(seed).fork(MODEL_STREAM + r as u64))?;
        let started = Instant::now();
        let report = train(&mut model, &Criterion::cross_entropy(), train_ds, None, None, &opts)?;
        times.push(started.elapsed().as_secs_f64());
        updates = report.epochs_run * train_ds.len().div_ceil(batch);
    }
    let mean = times.iter().sum::<f64>() / repeats as f64;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / repeats as f64;
    Ok(BenchRow {
        arch: arch.name(),
        batch_mode: mode.name(),
        samples: train_ds.len(),
        epochs,
        repeats,
        updates_per_run: updates,
        mean_seconds: mean,
        std_seconds: var.sqrt(),
    })
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy of `model` on `ds`, evaluated in batches of 1000.
pub fn dataset_accuracy(model: &mut dyn Module, ds: &LabeledDataset) -> Result<f64> {
    model_accuracy(model, ds, 1000)
}
