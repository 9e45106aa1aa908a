use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use scratchnet::data::{idx, XorEncoding};
use scratchnet::experiments::{
    first_conv_filters_svg, mnist_splits, run_bench, run_cnn, run_mlp, run_xor, summary_value, write_bench_csv,
    write_classifier_artifacts, xor_surface_svg, BenchArch, BenchBatch, ClassifierRun, CnnArch, CnnConfig, MlpConfig,
    MlpPreset, XorConfig, XorLoss, XorPreset,
};
use scratchnet::nn::ActivationKind;
use scratchnet::parity::{verify_truth_table, DeepParityNet, ShallowParityNet, MAX_SHALLOW_ARITY, MAX_VERIFY_ARITY};
use scratchnet::report::{loss_plot, render_line_svg};
use scratchnet::training::OptimizerKind;
use scratchnet::Error;

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISSING_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "scratchnet", version, about = "Train and verify the reference experiments")]
struct Cli {
    /// Seed for initialization, shuffling and sampling.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Directory for reports.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true, default_value = "data/mnist")]
    data_dir: PathBuf,
    /// Worker threads for batched evaluation.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-input XOR with a small hidden layer.
    Xor(XorArgs),
    /// 784-300-10 multilayer perceptron on MNIST.
    MnistMlp(MlpArgs),
    /// Convolutional networks on MNIST.
    MnistCnn(CnnArgs),
    /// Hand-built n-bit parity networks, verified on the full truth table.
    Xorn(XornArgs),
    /// Training-time table; reports timings only.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum XorPresetArg {
    TorchXor,
    TfXor,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Tanh,
    Sigmoid,
    Relu,
    Identity,
}

impl From<ActivationArg> for ActivationKind {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => ActivationKind::Tanh,
            ActivationArg::Sigmoid => ActivationKind::Sigmoid,
            ActivationArg::Relu => ActivationKind::Relu,
            ActivationArg::Identity => ActivationKind::Identity,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Shifted,
    ZeroOne,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Mse,
    MseSum,
}

#[derive(Args)]
struct XorArgs {
    #[arg(long, value_enum, default_value = "torch-xor")]
    preset: XorPresetArg,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    /// Output-layer transfer function.
    #[arg(long, value_enum)]
    output: Option<ActivationArg>,
    #[arg(long, value_enum)]
    encoding: Option<EncodingArg>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Random points drawn to trace the separation surface.
    #[arg(long, default_value_t = 1_000_000)]
    surface_points: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MlpPresetArg {
    TorchMnistMlp,
    TfMnistMlp,
}

#[derive(Args)]
struct MlpArgs {
    #[arg(long, value_enum, default_value = "torch-mnist-mlp")]
    preset: MlpPresetArg,
    /// Hidden layer widths (repeat for deeper nets).
    #[arg(long, num_args = 1..)]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Keep only the first N training-file samples.
    #[arg(long)]
    subset: Option<usize>,
    /// Put a softmax layer in front of the logits loss.
    #[arg(long)]
    double_softmax: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Figure,
    HalfRes,
    TfSame,
}

impl From<ArchArg> for CnnArch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Figure => CnnArch::Figure,
            ArchArg::HalfRes => CnnArch::HalfRes,
            ArchArg::TfSame => CnnArch::TfSame,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Gd,
    Sgdm,
    Adam,
}

#[derive(Args)]
struct CnnArgs {
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    double_softmax: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModeArg {
    Deep,
    Shallow,
    Both,
}

#[derive(Args)]
struct XornArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BenchArchArg {
    #[value(name = "mlp-1000")]
    Mlp1000,
    #[value(name = "mlp-300x3")]
    Mlp300x3,
    Cnn,
    All,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BatchModeArg {
    Sgd,
    #[value(name = "1000")]
    Mini,
    Full,
    All,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    arch: BenchArchArg,
    #[arg(long, value_enum, default_value = "all")]
    batch_mode: BatchModeArg,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    subset: Option<usize>,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => Failure::Usage(m),
            other => Failure::Lib(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<bool, Failure>;

fn positive(name: &str, v: Option<usize>) -> Result<(), Failure> {
    match v {
        Some(0) => Err(Failure::Usage(format!("--{name} must be positive"))),
        _ => Ok(()),
    }
}

fn positive_f(name: &str, v: Option<f64>) -> Result<(), Failure> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Failure::Usage(format!("--{name} must be positive"))),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(v).expect("json value") + "\n")?;
    Ok(())
}

fn load_mnist(dir: &Path) -> Result<idx::Mnist, Failure> {
    Ok(idx::Mnist::load(dir)?)
}

fn xor(cli: &Cli, a: &XorArgs) -> Outcome {
    positive("hidden", a.hidden)?;
    positive("epochs", a.epochs)?;
    positive_f("lr", a.lr)?;
    let mut cfg = XorConfig::preset(match a.preset {
        XorPresetArg::TorchXor => XorPreset::Torch,
        XorPresetArg::TfXor => XorPreset::Tf,
    });
    cfg.hidden = a.hidden.unwrap_or(cfg.hidden);
    cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.activation = a.activation.map_or(cfg.activation, Into::into);
    cfg.output = a.output.map_or(cfg.output, Into::into);
    if let Some(e) = a.encoding {
        cfg.encoding = match e {
            EncodingArg::Shifted => XorEncoding::Shifted,
            EncodingArg::ZeroOne => XorEncoding::ZeroOne,
        };
    }
    if let Some(l) = a.loss {
        cfg.loss = match l {
            LossArg::Mse => XorLoss::Mse,
            LossArg::MseSum => XorLoss::MseSum,
        };
    }
    let mut run = run_xor(&cfg, cli.seed)?;
    fs::create_dir_all(&cli.out_dir)?;
    run.report.write_csv(&cli.out_dir.join("loss.csv"))?;
    fs::write(cli.out_dir.join("loss.svg"), render_line_svg(&loss_plot(&run.report, false))?)?;
    let (sample, svg) = xor_surface_svg(&cfg, &mut run, a.surface_points, cli.seed)?;
    fs::write(cli.out_dir.join("surface.svg"), svg)?;
    let summary = summary_value(
        &run.report,
        json!({
            "experiment": "xor",
            "seed": cli.seed,
            "config": cfg,
            "outputs": run.outputs.data(),
            "correct": run.correct,
            "surface_points": sample.points.len(),
        }),
    );
    write_json(&cli.out_dir.join("summary.json"), &summary)?;
    println!(
        "xor: {}/4 correct after {} epochs (final loss {:.6})",
        run.correct,
        run.report.epochs_run,
        run.report.train_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(run.all_correct())
}

fn classifier_outputs(cli: &Cli, run: &ClassifierRun, experiment: &str, config: serde_json::Value) -> Result<(), Failure> {
    write_classifier_artifacts(run, &cli.out_dir)?;
    let summary = summary_value(
        &run.report,
        json!({
            "experiment": experiment,
            "seed": cli.seed,
            "config": config,
            "test_accuracy": run.test_accuracy,
            "samples": run.sizes,
        }),
    );
    write_json(&cli.out_dir.join("summary.json"), &summary)?;
    println!(
        "{experiment}: test accuracy {:.4} after {} epochs ({})",
        run.test_accuracy, run.report.epochs_run, run.report.stop_reason
    );
    Ok(())
}

fn mnist_mlp(cli: &Cli, a: &MlpArgs) -> Outcome {
    positive("patience", a.patience)?;
    positive("batch-size", a.batch_size)?;
    positive("epochs", a.epochs)?;
    positive("subset", a.subset)?;
    positive_f("lr", a.lr)?;
    let mut cfg = MlpConfig::preset(match a.preset {
        MlpPresetArg::TorchMnistMlp => MlpPreset::Torch,
        MlpPresetArg::TfMnistMlp => MlpPreset::Tf,
    });
    if let Some(h) = &a.hidden {
        cfg.hidden = h.clone();
    }
    cfg.double_softmax |= a.double_softmax;
    let t = &mut cfg.train;
    t.patience = a.patience.unwrap_or(t.patience);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.nepochs = a.epochs.unwrap_or(t.nepochs);
    t.threads = cli.threads as usize;
    let mnist = load_mnist(&cli.data_dir)?;
    let splits = mnist_splits(&mnist, true, a.subset, cfg.split, cli.seed)?;
    let run = run_mlp(&cfg, &splits, cli.seed)?;
    classifier_outputs(cli, &run, "mnist-mlp", json!(cfg))?;
    Ok(true)
}

fn mnist_cnn(cli: &Cli, a: &CnnArgs) -> Outcome {
    positive("patience", a.patience)?;
    positive("batch-size", a.batch_size)?;
    positive("epochs", a.epochs)?;
    positive("subset", a.subset)?;
    positive_f("lr", a.lr)?;
    let mut cfg = CnnConfig::preset(a.arch.into()).with_subset(a.subset);
    cfg.double_softmax |= a.double_softmax;
    let t = &mut cfg.train;
    if let Some(o) = a.optimizer {
        t.optimizer = match o {
            OptimizerArg::Gd => OptimizerKind::Gd,
            OptimizerArg::Sgdm => OptimizerKind::SgdMomentum,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    t.patience = a.patience.unwrap_or(t.patience);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.nepochs = a.epochs.unwrap_or(t.nepochs);
    t.threads = cli.threads as usize;
    let mnist = load_mnist(&cli.data_dir)?;
    let splits = mnist_splits(&mnist, false, a.subset, cfg.split, cli.seed)?;
    let run = run_cnn(&cfg, &splits, cli.seed)?;
    fs::create_dir_all(&cli.out_dir)?;
    fs::write(cli.out_dir.join("filters.svg"), first_conv_filters_svg(&run.model)?)?;
    let trace = cfg.arch.check_shapes(&run.model)?;
    classifier_outputs(cli, &run, "mnist-cnn", json!({ "preset": cfg, "shape_trace": trace }))?;
    Ok(true)
}

fn xorn(cli: &Cli, a: &XornArgs) -> Outcome {
    if a.n < 2 || a.n > MAX_VERIFY_ARITY {
        return Err(Failure::Usage(format!("--n must lie in 2..={MAX_VERIFY_ARITY}")));
    }
    if a.mode != ModeArg::Deep && a.n > MAX_SHALLOW_ARITY {
        return Err(Failure::Usage(format!("shallow nets are limited to n <= {MAX_SHALLOW_ARITY}")));
    }
    fs::create_dir_all(&cli.out_dir)?;
    let mut exact = true;
    let mut summary = serde_json::Map::new();
    summary.insert("n".into(), json!(a.n));
    if a.mode != ModeArg::Shallow {
        let mut net = DeepParityNet::new(a.n)?;
        let r = verify_truth_table(&mut net, a.n)?;
        println!(
            "deep: {} neurons, {} layers, accuracy {} ({} errors)",
            net.neuron_count(),
            net.layer_count(),
            r.accuracy,
            r.errors
        );
        exact &= r.exact();
        fs::write(cli.out_dir.join("deep_net.json"), net.spec().to_json())?;
        summary.insert(
            "deep".into(),
            json!({"neurons": net.neuron_count(), "layers": net.layer_count(), "verification": r}),
        );
    }
    if a.mode != ModeArg::Deep {
        let mut net = ShallowParityNet::new(a.n)?;
        let r = verify_truth_table(&mut net, a.n)?;
        println!(
            "shallow: {} neurons, {} layers, accuracy {} ({} errors)",
            net.neuron_count(),
            net.layer_count(),
            r.accuracy,
            r.errors
        );
        exact &= r.exact();
        fs::write(cli.out_dir.join("shallow_net.json"), net.spec().to_json())?;
        summary.insert(
            "shallow".into(),
            json!({"neurons": net.neuron_count(), "layers": net.layer_count(), "verification": r}),
        );
    }
    summary.insert("exact".into(), json!(exact));
    write_json(&cli.out_dir.join("summary.json"), &serde_json::Value::Object(summary))?;
    Ok(exact)
}

fn bench(cli: &Cli, a: &BenchArgs) -> Outcome {
    positive("epochs", Some(a.epochs))?;
    positive("repeats", Some(a.repeats))?;
    positive("subset", a.subset)?;
    let archs: Vec<BenchArch> = match a.arch {
        BenchArchArg::Mlp1000 => vec![BenchArch::Mlp1000],
        BenchArchArg::Mlp300x3 => vec![BenchArch::Mlp300x3],
        BenchArchArg::Cnn => vec![BenchArch::Cnn],
        BenchArchArg::All => vec![BenchArch::Mlp1000, BenchArch::Mlp300x3, BenchArch::Cnn],
    };
    let modes: Vec<BenchBatch> = match a.batch_mode {
        BatchModeArg::Sgd => vec![BenchBatch::Sgd],
        BatchModeArg::Mini => vec![BenchBatch::Mini],
        BatchModeArg::Full => vec![BenchBatch::Full],
        BatchModeArg::All => vec![BenchBatch::Sgd, BenchBatch::Mini, BenchBatch::Full],
    };
    let mnist = load_mnist(&cli.data_dir)?;
    fs::create_dir_all(&cli.out_dir)?;
    let mut rows = Vec::new();
    println!("{:<10} {:>6} {:>8} {:>12} {:>10}", "arch", "batch", "updates", "mean [s]", "std [s]");
    for arch in archs {
        let (train, _) = mnist.datasets(arch.flatten(), a.subset)?;
        for &mode in &modes {
            let row = run_bench(arch, mode, &train, a.epochs, a.repeats, cli.seed)?;
            println!(
                "{:<10} {:>6} {:>8} {:>12.3} {:>10.3}",
                row.arch, row.batch_mode, row.updates_per_run, row.mean_seconds, row.std_seconds
            );
            rows.push(row);
        }
    }
    write_bench_csv(&rows, &cli.out_dir.join("bench.csv"))?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Xor(a) => xor(&cli, a),
        Command::MnistMlp(a) => mnist_mlp(&cli, a),
        Command::MnistCnn(a) => mnist_cnn(&cli, a),
        Command::Xorn(a) => xorn(&cli, a),
        Command::Bench(a) => bench(&cli, a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e @ Error::MissingData { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_MISSING_DATA)
        }
        Err(Failure::Lib(e @ Error::NonFiniteLoss { .. })) => {
            eprintln!("error: training diverged: {e}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
