use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use scratchnet::data::idx::write_fixture;
use serde_json::Value;

fn scratchnet(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scratchnet"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 400, 100, 28, 28, 9).unwrap();
    dir
}

#[test]
fn xorn_reports_counts_and_writes_specs() {
    let out = tempfile::tempdir().unwrap();
    let o = scratchnet(&["xorn", "--n", "10", "--mode", "both"], out.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("deep: 27 neurons, 18 layers"));
    assert!(stdout.contains("shallow: 513 neurons, 2 layers"));
    let deep = json(&out.path().join("deep_net.json"));
    assert_eq!(deep["neurons"], 27);
    assert_eq!(deep["layers"], 18);
    let shallow = json(&out.path().join("shallow_net.json"));
    assert_eq!(shallow["neurons"], 513);
    let summary = json(&out.path().join("summary.json"));
    assert_eq!(summary["exact"], true);
}

#[test]
fn xorn_rejects_bad_arity() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&scratchnet(&["xorn", "--n", "1"], out.path())), 2);
    assert_eq!(code(&scratchnet(&["xorn", "--n", "21", "--mode", "shallow"], out.path())), 2);
    assert_eq!(code(&scratchnet(&["xorn"], out.path())), 2);
}

#[test]
fn usage_errors_exit_two() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&scratchnet(&["xor", "--hidden", "0"], out.path())), 2);
    assert_eq!(code(&scratchnet(&["xor", "--lr", "0"], out.path())), 2);
    assert_eq!(code(&scratchnet(&["xor", "--preset", "nope"], out.path())), 2);
    assert_eq!(code(&scratchnet(&["no-such-command"], out.path())), 2);
}

#[test]
fn xor_default_seed_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let o = scratchnet(&["xor", "--surface-points", "50000"], out.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["loss.csv", "loss.svg", "surface.svg", "summary.json"] {
        assert!(out.path().join(f).exists(), "{f} missing");
    }
    let loss = fs::read_to_string(out.path().join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1001);
    let svg = fs::read_to_string(out.path().join("surface.svg")).unwrap();
    assert!(svg.starts_with("<?xml") || svg.starts_with("<svg"));
    assert!(svg.matches("<circle").count() > 4);
}

#[test]
fn xor_failing_seed_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let o = scratchnet(&["xor", "--seed", "0", "--surface-points", "1000"], out.path());
    assert_eq!(code(&o), 1);
    let tf = scratchnet(&["xor", "--preset", "tf-xor", "--seed", "0", "--surface-points", "1000"], out.path());
    assert_eq!(code(&tf), 0);
}

#[test]
fn xor_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["xor", "--preset", "tf-xor", "--seed", "4", "--surface-points", "20000"];
    assert_eq!(code(&scratchnet(&args, a.path())), 0);
    assert_eq!(code(&scratchnet(&args, b.path())), 0);
    for f in ["loss.csv", "surface.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_mnist_exits_three() {
    let out = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    let data = empty.path().to_str().unwrap();
    let o = scratchnet(&["mnist-mlp", "--data-dir", data], out.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-images-idx3-ubyte"));
    assert_eq!(code(&scratchnet(&["mnist-cnn", "--arch", "figure", "--data-dir", data], out.path())), 3);
    assert_eq!(code(&scratchnet(&["bench", "--data-dir", data], out.path())), 3);
}

#[test]
fn mlp_on_fixture_writes_reports() {
    let data = fixture();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "mnist-mlp",
        "--data-dir",
        data.path().to_str().unwrap(),
        "--hidden",
        "32",
        "--epochs",
        "4",
    ];
    for out in [&a, &b] {
        let o = scratchnet(&args, out.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["loss.csv", "confusion.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let confusion = fs::read_to_string(a.path().join("confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 11);
    let total: usize = confusion
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|v| v.parse::<usize>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert_eq!(total, 100);
    let summary = json(&a.path().join("summary.json"));
    assert!(summary["test_accuracy"].as_f64().is_some());
}

#[test]
fn cnn_on_fixture_writes_filters() {
    let data = fixture();
    let out = tempfile::tempdir().unwrap();
    let o = scratchnet(
        &[
            "mnist-cnn",
            "--arch",
            "half-res",
            "--data-dir",
            data.path().to_str().unwrap(),
            "--epochs",
            "1",
            "--subset",
            "200",
        ],
        out.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["loss.csv", "loss.svg", "confusion.csv", "summary.json", "filters.svg"] {
        assert!(out.path().join(f).exists(), "{f} missing");
    }
    let filters = fs::read_to_string(out.path().join("filters.svg")).unwrap();
    assert_eq!(filters.matches("class=\"filter\"").count(), 12);
}

#[test]
fn bench_on_fixture_writes_table() {
    let data = fixture();
    let out = tempfile::tempdir().unwrap();
    let o = scratchnet(
        &[
            "bench",
            "--arch",
            "mlp-1000",
            "--batch-mode",
            "full",
            "--epochs",
            "1",
            "--repeats",
            "2",
            "--data-dir",
            data.path().to_str().unwrap(),
        ],
        out.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("mlp-1000,full,"));
}
