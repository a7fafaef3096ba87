use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cvnn_core::activations::Activation;
use cvnn_core::kv::KvDoc;
use cvnn_core::network::{save_checkpoint, LayerSpec, Network, Shape, ThresholdMode};
use cvnn_core::stats::TRACE_HEADER;
use cvnn_core::Complex;
use tempfile::TempDir;

fn cvnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvnn")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &TempDir, body: &str) -> std::path::PathBuf {
    let path = dir.path().join("run.conf");
    fs::write(&path, body).unwrap();
    path
}

const SYNTHETIC: &str = "dataset = synthetic\ninput_dim = 4\ntrain_size = 64\ntest_size = 32\n\
                         architecture = fc:6 splittanh, fc:2\nloss = l2\nbatch_size = 16\nseed = 2\n";

fn identity_checkpoint(dir: &TempDir) -> std::path::PathBuf {
    let mut net = Network::zeroed(Shape::flat(2), &[LayerSpec::dense(2, 2, None)], ThresholdMode::Zero).unwrap();
    net.layers_mut()[0].weights = vec![
        Complex::new(1.0, 0.0),
        Complex::new(0.0, 0.0),
        Complex::new(0.0, 0.0),
        Complex::new(1.0, 0.0),
    ];
    let path = dir.path().join("identity.json");
    save_checkpoint(&net, &path).unwrap();
    path
}

#[test]
fn one_epoch_writes_header_and_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{SYNTHETIC}epochs = 1\n"));
    let out = cvnn(&["train", p(&cfg)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], TRACE_HEADER);
    assert!(lines[1].starts_with("1,"));
    for f in ["checkpoint.json", "report.txt", "summary.txt"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn analysis_cadence_keeps_final_epoch() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{SYNTHETIC}epochs = 7\nanalysis_every = 3\n"));
    assert_eq!(code(&cvnn(&["train", p(&cfg)])), 0);
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let epochs: Vec<&str> = trace.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["3", "6", "7"]);
}

#[test]
fn identity_network_has_r_a_two() {
    let dir = TempDir::new().unwrap();
    let ck = identity_checkpoint(&dir);
    let rep = dir.path().join("report.txt");
    let out = cvnn(&["analyze", p(&ck), "--out", p(&rep)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = KvDoc::parse(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert!((doc.require_f64("r_a").unwrap() - 2.0).abs() < 1e-12);
    assert!((doc.require_f64("sn_product").unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_network_reports_zero() {
    let dir = TempDir::new().unwrap();
    let net = Network::zeroed(
        Shape::flat(3),
        &[LayerSpec::dense(3, 4, Some(Activation::CReLU)), LayerSpec::dense(4, 2, None)],
        ThresholdMode::Zero,
    )
    .unwrap();
    let ck = dir.path().join("zero.json");
    save_checkpoint(&net, &ck).unwrap();
    let rep = dir.path().join("report.txt");
    assert_eq!(code(&cvnn(&["analyze", p(&ck), "--out", p(&rep)])), 0);
    let doc = KvDoc::parse(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(doc.require_f64("sn_product").unwrap(), 0.0);
    assert_eq!(doc.require_f64("r_a").unwrap(), 0.0);
}

#[test]
fn analyze_rejects_wrong_input_shape() {
    let dir = TempDir::new().unwrap();
    let ck = identity_checkpoint(&dir);
    let rep = dir.path().join("r.txt");
    let out = cvnn(&["analyze", p(&ck), "--input-shape", "1x2x2", "--out", p(&rep)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let ck = dir.path().join("bad.json");
    fs::write(&ck, "{\"version\": 1, \"layers\": [").unwrap();
    let rep = dir.path().join("r.txt");
    assert_eq!(code(&cvnn(&["analyze", p(&ck), "--out", p(&rep)])), 3);
}

#[test]
fn bounds_echo_inputs_and_result() {
    let out = cvnn(&[
        "bounds", "--mode", "iid", "--r-a", "2", "--m", "1", "--n", "1000", "--w", "10", "--z-norm", "5", "--delta",
        "0.05",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for key in ["mode = iid", "M = ", "W = 10", "z_norm = ", "r_a = ", "n = 1000", "delta = ", "bound = "] {
        assert!(text.contains(key), "missing `{key}` in {text}");
    }
    let pac = cvnn(&[
        "bounds", "--mode", "pac", "--r-a", "2", "--m", "1", "--w", "10", "--z-norm", "5", "--delta", "0.05",
        "--eps", "0.1",
    ]);
    assert_eq!(code(&pac), 0);
    assert!(stdout(&pac).contains("n_min = "));
}

#[test]
fn bounds_from_report() {
    let dir = TempDir::new().unwrap();
    let ck = identity_checkpoint(&dir);
    let rep = dir.path().join("report.txt");
    assert_eq!(code(&cvnn(&["analyze", p(&ck), "--out", p(&rep)])), 0);
    let out = cvnn(&[
        "bounds", "--mode", "rademacher", "--report", p(&rep), "--m", "1", "--n", "100", "--z-norm", "3",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("r_a = 2.00000000000e0"), "{text}");
    assert!(text.contains("W = 2"), "{text}");
}

#[test]
fn bad_bound_inputs_are_config_errors() {
    let base = ["bounds", "--r-a", "2", "--m", "1", "--n", "100", "--w", "10", "--z-norm", "5"];
    for delta in ["0", "1", "1.5", "-0.1"] {
        let mut args = base.to_vec();
        args.extend(["--mode", "iid", "--delta", delta]);
        assert_eq!(code(&cvnn(&args)), 2, "delta {delta}");
    }
    let mut args = base.to_vec();
    args.extend(["--mode", "sequential"]);
    assert_eq!(code(&cvnn(&args)), 2);
    let mut args = base.to_vec();
    args.extend(["--mode", "nope", "--delta", "0.1"]);
    assert_ne!(code(&cvnn(&args)), 0);
}

#[test]
fn stats_on_monotone_trace() {
    let dir = TempDir::new().unwrap();
    let mut csv = format!("{TRACE_HEADER}\n");
    for e in 1..=8 {
        let x = e as f64;
        csv.push_str(&format!("{e},0.5,0.9,0.8,{},{},,1;{}\n", 0.01 * x, 10.0 * x, 10.0 * x));
    }
    let path = dir.path().join("trace.csv");
    fs::write(&path, csv).unwrap();
    let out = cvnn(&["stats", p(&path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("scc=1.00000000000e0"), "{text}");
    assert!(text.contains("method=exact"), "{text}");

    fs::write(&path, "epoch,oops\n1,2\n").unwrap();
    assert_eq!(code(&cvnn(&["stats", p(&path)])), 3);
}

#[test]
fn lipschitz_probe_reports_declared_constant() {
    let out = cvnn(&["lipschitz-probe", "amptanh", "--domain-bound", "2", "--pairs", "2000"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("declared = 5.00000000000e0"));
    let out = cvnn(&["lipschitz-probe", "modrelu(-0.5)", "--pairs", "2000"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("declared = unknown"));
    assert_eq!(code(&cvnn(&["lipschitz-probe", "sigmoid"])), 2);
}

#[test]
fn cover_lab_writes_report() {
    let dir = TempDir::new().unwrap();
    let rep = dir.path().join("cover.txt");
    let out = cvnn(&["cover-lab", "--samples", "10", "--out", p(&rep)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let doc = KvDoc::parse(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(doc.require_f64("fraction_within_sqrt2_eps").unwrap(), 1.0);
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    for body in [
        format!("{SYNTHETIC}colour = blue\n"),
        format!("{SYNTHETIC}seed = 3\n"),
        format!("{SYNTHETIC}epochs = 0\n"),
        "dataset = synthetic\ntrain_size = 8\n".to_string(),
        "architecture = fc:10, abs\ntrain_images = missing\n".to_string(),
    ] {
        let cfg = write_config(&dir, &body);
        assert_eq!(code(&cvnn(&["train", p(&cfg)])), 2, "{body}");
    }
    assert_eq!(code(&cvnn(&["train", p(&dir.path().join("absent.conf"))])), 2);
}

#[test]
fn loss_must_match_head() {
    let dir = TempDir::new().unwrap();
    let body = SYNTHETIC.replace("loss = l2", "loss = cross_entropy");
    let cfg = write_config(&dir, &format!("{body}epochs = 1\n"));
    assert_eq!(code(&cvnn(&["train", p(&cfg)])), 2);
}

#[test]
fn corrupt_idx_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("img");
    let lab = dir.path().join("lab");
    fs::write(&img, [0u8, 0, 8, 3, 0, 0, 0, 1]).unwrap();
    fs::write(&lab, [0u8, 0, 8, 1, 0, 0, 0, 1, 4]).unwrap();
    let body = format!(
        "train_images = {0}\ntrain_labels = {1}\ntest_images = {0}\ntest_labels = {1}\n\
         architecture = fc:10, abs\nepochs = 1\n",
        p(&img),
        p(&lab)
    );
    let cfg = write_config(&dir, &body);
    assert_eq!(code(&cvnn(&["train", p(&cfg)])), 3);
}
