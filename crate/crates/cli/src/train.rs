//! The training command.

use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

use cvnn_core::datasets::{load_idx, subsample, synthetic_regression, Dataset, Split};
use cvnn_core::kv::KvDoc;
use cvnn_core::network::{
    accuracy, per_sample_losses, save_checkpoint, sgd_step, Loss, LossKind, Network, SgdState, Shape, Targets,
};
use cvnn_core::rng;
use cvnn_core::spectral::{analyze, AnalyzeOptions, SpectralReport};
use cvnn_core::stats::{excess_risk, EpochRecord, TrainingTrace, TRACE_HEADER};
use rand::seq::SliceRandom;

use crate::config::{parse_architecture, DatasetKind, ExperimentConfig};
use crate::CliError;

pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.txt";

// Rows per forward pass when evaluating a whole split.
const EVAL_CHUNK: usize = 500;

#[derive(Debug)]
pub struct TrainOutcome {
    pub trace: TrainingTrace,
    pub network: Network,
    pub report: SpectralReport,
    pub trace_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
    pub summary_path: PathBuf,
}

struct Eval {
    loss: f64,
    acc: f64,
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), CliError> {
    match cfg.dataset {
        DatasetKind::Mnist => {
            let path = |p: &Option<PathBuf>| p.clone().expect("validated");
            let train = load_idx(&path(&cfg.train_images), &path(&cfg.train_labels), Split::Train)?;
            let test = load_idx(&path(&cfg.test_images), &path(&cfg.test_labels), Split::Test)?;
            let train = if cfg.train_size > 0 { subsample(&train, cfg.train_size, cfg.seed)? } else { train };
            let test = if cfg.test_size > 0 {
                subsample(&test, cfg.test_size, cfg.seed.wrapping_add(1))?
            } else {
                test
            };
            Ok((train, test))
        }
        DatasetKind::Synthetic => {
            let shape = Shape::flat(cfg.input_dim);
            let specs = parse_architecture(&cfg.architecture, shape)?;
            let teacher = Network::new(shape, &specs, cfg.threshold_mode, cfg.teacher_seed)?;
            let train = synthetic_regression(cfg.train_size, cfg.input_dim, &teacher, cfg.noise, cfg.seed)?;
            let mut test =
                synthetic_regression(cfg.test_size, cfg.input_dim, &teacher, cfg.noise, cfg.seed.wrapping_add(1))?;
            test.split = Split::Test;
            Ok((train, test))
        }
    }
}

fn evaluate(net: &Network, ds: &Dataset, kind: LossKind, hit_radius: f64, loss: &mut Loss) -> Result<Eval, CliError> {
    let (mut total_loss, mut hits) = (0.0, 0.0);
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let part = ds.select(chunk);
        let out = net.forward(&part.inputs)?;
        let losses = per_sample_losses(kind, &out, &part.targets)?;
        for &l in &losses {
            loss.observe(l);
        }
        total_loss += losses.iter().sum::<f64>();
        hits += match &part.targets {
            Targets::Labels(l) => accuracy(&out, l)? * chunk.len() as f64,
            Targets::Complex(_) => losses.iter().filter(|&&l| l <= hit_radius).count() as f64,
        };
    }
    let n = ds.len() as f64;
    let loss = total_loss / n;
    if !loss.is_finite() {
        return Err(CliError::Runtime(cvnn_core::Error::NonFinite("training loss")));
    }
    Ok(Eval { loss, acc: hits / n })
}

fn analysis_options(cfg: &ExperimentConfig) -> AnalyzeOptions {
    AnalyzeOptions {
        amplitude_bound: cfg.amplitude_bound,
        probe_seed: cfg.seed,
        ..AnalyzeOptions::default()
    }
}

fn run_analysis(net: &Network, cfg: &ExperimentConfig, epoch: usize) -> Result<SpectralReport, CliError> {
    let report = analyze(net, &analysis_options(cfg))?;
    if cfg.strict_convergence && !report.all_converged() {
        return Err(CliError::NonConvergence(format!(
            "epoch {epoch}: power iteration did not converge for every layer"
        )));
    }
    Ok(report)
}

/// Trains per the config, appending one trace row per analysed epoch, and
/// writes the final checkpoint, spectral report and run summary into the
/// output directory. Deterministic for a fixed config.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome, CliError> {
    let (train, test) = load_data(cfg)?;
    let specs = parse_architecture(&cfg.architecture, train.shape)?;
    let mut net = Network::new(train.shape, &specs, cfg.threshold_mode, cfg.seed)?;
    match (cfg.loss, net.has_abs_head()) {
        (LossKind::CrossEntropy, false) => {
            return Err(CliError::Config("cross_entropy needs an architecture ending in `abs`".into()))
        }
        (LossKind::L2, true) => return Err(CliError::Config("l2 loss needs complex outputs, drop `abs`".into())),
        _ => {}
    }
    if matches!(train.targets, Targets::Labels(_)) != (cfg.loss == LossKind::CrossEntropy) {
        return Err(CliError::Config(format!("loss `{}` does not fit the dataset targets", cfg.loss)));
    }

    fs::create_dir_all(&cfg.output_dir)?;
    let trace_path = cfg.output_dir.join(TRACE_FILE);
    let mut trace_file = File::create(&trace_path)?;
    trace_file.write_all(format!("{TRACE_HEADER}\n").as_bytes())?;
    trace_file.flush()?;

    let mut trace = TrainingTrace::new();
    let mut state = SgdState::new();
    let mut ceiling = Loss::new(cfg.loss);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut last_report = None;
    for epoch in 1..=cfg.epochs {
        let lr = match cfg.lr_decay_step {
            0 => cfg.lr,
            step => cfg.lr * cfg.lr_decay_factor.powi(((epoch - 1) / step) as i32),
        };
        order.shuffle(&mut rng::derived(cfg.seed, epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let part = train.select(batch);
            let res = net.backward(&part.inputs, &part.targets, cfg.loss)?;
            ceiling.observe(res.max_sample_loss);
            sgd_step(&mut net, &res.grads, lr, cfg.momentum, &mut state)?;
        }
        if epoch % cfg.analysis_every != 0 && epoch != cfg.epochs {
            continue;
        }
        let tr = evaluate(&net, &train, cfg.loss, cfg.hit_radius, &mut ceiling)?;
        let te = evaluate(&net, &test, cfg.loss, cfg.hit_radius, &mut Loss::new(cfg.loss))?;
        let report = run_analysis(&net, cfg, epoch)?;
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_acc: tr.acc,
            test_acc: te.acc,
            excess_risk: excess_risk(tr.acc, te.acc)?,
            sn_product: report.sn_product,
            r_a: report.r_a,
            layer_norms: report.layers.iter().map(|l| l.s).collect(),
        };
        // One write per row keeps appends row-atomic.
        trace_file.write_all(record.csv_line().as_bytes())?;
        trace_file.flush()?;
        trace.push(record)?;
        last_report = Some(report);
    }
    let report = last_report.expect("the final epoch is always analysed");

    let checkpoint_path = cfg.output_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&net, &checkpoint_path)?;
    let report_path = cfg.output_dir.join(REPORT_FILE);
    fs::write(&report_path, report.render())?;
    let mut summary = KvDoc::new();
    summary.push("n_train", train.len());
    summary.push("n_test", test.len());
    summary.push("width", net.max_width());
    summary.push("depth", net.depth());
    summary.push_f64("loss_ceiling", ceiling.ceiling);
    summary.push_f64("z_norm", train.inputs.frobenius_norm());
    let summary_path = cfg.output_dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary.render())?;

    Ok(TrainOutcome {
        trace,
        network: net,
        report,
        trace_path,
        checkpoint_path,
        report_path,
        summary_path,
    })
}
