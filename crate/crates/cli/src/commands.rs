//! Analysis, bound, covering, statistics and probe commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cvnn_core::activations::Activation;
use cvnn_core::covering::{lemma1_cover_check, CoverReport};
use cvnn_core::linalg::CMatrix;
use cvnn_core::network::{load_checkpoint, Shape};
use cvnn_core::rng;
use cvnn_core::spectral::{
    analyze, bound_iid, bound_sequential, pac_sample_size, rademacher_bound, AnalyzeOptions, BoundInputs,
    SpectralReport,
};
use cvnn_core::stats::{correlate_trace, Correlation, TrainingTrace};

use crate::CliError;

/// Twelve significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Analyses a checkpoint and writes the report to `out`. The report is
/// written even when the command then fails in strict mode.
pub fn cmd_analyze(
    checkpoint: &Path,
    input_shape: Option<Shape>,
    out: &Path,
    opts: &AnalyzeOptions,
    strict: bool,
) -> Result<SpectralReport, CliError> {
    let net = load_checkpoint(checkpoint)?;
    if let Some(shape) = input_shape {
        if shape != net.input_shape() {
            return Err(CliError::Config(format!(
                "input shape {shape} does not match the checkpoint's {}",
                net.input_shape()
            )));
        }
    }
    let report = analyze(&net, opts)?;
    fs::write(out, report.render())?;
    if strict && !report.all_converged() {
        return Err(CliError::NonConvergence("power iteration did not converge for every layer".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    Iid,
    Sequential,
    Rademacher,
    Pac,
}

impl FromStr for BoundMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "iid" => Ok(BoundMode::Iid),
            "sequential" => Ok(BoundMode::Sequential),
            "rademacher" => Ok(BoundMode::Rademacher),
            "pac" => Ok(BoundMode::Pac),
            other => Err(CliError::Config(format!("unknown bound mode `{other}`"))),
        }
    }
}

/// Inputs to [`cmd_bounds`]. `r_a` and `w` default to the report's values
/// when a report is given.
#[derive(Debug, Clone, Default)]
pub struct BoundsArgs {
    pub report: Option<PathBuf>,
    pub r_a: Option<f64>,
    pub m: Option<f64>,
    pub n: Option<usize>,
    pub w: Option<usize>,
    pub z_norm: Option<f64>,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
}

fn need<T>(v: Option<T>, name: &str, mode: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("mode {mode} needs --{name}")))
}

/// Evaluates one bound and returns the printed lines: every formula input,
/// then the result.
pub fn cmd_bounds(args: &BoundsArgs, mode: BoundMode) -> Result<String, CliError> {
    let report = match &args.report {
        Some(p) => Some(SpectralReport::parse(&fs::read_to_string(p)?)?),
        None => None,
    };
    let r_a = match (args.r_a, &report) {
        (Some(v), _) => Some(v),
        (None, Some(rep)) => Some(rep.require_r_a()?),
        (None, None) => None,
    };
    let w = args.w.or(report.as_ref().map(|r| r.width));
    let name = match mode {
        BoundMode::Iid => "iid",
        BoundMode::Sequential => "sequential",
        BoundMode::Rademacher => "rademacher",
        BoundMode::Pac => "pac",
    };
    let m = need(args.m, "m", name)?;
    let w = need(w, "w", name)?;
    let z_norm = need(args.z_norm, "z-norm", name)?;
    let r_a = need(r_a, "r-a", name)?;
    let mut out = String::new();
    writeln!(out, "mode = {name}").unwrap();
    writeln!(out, "M = {}", fmt12(m)).unwrap();
    writeln!(out, "W = {w}").unwrap();
    writeln!(out, "z_norm = {}", fmt12(z_norm)).unwrap();
    writeln!(out, "r_a = {}", fmt12(r_a)).unwrap();
    match mode {
        BoundMode::Rademacher => {
            let n = need(args.n, "n", name)?;
            writeln!(out, "n = {n}").unwrap();
            writeln!(out, "bound = {}", fmt12(rademacher_bound(m, n, w, z_norm, r_a)?)).unwrap();
        }
        BoundMode::Iid | BoundMode::Sequential => {
            let inp = BoundInputs {
                m,
                n: need(args.n, "n", name)?,
                w,
                z_norm,
                r_a,
                delta: need(args.delta, "delta", name)?,
            };
            writeln!(out, "n = {}", inp.n).unwrap();
            writeln!(out, "delta = {}", fmt12(inp.delta)).unwrap();
            let b = if mode == BoundMode::Iid { bound_iid(&inp)? } else { bound_sequential(&inp)? };
            writeln!(out, "bound = {}", fmt12(b)).unwrap();
        }
        BoundMode::Pac => {
            let eps = need(args.eps, "eps", name)?;
            let delta = need(args.delta, "delta", name)?;
            writeln!(out, "eps = {}", fmt12(eps)).unwrap();
            writeln!(out, "delta = {}", fmt12(delta)).unwrap();
            writeln!(out, "n_min = {}", pac_sample_size(eps, delta, m, z_norm, w, r_a)?).unwrap();
        }
    }
    Ok(out)
}

/// Runs the linear-cover check on a seeded `n x d` complex Gaussian data
/// matrix and writes the report to `out`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_cover_lab(
    d: usize,
    m: usize,
    n: usize,
    a: f64,
    eps: f64,
    samples: usize,
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<CoverReport, CliError> {
    if d == 0 || n == 0 {
        return Err(CliError::Config("d and n must be positive".into()));
    }
    let z = CMatrix::random(n, d, &mut rng::derived(seed, 1 << 32));
    let report = lemma1_cover_check(&z, m, a, eps, samples, trials, seed)?;
    fs::write(out, report.render())?;
    Ok(report)
}

/// Spearman correlation of SN product against excess risk over a trace.
pub fn cmd_stats(trace: &Path) -> Result<(Correlation, String), CliError> {
    let trace = TrainingTrace::from_csv(&fs::read_to_string(trace)?)?;
    let c = correlate_trace(&trace)?;
    let text = format!("scc={}\np={}\nmethod={}\n", fmt12(c.scc), fmt12(c.p), c.method);
    Ok((c, text))
}

/// Empirical Lipschitz ratio next to the declared constant.
pub fn cmd_lipschitz_probe(kind: &str, domain_bound: f64, pairs: usize, seed: u64) -> Result<String, CliError> {
    let act: Activation = kind.parse()?;
    let estimate = act.lipschitz_probe(domain_bound, pairs, seed)?;
    let declared = act
        .declared_lipschitz(Some(domain_bound))?
        .value()
        .map_or_else(|| "unknown".to_string(), fmt12);
    Ok(format!(
        "activation = {act}\ndomain_bound = {}\npairs = {pairs}\nestimate = {}\ndeclared = {declared}\n",
        fmt12(domain_bound),
        fmt12(estimate)
    ))
}
