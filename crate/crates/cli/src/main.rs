use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvnn_cli::{
    cmd_analyze, cmd_bounds, cmd_cover_lab, cmd_lipschitz_probe, cmd_stats, cmd_train, BoundMode, BoundsArgs, CliError,
    ExperimentConfig,
};
use cvnn_core::network::Shape;
use cvnn_core::spectral::AnalyzeOptions;

#[derive(Parser)]
#[command(name = "cvnn", version, about = "Complex-valued network experiments and norm-based bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file, writing trace.csv, checkpoint and report.
    Train { config: PathBuf },
    /// Spectral report of a checkpoint.
    Analyze {
        checkpoint: PathBuf,
        #[arg(long)]
        input_shape: Option<Shape>,
        #[arg(long, default_value = "report.txt")]
        out: PathBuf,
        #[arg(long)]
        amplitude_bound: Option<f64>,
        /// Fail if any power iteration did not converge.
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate a bound: iid, sequential, rademacher or pac.
    Bounds {
        #[arg(long)]
        mode: BoundMode,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        r_a: Option<f64>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        w: Option<usize>,
        #[arg(long)]
        z_norm: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Pointwise check of the linear matrix cover.
    CoverLab {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "cover.txt")]
        out: PathBuf,
    },
    /// Spearman correlation of SN product and excess risk in a trace.
    Stats { trace: PathBuf },
    /// Empirical Lipschitz ratio of an activation.
    LipschitzProbe {
        kind: String,
        #[arg(long, default_value_t = 4.0)]
        domain_bound: f64,
        #[arg(long, default_value_t = 100_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = cmd_train(&cfg)?;
            println!("trace = {}", out.trace_path.display());
            println!("checkpoint = {}", out.checkpoint_path.display());
            println!("report = {}", out.report_path.display());
            let warnings = out.report.warnings();
            if !warnings.is_empty() {
                return Err(CliError::Warnings(warnings.join("; ")));
            }
        }
        Command::Analyze {
            checkpoint,
            input_shape,
            out,
            amplitude_bound,
            strict,
        } => {
            let opts = AnalyzeOptions {
                amplitude_bound,
                ..AnalyzeOptions::default()
            };
            let report = cmd_analyze(&checkpoint, input_shape, &out, &opts, strict)?;
            println!("report = {}", out.display());
            let warnings = report.warnings();
            if !warnings.is_empty() {
                return Err(CliError::Warnings(warnings.join("; ")));
            }
        }
        Command::Bounds {
            mode,
            report,
            r_a,
            m,
            n,
            w,
            z_norm,
            delta,
            eps,
        } => {
            let args = BoundsArgs {
                report,
                r_a,
                m,
                n,
                w,
                z_norm,
                delta,
                eps,
            };
            print!("{}", cmd_bounds(&args, mode)?);
        }
        Command::CoverLab {
            d,
            m,
            n,
            a,
            eps,
            samples,
            trials,
            seed,
            out,
        } => {
            let report = cmd_cover_lab(d, m, n, a, eps, samples, trials, seed, &out)?;
            print!("{}", report.render());
            let violations = report.violations();
            if !violations.is_empty() {
                return Err(CliError::Warnings(violations.join("; ")));
            }
        }
        Command::Stats { trace } => print!("{}", cmd_stats(&trace)?.1),
        Command::LipschitzProbe {
            kind,
            domain_bound,
            pairs,
            seed,
        } => print!("{}", cmd_lipschitz_probe(&kind, domain_bound, pairs, seed)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
