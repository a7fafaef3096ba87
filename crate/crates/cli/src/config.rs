//! Experiment configuration files and the architecture syntax.
//!
//! A config is flat text: one `key = value` per line, `#` starts a
//! comment. Keys and defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `dataset` | `mnist` | `mnist` (IDX files) or `synthetic` |
//! | `train_images`, `train_labels`, `test_images`, `test_labels` | | IDX paths, relative to the config file |
//! | `train_size`, `test_size` | `0` | stratified subsample sizes, `0` keeps everything; sample counts for `synthetic` |
//! | `input_dim` | `8` | synthetic input dimension |
//! | `noise` | `0.1` | synthetic label noise scale |
//! | `teacher_seed` | `1` | seed of the synthetic teacher network |
//! | `hit_radius` | `0.5` | regression accuracy counts samples with L2 error at most this |
//! | `architecture` | | layer list, see [`parse_architecture`] |
//! | `threshold_mode` | `zero` | `zero` or `trainable` |
//! | `loss` | `cross_entropy` | `cross_entropy` or `l2` |
//! | `lr` | `0.01` | learning rate |
//! | `momentum` | `0.9` | SGD momentum |
//! | `epochs` | `100` | training epochs |
//! | `batch_size` | `128` | minibatch size |
//! | `lr_decay_step`, `lr_decay_factor` | `0`, `0.1` | multiply lr by the factor every step epochs; step 0 disables |
//! | `seed` | `0` | initialization, shuffling and subsampling seed |
//! | `output_dir` | `out` | trace, checkpoint and report directory, relative to the config file |
//! | `analysis_every` | `1` | spectral analysis cadence in epochs |
//! | `amplitude_bound` | none | input box for amplitude-tanh Lipschitz constants |
//! | `strict_convergence` | `false` | treat power-iteration non-convergence as an error |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cvnn_core::activations::Activation;
use cvnn_core::network::{LayerSpec, LossKind, Shape, ThresholdMode};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_size: usize,
    pub test_size: usize,
    pub input_dim: usize,
    pub noise: f64,
    pub teacher_seed: u64,
    pub hit_radius: f64,
    pub architecture: String,
    pub threshold_mode: ThresholdMode,
    pub loss: LossKind,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_decay_step: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub analysis_every: usize,
    pub amplitude_bound: Option<f64>,
    pub strict_convergence: bool,
}

const KEYS: &[&str] = &[
    "dataset",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "train_size",
    "test_size",
    "input_dim",
    "noise",
    "teacher_seed",
    "hit_radius",
    "architecture",
    "threshold_mode",
    "loss",
    "lr",
    "momentum",
    "epochs",
    "batch_size",
    "lr_decay_step",
    "lr_decay_factor",
    "seed",
    "output_dir",
    "analysis_every",
    "amplitude_bound",
    "strict_convergence",
];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| config_err(format!("line {line}: bad value `{v}` for `{key}`"))),
        }
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(_, v)| v)
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {line}: expected `key = value`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(config_err(format!("line {line}: unknown key `{key}`")));
            }
            if map.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
                return Err(config_err(format!("line {line}: duplicate key `{key}`")));
            }
        }
        let mut e = Entries { map };
        let path = |e: &mut Entries, k: &str| e.take_str(k).map(|p| base.join(p));
        let dataset = match e.take_str("dataset").as_deref() {
            None | Some("mnist") => DatasetKind::Mnist,
            Some("synthetic") => DatasetKind::Synthetic,
            Some(other) => return Err(config_err(format!("unknown dataset `{other}`"))),
        };
        let cfg = ExperimentConfig {
            dataset,
            train_images: path(&mut e, "train_images"),
            train_labels: path(&mut e, "train_labels"),
            test_images: path(&mut e, "test_images"),
            test_labels: path(&mut e, "test_labels"),
            train_size: e.take("train_size", 0)?,
            test_size: e.take("test_size", 0)?,
            input_dim: e.take("input_dim", 8)?,
            noise: e.take("noise", 0.1)?,
            teacher_seed: e.take("teacher_seed", 1)?,
            hit_radius: e.take("hit_radius", 0.5)?,
            architecture: e
                .take_str("architecture")
                .ok_or_else(|| config_err("missing required key `architecture`"))?,
            threshold_mode: e.take("threshold_mode", ThresholdMode::Zero)?,
            loss: e.take("loss", LossKind::CrossEntropy)?,
            lr: e.take("lr", 0.01)?,
            momentum: e.take("momentum", 0.9)?,
            epochs: e.take("epochs", 100)?,
            batch_size: e.take("batch_size", 128)?,
            lr_decay_step: e.take("lr_decay_step", 0)?,
            lr_decay_factor: e.take("lr_decay_factor", 0.1)?,
            seed: e.take("seed", 0)?,
            output_dir: base.join(e.take_str("output_dir").unwrap_or_else(|| "out".into())),
            analysis_every: e.take("analysis_every", 1)?,
            amplitude_bound: e.take_str("amplitude_bound").map(|v| v.parse()).transpose().map_err(
                |_| config_err("bad value for `amplitude_bound`"),
            )?,
            strict_convergence: e.take("strict_convergence", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.epochs == 0 {
            return Err(config_err("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size must be at least 1"));
        }
        if self.analysis_every == 0 {
            return Err(config_err("analysis_every must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err("momentum must lie in [0, 1)"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(config_err("lr_decay_factor must be positive"));
        }
        if let Some(b) = self.amplitude_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(config_err("amplitude_bound must be positive"));
            }
        }
        match self.dataset {
            DatasetKind::Mnist => {
                for (key, p) in [
                    ("train_images", &self.train_images),
                    ("train_labels", &self.train_labels),
                    ("test_images", &self.test_images),
                    ("test_labels", &self.test_labels),
                ] {
                    let p = p.as_ref().ok_or_else(|| config_err(format!("missing required key `{key}`")))?;
                    if !p.is_file() {
                        return Err(config_err(format!("{key}: no such file {}", p.display())));
                    }
                }
            }
            DatasetKind::Synthetic => {
                if self.train_size == 0 || self.test_size == 0 || self.input_dim == 0 {
                    return Err(config_err("synthetic data needs positive train_size, test_size and input_dim"));
                }
                if !(self.noise >= 0.0 && self.noise.is_finite()) {
                    return Err(config_err("noise must be finite and non-negative"));
                }
                if !(self.hit_radius > 0.0) {
                    return Err(config_err("hit_radius must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Parses a comma-separated layer list, inferring input sizes from
/// `input`. Items:
///
/// * `conv<kh>x<kw>:<channels> [activation]`
/// * `fc:<width> [activation]` (alias `dense:<width>`)
/// * `maxpool` (2x2 modulus pooling)
/// * `abs` (modulus then softmax over the previous layer's outputs)
///
/// Activations: `crelu`, `splittanh`, `amptanh`, `modrelu(<bias>)`.
pub fn parse_architecture(text: &str, input: Shape) -> Result<Vec<LayerSpec>, CliError> {
    let mut shape = input;
    let mut specs = Vec::new();
    for (i, item) in text.split(',').enumerate() {
        let item = item.trim();
        let err = |msg: String| config_err(format!("architecture item {} `{item}`: {msg}", i + 1));
        let mut tokens = item.split_whitespace();
        let head = tokens.next().ok_or_else(|| err("empty item".into()))?.to_ascii_lowercase();
        let activation = tokens
            .next()
            .map(|a| a.parse::<Activation>())
            .transpose()
            .map_err(|e| err(e.to_string()))?;
        if tokens.next().is_some() {
            return Err(err("too many tokens".into()));
        }
        let count = |s: &str| -> Result<usize, CliError> {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| err(format!("`{s}` is not a positive integer")))
        };
        let spec = if let Some(rest) = head.strip_prefix("conv") {
            let (kernel, channels) = rest.split_once(':').ok_or_else(|| err("expected conv<kh>x<kw>:<channels>".into()))?;
            let (kh, kw) = kernel.split_once('x').ok_or_else(|| err("expected a <kh>x<kw> kernel".into()))?;
            LayerSpec::conv((count(kh)?, count(kw)?), shape.channels, count(channels)?, activation)
        } else if let Some(width) = head.strip_prefix("fc:").or_else(|| head.strip_prefix("dense:")) {
            LayerSpec::dense(shape.len(), count(width)?, activation)
        } else if head == "maxpool" || head == "pool" {
            LayerSpec::maxpool()
        } else if head == "abs" {
            LayerSpec::abs_head(shape.len())
        } else {
            return Err(err("unknown layer".into()));
        };
        if activation.is_some() && !spec.is_weighted() {
            return Err(err("only conv and fc layers take an activation".into()));
        }
        shape = spec.output_shape(shape).map_err(|e| err(e.to_string()))?;
        specs.push(spec);
    }
    Ok(specs)
}
