//! JSON checkpoints.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "input_shape": [c, h, w],
//!   "threshold_mode": "zero" | "trainable",
//!   "layers": [
//!     { "kind": "dense", "inputs": 4, "outputs": 3, "activation": "splittanh",
//!       "weights": { "re": [...], "im": [...] },
//!       "thresholds": { "re": [...], "im": [...] } },
//!     ...
//!   ]
//! }
//! ```
//!
//! Floats are written with 17 significant digits so every parameter
//! survives a save/load cycle bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::{LayerKind, LayerSpec, Network, Shape, ThresholdMode};
use crate::activations::Activation;
use crate::kv::fmt_f64;
use crate::linalg::Complex;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

struct Floats(Vec<f64>);

impl Serialize for Floats {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeSeq};
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for &x in &self.0 {
            let raw = RawValue::from_string(fmt_f64(x)).map_err(S::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct ParamsOut {
    re: Floats,
    im: Floats,
}

#[derive(Deserialize)]
struct ParamsIn {
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize)]
struct LayerOut {
    #[serde(flatten)]
    kind: KindRecord,
    activation: Option<String>,
    weights: ParamsOut,
    thresholds: ParamsOut,
}

#[derive(Deserialize)]
struct LayerIn {
    #[serde(flatten)]
    kind: KindRecord,
    activation: Option<String>,
    weights: ParamsIn,
    thresholds: ParamsIn,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum KindRecord {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Maxpool,
    Abs {
        classes: usize,
    },
}

impl From<LayerKind> for KindRecord {
    fn from(k: LayerKind) -> Self {
        match k {
            LayerKind::Dense { inputs, outputs } => KindRecord::Dense { inputs, outputs },
            LayerKind::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => KindRecord::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            },
            LayerKind::MaxPoolModulus => KindRecord::Maxpool,
            LayerKind::AbsHead { classes } => KindRecord::Abs { classes },
        }
    }
}

impl From<KindRecord> for LayerKind {
    fn from(k: KindRecord) -> Self {
        match k {
            KindRecord::Dense { inputs, outputs } => LayerKind::Dense { inputs, outputs },
            KindRecord::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => LayerKind::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            },
            KindRecord::Maxpool => LayerKind::MaxPoolModulus,
            KindRecord::Abs { classes } => LayerKind::AbsHead { classes },
        }
    }
}

#[derive(Serialize)]
struct CheckpointOut {
    format_version: u32,
    input_shape: [usize; 3],
    threshold_mode: String,
    layers: Vec<LayerOut>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    input_shape: [usize; 3],
    threshold_mode: String,
    layers: Vec<LayerIn>,
}

fn split(values: &[Complex]) -> ParamsOut {
    ParamsOut {
        re: Floats(values.iter().map(|z| z.re).collect()),
        im: Floats(values.iter().map(|z| z.im).collect()),
    }
}

pub fn checkpoint_to_string(net: &Network) -> Result<String> {
    let doc = CheckpointOut {
        format_version: CHECKPOINT_VERSION,
        input_shape: [
            net.input_shape.channels,
            net.input_shape.height,
            net.input_shape.width,
        ],
        threshold_mode: net.threshold_mode.to_string(),
        layers: net
            .layers
            .iter()
            .map(|l| LayerOut {
                kind: l.spec.kind.into(),
                activation: l.spec.activation.map(|a| a.to_string()),
                weights: split(&l.weights),
                thresholds: split(&l.thresholds),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::MalformedCheckpoint(e.to_string()))
}

pub fn checkpoint_from_str(text: &str) -> Result<Network> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedCheckpoint("missing format_version".into()))?;
    if version != CHECKPOINT_VERSION as u64 {
        return Err(Error::CheckpointVersion {
            found: version.min(u32::MAX as u64) as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let doc: CheckpointIn =
        serde_json::from_value(value).map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;

    let mode: ThresholdMode = doc
        .threshold_mode
        .parse()
        .map_err(|e: Error| Error::MalformedCheckpoint(e.to_string()))?;
    let [c, h, w] = doc.input_shape;
    let specs = doc
        .layers
        .iter()
        .map(|l| {
            let activation = l
                .activation
                .as_deref()
                .map(str::parse::<Activation>)
                .transpose()
                .map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;
            Ok(LayerSpec {
                kind: LayerKind::from(l.kind),
                activation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut net = Network::zeroed(Shape::new(c, h, w), &specs, mode)
        .map_err(|e| Error::CheckpointShape(e.to_string()))?;

    for (i, (layer, rec)) in net.layers.iter_mut().zip(&doc.layers).enumerate() {
        fill(&mut layer.weights, &rec.weights, i, "weights")?;
        fill(&mut layer.thresholds, &rec.thresholds, i, "thresholds")?;
    }
    Ok(net)
}

fn fill(dst: &mut [Complex], src: &ParamsIn, layer: usize, what: &str) -> Result<()> {
    if src.re.len() != dst.len() || src.im.len() != dst.len() {
        return Err(Error::CheckpointShape(format!(
            "layer {layer} {what}: declared dims need {} values, file has re={} im={}",
            dst.len(),
            src.re.len(),
            src.im.len()
        )));
    }
    for ((d, &re), &im) in dst.iter_mut().zip(&src.re).zip(&src.im) {
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::MalformedCheckpoint(format!("layer {layer} {what}: non-finite value")));
        }
        *d = Complex::new(re, im);
    }
    Ok(())
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_to_string(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}
