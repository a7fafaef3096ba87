//! Layered complex-valued networks.
//!
//! A [`Network`] is a stack of dense, convolutional, modulus-max-pooling and
//! final modulus/softmax ("abs head") stages. Weighted layers compute
//! `W x + H` followed by an optional complex activation. Backpropagation
//! runs the real chain rule on `(re, im)` pairs using the activation
//! Jacobians, so non-holomorphic activations need no special casing.

mod checkpoint;
pub(crate) mod layers;
mod loss;
mod sgd;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{accuracy, per_sample_losses, Loss, LossKind, Targets};
pub use sgd::{sgd_step, SgdState};

use crate::activations::Activation;
use crate::linalg::{CMatrix, Complex, RMatrix};
use crate::rng;
use crate::{Error, Result};
use layers::ConvGeom;

const ZERO: Complex = Complex::new(0.0, 0.0);

/// Tensor shape `(channels, height, width)`; dense activations use
/// `(d, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn flat(d: usize) -> Self {
        Self::new(d, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidInput(format!("bad shape `{s}`, expected CxHxW")))?;
        match parts[..] {
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Shape::new(c, h, w)),
            [d] if d > 0 => Ok(Shape::flat(d)),
            _ => Err(Error::InvalidInput(format!("bad shape `{s}`, expected CxHxW"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Stride 1, no padding.
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
    },
    /// 2x2 window, stride 2, selection by modulus.
    MaxPoolModulus,
    /// Entry moduli followed by softmax; must be the last stage.
    AbsHead { classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Option<Activation>,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Option<Activation>) -> Self {
        Self {
            kind: LayerKind::Dense { inputs, outputs },
            activation,
        }
    }

    pub fn conv(
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        activation: Option<Activation>,
    ) -> Self {
        Self {
            kind: LayerKind::Conv {
                kernel_h: kernel.0,
                kernel_w: kernel.1,
                in_channels,
                out_channels,
            },
            activation,
        }
    }

    pub fn maxpool() -> Self {
        Self {
            kind: LayerKind::MaxPoolModulus,
            activation: None,
        }
    }

    pub fn abs_head(classes: usize) -> Self {
        Self {
            kind: LayerKind::AbsHead { classes },
            activation: None,
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv { .. })
    }

    /// Output shape for the given input, validating compatibility.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::InvalidInput("dense layer dimensions must be positive".into()));
                }
                if input.len() != inputs {
                    return Err(Error::DimensionMismatch(format!(
                        "dense layer expects {inputs} inputs, got {input}"
                    )));
                }
                Ok(Shape::flat(outputs))
            }
            LayerKind::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => {
                if kernel_h == 0 || kernel_w == 0 || in_channels == 0 || out_channels == 0 {
                    return Err(Error::InvalidInput("conv layer dimensions must be positive".into()));
                }
                if input.channels != in_channels {
                    return Err(Error::DimensionMismatch(format!(
                        "conv layer expects {in_channels} channels, got {input}"
                    )));
                }
                if input.height < kernel_h || input.width < kernel_w {
                    return Err(Error::DimensionMismatch(format!(
                        "{kernel_h}x{kernel_w} kernel does not fit input {input}"
                    )));
                }
                Ok(Shape::new(
                    out_channels,
                    input.height - kernel_h + 1,
                    input.width - kernel_w + 1,
                ))
            }
            LayerKind::MaxPoolModulus => {
                if input.height < 2 || input.width < 2 {
                    return Err(Error::DimensionMismatch(format!(
                        "2x2 pooling does not fit input {input}"
                    )));
                }
                Ok(Shape::new(input.channels, input.height / 2, input.width / 2))
            }
            LayerKind::AbsHead { classes } => {
                if input.len() != classes {
                    return Err(Error::DimensionMismatch(format!(
                        "abs head over {classes} classes got input {input}"
                    )));
                }
                Ok(Shape::flat(classes))
            }
        }
    }

    fn parameter_counts(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => (inputs * outputs, outputs),
            LayerKind::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => (kernel_h * kernel_w * in_channels * out_channels, out_channels),
            _ => (0, 0),
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                ..
            } => kernel_h * kernel_w * in_channels,
            _ => 0,
        }
    }
}

/// Whether thresholds `H` take part in training. `Zero` matches the
/// bias-free network the generalization bounds are stated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    Zero,
    Trainable,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" | "none" => Ok(ThresholdMode::Zero),
            "trainable" => Ok(ThresholdMode::Trainable),
            other => Err(Error::InvalidInput(format!("unknown threshold mode `{other}`"))),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::Zero => "zero",
            ThresholdMode::Trainable => "trainable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    input: Shape,
    output: Shape,
    /// Dense: `outputs x inputs`, row-major. Conv: `[out][in][kh][kw]`.
    pub weights: Vec<Complex>,
    /// One per output neuron (dense) or output channel (conv).
    pub thresholds: Vec<Complex>,
}

impl Layer {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.output
    }

    /// Dense weight matrix `W` with `y = W x`; `None` for other layers.
    pub fn dense_matrix(&self) -> Option<CMatrix> {
        match self.spec.kind {
            LayerKind::Dense { inputs, outputs } => {
                Some(CMatrix::new(outputs, inputs, self.weights.clone()).expect("validated layer"))
            }
            _ => None,
        }
    }

    pub(crate) fn conv_geom(&self) -> Option<ConvGeom> {
        match self.spec.kind {
            LayerKind::Conv {
                kernel_h, kernel_w, ..
            } => Some(ConvGeom {
                input: self.input,
                output: self.output,
                kh: kernel_h,
                kw: kernel_w,
            }),
            _ => None,
        }
    }

    fn linear_forward(&self, x: &[Complex], out: &mut [Complex]) {
        match self.spec.kind {
            LayerKind::Dense { inputs, .. } => {
                layers::dense_forward(&self.weights, &self.thresholds, inputs, x, out)
            }
            LayerKind::Conv { .. } => {
                let g = self.conv_geom().expect("conv layer");
                layers::conv_forward(&g, &self.weights, &self.thresholds, x, out)
            }
            _ => unreachable!("only weighted layers have a linear part"),
        }
    }
}

/// Result of a forward pass over a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum NetOutput {
    /// `n x d_L` complex outputs.
    Complex(CMatrix),
    /// `n x classes` softmax probabilities from an abs head.
    Scores(RMatrix),
}

impl NetOutput {
    pub fn rows(&self) -> usize {
        match self {
            NetOutput::Complex(m) => m.rows(),
            NetOutput::Scores(m) => m.rows(),
        }
    }
}

/// Per-parameter real gradients, packed as complex numbers
/// `dL/dRe + i dL/dIm`, in the same layout as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<ParamGrad>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrad {
    pub weights: Vec<Complex>,
    pub thresholds: Vec<Complex>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| ParamGrad {
                    weights: vec![ZERO; l.weights.len()],
                    thresholds: vec![ZERO; l.thresholds.len()],
                })
                .collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.thresholds.iter_mut()).for_each(|g| *g *= s);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    /// Mean per-sample loss over the batch.
    pub loss: f64,
    /// Largest per-sample loss seen in the batch.
    pub max_sample_loss: f64,
    pub grads: Gradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Shape,
    layers: Vec<Layer>,
    threshold_mode: ThresholdMode,
}

/// Intermediate values of one sample's forward pass.
struct SampleTrace {
    /// Input to each layer.
    inputs: Vec<Vec<Complex>>,
    /// Pre-activation values of weighted layers with an activation.
    pre: Vec<Option<Vec<Complex>>>,
    /// Selected indices of pooling layers.
    picks: Vec<Option<Vec<usize>>>,
}

enum SampleOut {
    Complex(Vec<Complex>),
    /// Softmax probabilities of the abs head.
    Scores(Vec<f64>),
}

impl Network {
    /// Builds a network with the default initialization: real and imaginary
    /// parts i.i.d. normal with variance `1 / (2 fan_in)`, thresholds zero.
    pub fn new(input_shape: Shape, specs: &[LayerSpec], threshold_mode: ThresholdMode, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(input_shape, specs, threshold_mode)?;
        let mut rng = rng::seeded(seed);
        for layer in &mut net.layers {
            let fan_in = layer.spec.fan_in();
            if fan_in == 0 {
                continue;
            }
            let std = (1.0 / (2.0 * fan_in as f64)).sqrt();
            for w in &mut layer.weights {
                let re = rng::normal(&mut rng) * std;
                let im = rng::normal(&mut rng) * std;
                *w = Complex::new(re, im);
            }
        }
        Ok(net)
    }

    /// Same architecture with every parameter zero.
    pub fn zeroed(input_shape: Shape, specs: &[LayerSpec], threshold_mode: ThresholdMode) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidInput("a network needs at least one layer".into()));
        }
        if input_shape.is_empty() {
            return Err(Error::InvalidInput("input shape must be non-empty".into()));
        }
        let mut shape = input_shape;
        let mut built = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if matches!(spec.kind, LayerKind::AbsHead { .. }) && i + 1 != specs.len() {
                return Err(Error::InvalidInput("the abs head must be the final stage".into()));
            }
            if spec.activation.is_some() && !spec.is_weighted() {
                return Err(Error::InvalidInput(format!(
                    "layer {i}: activations attach to dense or conv layers only"
                )));
            }
            let out = spec.output_shape(shape).map_err(|e| match e {
                Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("layer {i}: {m}")),
                other => other,
            })?;
            let (nw, nh) = spec.parameter_counts();
            built.push(Layer {
                spec: *spec,
                input: shape,
                output: out,
                weights: vec![ZERO; nw],
                thresholds: vec![ZERO; nh],
            });
            shape = out;
        }
        if !built.iter().any(|l| l.spec.is_weighted()) {
            return Err(Error::InvalidInput("a network needs at least one weighted layer".into()));
        }
        Ok(Self {
            input_shape,
            layers: built,
            threshold_mode,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().expect("non-empty").output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn threshold_mode(&self) -> ThresholdMode {
        self.threshold_mode
    }

    /// Number of weighted layers, `L`.
    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| l.spec.is_weighted()).count()
    }

    /// `W = max(d_0, ..., d_L)` over the input and every weighted layer's
    /// flattened output.
    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.spec.is_weighted())
            .map(|l| l.output.len())
            .fold(self.input_shape.len(), usize::max)
    }

    pub fn has_abs_head(&self) -> bool {
        matches!(
            self.layers.last().map(|l| l.spec.kind),
            Some(LayerKind::AbsHead { .. })
        )
    }

    pub fn thresholds_nonzero(&self) -> bool {
        self.layers.iter().flat_map(|l| &l.thresholds).any(|h| *h != ZERO)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.thresholds.len()).sum()
    }

    /// Multiplies the weights (not thresholds) of layer `index` by `c`.
    pub fn scale_layer(&mut self, index: usize, c: Complex) {
        self.layers[index].weights.iter_mut().for_each(|w| *w *= c);
    }

    fn check_batch(&self, batch: &CMatrix) -> Result<()> {
        if batch.cols() != self.input_shape.len() {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, network input is {} ({})",
                batch.cols(),
                self.input_shape.len(),
                self.input_shape
            )));
        }
        Ok(())
    }

    fn forward_sample(&self, x: &[Complex], mut trace: Option<&mut SampleTrace>) -> SampleOut {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut out = vec![ZERO; layer.output.len()];
            if let Some(t) = trace.as_deref_mut() {
                t.inputs.push(cur.clone());
            }
            match layer.spec.kind {
                LayerKind::Dense { .. } | LayerKind::Conv { .. } => {
                    layer.linear_forward(&cur, &mut out);
                    let pre = layer.spec.activation.map(|act| {
                        let pre = out.clone();
                        out.iter_mut().for_each(|z| *z = act.apply(*z));
                        pre
                    });
                    if let Some(t) = trace.as_deref_mut() {
                        t.pre.push(pre);
                        t.picks.push(None);
                    }
                }
                LayerKind::MaxPoolModulus => {
                    let picks = layers::maxpool_forward(layer.input, layer.output, &cur, &mut out);
                    if let Some(t) = trace.as_deref_mut() {
                        t.pre.push(None);
                        t.picks.push(Some(picks));
                    }
                }
                LayerKind::AbsHead { .. } => {
                    let moduli: Vec<f64> = cur.iter().map(|z| z.norm()).collect();
                    let probs = layers::softmax(&moduli);
                    if let Some(t) = trace.as_deref_mut() {
                        t.pre.push(None);
                        t.picks.push(None);
                    }
                    return SampleOut::Scores(probs);
                }
            }
            cur = out;
        }
        SampleOut::Complex(cur)
    }

    /// Forward pass over the rows of `batch` (`n x d_0`, flattened
    /// channel-major).
    pub fn forward(&self, batch: &CMatrix) -> Result<NetOutput> {
        self.check_batch(batch)?;
        let n = batch.rows();
        let d_out = self.output_shape().len();
        if self.has_abs_head() {
            let mut scores = Vec::with_capacity(n * d_out);
            for r in 0..n {
                match self.forward_sample(batch.row(r), None) {
                    SampleOut::Scores(p) => scores.extend(p),
                    SampleOut::Complex(_) => unreachable!(),
                }
            }
            Ok(NetOutput::Scores(RMatrix::new(n, d_out, scores)?))
        } else {
            let mut data = Vec::with_capacity(n * d_out);
            for r in 0..n {
                match self.forward_sample(batch.row(r), None) {
                    SampleOut::Complex(v) => data.extend(v),
                    SampleOut::Scores(..) => unreachable!(),
                }
            }
            Ok(NetOutput::Complex(CMatrix::new(n, d_out, data)?))
        }
    }

    /// Mean batch loss and its gradient with respect to every real and
    /// imaginary parameter component.
    pub fn backward(&self, batch: &CMatrix, targets: &Targets, loss: LossKind) -> Result<BackwardResult> {
        self.check_batch(batch)?;
        targets.check(batch.rows(), self)?;
        loss.check_compatible(self)?;
        let n = batch.rows();
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        let mut worst = 0.0_f64;
        for r in 0..n {
            let mut trace = SampleTrace {
                inputs: Vec::with_capacity(self.layers.len()),
                pre: Vec::with_capacity(self.layers.len()),
                picks: Vec::with_capacity(self.layers.len()),
            };
            let out = self.forward_sample(batch.row(r), Some(&mut trace));
            let (l, seed_grad) = loss::sample_loss_and_grad(loss, &out, targets, r)?;
            total += l;
            worst = worst.max(l);
            self.backward_sample(&trace, seed_grad, &mut grads);
        }
        grads.scale(1.0 / n as f64);
        if self.threshold_mode == ThresholdMode::Zero {
            for g in &mut grads.layers {
                g.thresholds.iter_mut().for_each(|h| *h = ZERO);
            }
        }
        Ok(BackwardResult {
            loss: total / n as f64,
            max_sample_loss: worst,
            grads,
        })
    }

    fn backward_sample(&self, trace: &SampleTrace, mut grad: Vec<Complex>, grads: &mut Gradients) {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.inputs[i];
            let need_input_grad = i > 0;
            match layer.spec.kind {
                LayerKind::AbsHead { .. } => {
                    // `grad` arrives as dL/d(modulus) packed in the real parts.
                    grad = x
                        .iter()
                        .zip(&grad)
                        .map(|(z, g)| {
                            let r = z.norm();
                            if r == 0.0 {
                                ZERO
                            } else {
                                *z * (g.re / r)
                            }
                        })
                        .collect();
                }
                LayerKind::MaxPoolModulus => {
                    let picks = trace.picks[i].as_ref().expect("pool trace");
                    let mut gx = vec![ZERO; x.len()];
                    for (g, &p) in grad.iter().zip(picks) {
                        gx[p] += g;
                    }
                    grad = gx;
                }
                LayerKind::Dense { inputs, .. } => {
                    if let (Some(act), Some(pre)) = (layer.spec.activation, &trace.pre[i]) {
                        layers::activation_backward(act, pre, &mut grad);
                    }
                    let pg = &mut grads.layers[i];
                    let mut gx = need_input_grad.then(|| vec![ZERO; x.len()]);
                    layers::dense_backward(
                        &layer.weights,
                        inputs,
                        x,
                        &grad,
                        &mut pg.weights,
                        &mut pg.thresholds,
                        gx.as_deref_mut(),
                    );
                    match gx {
                        Some(g) => grad = g,
                        None => return,
                    }
                }
                LayerKind::Conv { .. } => {
                    if let (Some(act), Some(pre)) = (layer.spec.activation, &trace.pre[i]) {
                        layers::activation_backward(act, pre, &mut grad);
                    }
                    let g = layer.conv_geom().expect("conv layer");
                    let pg = &mut grads.layers[i];
                    layers::conv_backward_params(&g, x, &grad, &mut pg.weights, &mut pg.thresholds);
                    if !need_input_grad {
                        return;
                    }
                    let mut gx = vec![ZERO; x.len()];
                    layers::conv_adjoint(&g, &layer.weights, &grad, &mut gx);
                    grad = gx;
                }
            }
        }
    }

    /// Flat view of every real parameter component, in layer order:
    /// weights then thresholds, real part before imaginary part.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.thresholds))
            .flat_map(|z| [z.re, z.im])
            .collect()
    }

    /// Inverse of [`flat_params`](Self::flat_params).
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != 2 * self.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} complex parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut it = flat.chunks_exact(2);
        for l in &mut self.layers {
            for z in l.weights.iter_mut().chain(l.thresholds.iter_mut()) {
                let p = it.next().expect("length checked");
                *z = Complex::new(p[0], p[1]);
            }
        }
        Ok(())
    }
}

impl Gradients {
    /// Same packing as [`Network::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.thresholds))
            .flat_map(|z| [z.re, z.im])
            .collect()
    }
}
