//! Spectral complexity of a network and the closed-form generalization
//! bounds built on it.
//!
//! For weighted layers `A_1, ..., A_L` (each acting as `y = A x`) with
//! activation Lipschitz constants `rho_i`,
//!
//! ```text
//! R_A = (prod rho_i ||A_i||_sigma) * (sum (||A_i^T||_{2,1} / ||A_i||_sigma)^{2/3})^{3/2}
//! ```
//!
//! Pooling and the abs head are 1-Lipschitz and carry no weights, so they
//! do not appear in the products.

use crate::activations::{Activation, Lipschitz};
use crate::kv::KvDoc;
use crate::linalg::{power_iteration, CMatrix, Complex, PowerIteration, SpectralEstimate};
use crate::network::layers::{conv_adjoint, conv_forward, ConvGeom};
use crate::network::{Layer, LayerKind, Network, Shape};
use crate::{Error, Result};

const ZERO: Complex = Complex::new(0.0, 0.0);

/// Bytes per lowered complex entry.
const ENTRY_BYTES: usize = std::mem::size_of::<Complex>();

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub power: PowerIteration,
    /// Largest explicit conv lowering, in bytes, used to obtain `b_i`.
    pub lowering_budget: usize,
    /// Domain bound `alpha` for amplitude-tanh layers.
    pub amplitude_bound: Option<f64>,
    /// Box half-width and pair count for probing activations without a
    /// declared constant.
    pub probe_bound: f64,
    pub probe_pairs: usize,
    pub probe_seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            power: PowerIteration::default(),
            lowering_budget: 256 << 20,
            amplitude_bound: None,
            probe_bound: 4.0,
            probe_pairs: 100_000,
            probe_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorms {
    /// Position of the layer in the network.
    pub index: usize,
    pub kind: String,
    /// Spectral norm `||A_i||_sigma`.
    pub s: f64,
    /// `||A_i^T||_{2,1}`; absent when the conv lowering exceeds the budget.
    pub b: Option<f64>,
    pub rho: f64,
    pub rho_empirical: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub input_shape: Shape,
    pub depth: usize,
    pub width: usize,
    pub layers: Vec<LayerNorms>,
    pub sn_product: f64,
    pub lipschitz_product: f64,
    pub r_a: Option<f64>,
    pub sn_product_only: bool,
    pub empirical_rho: bool,
    pub thresholds_nonzero: bool,
}

impl SpectralReport {
    pub fn all_converged(&self) -> bool {
        self.layers.iter().all(|l| l.converged)
    }

    /// Human-readable caveats attached to this report.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.sn_product_only {
            w.push("sn-product-only: a conv layer was too large to lower, R_A unavailable".to_string());
        }
        if self.empirical_rho {
            w.push("empirical-rho: some Lipschitz constants are probe estimates; bounds are not rigorous".to_string());
        }
        if self.thresholds_nonzero {
            w.push("thresholds are nonzero; the bounds assume a threshold-free network".to_string());
        }
        if !self.all_converged() {
            w.push("power iteration did not converge for some layer".to_string());
        }
        w
    }

    /// `R_A`, or an error in sn-product-only mode.
    pub fn require_r_a(&self) -> Result<f64> {
        self.r_a
            .ok_or(Error::SnProductOnly("the report carries no (2,1) norms"))
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("input_shape", self.input_shape);
        doc.push("depth", self.depth);
        doc.push("width", self.width);
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layer.{i}");
            doc.push(format!("{p}.index"), l.index);
            doc.push(format!("{p}.kind"), &l.kind);
            doc.push_f64(format!("{p}.s"), l.s);
            if let Some(b) = l.b {
                doc.push_f64(format!("{p}.b"), b);
            }
            doc.push_f64(format!("{p}.rho"), l.rho);
            doc.push(format!("{p}.rho_empirical"), l.rho_empirical);
            doc.push(format!("{p}.converged"), l.converged);
        }
        doc.push_f64("sn_product", self.sn_product);
        doc.push_f64("lipschitz_product", self.lipschitz_product);
        if let Some(r) = self.r_a {
            doc.push_f64("r_a", r);
        }
        doc.push("sn_product_only", self.sn_product_only);
        doc.push("empirical_rho", self.empirical_rho);
        doc.push("thresholds_nonzero", self.thresholds_nonzero);
        doc
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let input_shape: Shape = doc
            .require("input_shape")?
            .parse()
            .map_err(|e: Error| Error::MalformedReport(e.to_string()))?;
        let depth = doc.require_usize("depth")?;
        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let p = format!("layer.{i}");
            let b = match doc.get(&format!("{p}.b")) {
                Some(_) => Some(doc.require_f64(&format!("{p}.b"))?),
                None => None,
            };
            layers.push(LayerNorms {
                index: doc.require_usize(&format!("{p}.index"))?,
                kind: doc.require(&format!("{p}.kind"))?.to_string(),
                s: doc.require_f64(&format!("{p}.s"))?,
                b,
                rho: doc.require_f64(&format!("{p}.rho"))?,
                rho_empirical: doc.require_bool(&format!("{p}.rho_empirical"))?,
                converged: doc.require_bool(&format!("{p}.converged"))?,
            });
        }
        let r_a = match doc.get("r_a") {
            Some(_) => Some(doc.require_f64("r_a")?),
            None => None,
        };
        let report = SpectralReport {
            input_shape,
            depth,
            width: doc.require_usize("width")?,
            layers,
            sn_product: doc.require_f64("sn_product")?,
            lipschitz_product: doc.require_f64("lipschitz_product")?,
            r_a,
            sn_product_only: doc.require_bool("sn_product_only")?,
            empirical_rho: doc.require_bool("empirical_rho")?,
            thresholds_nonzero: doc.require_bool("thresholds_nonzero")?,
        };
        if report.sn_product_only == report.r_a.is_some() {
            return Err(Error::MalformedReport(
                "`r_a` must be present exactly when sn_product_only is false".into(),
            ));
        }
        Ok(report)
    }
}

/// `R_A` from per-layer `(s_i, b_i, rho_i)`. A zero layer makes the whole
/// product, and so `R_A`, zero.
pub fn spectral_complexity(layers: &[(f64, f64, f64)]) -> f64 {
    let lip: f64 = layers.iter().map(|&(s, _, rho)| rho * s).product();
    if lip == 0.0 {
        return 0.0;
    }
    let sum: f64 = layers.iter().map(|&(s, b, _)| (b / s).powf(2.0 / 3.0)).sum();
    lip * sum.powf(1.5)
}

fn layer_rho(act: Option<Activation>, opts: &AnalyzeOptions) -> Result<(f64, bool)> {
    let Some(act) = act else {
        return Ok((1.0, false));
    };
    match act.declared_lipschitz(opts.amplitude_bound)? {
        Lipschitz::Declared(rho) => Ok((rho, false)),
        Lipschitz::Unknown => Ok((
            act.lipschitz_probe(opts.probe_bound, opts.probe_pairs, opts.probe_seed)?,
            true,
        )),
    }
}

/// Per-layer norms, Lipschitz constants and `R_A` of `net`.
pub fn analyze(net: &Network, opts: &AnalyzeOptions) -> Result<SpectralReport> {
    let mut layers = Vec::new();
    let mut sn_product_only = false;
    for (index, layer) in net.layers().iter().enumerate() {
        if !layer.spec().is_weighted() {
            continue;
        }
        let (rho, rho_empirical) = layer_rho(layer.spec().activation, opts)?;
        let (kind, est, b) = match layer.spec().kind {
            LayerKind::Dense { .. } => {
                let a = layer.dense_matrix().expect("dense layer");
                let est = a.spectral_norm(&opts.power);
                ("dense", est, Some(a.transpose().pq_norm(2.0, 1.0)))
            }
            LayerKind::Conv { .. } => {
                let est = conv_spectral_norm(layer, &opts.power)?;
                let b = match layer_matrix(layer, opts.lowering_budget) {
                    Ok(m) => Some(m.transpose().pq_norm(2.0, 1.0)),
                    Err(Error::LoweringBudget { .. }) => {
                        sn_product_only = true;
                        None
                    }
                    Err(e) => return Err(e),
                };
                ("conv", est, b)
            }
            _ => unreachable!("weighted layers are dense or conv"),
        };
        layers.push(LayerNorms {
            index,
            kind: kind.to_string(),
            s: est.value,
            b,
            rho,
            rho_empirical,
            converged: est.converged,
        });
    }
    let sn_product = layers.iter().map(|l| l.s).product();
    let lipschitz_product = layers.iter().map(|l| l.rho * l.s).product();
    let r_a = (!sn_product_only).then(|| {
        let triples: Vec<(f64, f64, f64)> = layers
            .iter()
            .map(|l| (l.s, l.b.expect("b present outside sn-product-only mode"), l.rho))
            .collect();
        spectral_complexity(&triples)
    });
    Ok(SpectralReport {
        input_shape: net.input_shape(),
        depth: layers.len(),
        width: net.max_width(),
        empirical_rho: layers.iter().any(|l| l.rho_empirical),
        layers,
        sn_product,
        lipschitz_product,
        r_a,
        sn_product_only,
        thresholds_nonzero: net.thresholds_nonzero(),
    })
}

/// Explicit matrix of a weighted layer's linear part, acting on the
/// channel-major flattening of its input. Conv layers are lowered to a
/// dense `out_len x in_len` matrix if it fits in `budget` bytes.
pub fn layer_matrix(layer: &Layer, budget: usize) -> Result<CMatrix> {
    match layer.spec().kind {
        LayerKind::Dense { .. } => Ok(layer.dense_matrix().expect("dense layer")),
        LayerKind::Conv {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
        } => {
            let (input, output) = (layer.input_shape(), layer.output_shape());
            let needed = input.len().saturating_mul(output.len()).saturating_mul(ENTRY_BYTES);
            if needed > budget {
                return Err(Error::LoweringBudget { needed, budget });
            }
            let mut m = CMatrix::zeros(output.len(), input.len());
            let (oh, ow) = (output.height, output.width);
            let (ih, iw) = (input.height, input.width);
            let k = &layer.weights;
            for o in 0..out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let row = (o * oh + y) * ow + x;
                        for c in 0..in_channels {
                            for i in 0..kernel_h {
                                for j in 0..kernel_w {
                                    let col = (c * ih + y + i) * iw + x + j;
                                    let kv = k[((o * in_channels + c) * kernel_h + i) * kernel_w + j];
                                    m.data_mut()[row * input.len() + col] = kv;
                                }
                            }
                        }
                    }
                }
            }
            Ok(m)
        }
        _ => Err(Error::InvalidInput("only dense and conv layers have a weight matrix".into())),
    }
}

/// Largest singular value of a conv layer's linear map, by power iteration
/// alternating the convolution and its adjoint; the matrix is never formed.
pub fn conv_spectral_norm(layer: &Layer, opts: &PowerIteration) -> Result<SpectralEstimate> {
    let Some(geom) = layer.conv_geom() else {
        return Err(Error::InvalidInput("conv_spectral_norm needs a conv layer".into()));
    };
    if layer.weights.iter().all(|w| *w == ZERO) {
        return Ok(SpectralEstimate::zero());
    }
    Ok(conv_gram_power_iteration(&geom, &layer.weights, opts))
}

fn conv_gram_power_iteration(geom: &ConvGeom, kernel: &[Complex], opts: &PowerIteration) -> SpectralEstimate {
    let mut mid = vec![ZERO; geom.output.len()];
    power_iteration(geom.input.len(), opts, |v, out| {
        conv_forward(geom, kernel, &[], v, &mut mid);
        conv_adjoint(geom, kernel, &mid, out);
    })
}

/// Inputs shared by the closed-form bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Loss ceiling `M`.
    pub m: f64,
    /// Sample count.
    pub n: usize,
    /// Largest layer width `W`.
    pub w: usize,
    /// Frobenius norm of the data matrix.
    pub z_norm: f64,
    pub r_a: f64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.m) {
            return Err(Error::InvalidInput(format!("M must be positive, got {}", self.m)));
        }
        if self.n == 0 || self.w == 0 {
            return Err(Error::InvalidInput("n and W must be positive".into()));
        }
        if !positive(self.z_norm) {
            return Err(Error::InvalidInput(format!("z_norm must be positive, got {}", self.z_norm)));
        }
        if !(self.r_a >= 0.0 && self.r_a.is_finite()) {
            return Err(Error::InvalidInput(format!("R_A must be nonnegative, got {}", self.r_a)));
        }
        check_delta(self.delta)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn log_width(w: usize) -> f64 {
    (2.0 * (2.0 * w as f64).ln()).sqrt()
}

fn confidence(n: f64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n)).sqrt()
}

/// Empirical Rademacher complexity ceiling of the loss class:
/// `4M/n^{3/2} + 18 ||Z|| sqrt(2 ln 2W) ln(n) R_A / n`.
pub fn rademacher_bound(m: f64, n: usize, w: usize, z_norm: f64, r_a: f64) -> Result<f64> {
    BoundInputs {
        m,
        n,
        w,
        z_norm,
        r_a,
        delta: 0.5,
    }
    .validate()?;
    let nf = n as f64;
    Ok(4.0 * m / nf.powf(1.5) + 18.0 * z_norm * log_width(w) * nf.ln() * r_a / nf)
}

/// Generalization gap bound for i.i.d. data, holding with probability
/// `1 - delta`.
pub fn bound_iid(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let n = inp.n as f64;
    Ok(8.0 * inp.m / n.powf(1.5)
        + 36.0 * inp.z_norm * log_width(inp.w) * n.ln() * inp.r_a / n
        + 3.0 * inp.m * confidence(n, inp.delta))
}

/// Generalization gap bound for sequentially dependent data.
pub fn bound_sequential(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let n = inp.n as f64;
    Ok(8.0 * inp.m / n
        + 24.0 * inp.z_norm * log_width(inp.w) * n.ln() * inp.r_a / n
        + inp.m * confidence(n, inp.delta))
}

/// Log covering number of the network's output class at scale `eps`,
/// from per-layer `(s_i, b_i, rho_i)`.
pub fn covering_bound_network(z_norm: f64, w: usize, eps: f64, layers: &[(f64, f64, f64)]) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if w == 0 || layers.is_empty() {
        return Err(Error::InvalidInput("need W >= 1 and at least one layer".into()));
    }
    if let Some(i) = layers.iter().position(|&(s, _, _)| !(s > 0.0)) {
        return Err(Error::InvalidInput(format!("layer {i} has spectral bound s = 0")));
    }
    let w = w as f64;
    let prod: f64 = layers.iter().map(|&(s, _, rho)| s * s * rho * rho).product();
    let sum: f64 = layers.iter().map(|&(s, b, _)| (b / s).powf(2.0 / 3.0)).sum();
    Ok(z_norm * z_norm * (4.0 * w * w).ln() / (eps * eps) * prod * sum.powi(3))
}

/// Log covering number of `{ZA : ||A||_{q,s} <= a}` with `||Z||_p <= b`,
/// `A` of size `d x m`; `r = f64::INFINITY` is allowed.
pub fn covering_bound_linear(a: f64, b: f64, m: usize, r: f64, eps: f64, d: usize) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && eps > 0.0) {
        return Err(Error::InvalidInput("a, b and eps must be positive".into()));
    }
    if m == 0 || d == 0 {
        return Err(Error::InvalidInput("m and d must be positive".into()));
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidInput(format!("r must be at least 1, got {r}")));
    }
    Ok(linear_sparsity(a, b, m, r, eps) as f64 * (4.0 * d as f64 * m as f64).ln())
}

/// `ceil(a^2 b^2 m^{2/r} / eps^2)`, the sample budget of the linear cover.
pub fn linear_sparsity(a: f64, b: f64, m: usize, r: f64, eps: f64) -> u64 {
    let mr = (m as f64).powf(2.0 / r);
    (a * a * b * b * mr / (eps * eps)).ceil().max(1.0) as u64
}

/// Right-hand side of the PAC sample-size condition:
/// `(8/eps^3) (8M + 36 ||Z|| sqrt(2 ln 2W) R_A + 3M sqrt(ln(2/delta)/2))^3`.
pub fn pac_threshold(eps: f64, delta: f64, m: f64, z_norm: f64, w: usize, r_a: f64) -> f64 {
    let inner = 8.0 * m + 36.0 * z_norm * log_width(w) * r_a + 3.0 * m * ((2.0 / delta).ln() / 2.0).sqrt();
    8.0 / eps.powi(3) * inner.powi(3)
}

/// Smallest integer `n` meeting the PAC sample-size condition.
pub fn pac_sample_size(eps: f64, delta: f64, m: f64, z_norm: f64, w: usize, r_a: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    check_delta(delta)?;
    BoundInputs {
        m,
        n: 1,
        w,
        z_norm,
        r_a,
        delta,
    }
    .validate()?;
    let t = pac_threshold(eps, delta, m, z_norm, w, r_a);
    if !(t < u64::MAX as f64) {
        return Err(Error::NonFinite("PAC sample size overflows"));
    }
    Ok(t.ceil() as u64)
}
