//! Executable checks of the matrix covering argument.
//!
//! Maurey sparsification replaces a convex combination `f = sum alpha_i g_i`
//! by an average of `k` atoms drawn with probabilities `alpha_i / alpha`.
//! The linear cover of `{ZA : ||A||_{2,1} <= a}` rescales the columns of
//! `Z`, writes `ZA` in the hull of `4dm` signed real/imaginary basis
//! matrices, and sparsifies that combination.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::kv::KvDoc;
use crate::linalg::{CMatrix, Complex};
use crate::rng;
use crate::spectral::{covering_bound_linear, linear_sparsity};
use crate::{Error, Result};

const ZERO: Complex = Complex::new(0.0, 0.0);
const I: Complex = Complex::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MaureyInstance {
    elements: Vec<CMatrix>,
    weights: Vec<f64>,
    k: usize,
}

impl MaureyInstance {
    pub fn new(elements: Vec<CMatrix>, weights: Vec<f64>, k: usize) -> Result<Self> {
        if elements.is_empty() || elements.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} elements with {} weights",
                elements.len(),
                weights.len()
            )));
        }
        let shape = (elements[0].rows(), elements[0].cols());
        if elements.iter().any(|g| (g.rows(), g.cols()) != shape) {
            return Err(Error::DimensionMismatch("hull elements differ in shape".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidInput("total weight must be positive".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("sample budget k must be positive".into()));
        }
        Ok(Self { elements, weights, k })
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `f = sum alpha_i g_i`.
    pub fn target(&self) -> CMatrix {
        combine(&self.elements, self.weights.iter().copied())
    }

    /// `(alpha / k) sum k_i g_i`.
    pub fn approximant(&self, counts: &[usize]) -> CMatrix {
        let scale = self.alpha() / self.k as f64;
        combine(&self.elements, counts.iter().map(|&c| c as f64 * scale))
    }

    pub fn max_element_norm_sq(&self) -> f64 {
        self.elements
            .iter()
            .map(|g| g.frobenius_norm().powi(2))
            .fold(0.0, f64::max)
    }

    /// The expectation bound `alpha^2 / k * max ||g_i||^2` on the squared
    /// error of one random sparsification.
    pub fn expected_error_sq_bound(&self) -> f64 {
        self.alpha().powi(2) / self.k as f64 * self.max_element_norm_sq()
    }
}

fn combine(elements: &[CMatrix], coeffs: impl Iterator<Item = f64>) -> CMatrix {
    let mut out = CMatrix::zeros(elements[0].rows(), elements[0].cols());
    for (g, c) in elements.iter().zip(coeffs) {
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.data_mut().iter_mut().zip(g.data()) {
            *o += v * c;
        }
    }
    out
}

fn distance(a: &CMatrix, b: &CMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sparsified {
    /// `k_i`, summing to `k`.
    pub counts: Vec<usize>,
    pub approximant: CMatrix,
    /// `||f - approximant||_2`.
    pub error: f64,
}

/// Best of `trials` independent `k`-atom samplings; trial `t` uses stream
/// `t` of `seed`.
pub fn maurey_sparsify(inst: &MaureyInstance, trials: usize, seed: u64) -> Result<Sparsified> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let f = inst.target();
    let dist = WeightedIndex::new(&inst.weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut best: Option<Sparsified> = None;
    for t in 0..trials {
        let mut rng = rng::derived(seed, t as u64);
        let mut counts = vec![0usize; inst.elements.len()];
        for _ in 0..inst.k {
            counts[dist.sample(&mut rng)] += 1;
        }
        let approximant = inst.approximant(&counts);
        let error = distance(&f, &approximant);
        if best.as_ref().is_none_or(|b| error < b.error) {
            best = Some(Sparsified {
                counts,
                approximant,
                error,
            });
        }
    }
    Ok(best.expect("trials >= 1"))
}

/// Scales every column of `z` to unit 2-norm; zero columns stay zero.
pub fn normalize_columns(z: &CMatrix) -> (CMatrix, Vec<f64>) {
    let norms: Vec<f64> = (0..z.cols())
        .map(|j| (0..z.rows()).map(|i| z[(i, j)].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let y = CMatrix::from_fn(z.rows(), z.cols(), |i, j| {
        if norms[j] == 0.0 {
            ZERO
        } else {
            z[(i, j)] / norms[j]
        }
    });
    (y, norms)
}

/// The `4dm` basis matrices `{+-Y e_i e_j^T, +-Y c_i e_j^T}` for `Y` of size
/// `n x d`, where `c_i = sqrt(-1) e_i`. Element `4 (i m + j) + t` has sign
/// `+` for even `t` and uses `c_i` for `t >= 2`.
pub fn lemma1_construct_basis(y: &CMatrix, m: usize) -> Vec<CMatrix> {
    let (n, d) = (y.rows(), y.cols());
    let mut basis = Vec::with_capacity(4 * d * m);
    for i in 0..d {
        for j in 0..m {
            for (unit, sign) in [(Complex::new(1.0, 0.0), 1.0), (Complex::new(1.0, 0.0), -1.0), (I, 1.0), (I, -1.0)] {
                basis.push(CMatrix::from_fn(n, m, |r, c| {
                    if c == j {
                        y[(r, i)] * unit * sign
                    } else {
                        ZERO
                    }
                }));
            }
        }
    }
    basis
}

/// Nonnegative weights on the basis with `sum w_t V_t = Y S`, one signed
/// real and one signed imaginary direction per entry of `S`.
fn decompose(s: &CMatrix) -> Vec<f64> {
    let (d, m) = (s.rows(), s.cols());
    let mut w = vec![0.0; 4 * d * m];
    for i in 0..d {
        for j in 0..m {
            let base = 4 * (i * m + j);
            let v = s[(i, j)];
            w[base + usize::from(v.re < 0.0)] = v.re.abs();
            w[base + 2 + usize::from(v.im < 0.0)] = v.im.abs();
        }
    }
    w
}

/// One target `ZA` run through the cover construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverSample {
    pub error: f64,
    pub counts: Vec<usize>,
    /// Hull scale of the cover point: `alpha`, or the decomposition mass
    /// when that exceeds it.
    pub scale: f64,
    pub overflow: bool,
    /// `||Y S - ZA||_2` before sparsification.
    pub reconstruction_error: f64,
    /// `||S||_1 / alpha` with entry moduli.
    pub l1_ratio: f64,
}

/// Covers `ZA` by a point of `(alpha / k) sum k_i V_i`, with
/// `alpha = a ||Z||_2` and `k = ceil(a^2 ||Z||_2^2 / eps^2)`.
pub fn lemma1_cover_point(z: &CMatrix, a_mat: &CMatrix, a: f64, eps: f64, trials: usize, seed: u64) -> Result<CoverSample> {
    if z.cols() != a_mat.rows() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} columns, A has {} rows",
            z.cols(),
            a_mat.rows()
        )));
    }
    let z_norm = z.frobenius_norm();
    if z_norm == 0.0 {
        return Err(Error::InvalidInput("Z must be nonzero".into()));
    }
    let m = a_mat.cols();
    let alpha = a * z_norm;
    let k = linear_sparsity(a, z_norm, m, f64::INFINITY, eps) as usize;

    let (y, col_norms) = normalize_columns(z);
    let s = CMatrix::from_fn(a_mat.rows(), m, |i, j| a_mat[(i, j)] * col_norms[i]);
    let l1: f64 = s.data().iter().map(|v| v.norm()).sum();
    let basis = lemma1_construct_basis(&y, m);
    let mut weights = decompose(&s);

    let za = z.matmul(a_mat)?;
    let reconstruction_error = distance(&combine(&basis, weights.iter().copied()), &za);

    let mass: f64 = weights.iter().sum();
    let overflow = mass > alpha;
    if !overflow {
        // The +- pair of the first atom cancels, so padding keeps the target.
        let pad = (alpha - mass) / 2.0;
        weights[0] += pad;
        weights[1] += pad;
    }
    let inst = MaureyInstance::new(basis, weights, k)?;
    let best = maurey_sparsify(&inst, trials, seed)?;
    Ok(CoverSample {
        error: distance(&best.approximant, &za),
        counts: best.counts,
        scale: inst.alpha(),
        overflow,
        reconstruction_error,
        l1_ratio: l1 / alpha,
    })
}

/// Uniform entries in the unit box, rescaled so `||A||_{2,1} = a`.
pub fn sample_two_one_ball(d: usize, m: usize, a: f64, rng: &mut rng::Rng) -> CMatrix {
    let raw = CMatrix::from_fn(d, m, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let norm = raw.pq_norm(2.0, 1.0);
    if norm == 0.0 {
        raw
    } else {
        raw.scale(Complex::new(a / norm, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub a: f64,
    pub eps: f64,
    pub r: f64,
    pub samples: usize,
    pub trials: usize,
    pub z_norm: f64,
    pub alpha: f64,
    pub k: usize,
    /// Worst best-of-trials error over the samples.
    pub achieved_error: f64,
    pub mean_error: f64,
    /// `alpha / sqrt(k)`, the square root of the expectation bound.
    pub theoretical_error: f64,
    pub fraction_within_eps: f64,
    pub fraction_within_sqrt2_eps: f64,
    pub distinct_cover_points_used: usize,
    pub bound_ln_cover: f64,
    pub hull_overflow: usize,
    pub max_reconstruction_error: f64,
    pub max_l1_ratio: f64,
}

impl CoverReport {
    /// Violated guarantees, empty when the cover behaves as the lemma says.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.fraction_within_sqrt2_eps < 1.0 {
            v.push(format!(
                "only {:.3} of samples within sqrt(2)*eps (worst error {})",
                self.fraction_within_sqrt2_eps, self.achieved_error
            ));
        }
        if self.fraction_within_eps < 0.9 {
            v.push(format!("only {:.3} of samples within eps", self.fraction_within_eps));
        }
        if (self.distinct_cover_points_used as f64).ln() > self.bound_ln_cover {
            v.push("more distinct cover points than the covering bound allows".into());
        }
        if self.max_reconstruction_error > 1e-10 {
            v.push(format!("decomposition error {}", self.max_reconstruction_error));
        }
        if self.max_l1_ratio > 1.0 + 1e-12 {
            v.push(format!("||S||_1 exceeded alpha by ratio {}", self.max_l1_ratio));
        }
        v
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("d", self.d);
        doc.push("m", self.m);
        doc.push("n", self.n);
        doc.push_f64("a", self.a);
        doc.push_f64("eps", self.eps);
        doc.push_f64("r", self.r);
        doc.push("samples", self.samples);
        doc.push("trials", self.trials);
        doc.push_f64("z_norm", self.z_norm);
        doc.push_f64("alpha", self.alpha);
        doc.push("k", self.k);
        doc.push_f64("achieved_error", self.achieved_error);
        doc.push_f64("mean_error", self.mean_error);
        doc.push_f64("theoretical_error", self.theoretical_error);
        doc.push_f64("fraction_within_eps", self.fraction_within_eps);
        doc.push_f64("fraction_within_sqrt2_eps", self.fraction_within_sqrt2_eps);
        doc.push("distinct_cover_points_used", self.distinct_cover_points_used);
        doc.push_f64("bound_ln_cover", self.bound_ln_cover);
        doc.push("hull_overflow", self.hull_overflow);
        doc.push_f64("max_reconstruction_error", self.max_reconstruction_error);
        doc.push_f64("max_l1_ratio", self.max_l1_ratio);
        doc
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        Ok(Self {
            d: doc.require_usize("d")?,
            m: doc.require_usize("m")?,
            n: doc.require_usize("n")?,
            a: doc.require_f64("a")?,
            eps: doc.require_f64("eps")?,
            r: doc.require_f64("r")?,
            samples: doc.require_usize("samples")?,
            trials: doc.require_usize("trials")?,
            z_norm: doc.require_f64("z_norm")?,
            alpha: doc.require_f64("alpha")?,
            k: doc.require_usize("k")?,
            achieved_error: doc.require_f64("achieved_error")?,
            mean_error: doc.require_f64("mean_error")?,
            theoretical_error: doc.require_f64("theoretical_error")?,
            fraction_within_eps: doc.require_f64("fraction_within_eps")?,
            fraction_within_sqrt2_eps: doc.require_f64("fraction_within_sqrt2_eps")?,
            distinct_cover_points_used: doc.require_usize("distinct_cover_points_used")?,
            bound_ln_cover: doc.require_f64("bound_ln_cover")?,
            hull_overflow: doc.require_usize("hull_overflow")?,
            max_reconstruction_error: doc.require_f64("max_reconstruction_error")?,
            max_l1_ratio: doc.require_f64("max_l1_ratio")?,
        })
    }
}

/// Pointwise check of the linear cover on `n_samples` random `A` of size
/// `d x m` on the sphere `||A||_{2,1} = a`, for the `n x d` data matrix `z`.
pub fn lemma1_cover_check(
    z: &CMatrix,
    m: usize,
    a: f64,
    eps: f64,
    n_samples: usize,
    trials: usize,
    seed: u64,
) -> Result<CoverReport> {
    if !(a > 0.0 && eps > 0.0) {
        return Err(Error::InvalidInput("a and eps must be positive".into()));
    }
    if m == 0 || n_samples == 0 || trials == 0 {
        return Err(Error::InvalidInput("m, samples and trials must be positive".into()));
    }
    let z_norm = z.frobenius_norm();
    if z_norm == 0.0 {
        return Err(Error::InvalidInput("Z must be nonzero".into()));
    }
    let d = z.cols();
    let mut sampler = rng::derived(seed, 0);
    let mut distinct: HashSet<(Vec<usize>, u64)> = HashSet::new();
    let mut errors = Vec::with_capacity(n_samples);
    let (mut overflow, mut max_rec, mut max_l1) = (0, 0.0_f64, 0.0_f64);
    for s in 0..n_samples {
        let a_mat = sample_two_one_ball(d, m, a, &mut sampler);
        let trial_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s as u64 + 1);
        let p = lemma1_cover_point(z, &a_mat, a, eps, trials, trial_seed)?;
        overflow += usize::from(p.overflow);
        max_rec = max_rec.max(p.reconstruction_error);
        max_l1 = max_l1.max(p.l1_ratio);
        distinct.insert((p.counts, p.scale.to_bits()));
        errors.push(p.error);
    }
    let alpha = a * z_norm;
    let k = linear_sparsity(a, z_norm, m, f64::INFINITY, eps) as usize;
    let frac = |limit: f64| errors.iter().filter(|&&e| e <= limit).count() as f64 / n_samples as f64;
    Ok(CoverReport {
        d,
        m,
        n: z.rows(),
        a,
        eps,
        r: f64::INFINITY,
        samples: n_samples,
        trials,
        z_norm,
        alpha,
        k,
        achieved_error: errors.iter().copied().fold(0.0, f64::max),
        mean_error: errors.iter().sum::<f64>() / n_samples as f64,
        theoretical_error: alpha / (k as f64).sqrt(),
        fraction_within_eps: frac(eps),
        fraction_within_sqrt2_eps: frac(std::f64::consts::SQRT_2 * eps),
        distinct_cover_points_used: distinct.len(),
        bound_ln_cover: covering_bound_linear(a, z_norm, m, f64::INFINITY, eps, d)?,
        hull_overflow: overflow,
        max_reconstruction_error: max_rec,
        max_l1_ratio: max_l1,
    })
}
