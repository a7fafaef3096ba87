//! Dense complex matrices and the matrix norms used throughout the crate.
//!
//! All complex-matrix norms follow the entry-modulus convention: the norm of
//! `[A_ij]` is the corresponding real norm of `[|A_ij|]`. The spectral norm
//! is the operator norm `sqrt(lambda_max(A* A))`, computed by power
//! iteration; [`oracle`] holds an independent dense path through the real
//! embedding used to check it.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::rng;
use crate::{Error, Result};

pub type Complex = num_complex::Complex64;

/// `(sum |x|^p)^(1/p)`, with `p = inf` giving the maximum.
pub fn lp_norm<I: IntoIterator<Item = f64>>(values: I, p: f64) -> f64 {
    if p.is_infinite() {
        values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        values.into_iter().map(f64::abs).sum()
    } else if p == 2.0 {
        values.into_iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        values
            .into_iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

pub fn vec_norm(v: &[Complex]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense row-major complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            data.iter().map(|&x| Complex::new(x, 0.0)).collect(),
        )
    }

    /// Entries with independent standard complex Gaussian values.
    pub fn random(rows: usize, cols: usize, rng: &mut rng::Rng) -> Self {
        Self::from_fn(rows, cols, |_, _| rng::complex_normal(rng))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[Complex] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scale(&self, c: Complex) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    /// `A*`: `result[j, i] = conj(A[i, j])`.
    pub fn hermitian_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    /// Plain transpose, no conjugation.
    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[Complex]) -> Result<Vec<Complex>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `y = A* x` without materializing the transpose.
    pub fn matvec_adjoint(&self, x: &[Complex]) -> Result<Vec<Complex>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for the adjoint of a {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        let mut y = vec![Complex::new(0.0, 0.0); self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (yc, a) in y.iter_mut().zip(self.row(r)) {
                *yc += a.conj() * xr;
            }
        }
        Ok(y)
    }

    /// Frobenius norm, `sqrt(sum |A_ij|^2)`.
    pub fn frobenius_norm(&self) -> f64 {
        vec_norm(&self.data)
    }

    /// `||A||_{p,q}`: the q-norm of the vector of column p-norms, with
    /// columns measured on entry moduli. `q` (or `p`) may be infinite.
    pub fn pq_norm(&self, p: f64, q: f64) -> f64 {
        let col_norms = (0..self.cols).map(|c| lp_norm((0..self.rows).map(|r| self[(r, c)].norm()), p));
        lp_norm(col_norms, q)
    }

    /// Largest singular value by power iteration on `A* A`.
    pub fn spectral_norm(&self, opts: &PowerIteration) -> SpectralEstimate {
        if self.is_zero() {
            return SpectralEstimate::zero();
        }
        power_iteration(self.cols, opts, |v, out| {
            let av = self.matvec(v).expect("power iterate has matching length");
            let aav = self.matvec_adjoint(&av).expect("image has matching length");
            out.copy_from_slice(&aav);
        })
    }

    /// Block form `[[C, -D], [D, C]]` of `A = C + iD`, acting on stacked
    /// `(re; im)` coordinates.
    pub fn real_embedding(&self) -> RMatrix {
        let (m, n) = (self.rows, self.cols);
        let mut out = RMatrix::zeros(2 * m, 2 * n);
        for r in 0..m {
            for c in 0..n {
                let z = self[(r, c)];
                out[(r, c)] = z.re;
                out[(r, n + c)] = -z.im;
                out[(m + r, c)] = z.im;
                out[(m + r, n + c)] = z.re;
            }
        }
        out
    }

    /// `[|A_ij|]`.
    pub fn entrywise_modulus(&self) -> RMatrix {
        RMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex;

    fn index(&self, (r, c): (usize, usize)) -> &Complex {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &RMatrix) -> Result<RMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * x[c]).sum())
            .collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        lp_norm(self.data.iter().copied(), 2.0)
    }

    pub fn pq_norm(&self, p: f64, q: f64) -> f64 {
        let col_norms = (0..self.cols).map(|c| lp_norm((0..self.rows).map(|r| self[(r, c)]), p));
        lp_norm(col_norms, q)
    }
}

impl Index<(usize, usize)> for RMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Power-iteration settings. Convergence is declared when the relative
/// change of the Rayleigh quotient drops below `tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SpectralEstimate {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

/// Power iteration on a Hermitian positive semi-definite operator given by
/// `apply_gram(v, out)`, which must write `A* A v` into `out`. Returns the
/// square root of the dominant eigenvalue, i.e. the largest singular value
/// of `A`.
pub fn power_iteration<F>(dim: usize, opts: &PowerIteration, mut apply_gram: F) -> SpectralEstimate
where
    F: FnMut(&[Complex], &mut [Complex]),
{
    let mut rng = rng::seeded(opts.seed);
    let mut v: Vec<Complex> = (0..dim).map(|_| rng::complex_normal(&mut rng)).collect();
    let n0 = vec_norm(&v);
    v.iter_mut().for_each(|z| *z /= n0);

    let mut w = vec![Complex::new(0.0, 0.0); dim];
    let mut prev: Option<f64> = None;
    let mut rq = 0.0;
    for it in 1..=opts.max_iter {
        apply_gram(&v, &mut w);
        // v is unit, so <v, Gv> is the Rayleigh quotient; real for Hermitian G.
        rq = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        let nw = vec_norm(&w);
        if nw == 0.0 {
            return SpectralEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if let Some(p) = prev {
            if (rq - p).abs() <= opts.tol * rq.abs() {
                return SpectralEstimate {
                    value: rq.max(0.0).sqrt(),
                    iterations: it,
                    converged: true,
                };
            }
        }
        prev = Some(rq);
    }
    SpectralEstimate {
        value: rq.max(0.0).sqrt(),
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Dense reference path: eigenvalues of symmetric real matrices by cyclic
/// Jacobi rotations, sharing no code with [`power_iteration`].
pub mod oracle {
    use super::RMatrix;

    /// All eigenvalues of a symmetric matrix, unsorted.
    pub fn symmetric_eigenvalues(m: &RMatrix) -> Vec<f64> {
        assert_eq!(m.rows(), m.cols(), "Jacobi needs a square matrix");
        let n = m.rows();
        let mut a = m.clone();
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }

    /// Largest singular value of a real matrix via the eigenvalues of its
    /// Gram matrix `M^T M`.
    pub fn largest_singular_value(m: &RMatrix) -> f64 {
        let gram = m.transpose().matmul(m).expect("Gram shapes agree");
        symmetric_eigenvalues(&gram)
            .into_iter()
            .fold(0.0_f64, f64::max)
            .sqrt()
    }
}
