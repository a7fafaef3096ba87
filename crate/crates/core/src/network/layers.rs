//! Per-sample kernels for each layer type, forward and backward.
//!
//! Tensors are flat `Vec<Complex>` in channel-major `(c, y, x)` order.
//! Gradients are carried as complex numbers whose real and imaginary parts
//! are the partials with respect to the real and imaginary parts of the
//! corresponding value, so `dL/dx = conj(w) * dL/dy` for `y = w x`.

use super::Shape;
use crate::activations::Activation;
use crate::linalg::Complex;

const ZERO: Complex = Complex::new(0.0, 0.0);

pub(crate) fn dense_forward(
    weights: &[Complex],
    thresholds: &[Complex],
    inputs: usize,
    x: &[Complex],
    out: &mut [Complex],
) {
    for (o, y) in out.iter_mut().enumerate() {
        let row = &weights[o * inputs..(o + 1) * inputs];
        let mut acc = thresholds.get(o).copied().unwrap_or(ZERO);
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        *y = acc;
    }
}

/// Accumulates weight/threshold gradients and, when `grad_x` is given, the
/// input gradient.
pub(crate) fn dense_backward(
    weights: &[Complex],
    inputs: usize,
    x: &[Complex],
    grad_out: &[Complex],
    grad_w: &mut [Complex],
    grad_h: &mut [Complex],
    grad_x: Option<&mut [Complex]>,
) {
    for (o, g) in grad_out.iter().enumerate() {
        if let Some(gh) = grad_h.get_mut(o) {
            *gh += g;
        }
        let gw = &mut grad_w[o * inputs..(o + 1) * inputs];
        for (gwi, xi) in gw.iter_mut().zip(x) {
            *gwi += g * xi.conj();
        }
    }
    if let Some(gx) = grad_x {
        gx.iter_mut().for_each(|v| *v = ZERO);
        for (o, g) in grad_out.iter().enumerate() {
            let row = &weights[o * inputs..(o + 1) * inputs];
            for (gxi, w) in gx.iter_mut().zip(row) {
                *gxi += w.conj() * g;
            }
        }
    }
}

/// Geometry of a stride-1, valid-padding convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    fn kernel_offset(&self, o: usize, c: usize) -> usize {
        (o * self.input.channels + c) * self.kh * self.kw
    }
}

/// Real and imaginary parts of a complex slice, as separate planes.
fn split(x: &[Complex]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().map(|z| z.re).collect(), x.iter().map(|z| z.im).collect())
}

// The kernels below run each kernel tap over one contiguous span of the
// input: output row `y` is computed at full input width `iw`, so positions
// past `ow` in a row are wrap-around junk that is discarded (forward) or
// fed zeros (adjoint, parameter gradient).
impl ConvGeom {
    fn span(&self) -> usize {
        (self.output.height - 1) * self.input.width + self.output.width
    }

    fn tap_base(&self, c: usize, i: usize, j: usize) -> usize {
        c * self.input.height * self.input.width + i * self.input.width + j
    }

    /// Output plane `o` of `grad` laid out at input width, junk columns zero.
    fn padded_plane(&self, grad: &[Complex], o: usize, re: &mut [f64], im: &mut [f64]) {
        let (oh, ow, iw) = (self.output.height, self.output.width, self.input.width);
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..oh {
            for x in 0..ow {
                let v = grad[o * oh * ow + y * ow + x];
                re[y * iw + x] = v.re;
                im[y * iw + x] = v.im;
            }
        }
    }
}

/// `(yr, yi) += k * (xr, xi)` elementwise on split planes.
fn axpy(k: Complex, xr: &[f64], xi: &[f64], yr: &mut [f64], yi: &mut [f64]) {
    let n = yr.len();
    let (xr, xi, yi) = (&xr[..n], &xi[..n], &mut yi[..n]);
    for t in 0..n {
        yr[t] += k.re * xr[t] - k.im * xi[t];
        yi[t] += k.re * xi[t] + k.im * xr[t];
    }
}

/// `out[o, y, x] = sum_{c,i,j} k[o, c, i, j] * in[c, y + i, x + j] + h[o]`.
pub(crate) fn conv_forward(
    g: &ConvGeom,
    kernel: &[Complex],
    thresholds: &[Complex],
    x: &[Complex],
    out: &mut [Complex],
) {
    let (oh, ow, iw) = (g.output.height, g.output.width, g.input.width);
    let span = g.span();
    let (xr, xi) = split(x);
    let (mut ar, mut ai) = (vec![0.0; span], vec![0.0; span]);
    for o in 0..g.output.channels {
        let h = thresholds.get(o).copied().unwrap_or(ZERO);
        ar.iter_mut().for_each(|v| *v = h.re);
        ai.iter_mut().for_each(|v| *v = h.im);
        for c in 0..g.input.channels {
            let k = &kernel[g.kernel_offset(o, c)..g.kernel_offset(o, c) + g.kh * g.kw];
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let kv = k[i * g.kw + j];
                    if kv == ZERO {
                        continue;
                    }
                    let base = g.tap_base(c, i, j);
                    axpy(kv, &xr[base..base + span], &xi[base..base + span], &mut ar, &mut ai);
                }
            }
        }
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                plane[y * ow + x] = Complex::new(ar[y * iw + x], ai[y * iw + x]);
            }
        }
    }
}

/// Adjoint of the linear part of [`conv_forward`]: correlation of the
/// output-space signal with the conjugated kernel, scattered back to input
/// positions.
pub(crate) fn conv_adjoint(g: &ConvGeom, kernel: &[Complex], grad_out: &[Complex], grad_x: &mut [Complex]) {
    let span = g.span();
    let plane_len = g.output.height * g.input.width;
    let (mut gr, mut gi) = (vec![0.0; plane_len], vec![0.0; plane_len]);
    let (mut dr, mut di) = (vec![0.0; grad_x.len()], vec![0.0; grad_x.len()]);
    for o in 0..g.output.channels {
        g.padded_plane(grad_out, o, &mut gr, &mut gi);
        for c in 0..g.input.channels {
            let k = &kernel[g.kernel_offset(o, c)..g.kernel_offset(o, c) + g.kh * g.kw];
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let kc = k[i * g.kw + j].conj();
                    if kc == ZERO {
                        continue;
                    }
                    let base = g.tap_base(c, i, j);
                    axpy(kc, &gr[..span], &gi[..span], &mut dr[base..base + span], &mut di[base..base + span]);
                }
            }
        }
    }
    for ((v, r), m) in grad_x.iter_mut().zip(dr).zip(di) {
        *v = Complex::new(r, m);
    }
}

pub(crate) fn conv_backward_params(
    g: &ConvGeom,
    x: &[Complex],
    grad_out: &[Complex],
    grad_k: &mut [Complex],
    grad_h: &mut [Complex],
) {
    let (oh, ow) = (g.output.height, g.output.width);
    let span = g.span();
    let plane_len = oh * g.input.width;
    let (xr, xi) = split(x);
    let (mut gr, mut gi) = (vec![0.0; plane_len], vec![0.0; plane_len]);
    for o in 0..g.output.channels {
        if let Some(gh) = grad_h.get_mut(o) {
            *gh += grad_out[o * oh * ow..(o + 1) * oh * ow].iter().sum::<Complex>();
        }
        g.padded_plane(grad_out, o, &mut gr, &mut gi);
        for c in 0..g.input.channels {
            let off = g.kernel_offset(o, c);
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let base = g.tap_base(c, i, j);
                    let (sr, si) = (&xr[base..base + span], &xi[base..base + span]);
                    // sum_t g[t] * conj(x[t])
                    let (gr, gi) = (&gr[..span], &gi[..span]);
                    let (mut re, mut im) = (0.0, 0.0);
                    for t in 0..span {
                        re += gr[t] * sr[t] + gi[t] * si[t];
                        im += gi[t] * sr[t] - gr[t] * si[t];
                    }
                    grad_k[off + i * g.kw + j] += Complex::new(re, im);
                }
            }
        }
    }
}

/// 2x2 / stride-2 pooling that keeps, per window, the entry of largest
/// modulus (first in row-major order on ties). Returns the selected input
/// indices.
pub(crate) fn maxpool_forward(input: Shape, output: Shape, x: &[Complex], out: &mut [Complex]) -> Vec<usize> {
    let mut picks = Vec::with_capacity(out.len());
    for c in 0..output.channels {
        for y in 0..output.height {
            for xo in 0..output.width {
                let mut best = usize::MAX;
                let mut best_mod = -1.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (c * input.height + 2 * y + dy) * input.width + 2 * xo + dx;
                        let m = x[idx].norm_sqr();
                        if m > best_mod {
                            best_mod = m;
                            best = idx;
                        }
                    }
                }
                out[(c * output.height + y) * output.width + xo] = x[best];
                picks.push(best);
            }
        }
    }
    picks
}

/// Multiplies an output-side gradient by the transposed activation Jacobian
/// evaluated at the pre-activation values.
pub(crate) fn activation_backward(act: Activation, pre: &[Complex], grad: &mut [Complex]) {
    for (g, z) in grad.iter_mut().zip(pre) {
        let j = act.jacobian(*z);
        *g = Complex::new(j[0][0] * g.re + j[1][0] * g.im, j[0][1] * g.re + j[1][1] * g.im);
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
