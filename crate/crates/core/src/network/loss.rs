use std::fmt;
use std::str::FromStr;

use super::{NetOutput, Network, SampleOut};
use crate::linalg::{CMatrix, Complex};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `||F(z) - y||_2` per sample (not squared), averaged over the batch.
    L2,
    /// Negative log-likelihood of the abs-head softmax.
    CrossEntropy,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "l2" => Ok(LossKind::L2),
            "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            other => Err(Error::InvalidInput(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L2 => "l2",
            LossKind::CrossEntropy => "cross_entropy",
        })
    }
}

impl LossKind {
    pub(crate) fn check_compatible(self, net: &Network) -> Result<()> {
        match (self, net.has_abs_head()) {
            (LossKind::CrossEntropy, false) => Err(Error::InvalidInput(
                "cross-entropy needs a network ending in an abs head".into(),
            )),
            (LossKind::L2, true) => Err(Error::InvalidInput(
                "L2 loss needs complex network outputs, not abs-head scores".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels(Vec<usize>),
    /// `n x d_L` complex regression targets.
    Complex(CMatrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Complex(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Targets::Labels(l) => Some(l),
            Targets::Complex(_) => None,
        }
    }

    /// Rows `idx` of the targets, in order.
    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
            Targets::Complex(m) => {
                let cols = m.cols();
                let data = idx.iter().flat_map(|&i| m.row(i).iter().copied()).collect();
                Targets::Complex(CMatrix::new(idx.len(), cols, data).expect("rows of a valid matrix"))
            }
        }
    }

    pub(crate) fn check(&self, n: usize, net: &Network) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {n} samples",
                self.len()
            )));
        }
        let d_out = net.output_shape().len();
        match self {
            Targets::Labels(l) => {
                if let Some(bad) = l.iter().find(|&&y| y >= d_out) {
                    return Err(Error::InvalidInput(format!(
                        "label {bad} out of range for {d_out} classes"
                    )));
                }
            }
            Targets::Complex(m) => {
                if m.cols() != d_out {
                    return Err(Error::DimensionMismatch(format!(
                        "targets have {} columns, network outputs {d_out}",
                        m.cols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A loss together with its running ceiling `M`: the largest per-sample
/// loss observed so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub kind: LossKind,
    pub ceiling: f64,
}

impl Loss {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, ceiling: 0.0 }
    }

    /// Mean per-sample loss of `output` against `targets`; raises the
    /// ceiling to the largest per-sample value seen.
    pub fn compute(&mut self, output: &NetOutput, targets: &Targets) -> Result<f64> {
        let per_sample = per_sample_losses(self.kind, output, targets)?;
        let worst = per_sample.iter().copied().fold(0.0, f64::max);
        self.observe(worst);
        Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
    }

    pub fn observe(&mut self, sample_loss: f64) {
        if sample_loss.is_finite() {
            self.ceiling = self.ceiling.max(sample_loss);
        }
    }
}

/// Loss of every row of `output` against `targets`.
pub fn per_sample_losses(kind: LossKind, output: &NetOutput, targets: &Targets) -> Result<Vec<f64>> {
    if output.rows() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outputs for {} targets",
            output.rows(),
            targets.len()
        )));
    }
    match (kind, output, targets) {
        (LossKind::L2, NetOutput::Complex(out), Targets::Complex(y)) => {
            if out.cols() != y.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "outputs have {} columns, targets {}",
                    out.cols(),
                    y.cols()
                )));
            }
            Ok((0..out.rows())
                .map(|r| {
                    out.row(r)
                        .iter()
                        .zip(y.row(r))
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                })
                .collect())
        }
        (LossKind::CrossEntropy, NetOutput::Scores(p), Targets::Labels(y)) => (0..p.rows())
            .map(|r| {
                let label = y[r];
                if label >= p.cols() {
                    return Err(Error::InvalidInput(format!(
                        "label {label} out of range for {} classes",
                        p.cols()
                    )));
                }
                Ok(-p[(r, label)].max(f64::MIN_POSITIVE).ln())
            })
            .collect(),
        (LossKind::CrossEntropy, NetOutput::Complex(_), _) => Err(Error::InvalidInput(
            "cross-entropy needs abs-head scores".into(),
        )),
        (kind, _, _) => Err(Error::InvalidInput(format!(
            "{kind} loss does not match the output/target kinds"
        ))),
    }
}

/// Loss of sample `r` and the gradient seeding backprop: w.r.t. the complex
/// outputs for L2, w.r.t. the abs-head moduli (in the real parts) for
/// cross-entropy.
pub(super) fn sample_loss_and_grad(
    kind: LossKind,
    out: &SampleOut,
    targets: &Targets,
    r: usize,
) -> Result<(f64, Vec<Complex>)> {
    match (kind, out, targets) {
        (LossKind::L2, SampleOut::Complex(f), Targets::Complex(y)) => {
            let diff: Vec<Complex> = f.iter().zip(y.row(r)).map(|(a, b)| a - b).collect();
            let l = crate::linalg::vec_norm(&diff);
            let grad = if l == 0.0 {
                vec![Complex::new(0.0, 0.0); diff.len()]
            } else {
                diff.iter().map(|d| d / l).collect()
            };
            Ok((l, grad))
        }
        (LossKind::CrossEntropy, SampleOut::Scores(p), Targets::Labels(y)) => {
            let label = y[r];
            let l = -p[label].max(f64::MIN_POSITIVE).ln();
            let grad = p
                .iter()
                .enumerate()
                .map(|(k, &pk)| Complex::new(pk - if k == label { 1.0 } else { 0.0 }, 0.0))
                .collect();
            Ok((l, grad))
        }
        _ => Err(Error::InvalidInput(format!(
            "{kind} loss does not match the output/target kinds"
        ))),
    }
}

/// Fraction of rows whose arg-max score equals the label.
pub fn accuracy(output: &NetOutput, labels: &[usize]) -> Result<f64> {
    let NetOutput::Scores(p) = output else {
        return Err(Error::InvalidInput("accuracy needs class scores".into()));
    };
    if p.rows() != labels.len() || labels.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} score rows for {} labels",
            p.rows(),
            labels.len()
        )));
    }
    let hits = (0..p.rows())
        .filter(|&r| {
            let mut best = 0;
            for k in 1..p.cols() {
                if p[(r, k)] > p[(r, best)] {
                    best = k;
                }
            }
            best == labels[r]
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
