//! Complex activation functions.
//!
//! Split activations act on real and imaginary parts independently;
//! amplitude/phase activations rescale the modulus and keep the phase.
//! Backpropagation treats every activation as a map on `(re, im)` pairs, so
//! each kind exposes its real 2x2 Jacobian.

use std::fmt;
use std::str::FromStr;

use crate::linalg::Complex;
use crate::rng;
use crate::{Error, Result};
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `tanh(Re z) + i tanh(Im z)`.
    SplitTanh,
    /// `ReLU(Re z) + i ReLU(Im z)`.
    CReLU,
    /// `ReLU(|z| + b) z / |z|`.
    ModReLU { bias: f64 },
    /// `tanh(|z|) exp(i arg z)`.
    AmplitudeTanh,
}

/// Lipschitz constant, where one is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    Declared(f64),
    Unknown,
}

impl Lipschitz {
    pub fn value(self) -> Option<f64> {
        match self {
            Lipschitz::Declared(v) => Some(v),
            Lipschitz::Unknown => None,
        }
    }
}

/// Partials of `(Re out, Im out)` with respect to `(Re in, Im in)`, row-major:
/// `[[dRe/dx, dRe/dy], [dIm/dx, dIm/dy]]`.
pub type Jacobian = [[f64; 2]; 2];

const ZERO: Complex = Complex::new(0.0, 0.0);

// Below this radius tanh(r)/r and its derivative use their Taylor series.
const SMALL_RADIUS: f64 = 1e-4;

impl Activation {
    pub fn apply(self, z: Complex) -> Complex {
        match self {
            Activation::SplitTanh => Complex::new(z.re.tanh(), z.im.tanh()),
            Activation::CReLU => Complex::new(z.re.max(0.0), z.im.max(0.0)),
            Activation::ModReLU { bias } => {
                let r = z.norm();
                // z = 0 maps to 0 whatever the bias: the phase is undefined there.
                if r == 0.0 || r + bias <= 0.0 {
                    ZERO
                } else {
                    z * ((r + bias) / r)
                }
            }
            Activation::AmplitudeTanh => z * tanh_over_r(z.norm()),
        }
    }

    /// Jacobian of [`apply`](Self::apply) at `z`. At kinks (CReLU axes,
    /// `|z| + b = 0` for modReLU) the inactive coordinate gets a zero row.
    pub fn jacobian(self, z: Complex) -> Jacobian {
        match self {
            Activation::SplitTanh => {
                let dx = 1.0 - z.re.tanh().powi(2);
                let dy = 1.0 - z.im.tanh().powi(2);
                [[dx, 0.0], [0.0, dy]]
            }
            Activation::CReLU => {
                let dx = if z.re > 0.0 { 1.0 } else { 0.0 };
                let dy = if z.im > 0.0 { 1.0 } else { 0.0 };
                [[dx, 0.0], [0.0, dy]]
            }
            Activation::ModReLU { bias } => {
                let r = z.norm();
                if r == 0.0 || r + bias <= 0.0 {
                    return [[0.0; 2]; 2];
                }
                // f = (1 + b/r) z
                let g = 1.0 + bias / r;
                let r3 = r * r * r;
                let (x, y) = (z.re, z.im);
                [
                    [g - bias * x * x / r3, -bias * x * y / r3],
                    [-bias * x * y / r3, g - bias * y * y / r3],
                ]
            }
            Activation::AmplitudeTanh => {
                // f = g(r) z with g = tanh(r)/r, so df_x/dx = g + g'(r) x^2 / r.
                let r = z.norm();
                let g = tanh_over_r(r);
                let h = tanh_over_r_deriv_over_r(r);
                let (x, y) = (z.re, z.im);
                [[g + h * x * x, h * x * y], [h * x * y, g + h * y * y]]
            }
        }
    }

    /// Closed-form Lipschitz constant (w.r.t. the Euclidean norm on
    /// `(re, im)`). Amplitude-tanh's constant `2a + 1` holds on the box
    /// `|Re z|, |Im z| <= a` and needs that bound.
    pub fn declared_lipschitz(self, domain_bound: Option<f64>) -> Result<Lipschitz> {
        match self {
            Activation::SplitTanh | Activation::CReLU => Ok(Lipschitz::Declared(1.0)),
            Activation::ModReLU { .. } => Ok(Lipschitz::Unknown),
            Activation::AmplitudeTanh => match domain_bound {
                Some(a) if a.is_finite() && a >= 0.0 => Ok(Lipschitz::Declared(2.0 * a + 1.0)),
                _ => Err(Error::MissingDomainBound("amplitude-tanh")),
            },
        }
    }

    /// Empirical lower bound on the Lipschitz constant: the largest ratio
    /// `|f(z1) - f(z2)| / |z1 - z2|` over `n_pairs` uniform pairs in the box
    /// `|Re z|, |Im z| <= domain_bound`.
    pub fn lipschitz_probe(self, domain_bound: f64, n_pairs: usize, seed: u64) -> Result<f64> {
        if n_pairs == 0 {
            return Err(Error::InvalidInput("lipschitz probe needs at least one pair".into()));
        }
        if !(domain_bound > 0.0 && domain_bound.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain bound must be positive and finite, got {domain_bound}"
            )));
        }
        let mut rng = rng::seeded(seed);
        let sample = |rng: &mut rng::Rng| {
            Complex::new(
                rng.random_range(-domain_bound..=domain_bound),
                rng.random_range(-domain_bound..=domain_bound),
            )
        };
        let mut best = 0.0_f64;
        let mut drawn = 0;
        while drawn < n_pairs {
            let z1 = sample(&mut rng);
            let z2 = sample(&mut rng);
            let dz = (z1 - z2).norm();
            if dz == 0.0 {
                continue;
            }
            drawn += 1;
            best = best.max((self.apply(z1) - self.apply(z2)).norm() / dz);
        }
        Ok(best)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::SplitTanh => "splittanh",
            Activation::CReLU => "crelu",
            Activation::ModReLU { .. } => "modrelu",
            Activation::AmplitudeTanh => "amptanh",
        }
    }
}

fn tanh_over_r(r: f64) -> f64 {
    if r < SMALL_RADIUS {
        1.0 - r * r / 3.0
    } else {
        r.tanh() / r
    }
}

/// `g'(r) / r` for `g(r) = tanh(r) / r`; tends to `-2/3` at the origin.
fn tanh_over_r_deriv_over_r(r: f64) -> f64 {
    if r < SMALL_RADIUS {
        -2.0 / 3.0 + 8.0 * r * r / 15.0
    } else {
        let t = r.tanh();
        let sech2 = 1.0 - t * t;
        (sech2 * r - t) / (r * r * r)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::ModReLU { bias } => write!(f, "modrelu({bias:?})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "splittanh" | "split-tanh" | "tanh" => Ok(Activation::SplitTanh),
            "crelu" | "relu" => Ok(Activation::CReLU),
            "amptanh" | "amplitude-tanh" | "amplitudetanh" => Ok(Activation::AmplitudeTanh),
            _ => {
                let inner = s
                    .strip_prefix("modrelu(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .ok_or_else(|| Error::InvalidInput(format!("unknown activation `{s}`")))?;
                let bias: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad modReLU bias `{inner}`")))?;
                if !bias.is_finite() {
                    return Err(Error::InvalidInput("modReLU bias must be finite".into()));
                }
                Ok(Activation::ModReLU { bias })
            }
        }
    }
}
