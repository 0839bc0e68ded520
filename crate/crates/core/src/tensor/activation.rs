use std::fmt;
use std::str::FromStr;

use super::dense::DenseMatrix;
use crate::error::{GgdError, Result};

/// Slope used by leaky ReLU.
pub const LEAKY_SLOPE: f32 = 0.01;
/// Initial slope of a learnable PReLU.
pub const PRELU_INIT: f32 = 0.25;

/// Elementwise nonlinearity of encoder layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    /// Parametric ReLU with a learnable scalar slope per layer.
    PRelu,
    Relu,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    /// Slope a fresh layer starts with.
    pub fn initial_slope(self) -> f32 {
        match self {
            Activation::PRelu => PRELU_INIT,
            Activation::Relu => 0.0,
            Activation::LeakyRelu => LEAKY_SLOPE,
            Activation::Sigmoid => 0.0,
        }
    }

    pub fn slope_is_learnable(self) -> bool {
        matches!(self, Activation::PRelu)
    }

    pub fn apply(self, x: &DenseMatrix, slope: f32) -> DenseMatrix {
        match self {
            Activation::Sigmoid => x.map(sigmoid),
            _ => prelu(x, slope),
        }
    }

    /// Gradient with respect to the input, and with respect to the slope.
    pub fn backward(self, grad: &DenseMatrix, input: &DenseMatrix, slope: f32) -> Result<(DenseMatrix, f64)> {
        match self {
            Activation::Sigmoid => {
                let g = grad.zip_with(input, |g, x| {
                    let s = sigmoid(x);
                    g * s * (1.0 - s)
                })?;
                Ok((g, 0.0))
            }
            _ => prelu_backward(grad, input, slope),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::PRelu => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Activation::PRelu,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu,
            3 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::PRelu => "prelu",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "lrelu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = GgdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prelu" => Ok(Activation::PRelu),
            "relu" => Ok(Activation::Relu),
            "lrelu" | "leaky_relu" => Ok(Activation::LeakyRelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(GgdError::config("activation", format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    sigmoid64(x as f64) as f32
}

#[inline]
pub fn sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x` where positive, `slope · x` elsewhere.
pub fn prelu(x: &DenseMatrix, slope: f32) -> DenseMatrix {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Returns the input gradient and `Σ min(0, x) · grad` (the slope gradient).
pub fn prelu_backward(grad: &DenseMatrix, input: &DenseMatrix, slope: f32) -> Result<(DenseMatrix, f64)> {
    let g_in = grad.zip_with(input, |g, x| if x > 0.0 { g } else { slope * g })?;
    let g_slope = grad
        .as_slice()
        .iter()
        .zip(input.as_slice())
        .filter(|(_, &x)| x <= 0.0)
        .map(|(&g, &x)| g as f64 * x as f64)
        .sum();
    Ok((g_in, g_slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngState, Stream};

    #[test]
    fn zero_slope_is_relu() {
        let x = DenseMatrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        assert_eq!(prelu(&x, 0.0).as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn unit_slope_is_identity() {
        let x = DenseMatrix::from_rows(&[vec![-1.5, 0.0, 3.0]]).unwrap();
        assert_eq!(prelu(&x, 1.0), x);
    }

    /// f64 objective `Σ c_ij · prelu(x_ij)` for finite differences.
    fn objective(x: &[f64], c: &[f64], slope: f64) -> f64 {
        x.iter()
            .zip(c)
            .map(|(&v, &w)| w * if v > 0.0 { v } else { slope * v })
            .sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngState::new(21, Stream::Data);
        let (r, c) = (4, 5);
        // keep entries away from the kink at zero
        let x = DenseMatrix::from_fn(r, c, |_, _| {
            let v = rng.uniform() * 2.0 - 1.0;
            (if v.abs() < 0.05 { 0.3 } else { v }) as f32
        });
        let g = DenseMatrix::from_fn(r, c, |_, _| (rng.uniform() * 2.0 - 1.0) as f32);
        let slope = 0.25f32;
        let (gx, gs) = prelu_backward(&g, &x, slope).unwrap();

        let x64: Vec<f64> = x.as_slice().iter().map(|&v| v as f64).collect();
        let c64: Vec<f64> = g.as_slice().iter().map(|&v| v as f64).collect();
        let h = 1e-4;
        for k in 0..x64.len() {
            let mut p = x64.clone();
            let mut m = x64.clone();
            p[k] += h;
            m[k] -= h;
            let fd = (objective(&p, &c64, 0.25) - objective(&m, &c64, 0.25)) / (2.0 * h);
            let an = gx.as_slice()[k] as f64;
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3), "{k}: {fd} vs {an}");
        }
        let fd = (objective(&x64, &c64, 0.25 + h) - objective(&x64, &c64, 0.25 - h)) / (2.0 * h);
        assert!((fd - gs).abs() <= 1e-4 * fd.abs().max(1e-3));
    }

    #[test]
    fn parse_round_trip() {
        for a in [Activation::PRelu, Activation::Relu, Activation::LeakyRelu, Activation::Sigmoid] {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
            assert_eq!(Activation::from_code(a.code()), Some(a));
        }
        assert!("tanh".parse::<Activation>().is_err());
    }
}
