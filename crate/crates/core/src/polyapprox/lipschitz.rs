use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf};

/// Slack allowed on the `|slope| ≤ 1` constraint.
const SLOPE_SLACK: f64 = 1e-12;

/// A piecewise-linear 1-Lipschitz function normalised to `ℓ(0) = 0`:
///
/// `ℓ(u) = s₀·u + Σ_j α_j max(u - c_j, 0) - ℓ₀`
///
/// with `ℓ₀` chosen so that `ℓ(0) = 0`. Every partial slope lies in
/// `[-1, 1]`. Outside the breakpoints the function continues with its
/// boundary slopes, so it is defined on the whole line.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzFn {
    breakpoints: Vec<f64>,
    base_slope: f64,
    hinge_coeffs: Vec<f64>,
    offset: f64,
}

impl LipschitzFn {
    pub fn new(base_slope: f64, breakpoints: Vec<f64>, hinge_coeffs: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != hinge_coeffs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} breakpoints but {} hinge coefficients",
                breakpoints.len(),
                hinge_coeffs.len()
            )));
        }
        if breakpoints.iter().chain(&hinge_coeffs).any(|v| !v.is_finite()) || !base_slope.is_finite()
        {
            return Err(Error::InvalidParameter("non-finite Lipschitz parameters".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("breakpoints must be strictly increasing".into()));
        }
        let mut slope = base_slope;
        for s in std::iter::once(0.0).chain(hinge_coeffs.iter().copied()) {
            slope += s;
            if slope.abs() > 1.0 + SLOPE_SLACK {
                return Err(Error::InvalidParameter(format!("partial slope {slope} outside [-1, 1]")));
            }
        }
        let offset = breakpoints
            .iter()
            .zip(&hinge_coeffs)
            .map(|(&c, &a)| a * (-c).max(0.0))
            .sum();
        Ok(LipschitzFn { breakpoints, base_slope, hinge_coeffs, offset })
    }

    /// Builds the function from its slopes: `slopes[0]` left of the first
    /// breakpoint, `slopes[j]` between breakpoints `j-1` and `j`.
    pub fn from_slopes(breakpoints: Vec<f64>, slopes: &[f64]) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} slopes for {} breakpoints",
                slopes.len(),
                breakpoints.len()
            )));
        }
        let hinges = slopes.windows(2).map(|w| w[1] - w[0]).collect();
        Self::new(slopes[0], breakpoints, hinges)
    }

    /// Zig-zag with slopes alternating between `first_slope` and its negative.
    pub fn sawtooth(breakpoints: &[f64], first_slope: f64) -> Result<Self> {
        let slopes: Vec<f64> = (0..=breakpoints.len())
            .map(|j| if j % 2 == 0 { first_slope } else { -first_slope })
            .collect();
        Self::from_slopes(breakpoints.to_vec(), &slopes)
    }

    pub fn affine(slope: f64) -> Result<Self> {
        Self::new(slope, Vec::new(), Vec::new())
    }

    /// `ℓ(u) = |u|`.
    pub fn abs() -> Self {
        Self::new(-1.0, vec![0.0], vec![2.0]).expect("|u| is 1-Lipschitz")
    }

    pub fn zero() -> Self {
        Self::new(0.0, Vec::new(), Vec::new()).expect("zero is 1-Lipschitz")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn base_slope(&self) -> f64 {
        self.base_slope
    }

    pub fn hinge_coeffs(&self) -> &[f64] {
        &self.hinge_coeffs
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.base_slope * u
            + self
                .breakpoints
                .iter()
                .zip(&self.hinge_coeffs)
                .map(|(&c, &a)| a * (u - c).max(0.0))
                .sum::<f64>()
            - self.offset
    }

    pub fn is_zero(&self) -> bool {
        self.base_slope == 0.0 && self.hinge_coeffs.iter().all(|&a| a == 0.0)
    }
}

/// `(ℓ ∗ φ_σ)(θ)` in closed form. Affine parts pass through unchanged and each
/// hinge contributes `(θ-c)Φ((θ-c)/σ) + σφ((θ-c)/σ)`.
pub fn convolve_gauss(l: &LipschitzFn, sigma: f64, theta: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let hinges: f64 = l
        .breakpoints
        .iter()
        .zip(&l.hinge_coeffs)
        .map(|(&c, &a)| {
            let d = theta - c;
            let z = d / sigma;
            a * (d * norm_cdf(z) + sigma * norm_pdf(z))
        })
        .sum();
    l.base_slope * theta + hinges - l.offset
}
