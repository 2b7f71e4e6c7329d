//! Discrete exponential families `f(x|θ) = g(θ) w(x) θ^x` on the nonnegative
//! integers, together with their mixtures `h_Q(x) = ∫ f(x|θ) dQ(θ)`.
//!
//! All pmf evaluation goes through log space (`ln g + ln w + x ln θ`) and is
//! exponentiated at the end, so large `x` underflows gracefully to zero.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::special::{ln_factorial, ln_gamma};

/// Default relative budget for the series tail of a [`FamilyKind::CustomSeries`].
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;

/// Upper limit on any linear scan over `x`.
pub(crate) const X_SCAN_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// `w(x) = 1/x!`, `g(θ) = e^{-θ}`.
    Poisson,
    /// `w(x) = C(x+r-1, x)`, `g(θ) = (1-θ)^r`, `θ < 1`.
    NegBinomial { r: u32 },
    /// Explicit coefficient table `w(0..=x_cap)`.
    CustomSeries,
}

/// Growth of `1/w(x)`: bounded by a geometric sequence, or sandwiched between
/// `c^x x^{cx}` and `C^x x^{Cx}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthClass {
    GeometricBound,
    FactorialBound,
}

/// A discrete exponential family restricted to `θ ∈ [0, θ*]`.
///
/// For [`FamilyKind::CustomSeries`] the coefficient table ends at `x_cap`:
/// the family is the truncated series, `w(x) = 0` for `x > x_cap`, and
/// `1/g(θ) = Σ_{x ≤ x_cap} w(x) θ^x`. Construction verifies (by geometric
/// domination with ratio `w(x_cap)/w(x_cap-1)·θ*`) that the neglected tail of
/// the infinite series is within the requested relative budget.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    kind: FamilyKind,
    growth_class: GrowthClass,
    theta_star: f64,
    theta_radius: f64,
    x_cap: Option<u64>,
    w: Vec<f64>,
    log_w: Vec<f64>,
}

/// A parameter value validated against a family's support bound.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Theta(f64);

impl Theta {
    pub fn new(value: f64, family: &FamilySpec) -> Result<Self> {
        if value.is_finite() && (0.0..=family.theta_star).contains(&value) {
            Ok(Theta(value))
        } else {
            Err(Error::ThetaOutOfRange { value, theta_star: family.theta_star })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl FamilySpec {
    pub fn poisson(theta_star: f64) -> Result<Self> {
        check_theta_star(theta_star, f64::INFINITY)?;
        Ok(FamilySpec {
            kind: FamilyKind::Poisson,
            growth_class: GrowthClass::FactorialBound,
            theta_star,
            theta_radius: f64::INFINITY,
            x_cap: None,
            w: Vec::new(),
            log_w: Vec::new(),
        })
    }

    pub fn negative_binomial(r: u32, theta_star: f64) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidFamily("negative binomial needs r >= 1".into()));
        }
        check_theta_star(theta_star, 1.0)?;
        Ok(FamilySpec {
            kind: FamilyKind::NegBinomial { r },
            growth_class: GrowthClass::GeometricBound,
            theta_star,
            theta_radius: 1.0,
            x_cap: None,
            w: Vec::new(),
            log_w: Vec::new(),
        })
    }

    /// Custom series with the default tail budget [`DEFAULT_SERIES_TOL`].
    pub fn custom(
        w: Vec<f64>,
        growth_class: GrowthClass,
        theta_star: f64,
        theta_radius: Option<f64>,
    ) -> Result<Self> {
        Self::custom_with_tolerance(w, growth_class, theta_star, theta_radius, DEFAULT_SERIES_TOL)
    }

    /// Custom series whose neglected tail beyond the table must satisfy
    /// `Σ_{x > x_cap} w(x) θ*^x ≤ tol · Σ_{x ≤ x_cap} w(x) θ*^x`.
    pub fn custom_with_tolerance(
        w: Vec<f64>,
        growth_class: GrowthClass,
        theta_star: f64,
        theta_radius: Option<f64>,
        tol: f64,
    ) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::InvalidFamily(
                "custom series needs at least w(0) and w(1)".into(),
            ));
        }
        if let Some((x, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidFamily(format!("w({x}) = {v} is not a positive real")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("series tolerance {tol} must be positive")));
        }
        let theta_radius = theta_radius.unwrap_or(f64::INFINITY);
        if !(theta_radius > 0.0) {
            return Err(Error::InvalidFamily("theta_radius must be positive".into()));
        }
        check_theta_star(theta_star, theta_radius)?;

        let cap = w.len() - 1;
        let rho = w[cap] / w[cap - 1] * theta_star;
        if !(rho < 1.0) {
            return Err(Error::TruncationBudget(format!(
                "ratio test fails at x_cap = {cap}: w({cap})/w({})·θ* = {rho}",
                cap - 1
            )));
        }
        let head: f64 = horner(&w, theta_star);
        let last = w[cap] * theta_star.powi(cap as i32);
        let tail = last * rho / (1.0 - rho);
        if tail > tol * head {
            return Err(Error::TruncationBudget(format!(
                "tail bound {tail:e} exceeds {tol:e} relative to series sum {head:e}; raise x_cap"
            )));
        }
        let log_w = w.iter().map(|v| v.ln()).collect();
        Ok(FamilySpec {
            kind: FamilyKind::CustomSeries,
            growth_class,
            theta_star,
            theta_radius,
            x_cap: Some(cap as u64),
            w,
            log_w,
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn growth_class(&self) -> GrowthClass {
        self.growth_class
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn theta_radius(&self) -> f64 {
        self.theta_radius
    }

    /// Last index of the coefficient table for custom series; `None` for
    /// closed-form families.
    pub fn x_cap(&self) -> Option<u64> {
        self.x_cap
    }

    pub fn theta(&self, value: f64) -> Result<Theta> {
        Theta::new(value, self)
    }

    /// `ln w(x)`, `-∞` where `w(x) = 0`.
    pub fn log_w(&self, x: u64) -> f64 {
        match self.kind {
            FamilyKind::Poisson => -ln_factorial(x),
            FamilyKind::NegBinomial { r } => {
                if r == 1 {
                    0.0
                } else {
                    let r = r as f64;
                    ln_gamma(x as f64 + r) - ln_gamma(r) - ln_factorial(x)
                }
            }
            FamilyKind::CustomSeries => {
                self.log_w.get(x as usize).copied().unwrap_or(f64::NEG_INFINITY)
            }
        }
    }

    pub fn w(&self, x: u64) -> f64 {
        match self.kind {
            FamilyKind::CustomSeries => self.w.get(x as usize).copied().unwrap_or(0.0),
            _ => self.log_w(x).exp(),
        }
    }

    /// `ln g(θ)` for any `θ ≥ 0` inside the radius of convergence.
    pub(crate) fn log_g_raw(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Poisson => -theta,
            FamilyKind::NegBinomial { r } => r as f64 * (-theta).ln_1p(),
            FamilyKind::CustomSeries => -horner(&self.w, theta).ln(),
        }
    }

    pub fn eval_g(&self, theta: Theta) -> f64 {
        self.log_g_raw(theta.0).exp()
    }

    /// `ln f(x|θ)` with `0^0 = 1`.
    pub(crate) fn log_pmf_raw(&self, x: u64, theta: f64) -> f64 {
        let lw = self.log_w(x);
        if lw == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let lx = if x == 0 {
            0.0
        } else if theta == 0.0 {
            return f64::NEG_INFINITY;
        } else {
            x as f64 * theta.ln()
        };
        self.log_g_raw(theta) + lw + lx
    }

    #[inline]
    pub(crate) fn pmf_raw(&self, x: u64, theta: f64) -> f64 {
        self.log_pmf_raw(x, theta).exp()
    }

    pub fn pmf(&self, x: u64, theta: Theta) -> f64 {
        self.pmf_raw(x, theta.0)
    }

    /// Checks that every atom of `q` lies in `[0, θ*]`.
    pub fn check_measure(&self, q: &DiscreteMeasure) -> Result<()> {
        for &a in q.atoms() {
            Theta::new(a, self)?;
        }
        Ok(())
    }

    pub(crate) fn mixture_pmf_raw(&self, q: &DiscreteMeasure, x: u64) -> f64 {
        q.iter().map(|(t, p)| p * self.pmf_raw(x, t)).sum()
    }

    /// `h_Q(x) = Σ_j p_j f(x|θ_j)`.
    pub fn mixture_pmf(&self, q: &DiscreteMeasure, x: u64) -> Result<f64> {
        self.check_measure(q)?;
        Ok(self.mixture_pmf_raw(q, x))
    }

    /// `E_θ[X]`.
    pub fn mean_at(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Poisson => theta,
            FamilyKind::NegBinomial { r } => r as f64 * theta / (1.0 - theta),
            FamilyKind::CustomSeries => {
                let mut num = 0.0;
                let mut den = 0.0;
                for (x, &wx) in self.w.iter().enumerate().rev() {
                    num = num * theta + x as f64 * wx;
                    den = den * theta + wx;
                }
                num / den
            }
        }
    }

    /// The `θ ∈ [0, θ*]` maximising `Σ a_i ln f(x_i|θ)`, i.e. the solution
    /// of `E_θ[X] = m` clamped to the support.
    pub fn inverse_mean(&self, m: f64) -> f64 {
        if !(m > 0.0) {
            return 0.0;
        }
        let t = match self.kind {
            FamilyKind::Poisson => m,
            FamilyKind::NegBinomial { r } => m / (r as f64 + m),
            FamilyKind::CustomSeries => {
                if self.mean_at(self.theta_star) <= m {
                    return self.theta_star;
                }
                let (mut lo, mut hi) = (0.0, self.theta_star);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.mean_at(mid) < m {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * self.theta_star {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        t.min(self.theta_star)
    }

    /// Upper bound on `Σ_{y > x} f(y|θ)`.
    ///
    /// Closed-form families have pmf ratios `f(y+1|θ)/f(y|θ)` that are
    /// nonincreasing in `y`, so once the ratio `ρ` at `x` is below one the
    /// tail is dominated by `f(x|θ) ρ/(1-ρ)`. Returns `+∞` when the ratio
    /// test is inconclusive at `x`. Custom series have a finite table and
    /// the tail is summed exactly.
    pub fn tail_bound(&self, theta: f64, x: u64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        match self.kind {
            FamilyKind::CustomSeries => {
                let cap = self.x_cap.unwrap_or(0);
                ((x + 1)..=cap).map(|y| self.pmf_raw(y, theta)).sum()
            }
            _ => {
                let rho = self.pmf_ratio(x, theta);
                if rho < 1.0 {
                    self.pmf_raw(x, theta) * rho / (1.0 - rho)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `f(x+1|θ)/f(x|θ) = θ w(x+1)/w(x)`.
    pub(crate) fn pmf_ratio(&self, x: u64, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Poisson => theta / (x as f64 + 1.0),
            FamilyKind::NegBinomial { r } => theta * (x as f64 + r as f64) / (x as f64 + 1.0),
            FamilyKind::CustomSeries => theta * self.w(x + 1) / self.w(x),
        }
    }

    /// Smallest `X` with `Σ_{y > X} f(y|θ) ≤ eps` according to [`tail_bound`].
    ///
    /// [`tail_bound`]: FamilySpec::tail_bound
    pub fn tail_cut(&self, theta: f64, eps: f64) -> Result<u64> {
        if let Some(cap) = self.x_cap {
            for x in 0..=cap {
                if self.tail_bound(theta, x) <= eps {
                    return Ok(x);
                }
            }
            return Ok(cap);
        }
        // Skip the rising part of the pmf before testing the tail.
        let mut x = match self.kind {
            FamilyKind::Poisson => theta.floor() as u64,
            FamilyKind::NegBinomial { r } => {
                ((r as f64 - 1.0) * theta / (1.0 - theta)).max(0.0).floor() as u64
            }
            FamilyKind::CustomSeries => 0,
        };
        while x <= X_SCAN_LIMIT {
            if self.tail_bound(theta, x) <= eps {
                return Ok(x);
            }
            x += 1;
        }
        Err(Error::TailCutNotFound(X_SCAN_LIMIT))
    }
}

fn check_theta_star(theta_star: f64, radius: f64) -> Result<()> {
    if !(theta_star.is_finite() && theta_star > 0.0) {
        return Err(Error::InvalidFamily(format!("theta_star = {theta_star} must be positive")));
    }
    if !(theta_star < radius) {
        return Err(Error::InvalidFamily(format!(
            "theta_star = {theta_star} must lie below the radius of convergence {radius}"
        )));
    }
    Ok(())
}

/// `Σ c_i t^i` by Horner's rule.
pub(crate) fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}
