use crate::error::{Error, Result};
use crate::expfam::{horner, FamilyKind, FamilySpec};
use crate::measures::{DiscreteMeasure, SampleHistogram};
use crate::special::ln_factorial;

use super::chebyshev::{chebyshev_approx, ChebPoly, MAX_MONOMIAL_DEGREE};
use super::lipschitz::{convolve_gauss, LipschitzFn};

/// Default value of the approximation constant `c1`.
pub const DEFAULT_C1: f64 = 1.0;

/// Largest `U_b` accepted before the bound is treated as an overflow.
const U_B_CEILING: f64 = 1e300;

/// Relative stopping rule for the ratio-test tail sum.
const TAIL_REL_TOL: f64 = 1e-6;

/// Coefficients `b_x`, `x = 0..=2k`, with `Σ_x b_x f(x|θ) = g(θ) p_k(θ) q_k(θ)`
/// where `p_k` approximates a smoothed Lipschitz function and `q_k` truncates
/// `1/g`.
#[derive(Debug, Clone)]
pub struct DualCoefficients {
    pub b: Vec<f64>,
    pub k: usize,
    /// Monomial coefficients of `p_k`.
    pub p_monomial: Vec<f64>,
    /// Monomial coefficients of `q_k`.
    pub q_monomial: Vec<f64>,
}

impl DualCoefficients {
    /// `Σ_x b_x f(x|θ)`.
    pub fn reconstruct(&self, family: &FamilySpec, theta: f64) -> f64 {
        self.b.iter().enumerate().map(|(x, &b)| b * family.pmf_raw(x as u64, theta)).sum()
    }

    /// `g(θ) p_k(θ) q_k(θ)` evaluated from the factors.
    pub fn target(&self, family: &FamilySpec, theta: f64) -> f64 {
        family.log_g_raw(theta).exp() * horner(&self.p_monomial, theta) * horner(&self.q_monomial, theta)
    }

    pub fn max_abs(&self) -> f64 {
        self.b.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// `Σ_x b_x h(x)` for any sequence `h`.
    pub fn pair_with<F: Fn(u64) -> f64>(&self, h: F) -> f64 {
        self.b.iter().enumerate().map(|(x, &b)| b * h(x as u64)).sum()
    }
}

fn check_degree(k: usize) -> Result<()> {
    if k > MAX_MONOMIAL_DEGREE {
        return Err(Error::DegreeTooLarge { degree: k, max: MAX_MONOMIAL_DEGREE });
    }
    Ok(())
}

/// Requires `w(x) > 0` for every `x ≤ top`.
fn check_support(family: &FamilySpec, top: usize) -> Result<()> {
    if let Some(cap) = family.x_cap() {
        if (top as u64) > cap {
            return Err(Error::InvalidParameter(format!(
                "degree needs w(x) for x ≤ {top} but the series stops at {cap}"
            )));
        }
    }
    Ok(())
}

fn inv_g_monomial(family: &FamilySpec, k: usize) -> Vec<f64> {
    (0..=k as u64).map(|x| family.w(x)).collect()
}

/// `q_k(θ) = Σ_{x ≤ k} w(x) θ^x` on `[0, θ*]`.
pub fn truncated_inv_g(family: &FamilySpec, k: usize) -> Result<ChebPoly> {
    check_degree(k)?;
    ChebPoly::from_monomial(0.0, family.theta_star(), &inv_g_monomial(family, k))
}

/// Upper bound on `g(0) Σ_{x > k} w(x) θ*^x`.
///
/// Terms are summed until the geometric remainder `t_X ρ/(1-ρ)` drops below a
/// small fraction of the partial sum; the pmf ratio is nonincreasing for the
/// closed-form families, which makes that remainder a valid bound. Custom
/// series are summed exactly over their finite table.
pub fn tail_remainder(family: &FamilySpec, k: usize) -> Result<f64> {
    let ts = family.theta_star();
    let log_g0 = -family.log_w(0);
    let log_term = |x: u64| log_g0 + family.log_w(x) + x as f64 * ts.ln();
    if let FamilyKind::CustomSeries = family.kind() {
        let cap = family.x_cap().unwrap_or(0);
        let s: f64 = ((k as u64 + 1)..=cap).map(|x| log_term(x).exp()).sum();
        return Ok(s * (1.0 + 1e-12));
    }
    let mut x = k as u64 + 1;
    let mut partial = 0.0;
    loop {
        let t = log_term(x).exp();
        partial += t;
        let rho = family.pmf_ratio(x, ts);
        if rho < 1.0 {
            let rest = t * rho / (1.0 - rho);
            if rest <= TAIL_REL_TOL * partial || t == 0.0 {
                return Ok((partial + rest) * (1.0 + 1e-12));
            }
        }
        x += 1;
        if x > k as u64 + crate::expfam::X_SCAN_LIMIT {
            return Err(Error::TailCutNotFound(x));
        }
    }
}

/// Builds `b_x` from an explicit `p_k` given by monomial coefficients, paired
/// with `q_k` of degree `k`.
pub fn dual_coefficients_from_monomial(
    family: &FamilySpec,
    p_monomial: &[f64],
    k: usize,
) -> Result<DualCoefficients> {
    check_degree(k)?;
    if p_monomial.len() > MAX_MONOMIAL_DEGREE + 1 {
        return Err(Error::DegreeTooLarge { degree: p_monomial.len() - 1, max: MAX_MONOMIAL_DEGREE });
    }
    let top = (p_monomial.len() - 1).max(1) + k;
    check_support(family, top)?;
    let q = inv_g_monomial(family, k);
    let mut prod = vec![0.0; p_monomial.len() + q.len() - 1];
    for (i, &p) in p_monomial.iter().enumerate() {
        for (j, &c) in q.iter().enumerate() {
            prod[i + j] += p * c;
        }
    }
    let b = prod
        .iter()
        .enumerate()
        .map(|(x, &c)| if c == 0.0 { 0.0 } else { c / family.w(x as u64) })
        .collect();
    Ok(DualCoefficients { b, k, p_monomial: p_monomial.to_vec(), q_monomial: q })
}

/// Degree-`k` interpolant of `θ ↦ ℓ_σ(θ) - ℓ_σ(0)` on `[-θ*, θ*]`.
pub fn smoothed_interpolant(
    family: &FamilySpec,
    l: &LipschitzFn,
    sigma: f64,
    k: usize,
) -> Result<ChebPoly> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
    }
    let ts = family.theta_star();
    let base = convolve_gauss(l, sigma, 0.0);
    chebyshev_approx(|t| convolve_gauss(l, sigma, t) - base, -ts, ts, k)
}

pub fn dual_coefficients(
    family: &FamilySpec,
    l: &LipschitzFn,
    sigma: f64,
    k: usize,
) -> Result<DualCoefficients> {
    if k == 0 {
        return Err(Error::InvalidParameter("degree k must be at least 1".into()));
    }
    check_degree(k)?;
    let p = smoothed_interpolant(family, l, sigma, k)?;
    let pm = p.monomial()?;
    dual_coefficients_from_monomial(family, &pm, k)
}

/// Approximation-error scale `c1 e σ [2√e σ √k/(b-a)]^{-k} k^{-1/4}` for a
/// Gaussian-smoothed 1-Lipschitz function on an interval of length `b - a`.
pub fn smoothing_approx_bound(k: usize, sigma: f64, width: f64, c1: f64) -> f64 {
    let kf = k.max(1) as f64;
    let base = 2.0 * std::f64::consts::E.sqrt() * sigma * kf.sqrt() / width;
    let log = c1.ln() + 1.0 + sigma.ln() - kf * base.ln() - 0.25 * kf.ln();
    log.exp()
}

/// `A(k, σ)` on `[-θ*, θ*]`.
pub fn approx_slack(family: &FamilySpec, sigma: f64, k: usize, c1: f64) -> f64 {
    smoothing_approx_bound(k, sigma, 2.0 * family.theta_star(), c1)
}

pub fn uniform_b_bound(family: &FamilySpec, sigma: f64, k: usize) -> Result<f64> {
    uniform_b_bound_with(family, sigma, k, DEFAULT_C1)
}

/// `U_b = max_{x ≤ 2k} (2k)^x/(x! θ*^x w(x)) · S_p · S_q` with `S_q = q_k(θ*)`
/// and `S_p = 2(θ* + σ) + A(k, σ)`. The `x = 0` term is included so that the
/// bound also covers `b_0`.
pub fn uniform_b_bound_with(family: &FamilySpec, sigma: f64, k: usize, c1: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
    }
    if !(c1.is_finite() && c1 > 0.0) {
        return Err(Error::InvalidParameter(format!("c1 = {c1} must be positive")));
    }
    check_degree(k)?;
    check_support(family, 2 * k)?;
    let ts = family.theta_star();
    let two_k = (2 * k) as f64;
    let log_max = (0..=2 * k as u64)
        .map(|x| {
            let lx = if x == 0 { 0.0 } else { x as f64 * (two_k / ts).ln() };
            lx - ln_factorial(x) - family.log_w(x)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let s_q = horner(&inv_g_monomial(family, k), ts);
    let s_p = 2.0 * (ts + sigma) + approx_slack(family, sigma, k, c1);
    let log_u = log_max + s_p.ln() + s_q.ln();
    if !(log_u < U_B_CEILING.ln()) {
        return Err(Error::Overflow(format!("U_b exceeds 1e300 at k = {k}")));
    }
    Ok(log_u.exp())
}

/// Terms of the smoothed-distance certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GotCertificate {
    /// `2 [A(k,σ) + (θ*+σ) · tail]`.
    pub approx_term: f64,
    /// `U_b √(log(2/δ)/(2n))`.
    pub sampling_term: f64,
    /// `U_b Σ_{x ≤ 2k} |h_obs(x) - h_fit(x)|`.
    pub fit_term: f64,
    pub u_b: f64,
}

impl GotCertificate {
    pub fn total(&self) -> f64 {
        self.approx_term + self.sampling_term + self.fit_term
    }
}

/// Confidence upper bound on the smoothed distance between the true mixing
/// distribution and `q_hat`. Calibrated by `c1`, which stands in for an
/// unspecified constant in the approximation rate, and by `delta`.
#[allow(clippy::too_many_arguments)]
pub fn certify_got(
    family: &FamilySpec,
    h: &SampleHistogram,
    q_hat: &DiscreteMeasure,
    sigma: f64,
    k: usize,
    delta: f64,
    c1: f64,
) -> Result<GotCertificate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1)")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("degree k must be at least 1".into()));
    }
    family.check_measure(q_hat)?;
    let u_b = uniform_b_bound_with(family, sigma, k, c1)?;
    let ts = family.theta_star();
    let approx_term =
        2.0 * (approx_slack(family, sigma, k, c1) + (ts + sigma) * tail_remainder(family, k)?);
    let n = h.n() as f64;
    let sampling_term = u_b * ((2.0 / delta).ln() / (2.0 * n)).sqrt();
    let gap: f64 = (0..=2 * k as u64)
        .map(|x| (h.empirical_pmf(x) - family.mixture_pmf_raw(q_hat, x)).abs())
        .sum();
    Ok(GotCertificate { approx_term, sampling_term, fit_term: u_b * gap, u_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyapprox::coeff_bound_check;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn unif(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn random_lipschitz(rng: &mut ChaCha8Rng, span: f64) -> LipschitzFn {
        let m = 1 + (rng.next_u64() % 6) as usize;
        let mut bp: Vec<f64> = (0..m).map(|_| (2.0 * unif(rng) - 1.0) * span).collect();
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        let slopes: Vec<f64> = (0..=bp.len()).map(|_| 2.0 * unif(rng) - 1.0).collect();
        LipschitzFn::from_slopes(bp, &slopes).unwrap()
    }

    #[test]
    fn truncated_inv_g_examples() {
        let p = FamilySpec::poisson(1.5).unwrap();
        let q = truncated_inv_g(&p, 2).unwrap();
        for t in [0.0, 0.4, 1.5] {
            assert!((q.eval(t) - (1.0 + t + t * t / 2.0)).abs() < 1e-14);
        }
        let nb = FamilySpec::negative_binomial(1, 0.5).unwrap();
        let q = truncated_inv_g(&nb, 3).unwrap();
        let m = q.monomial().unwrap();
        for c in m {
            assert!((c - 1.0).abs() < 1e-13);
        }
        for fam in [p, nb] {
            let ts = fam.theta_star();
            let q = truncated_inv_g(&fam, 6).unwrap();
            assert!(q.eval(ts) <= (-fam.log_g_raw(ts)).exp() + 1e-12);
        }
    }

    #[test]
    fn tail_remainder_examples() {
        let p = FamilySpec::poisson(1.0).unwrap();
        let t = tail_remainder(&p, 20).unwrap();
        let direct: f64 = (21..=60u64).map(|x| (-ln_factorial(x)).exp()).sum();
        assert!(t <= 1e-17 && t >= direct, "{t} vs {direct}");

        let nb = FamilySpec::negative_binomial(1, 0.5).unwrap();
        let t = tail_remainder(&nb, 10).unwrap();
        assert!((t - 0.5f64.powi(10)).abs() <= 1e-9 * 0.5f64.powi(10), "{t}");
        assert!(t >= 0.5f64.powi(10));

        let nb3 = FamilySpec::negative_binomial(3, 0.8).unwrap();
        for fam in [p, nb, nb3] {
            let mut prev = f64::INFINITY;
            for k in 0..30 {
                let t = tail_remainder(&fam, k).unwrap();
                assert!(t <= prev);
                prev = t;
            }
        }
    }

    #[test]
    fn hand_expansion_hook() {
        let p = FamilySpec::poisson(1.0).unwrap();
        let d = dual_coefficients_from_monomial(&p, &[0.0, 1.0], 1).unwrap();
        assert_eq!(d.b.len(), 3);
        assert!(d.b[0].abs() < 1e-15);
        assert!((d.b[1] - 1.0).abs() < 1e-15);
        assert!((d.b[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_function_has_zero_coefficients() {
        let p = FamilySpec::poisson(2.0).unwrap();
        let d = dual_coefficients(&p, &LipschitzFn::zero(), 1.0, 5).unwrap();
        assert!(d.b.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn reconstruction_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fams = [
            FamilySpec::poisson(2.0).unwrap(),
            FamilySpec::negative_binomial(2, 0.6).unwrap(),
        ];
        for fam in &fams {
            let l = random_lipschitz(&mut rng, 3.0);
            for (sigma, k) in [(0.5, 4), (1.0, 8)] {
                let d = dual_coefficients(fam, &l, sigma, k).unwrap();
                for _ in 0..50 {
                    let t = unif(&mut rng) * fam.theta_star();
                    let lhs = d.reconstruct(fam, t);
                    let rhs = d.target(fam, t);
                    assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300), "{lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn interpolants_pass_coefficient_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fam = FamilySpec::poisson(2.0).unwrap();
        for _ in 0..10 {
            let l = random_lipschitz(&mut rng, 3.0);
            for k in [2, 6, 12] {
                let p = smoothed_interpolant(&fam, &l, 0.7, k).unwrap();
                assert!(coeff_bound_check(&p).unwrap());
            }
        }
        assert!(coeff_bound_check(&truncated_inv_g(&fam, 8).unwrap()).unwrap());
    }

    #[test]
    fn uniform_bound_monotone_and_dominant() {
        let fams = [
            FamilySpec::poisson(1.0).unwrap(),
            FamilySpec::poisson(2.0).unwrap(),
            FamilySpec::negative_binomial(2, 0.5).unwrap(),
        ];
        for fam in &fams {
            for sigma in [0.3, 1.0] {
                let mut prev = 0.0;
                for k in 1..=15 {
                    let u = uniform_b_bound(fam, sigma, k).unwrap();
                    assert!(u >= prev, "k = {k}");
                    prev = u;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for fam in &fams {
            for k in [2, 5, 8] {
                let u = uniform_b_bound(fam, 1.0, k).unwrap();
                for _ in 0..50 {
                    let l = random_lipschitz(&mut rng, 2.0 * fam.theta_star());
                    let d = dual_coefficients(fam, &l, 1.0, k).unwrap();
                    assert!(d.max_abs() <= u, "{} > {u}", d.max_abs());
                }
            }
        }
        let a = uniform_b_bound(&fams[0], 1.0, 3).unwrap();
        let b = uniform_b_bound(&fams[0], 1.0, 3).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn overflow_and_degree_guards() {
        let p = FamilySpec::poisson(0.01).unwrap();
        assert!(matches!(uniform_b_bound(&p, 1.0, 40), Err(Error::Overflow(_))));
        assert!(matches!(uniform_b_bound(&p, 1.0, 41), Err(Error::DegreeTooLarge { .. })));
        let w: Vec<f64> = (0..=20u64).map(|x| (-ln_factorial(x)).exp()).collect();
        let c = FamilySpec::custom(w, crate::expfam::GrowthClass::FactorialBound, 0.1, None).unwrap();
        assert!(uniform_b_bound(&c, 1.0, 10).is_ok());
        assert!(uniform_b_bound(&c, 1.0, 11).is_err());
    }

    #[test]
    fn exact_fit_has_no_fit_term() {
        let fam = FamilySpec::poisson(1.0).unwrap();
        let q = DiscreteMeasure::point(0.0);
        // all mass at 0 under θ = 0, so h_q matches the histogram exactly
        let h = SampleHistogram::from_counts([(0, 40)]).unwrap();
        let c = certify_got(&fam, &h, &q, 1.0, 3, 0.05, 1.0).unwrap();
        assert_eq!(c.fit_term, 0.0);
        assert!(c.total() > 0.0);
        assert!(certify_got(&fam, &h, &q, 1.0, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn dual_bound_realization() {
        // ∫(ℓ_σ - ℓ_σ(0)) d(Q - Q̂) ≤ 2 sup|r| + |Σ b (h_Q - h_obs)| + |Σ b (h_obs - h_Q̂)|,
        // where r is the approximation residual, with the sup taken on a grid
        // that contains every atom.
        let fam = FamilySpec::poisson(2.0).unwrap();
        let q = DiscreteMeasure::new(&[(0.5, 0.5), (1.5, 0.5)]).unwrap();
        let q_hat = DiscreteMeasure::new(&[(0.6, 0.4), (1.3, 0.6)]).unwrap();
        let h = SampleHistogram::from_counts([(0, 30), (1, 35), (2, 20), (3, 10), (4, 5)]).unwrap();
        let l = LipschitzFn::sawtooth(&[-0.5, 0.4, 1.0, 1.6], 1.0).unwrap();
        let sigma = 0.8;
        let base = convolve_gauss(&l, sigma, 0.0);
        for k in [2, 4, 6] {
            let d = dual_coefficients(&fam, &l, sigma, k).unwrap();
            let resid = |t: f64| convolve_gauss(&l, sigma, t) - base - d.reconstruct(&fam, t);
            let mut grid: Vec<f64> = (0..=10_000).map(|i| 2.0 * i as f64 / 10_000.0).collect();
            grid.extend(q.atoms().iter().chain(q_hat.atoms()));
            let sup = grid.iter().map(|&t| resid(t).abs()).fold(0.0, f64::max);
            let sampling = d
                .pair_with(|x| fam.mixture_pmf_raw(&q, x) - h.empirical_pmf(x))
                .abs();
            let fit = d
                .pair_with(|x| h.empirical_pmf(x) - fam.mixture_pmf_raw(&q_hat, x))
                .abs();
            let integral: f64 = q.iter().map(|(a, w)| w * (convolve_gauss(&l, sigma, a) - base)).sum::<f64>()
                - q_hat.iter().map(|(a, w)| w * (convolve_gauss(&l, sigma, a) - base)).sum::<f64>();
            assert!(2.0 * sup + sampling + fit >= integral - 1e-9);
        }
    }
}
