//! Distances between mixing measures (exact W1, Gaussian-smoothed W1) and
//! between the mixture pmfs they induce (total variation, empirical KL).

use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, X_SCAN_LIMIT};
use crate::measures::{DiscreteMeasure, SampleHistogram};
use crate::special::{norm_cdf, norm_cdf_tail_integral};

/// Parameters of the smoothed distance `W1^σ(Q1, Q2) = W1(Q1 ∗ N_σ, Q2 ∗ N_σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GotParams {
    sigma: f64,
    tol: f64,
}

impl GotParams {
    pub const DEFAULT_TOL: f64 = 1e-8;

    pub fn new(sigma: f64, tol: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {tol} must be positive")));
        }
        Ok(GotParams { sigma, tol })
    }

    pub fn with_sigma(sigma: f64) -> Result<Self> {
        Self::new(sigma, Self::DEFAULT_TOL)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Exact `W1(q1, q2) = ∫ |F1 - F2|`, summed over the merged atom breakpoints.
pub fn w1_discrete(q1: &DiscreteMeasure, q2: &DiscreteMeasure) -> f64 {
    let (a1, w1) = (q1.atoms(), q1.weights());
    let (a2, w2) = (q2.atoms(), q2.weights());
    let (mut i, mut j) = (0, 0);
    let (mut f1, mut f2) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < a1.len() || j < a2.len() {
        let t = match (a1.get(i), a2.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (f1 - f2).abs() * (t - p);
        }
        while i < a1.len() && a1[i] == t {
            f1 += w1[i];
            i += 1;
        }
        while j < a2.len() && a2[j] == t {
            f2 += w2[j];
            j += 1;
        }
        prev = Some(t);
    }
    total
}

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Gaussian-smoothed W1, `∫ |F1(t) - F2(t)| dt` with
/// `F_i(t) = Σ_j p_j Φ((t - θ_j)/σ)`.
///
/// The line is cut to `[min atom - Rσ, max atom + Rσ]`, with `R ≥ 8` grown
/// until the neglected tails `4σ(φ(R) - R(1 - Φ(R)))` are below `tol/4` each.
/// The interior is split into panels of width `σ/2` and integrated by
/// adaptive Simpson with a combined error target of `tol/2`.
pub fn got(q1: &DiscreteMeasure, q2: &DiscreteMeasure, p: GotParams) -> Result<f64> {
    if q1 == q2 {
        return Ok(0.0);
    }
    let sigma = p.sigma;
    let mut r = 8.0;
    while 4.0 * sigma * norm_cdf_tail_integral(r) > p.tol / 4.0 && r < 64.0 {
        r += 1.0;
    }
    let lo = q1.min_atom().min(q2.min_atom()) - r * sigma;
    let hi = q1.max_atom().max(q2.max_atom()) + r * sigma;

    let integrand = |t: f64| {
        let f1: f64 = q1.iter().map(|(a, w)| w * norm_cdf((t - a) / sigma)).sum();
        let f2: f64 = q2.iter().map(|(a, w)| w * norm_cdf((t - a) / sigma)).sum();
        (f1 - f2).abs()
    };

    let panels = (((hi - lo) / (0.5 * sigma)).ceil() as usize).max(16);
    let width = (hi - lo) / panels as f64;
    let panel_tol = 0.5 * p.tol / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = lo + k as f64 * width;
        let b = if k + 1 == panels { hi } else { a + width };
        let fa = integrand(a);
        let fb = integrand(b);
        let m = 0.5 * (a + b);
        let fm = integrand(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        total += adaptive_simpson(&integrand, a, b, fa, fm, fb, whole, panel_tol, SIMPSON_MAX_DEPTH)
            .ok_or(Error::QuadratureTolerance { tol: p.tol, max_depth: SIMPSON_MAX_DEPTH })?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

/// Upper bound on `Σ_{x > cut} h_q(x)`.
fn mixture_tail(family: &FamilySpec, q: &DiscreteMeasure, cut: u64) -> f64 {
    q.iter().map(|(t, w)| w * family.tail_bound(t, cut)).sum()
}

/// Smallest cut in the doubling sequence `64, 128, ...` at which the tails of
/// all measures sum to at most `budget`.
pub(crate) fn mixture_tail_cut(
    family: &FamilySpec,
    qs: &[&DiscreteMeasure],
    budget: f64,
) -> Result<(u64, f64)> {
    let mut cut = 64;
    loop {
        let tail: f64 = qs.iter().map(|q| mixture_tail(family, q, cut)).sum();
        if tail <= budget {
            return Ok((cut, tail));
        }
        if cut >= X_SCAN_LIMIT {
            return Err(Error::TailCutNotFound(X_SCAN_LIMIT));
        }
        cut = (cut * 2).min(X_SCAN_LIMIT);
    }
}

/// Total variation between `h_{q1}` and `h_{q2}`.
///
/// Sums `½|h_{q1}(x) - h_{q2}(x)|` up to a cut `X` where the combined tail
/// mass bound is at most `2·tol`, then adds half that bound. The result is
/// therefore an upper bound on the true distance that exceeds it by at most
/// `tol`, clamped to `[0, 1]`.
pub fn tv_mixtures(
    family: &FamilySpec,
    q1: &DiscreteMeasure,
    q2: &DiscreteMeasure,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be positive")));
    }
    family.check_measure(q1)?;
    family.check_measure(q2)?;
    if q1 == q2 {
        return Ok(0.0);
    }
    let (cut, tail) = mixture_tail_cut(family, &[q1, q2], 2.0 * tol)?;
    let mut s = 0.0;
    for x in 0..=cut {
        s += (family.mixture_pmf_raw(q1, x) - family.mixture_pmf_raw(q2, x)).abs();
    }
    Ok((0.5 * (s + tail)).clamp(0.0, 1.0))
}

/// `KL(h_obs ‖ h_q) = Σ_x h_obs(x) ln(h_obs(x)/h_q(x))`; `+∞` when some
/// observed `x` has `h_q(x) = 0`.
pub fn kl_empirical(h: &SampleHistogram, family: &FamilySpec, q: &DiscreteMeasure) -> f64 {
    let n = h.n() as f64;
    let mut kl = 0.0;
    for (x, c) in h.iter() {
        let obs = c as f64 / n;
        let model = family.mixture_pmf_raw(q, x);
        if model <= 0.0 {
            return f64::INFINITY;
        }
        kl += obs * (obs / model).ln();
    }
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::GrowthClass;
    use crate::measures::{sample, Seed};
    use proptest::prelude::*;

    fn dm(pairs: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(pairs).unwrap()
    }

    #[test]
    fn w1_examples() {
        let a = DiscreteMeasure::point(0.2);
        let b = DiscreteMeasure::point(0.7);
        assert!((w1_discrete(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(w1_discrete(&a, &a), 0.0);
        let two = dm(&[(0.0, 0.5), (1.0, 0.5)]);
        assert!((w1_discrete(&two, &DiscreteMeasure::point(0.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn w1_two_by_one_brute_force() {
        // The only coupling of a 2-atom and a 1-atom measure moves every atom
        // onto the single target.
        let two = dm(&[(0.0, 0.5), (1.0, 0.5)]);
        let cost = 0.5 * (0.0f64 - 0.5).abs() + 0.5 * (1.0f64 - 0.5).abs();
        assert_eq!(w1_discrete(&two, &DiscreteMeasure::point(0.5)), cost);
    }

    #[test]
    fn got_point_masses_is_shift() {
        for sigma in [0.1, 1.0, 3.0] {
            let p = GotParams::with_sigma(sigma).unwrap();
            let v = got(&DiscreteMeasure::point(0.3), &DiscreteMeasure::point(1.7), p).unwrap();
            assert!((v - 1.4).abs() < 2e-8, "sigma {sigma}: {v}");
        }
        let q = dm(&[(0.0, 0.3), (1.0, 0.7)]);
        assert_eq!(got(&q, &q, GotParams::with_sigma(1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn got_matches_trapezoid_oracle() {
        let q1 = DiscreteMeasure::point(0.5);
        let q2 = dm(&[(0.0, 0.5), (1.0, 0.5)]);
        let v = got(&q1, &q2, GotParams::with_sigma(1.0).unwrap()).unwrap();
        // 10^6-point trapezoid on [-8, 9]
        let n = 1_000_000;
        let (a, b) = (-8.0, 9.0);
        let h = (b - a) / n as f64;
        let f = |t: f64| {
            let f1 = norm_cdf(t - 0.5);
            let f2 = 0.5 * norm_cdf(t) + 0.5 * norm_cdf(t - 1.0);
            (f1 - f2).abs()
        };
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        let oracle = s * h;
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
        assert!(v > 0.0 && v <= 0.5);
    }

    #[test]
    fn got_rejects_bad_params() {
        assert!(GotParams::new(0.0, 1e-8).is_err());
        assert!(GotParams::new(1.0, 0.0).is_err());
        assert!(GotParams::new(f64::NAN, 1e-8).is_err());
    }

    #[test]
    fn tv_examples() {
        let fam = FamilySpec::poisson(2.0).unwrap();
        let q = dm(&[(0.5, 0.4), (1.5, 0.6)]);
        assert_eq!(tv_mixtures(&fam, &q, &q, 1e-12).unwrap(), 0.0);
        let v = tv_mixtures(&fam, &DiscreteMeasure::point(0.0), &DiscreteMeasure::point(1.0), 1e-12)
            .unwrap();
        assert!((v - (1.0 - (-1f64).exp())).abs() < 2e-12, "{v}");
        assert!(tv_mixtures(&fam, &q, &q, 0.0).is_err());
    }

    #[test]
    fn kl_examples() {
        let fam = FamilySpec::poisson(2.0).unwrap();
        let h = SampleHistogram::from_counts([(0, 1), (1, 1)]).unwrap();
        let v = kl_empirical(&h, &fam, &DiscreteMeasure::point(1.0));
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-14);

        // h_obs equal to h_q on its support: a custom family with x_cap = 1 at θ = 1
        let c = FamilySpec::custom_with_tolerance(
            vec![1.0, 1.0, 1e-3],
            GrowthClass::GeometricBound,
            1.0,
            None,
            1e-2,
        )
        .unwrap();
        let q = DiscreteMeasure::point(1.0);
        let probs: Vec<f64> = (0..3).map(|x| c.mixture_pmf(&q, x).unwrap()).collect();
        let h = SampleHistogram::from_counts([(0, 1000), (1, 1000), (2, 1)]).unwrap();
        assert!((probs[0] - probs[1]).abs() < 1e-15);
        let kl = kl_empirical(&h, &c, &q);
        assert!(kl < 1e-6, "{kl}");

        // observed x beyond the support of the family
        let trunc = FamilySpec::custom_with_tolerance(
            (0..=4).map(|x| 1.0 / crate::special::ln_factorial(x).exp()).collect(),
            GrowthClass::FactorialBound,
            0.1,
            None,
            1e-6,
        )
        .unwrap();
        let h = SampleHistogram::from_counts([(5, 10)]).unwrap();
        assert_eq!(kl_empirical(&h, &trunc, &DiscreteMeasure::point(0.1)), f64::INFINITY);
    }

    #[test]
    fn kl_zero_when_histogram_matches_model() {
        // Poisson at θ = 0 puts all mass at x = 0.
        let fam = FamilySpec::poisson(1.0).unwrap();
        let h = SampleHistogram::from_counts([(0, 17)]).unwrap();
        assert_eq!(kl_empirical(&h, &fam, &DiscreteMeasure::point(0.0)), 0.0);
    }

    fn measure_strategy(max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
        prop::collection::vec((0.0f64..2.0, 0.05f64..1.0), 1..=max_atoms)
            .prop_map(|pairs| DiscreteMeasure::new(&pairs).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mean_gap_bounded_by_w1(q1 in measure_strategy(5), q2 in measure_strategy(5)) {
            prop_assert!((q1.mean() - q2.mean()).abs() <= w1_discrete(&q1, &q2) + 1e-12);
        }

        #[test]
        fn w1_metric_axioms(q1 in measure_strategy(4), q2 in measure_strategy(4), q3 in measure_strategy(4)) {
            let d12 = w1_discrete(&q1, &q2);
            prop_assert!((d12 - w1_discrete(&q2, &q1)).abs() <= 1e-14);
            prop_assert!(d12 <= w1_discrete(&q1, &q3) + w1_discrete(&q3, &q2) + 1e-14);
            prop_assert_eq!(d12 == 0.0, q1 == q2);
        }

        #[test]
        fn got_metric_axioms(
            q1 in measure_strategy(3), q2 in measure_strategy(3), q3 in measure_strategy(3),
            sigma in prop::sample::select(vec![0.1, 0.5, 1.0, 2.0])
        ) {
            let p = GotParams::with_sigma(sigma).unwrap();
            let d12 = got(&q1, &q2, p).unwrap();
            let d21 = got(&q2, &q1, p).unwrap();
            prop_assert!((d12 - d21).abs() <= 2.0 * p.tol());
            let d13 = got(&q1, &q3, p).unwrap();
            let d32 = got(&q3, &q2, p).unwrap();
            prop_assert!(d12 <= d13 + d32 + 2.0 * p.tol());
            prop_assert!(d12 <= w1_discrete(&q1, &q2) + p.tol());
        }

        #[test]
        fn got_tends_to_w1_as_sigma_vanishes(q1 in measure_strategy(3), q2 in measure_strategy(3)) {
            let v = got(&q1, &q2, GotParams::with_sigma(1e-3).unwrap()).unwrap();
            prop_assert!((v - w1_discrete(&q1, &q2)).abs() <= 1e-2);
        }

        #[test]
        fn tv_in_unit_interval(q1 in measure_strategy(3), q2 in measure_strategy(3)) {
            let fam = FamilySpec::poisson(2.0).unwrap();
            let v = tv_mixtures(&fam, &q1, &q2, 1e-10).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn pinsker_holds_for_sampled_histograms(q in measure_strategy(3), seed in any::<u64>()) {
            let fam = FamilySpec::poisson(2.0).unwrap();
            let h = sample(&fam, &q, 200, Seed::new(seed, 0)).unwrap();
            let kl = kl_empirical(&h, &fam, &q);
            prop_assume!(kl.is_finite());
            let (cut, _) = mixture_tail_cut(&fam, &[&q], 1e-15).unwrap();
            let cut = cut.max(h.max_x());
            let l1: f64 = (0..=cut)
                .map(|x| (h.empirical_pmf(x) - fam.mixture_pmf_raw(&q, x)).abs())
                .sum();
            prop_assert!(0.5 * l1 <= (kl / 2.0).sqrt() + 1e-12);
        }
    }
}
