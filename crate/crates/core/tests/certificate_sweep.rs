//! Certificate along a growing sample with the logarithmic degree schedule
//! `k = ⌊ln n⌋`. Only the approximation term shrinks; the coefficient bound
//! grows faster than the `n^{-1/2}` sampling factor, so the total rises. The
//! totals are frozen as a regression fixture.

use gotmix::expfam::FamilySpec;
use gotmix::harness::degree_schedule;
use gotmix::measures::{sample, DiscreteMeasure, Seed};
use gotmix::npmle::{solve, SolverConfig};
use gotmix::polyapprox::certify_got;

#[test]
fn certificate_along_sample_sizes() {
    let fam = FamilySpec::poisson(2.0).unwrap();
    let q = DiscreteMeasure::new(&[(0.5, 0.5), (1.5, 0.5)]).unwrap();
    let frozen = [(100u64, 4, 5.725e5), (1_000, 6, 7.272e9), (10_000, 9, 1.418e17), (100_000, 11, 2.459e22)];
    let mut prev_approx = f64::INFINITY;
    for (n, k_expected, total) in frozen {
        let h = sample(&fam, &q, n, Seed::new(77, 0)).unwrap();
        let fit = solve(&fam, &h, &SolverConfig::default()).unwrap();
        let k = degree_schedule(1.0, n);
        assert_eq!(k, k_expected);
        let c = certify_got(&fam, &h, &fit.q_hat, 1.0, k, 0.05, 1.0).unwrap();
        assert!(c.approx_term < prev_approx);
        prev_approx = c.approx_term;
        assert!((c.total() / total - 1.0).abs() < 1e-3, "n = {n}: {:.4e}", c.total());
    }
}
