//! Fixtures shared by the criterion benches.

use gotmix::expfam::FamilySpec;
use gotmix::measures::{sample, DiscreteMeasure, SampleHistogram, Seed};

/// Poisson family on `[0, 2]` with the two-atom mixing distribution used
/// throughout the rate experiments.
pub fn two_atom_fixture() -> (FamilySpec, DiscreteMeasure) {
    let fam = FamilySpec::poisson(2.0).expect("valid family");
    let q = DiscreteMeasure::new(&[(0.5, 0.5), (1.5, 0.5)]).expect("valid measure");
    (fam, q)
}

pub fn fixture_histogram(n: u64) -> SampleHistogram {
    let (fam, q) = two_atom_fixture();
    sample(&fam, &q, n, Seed::new(1, 0)).expect("sampling succeeds")
}
