//! Polynomial approximation of Gaussian-smoothed Lipschitz functions and the
//! dual coefficients that turn a distance between mixing distributions into a
//! weighted distance between mixture pmfs.

mod chebyshev;
mod dual;
mod hermite;
mod lipschitz;

pub use chebyshev::{chebyshev_approx, coeff_bound_check, sup_error, ChebPoly, MAX_MONOMIAL_DEGREE};
pub use dual::{
    approx_slack, certify_got, dual_coefficients, dual_coefficients_from_monomial,
    smoothed_interpolant, smoothing_approx_bound, tail_remainder, truncated_inv_g,
    uniform_b_bound, uniform_b_bound_with, DualCoefficients, GotCertificate, DEFAULT_C1,
};
pub use hermite::{hermite, MAX_HERMITE_ORDER};
pub use lipschitz::{convolve_gauss, LipschitzFn};
