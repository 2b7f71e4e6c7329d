use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest degree for which monomial coefficients are extracted. Beyond this
/// the Chebyshev-to-monomial map is too ill-conditioned in double precision.
pub const MAX_MONOMIAL_DEGREE: usize = 40;

/// Dense grid used for sup-norm estimates on `[-1, 1]`.
const DENSE_GRID: usize = 20_001;

/// Polynomial on `[a, b]` stored in the Chebyshev basis of the rescaled
/// variable `t = (2x - a - b)/(b - a) ∈ [-1, 1]`.
#[derive(Debug, Clone)]
pub struct ChebPoly {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
    unit_monomial: OnceLock<Vec<f64>>,
}

impl PartialEq for ChebPoly {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && self.coeffs == other.coeffs
    }
}

impl ChebPoly {
    pub fn new(a: f64, b: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!("interval [{a}, {b}] is empty")));
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("no Chebyshev coefficients".into()));
        }
        Ok(ChebPoly { a, b, coeffs, unit_monomial: OnceLock::new() })
    }

    /// Polynomial `Σ m_j x^j` on `[a, b]`.
    pub fn from_monomial(a: f64, b: f64, monomial: &[f64]) -> Result<Self> {
        let k = monomial.len().saturating_sub(1);
        if k > MAX_MONOMIAL_DEGREE {
            return Err(Error::DegreeTooLarge { degree: k, max: MAX_MONOMIAL_DEGREE });
        }
        if monomial.is_empty() {
            return Err(Error::InvalidParameter("no monomial coefficients".into()));
        }
        // x = h t + m
        let (h, m) = (0.5 * (b - a), 0.5 * (a + b));
        let mut in_t = vec![0.0; monomial.len()];
        let mut power = vec![1.0]; // coefficients of (h t + m)^j in t
        for (j, &c) in monomial.iter().enumerate() {
            if j > 0 {
                let mut next = vec![0.0; power.len() + 1];
                for (i, &p) in power.iter().enumerate() {
                    next[i] += m * p;
                    next[i + 1] += h * p;
                }
                power = next;
            }
            for (i, &p) in power.iter().enumerate() {
                in_t[i] += c * p;
            }
        }
        let coeffs = unit_monomial_to_chebyshev(&in_t);
        Self::new(a, b, coeffs)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn to_unit(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    /// Clenshaw evaluation. Points outside `[a, b]` are extrapolated.
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// Monomial coefficients in the rescaled variable `t`.
    pub fn unit_monomial(&self) -> Result<&[f64]> {
        if self.degree() > MAX_MONOMIAL_DEGREE {
            return Err(Error::DegreeTooLarge { degree: self.degree(), max: MAX_MONOMIAL_DEGREE });
        }
        Ok(self.unit_monomial.get_or_init(|| chebyshev_to_unit_monomial(&self.coeffs)))
    }

    /// Monomial coefficients in `x`.
    pub fn monomial(&self) -> Result<Vec<f64>> {
        let in_t = self.unit_monomial()?;
        // t = α x + β
        let alpha = 2.0 / (self.b - self.a);
        let beta = -(self.a + self.b) / (self.b - self.a);
        if beta == 0.0 {
            let mut s = 1.0;
            return Ok(in_t
                .iter()
                .map(|&c| {
                    let v = c * s;
                    s *= alpha;
                    v
                })
                .collect());
        }
        let mut out = vec![0.0; in_t.len()];
        let mut power = vec![1.0];
        for (j, &c) in in_t.iter().enumerate() {
            if j > 0 {
                let mut next = vec![0.0; power.len() + 1];
                for (i, &p) in power.iter().enumerate() {
                    next[i] += beta * p;
                    next[i + 1] += alpha * p;
                }
                power = next;
            }
            for (i, &p) in power.iter().enumerate() {
                out[i] += c * p;
            }
        }
        Ok(out)
    }

    /// Dense-grid estimate of `max |p|` on `[a, b]`.
    pub fn sup_abs(&self) -> f64 {
        let h = (self.b - self.a) / (DENSE_GRID - 1) as f64;
        (0..DENSE_GRID).map(|i| self.eval(self.a + i as f64 * h).abs()).fold(0.0, f64::max)
    }
}

/// Integer tables of `T_n` in the monomial basis, built by
/// `T_{n+1} = 2t T_n - T_{n-1}`. Entries stay below 2^53 for `n ≤ 40`.
fn chebyshev_tables(k: usize) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = vec![vec![1.0]];
    if k >= 1 {
        t.push(vec![0.0, 1.0]);
    }
    for n in 1..k {
        let mut next = vec![0.0; n + 2];
        for (i, &c) in t[n].iter().enumerate() {
            next[i + 1] += 2.0 * c;
        }
        for (i, &c) in t[n - 1].iter().enumerate() {
            next[i] -= c;
        }
        t.push(next);
    }
    t
}

fn chebyshev_to_unit_monomial(coeffs: &[f64]) -> Vec<f64> {
    let tables = chebyshev_tables(coeffs.len() - 1);
    let mut out = vec![0.0; coeffs.len()];
    for (c, row) in coeffs.iter().zip(&tables) {
        for (o, r) in out.iter_mut().zip(row) {
            *o += c * r;
        }
    }
    out
}

/// `t^n = 2^{1-n} Σ_{j < n/2} C(n, j) T_{n-2j}`, plus `2^{-n} C(n, n/2) T_0`
/// for even `n`.
fn unit_monomial_to_chebyshev(monomial: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; monomial.len()];
    for (n, &m) in monomial.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        if n == 0 {
            out[0] += m;
            continue;
        }
        let scale = 0.5f64.powi(n as i32 - 1);
        let mut binom = 1.0;
        for j in 0..=n / 2 {
            if j > 0 {
                binom = binom * (n + 1 - j) as f64 / j as f64;
            }
            if 2 * j == n {
                out[0] += m * scale * 0.5 * binom;
            } else {
                out[n - 2 * j] += m * scale * binom;
            }
        }
    }
    out
}

/// Degree-`k` interpolant of `f` at the `k + 1` Chebyshev extremal points
/// `cos(πj/k)` mapped to `[a, b]` (the midpoint when `k = 0`).
pub fn chebyshev_approx<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> Result<ChebPoly> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidParameter(format!("interval [{a}, {b}] is empty")));
    }
    let (h, m) = (0.5 * (b - a), 0.5 * (a + b));
    if k == 0 {
        return ChebPoly::new(a, b, vec![f(m)]);
    }
    let kf = k as f64;
    let values: Vec<f64> = (0..=k)
        .map(|j| {
            let t = (std::f64::consts::PI * j as f64 / kf).cos();
            f(m + h * t)
        })
        .collect();
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("f is not finite at a node ({v})")));
    }
    let coeffs = (0..=k)
        .map(|i| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let w = if j == 0 || j == k { 0.5 } else { 1.0 };
                    // cos(π i j / k) with the product reduced mod 2k for accuracy
                    let r = (i * j) % (2 * k);
                    w * v * (std::f64::consts::PI * r as f64 / kf).cos()
                })
                .sum();
            let c = 2.0 * s / kf;
            if i == 0 || i == k {
                0.5 * c
            } else {
                c
            }
        })
        .collect();
    ChebPoly::new(a, b, coeffs)
}

/// `max |f(θ) - p(θ)|` over `grid_size` equispaced points of `p`'s interval.
pub fn sup_error<F: Fn(f64) -> f64>(f: F, p: &ChebPoly, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter("grid_size must be at least 2".into()));
    }
    let (a, b) = p.interval();
    let h = (b - a) / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|i| {
            let x = if i + 1 == grid_size { b } else { a + i as f64 * h };
            (f(x) - p.eval(x)).abs()
        })
        .fold(0.0, f64::max))
}

/// Checks the coefficient bound `|c_x| ≤ (k^x/x!) max_{|t|≤1} |p(t)|` on the
/// monomial coefficients of `p` in its rescaled variable `t ∈ [-1, 1]`, with
/// the maximum taken over a dense grid and a relative slack of 1e-8.
pub fn coeff_bound_check(p: &ChebPoly) -> Result<bool> {
    let c = p.unit_monomial()?;
    let k = p.degree() as f64;
    let sup = {
        let h = 2.0 / (DENSE_GRID - 1) as f64;
        let unit = ChebPoly::new(-1.0, 1.0, p.coeffs().to_vec())?;
        (0..DENSE_GRID).map(|i| unit.eval(-1.0 + i as f64 * h).abs()).fold(0.0, f64::max)
    };
    let mut factor = 1.0; // k^x / x!
    for (x, &cx) in c.iter().enumerate() {
        if x > 0 {
            factor *= k / x as f64;
        }
        if cx.abs() > factor * sup * (1.0 + 1e-8) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_polynomials() {
        let p = chebyshev_approx(|x| x * x, -1.0, 1.0, 2).unwrap();
        assert!(sup_error(|x| x * x, &p, 1001).unwrap() <= 1e-14);
        let q = chebyshev_approx(|x| 3.0 - x + 0.5 * x.powi(3), 0.0, 2.0, 5).unwrap();
        assert!(sup_error(|x| 3.0 - x + 0.5 * x.powi(3), &q, 1001).unwrap() <= 1e-13);
        let c = chebyshev_approx(|_| 4.0, 0.0, 1.0, 0).unwrap();
        assert_eq!(c.eval(0.3), 4.0);
    }

    #[test]
    fn abs_value_error_in_jackson_range() {
        let p = chebyshev_approx(f64::abs, -1.0, 1.0, 16).unwrap();
        let e = sup_error(f64::abs, &p, 100_001).unwrap();
        assert!((0.001..=0.15).contains(&e), "{e}");
    }

    #[test]
    fn sup_error_examples() {
        let p = chebyshev_approx(|x| x.sin(), -1.0, 2.0, 9).unwrap();
        assert!(sup_error(|x| p.eval(x), &p, 1000).unwrap() <= 1e-13);
        let zero = ChebPoly::new(0.0, 1.0, vec![0.0]).unwrap();
        assert_eq!(sup_error(|x| x, &zero, 2).unwrap(), 1.0);
        assert_eq!(sup_error(|x| x, &zero, 17).unwrap(), 1.0);
        assert!(sup_error(|x| x, &zero, 1).is_err());
    }

    #[test]
    fn sup_error_stable_under_refinement() {
        let p = chebyshev_approx(f64::abs, -1.0, 1.0, 8).unwrap();
        let coarse = sup_error(f64::abs, &p, 10_000).unwrap();
        let fine = sup_error(f64::abs, &p, 100_000).unwrap();
        assert!(fine >= coarse * (1.0 - 1e-12));
        assert!(((fine - coarse) / fine).abs() < 5e-4, "{coarse} vs {fine}");
    }

    #[test]
    fn monomial_tables() {
        let t8 = ChebPoly::new(-1.0, 1.0, {
            let mut c = vec![0.0; 9];
            c[8] = 1.0;
            c
        })
        .unwrap();
        assert_eq!(
            t8.monomial().unwrap(),
            vec![1.0, 0.0, -32.0, 0.0, 160.0, 0.0, -256.0, 0.0, 128.0]
        );
        assert!(coeff_bound_check(&t8).unwrap());

        let p = ChebPoly::from_monomial(0.0, 2.0, &[1.0, 1.0, 0.5]).unwrap();
        for x in [0.0, 0.7, 2.0] {
            assert!((p.eval(x) - (1.0 + x + 0.5 * x * x)).abs() < 1e-14);
        }
        let m = p.monomial().unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14 && (m[1] - 1.0).abs() < 1e-14 && (m[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn degree_cap_refused() {
        let p = ChebPoly::new(-1.0, 1.0, vec![1.0; 42]).unwrap();
        assert!(matches!(p.monomial(), Err(Error::DegreeTooLarge { degree: 41, .. })));
        assert!(ChebPoly::from_monomial(0.0, 1.0, &[1.0; 42]).is_err());
    }

    #[test]
    fn coeff_bound_pure_power() {
        for k in 1..=12 {
            let mut m = vec![0.0; k + 1];
            m[k] = 1.0;
            let p = ChebPoly::from_monomial(-1.0, 1.0, &m).unwrap();
            assert!(coeff_bound_check(&p).unwrap(), "θ^{k}");
        }
    }

    proptest! {
        #[test]
        fn basis_roundtrip(coeffs in prop::collection::vec(-1.0f64..1.0, 1..=41)) {
            let p = ChebPoly::new(-1.0, 1.0, coeffs.clone()).unwrap();
            let m = p.monomial().unwrap();
            let back = ChebPoly::from_monomial(-1.0, 1.0, &m).unwrap();
            // rounding error is governed by the size of the monomial coefficients
            let scale: f64 = m.iter().map(|c| c.abs()).sum();
            let tol = 64.0 * coeffs.len() as f64 * f64::EPSILON * scale;
            for (x, y) in coeffs.iter().zip(back.coeffs()) {
                prop_assert!((x - y).abs() <= tol, "{x} vs {y}");
            }
        }

        #[test]
        fn random_polynomials_meet_coefficient_bound(
            coeffs in prop::collection::vec(-1.0f64..1.0, 11)
        ) {
            let p = ChebPoly::from_monomial(-1.0, 1.0, &coeffs).unwrap();
            prop_assert!(coeff_bound_check(&p).unwrap());
        }
    }
}
