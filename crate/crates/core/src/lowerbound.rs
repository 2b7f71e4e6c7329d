//! Moment-matched pairs of mixing distributions and the two-point lower bound
//! they imply.

use crate::distances::tv_mixtures;
use crate::error::{Error, Result};
use crate::expfam::FamilySpec;
use crate::measures::DiscreteMeasure;

pub const MAX_QUADRATURE_NODES: usize = 64;

/// Initial number of midpoint atoms used to discretise `Uniform[0, M]`.
pub const UNIFORM_ATOMS: usize = 2048;

const MAX_UNIFORM_ATOMS: usize = 1 << 18;
const QL_MAX_ITERS: usize = 60;

/// Eigenvalues of a symmetric tridiagonal matrix together with the first
/// component of each normalised eigenvector, by the implicit QL method with
/// Wilkinson shifts.
///
/// `diag` has length `m`, `off[i]` couples rows `i` and `i + 1`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::InvalidParameter("tridiagonal dimensions disagree".into()));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // Only the first row of the eigenvector matrix is needed.
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITERS {
                return Err(Error::EigenNoConvergence(QL_MAX_ITERS));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Gauss–Legendre rule for `Uniform[0, 1]` with `m` nodes, exact for
/// polynomials of degree `2m - 1`. Nodes ascend; weights sum to one.
pub fn gauss_legendre(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 || m > MAX_QUADRATURE_NODES {
        return Err(Error::InvalidParameter(format!(
            "node count {m} outside 1..={MAX_QUADRATURE_NODES}"
        )));
    }
    let off: Vec<f64> = (1..m)
        .map(|j| {
            let j = j as f64;
            j / (4.0 * j * j - 1.0).sqrt()
        })
        .collect();
    let (vals, first) = tridiagonal_eigen(&vec![0.0; m], &off)?;
    let mut pairs: Vec<(f64, f64)> =
        vals.iter().zip(&first).map(|(&x, &v)| (0.5 * (x + 1.0), v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Enforce the exact reflection symmetry about 1/2.
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let j = m - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 + 1.0 - pairs[j].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.5;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// `Uniform[0, M]` paired with a discrete measure sharing its first
/// `matched_k` moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatchedPair {
    /// Right end of the uniform support.
    pub scale: f64,
    pub p2: DiscreteMeasure,
    pub matched_k: usize,
    /// Exact `W1(Uniform[0, M], p2)`.
    pub w1_value: f64,
}

impl MomentMatchedPair {
    /// `Uniform[0, M]` as `atoms` equal-weight midpoint atoms.
    pub fn uniform_discretized(&self, atoms: usize) -> Result<DiscreteMeasure> {
        if atoms == 0 {
            return Err(Error::InvalidParameter("need at least one atom".into()));
        }
        let h = self.scale / atoms as f64;
        let xs: Vec<f64> = (0..atoms).map(|i| (i as f64 + 0.5) * h).collect();
        DiscreteMeasure::from_parts(&xs, &vec![1.0 / atoms as f64; atoms])
    }

    /// `E[θ^j]` under the uniform member.
    pub fn uniform_moment(&self, j: u32) -> f64 {
        self.scale.powi(j as i32) / (j as f64 + 1.0)
    }

    /// `E[θ^j]` under the discrete member.
    pub fn discrete_moment(&self, j: u32) -> f64 {
        self.p2.iter().map(|(a, w)| w * a.powi(j as i32)).sum()
    }
}

/// `∫_u^v |αt + β| dt`.
fn abs_linear_integral(alpha: f64, beta: f64, u: f64, v: f64) -> f64 {
    let prim = |t: f64| 0.5 * alpha * t * t + beta * t;
    let lin = |a: f64, b: f64| prim(b) - prim(a);
    if alpha != 0.0 {
        let root = -beta / alpha;
        if root > u && root < v {
            return lin(u, root).abs() + lin(root, v).abs();
        }
    }
    lin(u, v).abs()
}

pub fn moment_pair(scale: f64, k: usize) -> Result<MomentMatchedPair> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!("M = {scale} must be positive")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let m = k.div_ceil(2) + usize::from(k.is_multiple_of(2));
    if m > MAX_QUADRATURE_NODES {
        return Err(Error::InvalidParameter(format!(
            "k = {k} needs {m} nodes, above the cap {MAX_QUADRATURE_NODES}"
        )));
    }
    let (nodes, weights) = gauss_legendre(m)?;
    // W1 in unit scale: ∫_0^1 |t - F2(t)| dt, F2 a step function.
    let mut w1 = 0.0;
    let mut left = 0.0;
    let mut cdf = 0.0;
    for (&x, &w) in nodes.iter().zip(&weights) {
        w1 += abs_linear_integral(1.0, -cdf, left, x);
        cdf += w;
        left = x;
    }
    w1 += abs_linear_integral(1.0, -1.0, left, 1.0);
    let atoms: Vec<f64> = nodes.iter().map(|x| scale * x).collect();
    Ok(MomentMatchedPair {
        scale,
        p2: DiscreteMeasure::from_parts(&atoms, &weights)?,
        matched_k: 2 * m - 1,
        w1_value: scale * w1,
    })
}

/// Total variation between the mixtures of the two members, with the uniform
/// member discretised on a doubling midpoint grid until the value moves by
/// less than `tol / 4`.
pub fn pair_tv(family: &FamilySpec, pair: &MomentMatchedPair, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be positive")));
    }
    if pair.scale > family.theta_star() {
        return Err(Error::ThetaOutOfRange { value: pair.scale, theta_star: family.theta_star() });
    }
    let mut atoms = UNIFORM_ATOMS;
    let mut prev = tv_mixtures(family, &pair.uniform_discretized(atoms)?, &pair.p2, tol)?;
    loop {
        atoms *= 2;
        let tv = tv_mixtures(family, &pair.uniform_discretized(atoms)?, &pair.p2, tol)?;
        if (tv - prev).abs() < tol / 4.0 || atoms >= MAX_UNIFORM_ATOMS {
            return Ok(tv);
        }
        prev = tv;
    }
}

/// Two-point lower bound `½ W1 · max(0, 1 - n·TV)` on the minimax risk in W1.
pub fn lecam_bound(family: &FamilySpec, pair: &MomentMatchedPair, n: u64, tol: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let tv = pair_tv(family, pair, tol)?;
    Ok(lecam_from_tv(pair.w1_value, tv, n))
}

pub fn lecam_from_tv(w1_value: f64, tv: f64, n: u64) -> f64 {
    0.5 * w1_value * (1.0 - n as f64 * tv).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules() {
        let (x, w) = gauss_legendre(1).unwrap();
        assert_eq!((x[0], w[0]), (0.5, 1.0));
        let (x, w) = gauss_legendre(2).unwrap();
        let d = 0.5 / 3f64.sqrt();
        assert!((x[0] - (0.5 - d)).abs() < 1e-15 && (x[1] - (0.5 + d)).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        for j in 1..=3 {
            let mom: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(j)).sum();
            assert!((mom - 1.0 / (j as f64 + 1.0)).abs() < 1e-12);
        }
        let (x, w) = gauss_legendre(5).unwrap();
        let m9: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(9)).sum();
        assert!((m9 - 0.1).abs() < 1e-12);
        assert!(gauss_legendre(0).is_err() && gauss_legendre(65).is_err());
    }

    #[test]
    fn rules_are_exact_to_degree_2m_minus_1() {
        for m in [3, 8, 17, 32, 64] {
            let (x, w) = gauss_legendre(m).unwrap();
            assert!(x.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for i in 0..m {
                assert!((x[i] + x[m - 1 - i] - 1.0).abs() < 1e-15);
            }
            for j in 0..(2 * m).min(40) as i32 {
                let mom: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(j)).sum();
                assert!((mom - 1.0 / (j as f64 + 1.0)).abs() < 1e-12, "m = {m}, j = {j}");
            }
        }
    }

    #[test]
    fn pair_examples() {
        let p = moment_pair(1.0, 1).unwrap();
        assert_eq!(p.p2.atoms(), &[0.5]);
        assert_eq!(p.matched_k, 1);
        assert!((p.w1_value - 0.25).abs() < 1e-15);

        let p = moment_pair(1.0, 3).unwrap();
        assert_eq!(p.p2.len(), 2);
        assert_eq!(p.matched_k, 3);
        assert!(p.w1_value >= 1.0 / 24.0 && p.w1_value <= 0.25);
        // hand integral over the three pieces of the step CDF
        assert!((p.w1_value - 0.1279915320718538).abs() < 1e-14, "{}", p.w1_value);

        for k in 1..=9 {
            let a = moment_pair(1.0, k).unwrap().w1_value;
            let b = moment_pair(2.0, k).unwrap().w1_value;
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
        assert_eq!(moment_pair(1.0, 2).unwrap().matched_k, 3);
        assert!(moment_pair(1.0, 200).is_err());
    }

    #[test]
    fn lecam_clamps_and_agrees_under_refinement() {
        let fam = FamilySpec::poisson(1.0).unwrap();
        let pair = moment_pair(0.25, 5).unwrap();
        let a = lecam_bound(&fam, &pair, 100, 1e-8).unwrap();
        let b = lecam_bound(&fam, &pair, 100, 1e-9).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-6);
        assert_eq!(lecam_from_tv(0.3, 0.01, 100), 0.0);
        assert_eq!(lecam_from_tv(0.3, 0.01, 1000), 0.0);
        assert_eq!(lecam_from_tv(0.0, 0.0, 10), 0.0);
        assert!(lecam_bound(&fam, &moment_pair(2.0, 3).unwrap(), 10, 1e-8).is_err());
    }
}
