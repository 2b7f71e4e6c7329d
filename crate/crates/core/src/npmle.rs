//! Nonparametric maximum likelihood over mixing distributions on `[0, θ*]`.
//!
//! The solver runs in two stages:
//!
//! 1. EM on a uniform grid of `grid_size` atoms (the multiplicative update
//!    `p_j ← p_j D(θ_j)`), which finds the mass regions of the NPMLE.
//! 2. Each run of consecutive grid atoms carrying mass is collapsed to one
//!    free atom, and EM for a finite mixture (weights and atom positions)
//!    takes over. After it stalls, the directional derivative `D(θ)` is
//!    scanned on a grid ten times finer; if `max D > 1 + grad_tol` the
//!    maximiser is added as a new atom with a line-searched weight and EM
//!    resumes (vertex-direction step). Atoms whose `D` has fallen below
//!    `1 - grad_tol` are dropped first, since EM only shrinks their weight
//!    geometrically. This repeats up to `refine_rounds` times.
//!
//! `D(θ) ≤ 1` on `[0, θ*]`, with equality on the support, characterises the
//! maximiser, so the final scan doubles as the optimality certificate.
//!
//! Observation rows are rescaled by `max_θ f(x|θ)` before use. The scaling
//! cancels in `D` and in every EM update and keeps large counts from
//! underflowing.

use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, Theta};
use crate::measures::{DiscreteMeasure, SampleHistogram};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub grid_size: usize,
    pub max_em_iters: usize,
    pub loglik_tol: f64,
    pub grad_tol: f64,
    pub refine_rounds: usize,
    pub prune_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_size: 400,
            max_em_iters: 10_000,
            loglik_tol: 1e-10,
            grad_tol: 1e-4,
            refine_rounds: 20,
            prune_floor: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("solver {what} must be positive")));
        if self.grid_size < 2 {
            return Err(Error::InvalidParameter("solver grid_size must be at least 2".into()));
        }
        if self.max_em_iters == 0 {
            return bad("max_em_iters");
        }
        if !(self.loglik_tol > 0.0) {
            return bad("loglik_tol");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol");
        }
        if !(self.prune_floor > 0.0 && self.prune_floor < 1.0) {
            return Err(Error::InvalidParameter("solver prune_floor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpmleResult {
    pub q_hat: DiscreteMeasure,
    /// `Σ_x c_x ln h_{q_hat}(x)`.
    pub loglik: f64,
    /// `max D(θ)` over the verification grid and the atoms of `q_hat`.
    pub sup_gradient: f64,
    /// `min D(θ_j)` over the atoms of `q_hat`.
    pub min_atom_gradient: f64,
    /// Total EM iterations across both stages.
    pub em_iters: usize,
    pub converged: bool,
    /// Log-likelihood after every EM iteration, one vector per EM run.
    pub em_traces: Vec<Vec<f64>>,
}

/// Distinct observations with their counts and per-row log scaling.
struct Problem<'a> {
    family: &'a FamilySpec,
    xs: Vec<u64>,
    xs_f: Vec<f64>,
    counts: Vec<f64>,
    n: f64,
    log_w: Vec<f64>,
    shift: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(family: &'a FamilySpec, h: &SampleHistogram) -> Result<Self> {
        let mut xs = Vec::with_capacity(h.distinct());
        let mut counts = Vec::with_capacity(h.distinct());
        let mut log_w = Vec::with_capacity(h.distinct());
        let mut shift = Vec::with_capacity(h.distinct());
        for (x, c) in h.iter() {
            let lw = family.log_w(x);
            if lw == f64::NEG_INFINITY {
                return Err(Error::InfeasibleObservation(x));
            }
            // max over [0, θ*] of ln f(x|θ) is attained at the clamped MLE
            let t = family.inverse_mean(x as f64);
            let peak = family.log_pmf_raw(x, t);
            if !peak.is_finite() {
                return Err(Error::InfeasibleObservation(x));
            }
            xs.push(x);
            counts.push(c as f64);
            log_w.push(lw);
            shift.push(peak);
        }
        Ok(Problem {
            family,
            xs_f: xs.iter().map(|&x| x as f64).collect(),
            xs,
            counts,
            n: h.n() as f64,
            log_w,
            shift,
        })
    }

    fn rows(&self) -> usize {
        self.xs.len()
    }

    /// Scaled pmf column `f(x_i|θ)/max_θ f(x_i|·)` for every row.
    fn column(&self, theta: f64, out: &mut [f64]) {
        let lg = self.family.log_g_raw(theta);
        let lt = theta.ln();
        for i in 0..self.rows() {
            let x = self.xs[i];
            out[i] = if x == 0 {
                (lg + self.log_w[i] - self.shift[i]).exp()
            } else if theta == 0.0 {
                0.0
            } else {
                (lg + self.log_w[i] + self.xs_f[i] * lt - self.shift[i]).exp()
            };
        }
    }

    fn columns(&self, atoms: &[f64]) -> Vec<Vec<f64>> {
        atoms
            .iter()
            .map(|&t| {
                let mut c = vec![0.0; self.rows()];
                self.column(t, &mut c);
                c
            })
            .collect()
    }

    fn mixture(&self, cols: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.rows()];
        for (col, &w) in cols.iter().zip(weights) {
            for (hi, ci) in h.iter_mut().zip(col) {
                *hi += w * ci;
            }
        }
        h
    }

    fn loglik(&self, h: &[f64]) -> f64 {
        h.iter()
            .zip(&self.counts)
            .zip(&self.shift)
            .map(|((&hi, &c), &s)| c * (hi.ln() + s))
            .sum()
    }

    /// `D(θ) = n^{-1} Σ_i c_i f(x_i|θ)/h(x_i)` from a precomputed column.
    fn gradient_from_column(&self, h: &[f64], col: &[f64]) -> f64 {
        col.iter()
            .zip(h)
            .zip(&self.counts)
            .map(|((&f, &hi), &c)| c * f / hi)
            .sum::<f64>()
            / self.n
    }

    fn gradient(&self, h: &[f64], theta: f64, scratch: &mut [f64]) -> f64 {
        self.column(theta, scratch);
        self.gradient_from_column(h, scratch)
    }
}

fn uniform_grid(theta_star: f64, size: usize) -> Vec<f64> {
    (0..size)
        .map(|j| {
            if j + 1 == size {
                theta_star
            } else {
                theta_star * j as f64 / (size - 1) as f64
            }
        })
        .collect()
}

/// `D(θ)`, the directional derivative of the mean log-likelihood at `q`
/// towards `δ_θ`, plus one.
pub fn directional_derivative(
    family: &FamilySpec,
    h: &SampleHistogram,
    q: &DiscreteMeasure,
    theta: Theta,
) -> Result<f64> {
    family.check_measure(q)?;
    let prob = Problem::new(family, h)?;
    let hq = prob.mixture(&prob.columns(q.atoms()), q.weights());
    if let Some(i) = hq.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "h_q({}) = 0 at an observed value; D is undefined",
            prob.xs[i]
        )));
    }
    let mut scratch = vec![0.0; prob.rows()];
    Ok(prob.gradient(&hq, theta.value(), &mut scratch))
}

/// `Σ_x c_x ln h_q(x)`, or `-∞` when `h_q` vanishes at an observed `x`.
pub fn loglikelihood(family: &FamilySpec, h: &SampleHistogram, q: &DiscreteMeasure) -> Result<f64> {
    family.check_measure(q)?;
    let prob = match Problem::new(family, h) {
        Ok(p) => p,
        Err(Error::InfeasibleObservation(_)) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let hq = prob.mixture(&prob.columns(q.atoms()), q.weights());
    if hq.iter().any(|&v| !(v > 0.0)) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(prob.loglik(&hq))
}

/// Multiplicative-update EM over the fixed `grid`. Returns the final weights.
fn grid_em(prob: &Problem, grid: &[f64], cfg: &SolverConfig, trace: &mut Vec<f64>) -> Vec<f64> {
    let cols = prob.columns(grid);
    let mut p = vec![1.0 / grid.len() as f64; grid.len()];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..cfg.max_em_iters {
        let h = prob.mixture(&cols, &p);
        let ll = prob.loglik(&h);
        trace.push(ll);
        if ll - prev < cfg.loglik_tol {
            break;
        }
        prev = ll;
        let ratio: Vec<f64> = h.iter().zip(&prob.counts).map(|(&hi, &c)| c / hi).collect();
        for (pj, col) in p.iter_mut().zip(&cols) {
            let d: f64 = col.iter().zip(&ratio).map(|(f, r)| f * r).sum::<f64>() / prob.n;
            *pj *= d;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Collapses each maximal run of grid atoms with weight above `floor` into a
/// single atom at the run's centre of mass.
fn collapse_runs(grid: &[f64], p: &[f64], floor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut run_mass = 0.0;
    let mut run_moment = 0.0;
    for (&t, &w) in grid.iter().zip(p) {
        if w > floor {
            run_mass += w;
            run_moment += w * t;
        } else if run_mass > 0.0 {
            atoms.push(run_moment / run_mass);
            weights.push(run_mass);
            run_mass = 0.0;
            run_moment = 0.0;
        }
    }
    if run_mass > 0.0 {
        atoms.push(run_moment / run_mass);
        weights.push(run_mass);
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    (atoms, weights)
}

/// EM for a finite mixture with free atom positions. The position M-step
/// solves `E_θ[X] = x̄_j` (the responsibility-weighted mean) on `[0, θ*]`.
fn mixture_em(
    prob: &Problem,
    atoms: &mut [f64],
    weights: &mut [f64],
    cfg: &SolverConfig,
    trace: &mut Vec<f64>,
) {
    let rows = prob.rows();
    let mut prev = f64::NEG_INFINITY;
    let mut cols = prob.columns(atoms);
    for _ in 0..cfg.max_em_iters {
        let h = prob.mixture(&cols, weights);
        let ll = prob.loglik(&h);
        trace.push(ll);
        if ll - prev < cfg.loglik_tol {
            break;
        }
        prev = ll;
        for j in 0..atoms.len() {
            let mut mass = 0.0;
            let mut moment = 0.0;
            for i in 0..rows {
                let r = prob.counts[i] * weights[j] * cols[j][i] / h[i];
                mass += r;
                moment += r * prob.xs_f[i];
            }
            weights[j] = mass / prob.n;
            if mass > 0.0 {
                atoms[j] = prob.family.inverse_mean(moment / mass);
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        for (col, &t) in cols.iter_mut().zip(atoms.iter()) {
            prob.column(t, col);
        }
    }
}

/// Drops atoms below the prune floor and merges atoms within `merge_dist`,
/// keeping the list sorted.
fn tidy(atoms: &mut Vec<f64>, weights: &mut Vec<f64>, floor: f64, merge_dist: f64) {
    let mut pairs: Vec<(f64, f64)> =
        atoms.iter().copied().zip(weights.iter().copied()).filter(|p| p.1 >= floor).collect();
    if pairs.is_empty() {
        // keep the heaviest atom rather than returning an empty measure
        let j = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        pairs.push((atoms[j], 1.0));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (a, w) in pairs {
        match merged.last_mut() {
            Some(last) if a - last.0 <= merge_dist => {
                let m = last.1 + w;
                last.0 = (last.0 * last.1 + a * w) / m;
                last.1 = m;
            }
            _ => merged.push((a, w)),
        }
    }
    let s: f64 = merged.iter().map(|p| p.1).sum();
    atoms.clear();
    weights.clear();
    for (a, w) in merged {
        atoms.push(a);
        weights.push(w / s);
    }
}

/// Maximises `λ ↦ Σ c_i ln((1-λ) h_i + λ f_i)` over `[0, 1]`.
fn line_search(prob: &Problem, h: &[f64], f: &[f64]) -> f64 {
    let slope = |lam: f64| -> f64 {
        h.iter()
            .zip(f)
            .zip(&prob.counts)
            .map(|((&hi, &fi), &c)| c * (fi - hi) / ((1.0 - lam) * hi + lam * fi))
            .sum()
    };
    if slope(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Scan {
    sup: f64,
    argmax: f64,
    min_atom: f64,
}

/// Scans `D` over the verification grid and the atoms. Ties in the argmax go
/// to the smaller `θ`.
fn scan(prob: &Problem, atoms: &[f64], weights: &[f64], fine: &[f64]) -> Scan {
    let h = prob.mixture(&prob.columns(atoms), weights);
    let mut scratch = vec![0.0; prob.rows()];
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = fine[0];
    for &t in fine {
        let d = prob.gradient(&h, t, &mut scratch);
        if d > sup {
            sup = d;
            argmax = t;
        }
    }
    let mut min_atom = f64::INFINITY;
    for &t in atoms {
        let d = prob.gradient(&h, t, &mut scratch);
        min_atom = min_atom.min(d);
        sup = sup.max(d);
    }
    Scan { sup, argmax, min_atom }
}

/// Computes the NPMLE of the mixing distribution from the histogram `h`.
///
/// Non-convergence is not an error: the result carries `converged = false`
/// together with the certificate values that failed.
pub fn solve(family: &FamilySpec, h: &SampleHistogram, cfg: &SolverConfig) -> Result<NpmleResult> {
    cfg.validate()?;
    let prob = Problem::new(family, h)?;
    let theta_star = family.theta_star();
    let grid = uniform_grid(theta_star, cfg.grid_size);
    let fine = uniform_grid(theta_star, 10 * (cfg.grid_size - 1) + 1);
    let merge_dist = 1e-8 * theta_star;

    let mut traces = Vec::new();
    let mut trace = Vec::new();
    let p = grid_em(&prob, &grid, cfg, &mut trace);
    traces.push(trace);

    let floor = 1e-6 / cfg.grid_size as f64;
    let (mut atoms, mut weights) = collapse_runs(&grid, &p, floor);

    let mut rounds = 0;
    let certificate = loop {
        let mut trace = Vec::new();
        mixture_em(&prob, &mut atoms, &mut weights, cfg, &mut trace);
        traces.push(trace);
        tidy(&mut atoms, &mut weights, cfg.prune_floor, merge_dist);

        let s = scan(&prob, &atoms, &weights, &fine);
        let certified = s.sup <= 1.0 + cfg.grad_tol && s.min_atom >= 1.0 - cfg.grad_tol;
        if certified || rounds == cfg.refine_rounds {
            break (s, certified);
        }
        rounds += 1;

        // At the optimum D = 1 on the support, so an atom with D < 1 only
        // survives because EM shrinks its weight geometrically. Drop it.
        if s.min_atom < 1.0 - cfg.grad_tol && atoms.len() > 1 {
            let hq = prob.mixture(&prob.columns(&atoms), &weights);
            let mut scratch = vec![0.0; prob.rows()];
            let d: Vec<f64> = atoms.iter().map(|&t| prob.gradient(&hq, t, &mut scratch)).collect();
            let best = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let keep: Vec<bool> = d.iter().map(|&v| v >= 1.0 - cfg.grad_tol || v == best).collect();
            let mut i = 0;
            atoms.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            let mut i = 0;
            weights.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
        }

        if s.sup > 1.0 + cfg.grad_tol {
            let hq = prob.mixture(&prob.columns(&atoms), &weights);
            let mut f = vec![0.0; prob.rows()];
            prob.column(s.argmax, &mut f);
            let lam = line_search(&prob, &hq, &f);
            weights.iter_mut().for_each(|w| *w *= 1.0 - lam);
            atoms.push(s.argmax);
            weights.push(lam);
            tidy(&mut atoms, &mut weights, cfg.prune_floor, 0.0);
        }
    };
    let (scan, converged) = certificate;

    let q_hat = DiscreteMeasure::from_parts(&atoms, &weights)?;
    let hq = prob.mixture(&prob.columns(q_hat.atoms()), q_hat.weights());
    let loglik = prob.loglik(&hq);
    let em_iters = traces.iter().map(|t| t.len()).sum();
    Ok(NpmleResult {
        q_hat,
        loglik,
        sup_gradient: scan.sup,
        min_atom_gradient: scan.min_atom,
        em_iters,
        converged,
        em_traces: traces,
    })
}
