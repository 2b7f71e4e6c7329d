use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::distances::{got, w1_discrete, GotParams};
use crate::error::{Error, Result};
use crate::measures::{sample, Seed};
use crate::npmle::solve;
use crate::polyapprox::certify_got;

/// Environment variable capping the worker count; `0` runs serially.
pub const THREADS_ENV: &str = "GOTMIX_THREADS";

/// One Monte Carlo replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub n: u64,
    pub rep: u64,
    /// 64-bit seed of the replication's random stream.
    pub seed: u64,
    pub k: usize,
    pub w1_err: f64,
    /// Smoothed distance per entry of `sigma_list`, clamped to `w1_err`.
    pub got_err: Vec<f64>,
    /// Certificate per entry of `sigma_list`; `inf` when the bound overflows.
    pub cert: Vec<f64>,
    pub loglik: f64,
    pub sup_gradient: f64,
    pub em_iters: usize,
    pub converged: bool,
    pub wall_ms: u64,
}

fn run_one(cfg: &ExperimentConfig, n: u64, rep: u64, id: u64) -> Result<RateRecord> {
    let start = Instant::now();
    let seed = Seed::new(cfg.base_seed, id);
    let h = sample(&cfg.family, &cfg.true_q, n, seed)?;
    let fit = solve(&cfg.family, &h, &cfg.solver)?;
    let w1_err = w1_discrete(&cfg.true_q, &fit.q_hat);
    let k = cfg.degree_for(n);
    let mut got_err = Vec::with_capacity(cfg.sigma_list.len());
    let mut cert = Vec::with_capacity(cfg.sigma_list.len());
    for &sigma in &cfg.sigma_list {
        let g = got(&cfg.true_q, &fit.q_hat, GotParams::new(sigma, cfg.got_tol)?)?;
        // Smoothing never increases W1; clamping removes quadrature noise
        // where the two coincide.
        got_err.push(g.min(w1_err));
        let c = match certify_got(&cfg.family, &h, &fit.q_hat, sigma, k, cfg.delta, cfg.c1) {
            Ok(c) => c.total(),
            Err(Error::Overflow(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        cert.push(c);
    }
    let wall_ms = if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 };
    Ok(RateRecord {
        n,
        rep,
        seed: seed.stream_seed(),
        k,
        w1_err,
        got_err,
        cert,
        loglik: fit.loglik,
        sup_gradient: fit.sup_gradient,
        em_iters: fit.em_iters,
        converged: fit.converged,
        wall_ms,
    })
}

fn thread_setting() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV} = {v:?} is not a count"))),
    }
}

/// Runs every `(n, rep)` pair of the experiment. Rows come back n-major,
/// rep-minor regardless of the order in which workers finish.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<Vec<RateRecord>> {
    cfg.validate()?;
    let jobs: Vec<(u64, u64, u64)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.reps).map(move |r| (n, r, i as u64 * cfg.reps + r)))
        .collect();
    let work = |&(n, rep, id): &(u64, u64, u64)| run_one(cfg, n, rep, id);
    match thread_setting()? {
        Some(0) => jobs.iter().map(work).collect(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(|| jobs.par_iter().map(work).collect()),
        None => jobs.par_iter().map(work).collect(),
    }
}

fn sigma_label(sigma: f64) -> String {
    format!("{sigma}")
}

pub fn csv_header(cfg: &ExperimentConfig) -> String {
    let mut cols: Vec<String> = ["n", "rep", "seed", "k", "w1_err"].iter().map(|s| s.to_string()).collect();
    cols.extend(cfg.sigma_list.iter().map(|&s| format!("got_err_sigma_{}", sigma_label(s))));
    cols.extend(cfg.sigma_list.iter().map(|&s| format!("cert_sigma_{}", sigma_label(s))));
    cols.extend(["loglik", "sup_gradient", "em_iters", "converged", "wall_ms"].iter().map(|s| s.to_string()));
    cols.join(",")
}

/// Header plus one line per record, LF line endings, floats with 17
/// significant digits.
pub fn rates_csv(cfg: &ExperimentConfig, records: &[RateRecord]) -> String {
    let mut out = csv_header(cfg);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},{},{},{:.16e}", r.n, r.rep, r.seed, r.k, r.w1_err);
        for v in r.got_err.iter().chain(&r.cert) {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(
            out,
            ",{:.16e},{:.16e},{},{},{}",
            r.loglik,
            r.sup_gradient,
            r.em_iters,
            u8::from(r.converged),
            r.wall_ms
        );
    }
    out
}

/// Runs the experiment and writes the CSV to `path`.
pub fn write_rates(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<RateRecord>> {
    let records = run_rates(cfg)?;
    std::fs::write(path, rates_csv(cfg, &records))?;
    Ok(records)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median of `column` for each distinct `n`, in increasing `n`.
pub fn column_medians(csv: &str, column: &str) -> Result<Vec<(u64, f64)>> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Csv("empty file".into()))?.split(',').collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Csv(format!("column {name:?} missing")))
    };
    let (ni, ci) = (find("n")?, find(column)?);
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Csv(format!("row {} is malformed", i + 2));
        let n: u64 = fields.get(ni).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let v: f64 = fields.get(ci).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        groups.entry(n).or_default().push(v);
    }
    Ok(groups.into_iter().map(|(n, mut v)| (n, median(&mut v))).collect())
}

/// Least-squares slope of `ln(median column)` against `ln n`.
pub fn fit_slope_csv(csv: &str, column: &str) -> Result<f64> {
    let meds = column_medians(csv, column)?;
    if meds.len() < 2 {
        return Err(Error::Csv(format!("need at least 2 distinct n values, found {}", meds.len())));
    }
    if let Some((n, m)) = meds.iter().find(|(_, m)| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::Csv(format!("median of {column} at n = {n} is {m}; cannot take a log")));
    }
    let pts: Vec<(f64, f64)> = meds.iter().map(|&(n, m)| ((n as f64).ln(), m.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub fn fit_slope(csv_path: &Path, column: &str) -> Result<f64> {
    fit_slope_csv(&std::fs::read_to_string(csv_path)?, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> String {
        let mut s = String::from("n,rep,err\n");
        for n in [100u64, 1000, 10_000, 100_000] {
            for rep in 0..3 {
                let _ = writeln!(s, "{n},{rep},{:.16e}", f(n as f64));
            }
        }
        s
    }

    #[test]
    fn slopes_of_synthetic_columns() {
        let s = fit_slope_csv(&synthetic(|n| n.powf(-0.5)), "err").unwrap();
        assert!((s + 0.5).abs() < 1e-10);
        assert!(fit_slope_csv(&synthetic(|_| 0.3), "err").unwrap().abs() < 1e-12);
        assert!(fit_slope_csv(&synthetic(|_| 0.3), "nope").is_err());
        assert!(fit_slope_csv("n,err\n100,0.1\n100,0.2\n", "err").is_err());
    }

    #[test]
    fn medians_not_means() {
        let csv = "n,x\n10,1\n10,2\n10,100\n20,4\n";
        assert_eq!(column_medians(csv, "x").unwrap(), vec![(10, 2.0), (20, 4.0)]);
    }

    #[test]
    fn single_replication_fixture() {
        let cfg = ExperimentConfig::parse(
            "[family]\nkind = poisson\ntheta_star = 2\n[experiment]\ntrue_q = (0.5, 1)\nsigma_list = 1, 0.25\nn_grid = 100\nreps = 1\nbase_seed = 0\n",
        )
        .unwrap();
        let rows = run_rates(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.w1_err <= 0.2, "{}", r.w1_err);
        for g in &r.got_err {
            assert!(*g <= r.w1_err);
        }
        let csv = rates_csv(&cfg, &rows);
        assert!(csv.starts_with("n,rep,seed,k,w1_err,got_err_sigma_1,got_err_sigma_0.25,cert_sigma_1,cert_sigma_0.25,"));
        assert_eq!(csv, rates_csv(&cfg, &run_rates(&cfg).unwrap()));
    }
}
