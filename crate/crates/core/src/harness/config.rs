//! INI-style experiment configuration.
//!
//! ```text
//! # comments start with '#' or ';'
//! [family]
//! kind = poisson            # poisson | negbinomial | custom
//! theta_star = 2.0
//! r = 3                     # negbinomial only
//! w = 1, 1, 0.5             # custom only: w(0), w(1), ...
//! growth = factorial        # custom only: geometric | factorial
//! theta_radius = 4.0        # custom only, optional
//!
//! [experiment]
//! true_q = (0.5, 0.5), (1.5, 0.5)
//! sigma_list = 1.0
//! n_grid = 100, 1000, 10000
//! reps = 20
//! base_seed = 20240601
//! alpha = 1.0
//! delta = 0.05
//! c1 = 1.0
//! got_tol = 1e-8
//! record_timing = false
//! output = rates.csv
//!
//! [solver]
//! grid_size = 400
//! max_em_iters = 10000
//! loglik_tol = 1e-10
//! grad_tol = 1e-4
//! refine_rounds = 20
//! prune_floor = 1e-12
//! ```
//!
//! Lists are comma separated. Every section except `[family]` and every key
//! with a default may be omitted; unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::distances::GotParams;
use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, GrowthClass};
use crate::measures::{parse_measure, DiscreteMeasure};
use crate::npmle::SolverConfig;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Raw `section -> key -> value` view of a config file.
#[derive(Debug, Clone, Default)]
pub struct IniDoc {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    section_lines: BTreeMap<String, usize>,
}

impl IniDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = IniDoc::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config { line, msg: "unterminated section header".into() })?
                    .trim()
                    .to_ascii_lowercase();
                if doc.sections.contains_key(&name) {
                    return Err(Error::Config { line, msg: format!("duplicate section [{name}]") });
                }
                doc.sections.insert(name.clone(), BTreeMap::new());
                doc.section_lines.insert(name.clone(), line);
                current = Some(name);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, msg: format!("expected key = value, got {content:?}") })?;
            let section = current
                .as_ref()
                .ok_or_else(|| Error::Config { line, msg: "key outside any section".into() })?;
            let key = key.trim().to_ascii_lowercase();
            let map = doc.sections.get_mut(section).expect("section exists");
            if map.contains_key(&key) {
                return Err(Error::Config { line, msg: format!("duplicate key {key}") });
            }
            map.insert(key, Entry { value: value.trim().to_string(), line, used: false });
        }
        Ok(doc)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn section_line(&self, section: &str) -> usize {
        self.section_lines.get(section).copied().unwrap_or(0)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.sections.get_mut(section)?.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.take(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config { line, msg: format!("cannot parse {key} = {v:?}") }),
        }
    }

    fn require<T: FromStr>(&mut self, section: &str, key: &str) -> Result<T> {
        let line = self.section_line(section);
        self.get(section, key)?
            .ok_or_else(|| Error::Config { line, msg: format!("missing [{section}] {key}") })
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    s.parse()
                        .map_err(|_| Error::Config { line, msg: format!("bad list item {s:?} in {key}") })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on sections or keys that were never read.
    fn finish(&self, known_sections: &[&str]) -> Result<()> {
        for (name, keys) in &self.sections {
            if !known_sections.contains(&name.as_str()) {
                return Err(Error::Config {
                    line: self.section_line(name),
                    msg: format!("unknown section [{name}]"),
                });
            }
            if let Some((k, e)) = keys.iter().find(|(_, e)| !e.used) {
                return Err(Error::Config { line: e.line, msg: format!("unknown key {k} in [{name}]") });
            }
        }
        Ok(())
    }
}

fn in_context<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::Config { line, msg: other.to_string() },
    })
}

fn family_from(doc: &mut IniDoc) -> Result<FamilySpec> {
    if !doc.has_section("family") {
        return Err(Error::Config { line: 0, msg: "missing [family] section".into() });
    }
    let line = doc.section_line("family");
    let kind: String = doc.require("family", "kind")?;
    let theta_star: f64 = doc.require("family", "theta_star")?;
    let fam = match kind.to_ascii_lowercase().as_str() {
        "poisson" => FamilySpec::poisson(theta_star),
        "negbinomial" | "negative_binomial" => {
            let r: u32 = doc.require("family", "r")?;
            FamilySpec::negative_binomial(r, theta_star)
        }
        "custom" => {
            let w: Vec<f64> = doc
                .list("family", "w")?
                .ok_or_else(|| Error::Config { line, msg: "custom family needs w".into() })?;
            let growth: String = doc.require("family", "growth")?;
            let growth = match growth.to_ascii_lowercase().as_str() {
                "geometric" => GrowthClass::GeometricBound,
                "factorial" => GrowthClass::FactorialBound,
                other => {
                    return Err(Error::Config { line, msg: format!("unknown growth class {other:?}") })
                }
            };
            let radius: Option<f64> = doc.get("family", "theta_radius")?;
            FamilySpec::custom(w, growth, theta_star, radius)
        }
        other => return Err(Error::Config { line, msg: format!("unknown family kind {other:?}") }),
    };
    in_context(line, fam)
}

/// Reads only the `[family]` section, ignoring everything else.
pub fn parse_family(text: &str) -> Result<FamilySpec> {
    family_from(&mut IniDoc::parse(text)?)
}

fn solver_from(doc: &mut IniDoc) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let s = "solver";
    let cfg = SolverConfig {
        grid_size: doc.get(s, "grid_size")?.unwrap_or(d.grid_size),
        max_em_iters: doc.get(s, "max_em_iters")?.unwrap_or(d.max_em_iters),
        loglik_tol: doc.get(s, "loglik_tol")?.unwrap_or(d.loglik_tol),
        grad_tol: doc.get(s, "grad_tol")?.unwrap_or(d.grad_tol),
        refine_rounds: doc.get(s, "refine_rounds")?.unwrap_or(d.refine_rounds),
        prune_floor: doc.get(s, "prune_floor")?.unwrap_or(d.prune_floor),
    };
    in_context(doc.section_line(s), cfg.validate())?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub true_q: DiscreteMeasure,
    pub sigma_list: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub reps: u64,
    pub base_seed: u64,
    pub solver: SolverConfig,
    /// Degree schedule `k = max(1, ⌊α ln n⌋)`.
    pub alpha: f64,
    pub delta: f64,
    pub c1: f64,
    pub got_tol: f64,
    /// When false the `wall_ms` column is written as 0 so that output files
    /// are byte-reproducible.
    pub record_timing: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = IniDoc::parse(text)?;
        let family = family_from(&mut doc)?;
        let e = "experiment";
        let line = doc.section_line(e);
        let true_q = match doc.take(e, "true_q") {
            Some((v, l)) => in_context(l, parse_measure(&v))?,
            None => return Err(Error::Config { line, msg: "missing [experiment] true_q".into() }),
        };
        in_context(line, family.check_measure(&true_q))?;
        let cfg = ExperimentConfig {
            true_q,
            sigma_list: doc
                .list(e, "sigma_list")?
                .ok_or_else(|| Error::Config { line, msg: "missing [experiment] sigma_list".into() })?,
            n_grid: doc
                .list(e, "n_grid")?
                .ok_or_else(|| Error::Config { line, msg: "missing [experiment] n_grid".into() })?,
            reps: doc.get(e, "reps")?.unwrap_or(1),
            base_seed: doc.get(e, "base_seed")?.unwrap_or(0),
            alpha: doc.get(e, "alpha")?.unwrap_or(1.0),
            delta: doc.get(e, "delta")?.unwrap_or(0.05),
            c1: doc.get(e, "c1")?.unwrap_or(crate::polyapprox::DEFAULT_C1),
            got_tol: doc.get(e, "got_tol")?.unwrap_or(GotParams::DEFAULT_TOL),
            record_timing: doc.get(e, "record_timing")?.unwrap_or(false),
            output: doc.get::<String>(e, "output")?.map(PathBuf::from),
            solver: solver_from(&mut doc)?,
            family,
        };
        doc.finish(&["family", "experiment", "solver"])?;
        in_context(line, cfg.validate())?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.sigma_list.is_empty() || self.sigma_list.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("sigma_list must be nonempty and positive".into());
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be positive and strictly increasing".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.c1.is_finite() && self.c1 > 0.0) {
            return bad(format!("c1 = {} must be positive", self.c1));
        }
        if !(self.got_tol > 0.0) {
            return bad(format!("got_tol = {} must be positive", self.got_tol));
        }
        self.family.check_measure(&self.true_q)?;
        self.solver.validate()
    }

    pub fn degree_for(&self, n: u64) -> usize {
        degree_schedule(self.alpha, n)
    }
}

/// `k = max(1, ⌊α ln n⌋)`.
pub fn degree_schedule(alpha: f64, n: u64) -> usize {
    ((alpha * (n as f64).ln()).floor() as usize).max(1)
}
