//! Finitely supported mixing measures, count histograms and seeded sampling
//! from mixtures.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::expfam::FamilySpec;

/// Atoms closer than this are merged on construction.
pub const MERGE_TOL: f64 = 1e-13;
/// Weights below this (after normalisation) are dropped.
pub const PRUNE_FLOOR: f64 = 1e-15;
/// Per-atom tail mass left out of the inverse-CDF tables used for sampling.
const SAMPLE_TAIL: f64 = 1e-15;

/// A probability measure with finitely many atoms, stored with strictly
/// increasing atoms and positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from `(atom, weight)` pairs in any order.
    ///
    /// Weights are normalised, atoms within [`MERGE_TOL`] merged (weights
    /// added, position of the heavier kept), and atoms whose normalised
    /// weight falls below [`PRUNE_FLOOR`] dropped.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for &(a, w) in pairs {
            if !a.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom {a} is not finite")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("weight {w} is not a nonnegative real")));
            }
        }
        let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (a, w) in sorted {
            match merged.last_mut() {
                Some(last) if a - last.0 < MERGE_TOL => {
                    if w > last.1 {
                        last.0 = a;
                    }
                    last.1 += w;
                }
                _ => merged.push((a, w)),
            }
        }
        Self::normalize_and_prune(merged)
    }

    pub fn from_parts(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let pairs: Vec<_> = atoms.iter().copied().zip(weights.iter().copied()).collect();
        Self::new(&pairs)
    }

    fn normalize_and_prune(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("total weight is zero".into()));
        }
        pairs.iter_mut().for_each(|p| p.1 /= total);
        pairs.retain(|p| p.1 >= PRUNE_FLOOR);
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let (atoms, weights) = pairs.into_iter().map(|(a, w)| (a, w / total)).unzip();
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Dirac mass at `a`.
    pub fn point(a: f64) -> Self {
        DiscreteMeasure { atoms: vec![a], weights: vec![1.0] }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(atom, weight)` pairs in increasing atom order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(a, w)| a * w).sum()
    }

    /// `α·self + (1-α)·other`.
    pub fn mix(&self, other: &DiscreteMeasure, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("mixing weight {alpha} outside [0, 1]")));
        }
        let pairs: Vec<_> = self
            .iter()
            .map(|(a, w)| (a, alpha * w))
            .chain(other.iter().map(|(a, w)| (a, (1.0 - alpha) * w)))
            .collect();
        Self::new(&pairs)
    }

    /// `Q((-∞, t])`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.iter().take_while(|(a, _)| *a <= t).map(|(_, w)| w).sum()
    }

    /// Affine image `a ↦ scale·a + shift`.
    pub fn map_affine(&self, scale: f64, shift: f64) -> Result<Self> {
        let pairs: Vec<_> = self.iter().map(|(a, w)| (scale * a + shift, w)).collect();
        Self::new(&pairs)
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms[self.atoms.len() - 1]
    }
}

impl fmt::Display for DiscreteMeasure {
    /// Literal syntax accepted by the config parser: `(atom, weight), ...`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, w)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({a}, {w})")?;
        }
        Ok(())
    }
}

/// Parses the measure literal `(a1, w1), (a2, w2), ...`.
pub fn parse_measure(s: &str) -> Result<DiscreteMeasure> {
    let mut pairs = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let open = rest
            .strip_prefix('(')
            .ok_or_else(|| Error::InvalidMeasure(format!("expected '(' in {s:?}")))?;
        let close = open
            .find(')')
            .ok_or_else(|| Error::InvalidMeasure(format!("unclosed '(' in {s:?}")))?;
        let mut parts = open[..close].split(',').map(str::trim);
        let (a, w) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(w), None) => (a, w),
            _ => return Err(Error::InvalidMeasure(format!("expected (atom, weight) in {s:?}"))),
        };
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidMeasure(format!("bad number {v:?} in {s:?}")))
        };
        pairs.push((parse(a)?, parse(w)?));
        rest = open[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        }
    }
    DiscreteMeasure::new(&pairs)
}

/// Observed counts `c_x` of a sample of size `n ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleHistogram {
    counts: BTreeMap<u64, u64>,
    n: u64,
}

impl SampleHistogram {
    /// Builds a histogram from `(x, count)` pairs; repeated `x` accumulate and
    /// zero counts are dropped.
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Result<Self> {
        let mut counts = BTreeMap::new();
        let mut n: u64 = 0;
        for (x, c) in pairs {
            if c == 0 {
                continue;
            }
            *counts.entry(x).or_insert(0) += c;
            n = n
                .checked_add(c)
                .ok_or_else(|| Error::InvalidHistogram("total count overflows u64".into()))?;
        }
        if n == 0 {
            return Err(Error::InvalidHistogram("histogram must hold at least one observation".into()));
        }
        Ok(SampleHistogram { counts, n })
    }

    pub fn from_observations(xs: &[u64]) -> Result<Self> {
        Self::from_counts(xs.iter().map(|&x| (x, 1)))
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, x: u64) -> u64 {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    /// `(x, count)` over observed values in increasing `x`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&x, &c)| (x, c))
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn max_x(&self) -> u64 {
        *self.counts.keys().next_back().expect("histogram is nonempty")
    }

    /// `h_obs(x) = c_x / n`.
    pub fn empirical_pmf(&self, x: u64) -> f64 {
        self.count(x) as f64 / self.n as f64
    }

    pub fn sample_mean(&self) -> f64 {
        self.iter().map(|(x, c)| x as f64 * c as f64).sum::<f64>() / self.n as f64
    }

    /// CSV with header `x,count`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,count\n");
        for (x, c) in self.iter() {
            out.push_str(&format!("{x},{c}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "x,count" => {}
            other => {
                return Err(Error::Csv(format!(
                    "expected header 'x,count', found {:?}",
                    other.map(|(_, l)| l)
                )))
            }
        }
        let mut pairs = Vec::new();
        for (i, line) in lines {
            let bad = || Error::Csv(format!("line {}: expected 'x,count', found {line:?}", i + 1));
            let (x, c) = line.trim().split_once(',').ok_or_else(bad)?;
            let x = x.trim().parse::<u64>().map_err(|_| bad())?;
            let c = c.trim().parse::<u64>().map_err(|_| bad())?;
            pairs.push((x, c));
        }
        Self::from_counts(pairs)
    }
}

/// Identifies the random stream of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed {
    pub base: u64,
    pub replication: u64,
}

impl Seed {
    pub fn new(base: u64, replication: u64) -> Self {
        Seed { base, replication }
    }

    /// `splitmix64(base ^ replication)`, the 64-bit seed of the replication's
    /// ChaCha8 stream.
    pub fn stream_seed(self) -> u64 {
        splitmix64(self.base ^ self.replication)
    }

    pub(crate) fn rng(self) -> UniformStream {
        UniformStream(ChaCha8Rng::seed_from_u64(self.stream_seed()))
    }
}

/// One step of the SplitMix64 generator.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform doubles on `[0, 1)` with 53 random bits taken from the top of
/// each 64-bit ChaCha8 output.
pub(crate) struct UniformStream(ChaCha8Rng);

impl UniformStream {
    pub(crate) fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draws `n` observations from the mixture `h_q`: `θ_i` by inverse CDF on the
/// atom weights, then `x_i` by inverse CDF over the pmf of `f(·|θ_i)`.
///
/// The pmf table of each atom stops at the first `x` whose tail mass is below
/// 1e-15; the rare uniform landing beyond it is assigned that last `x`.
pub fn sample(
    family: &FamilySpec,
    q: &DiscreteMeasure,
    n: u64,
    seed: Seed,
) -> Result<SampleHistogram> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    family.check_measure(q)?;

    let mut atom_cdf = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for &w in q.weights() {
        acc += w;
        atom_cdf.push(acc);
    }
    let tables = q
        .atoms()
        .iter()
        .map(|&t| {
            let cap = family.tail_cut(t, SAMPLE_TAIL)?;
            let mut acc = 0.0;
            Ok((0..=cap)
                .map(|x| {
                    acc += family.pmf_raw(x, t);
                    acc
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = seed.rng();
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..n {
        let u = rng.next_f64();
        let j = atom_cdf.partition_point(|&c| c <= u).min(q.len() - 1);
        let v = rng.next_f64();
        let table = &tables[j];
        let x = table.partition_point(|&c| c <= v).min(table.len() - 1);
        *counts.entry(x as u64).or_insert(0) += 1;
    }
    Ok(SampleHistogram { counts, n })
}
