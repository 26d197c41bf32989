//! Fans of square-free conductors and the cubic fields they index.
//!
//! A fan element is a tuple of distinct support primes `q₁ < … < q_m` with
//! `q_j < L_j(X)`, where the bounds come from a growth function through the
//! recursion `L₁ = 𝓛(X)`, `L_{n+1} = max(𝓛(L₁⋯L_n), X·L_n)`. Since the
//! bounds are nondecreasing, a set of primes admits a valid position
//! assignment exactly when its sorted order does, so elements are stored
//! sorted.
//!
//! Over k = Q with resolvent F = Q(ζ₃) each element `d = q₁⋯q_m` is
//! represented by the pure cubic `x³ − d`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curve::PrimeClassRecord;
use crate::markov::{self, Distribution, MarkovError, PrimeStep};

/// Fans with at most this many primes are enumerated; longer ones sampled.
pub const ENUMERATION_MAX_M: usize = 3;

/// Sample pool size used for long fans.
pub const SAMPLE_POOL: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FanError {
    #[error("invalid growth function: {0}")]
    BadGrowth(String),
    #[error("L_{index} overflows the float range")]
    Overflow { index: usize },
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("classification covers primes up to {covered}, fan needs primes below {needed}")]
    MissingPrimes { needed: u64, covered: u64 },
    #[error("case {0} needs a Frobenius oracle")]
    MissingOracle(Case),
    #[error("fan is empty")]
    EmptyFan,
    #[error("product of primes overflows u64")]
    DValueOverflow,
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// Nondecreasing `𝓛: [1,∞) → [1,∞)` from a closed family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GrowthFn {
    /// `max(1, ln y)`.
    Log,
    /// `y^alpha`, `alpha > 0`.
    Power { alpha: f64 },
    /// `a·y + b` with `a ≥ 0`, `a + b ≥ 1`.
    Affine { a: f64, b: f64 },
}

impl GrowthFn {
    pub fn identity() -> Self {
        GrowthFn::Power { alpha: 1.0 }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            GrowthFn::Log => y.ln().max(1.0),
            GrowthFn::Power { alpha } => y.powf(alpha),
            GrowthFn::Affine { a, b } => a * y + b,
        }
    }

    /// Checks parameters and `𝓛(y) ≥ 1`, monotonicity on a log-spaced grid.
    pub fn validate(&self) -> Result<(), FanError> {
        match *self {
            GrowthFn::Power { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(FanError::BadGrowth(format!(
                    "pow exponent {alpha} must be positive"
                )));
            }
            GrowthFn::Affine { a, b } if !(a >= 0.0 && a + b >= 1.0) => {
                return Err(FanError::BadGrowth(format!(
                    "affine {a},{b} needs a >= 0, a + b >= 1"
                )));
            }
            _ => {}
        }
        let mut prev = 1.0;
        for k in 0..=60 {
            let y = 10f64.powf(k as f64 / 10.0);
            let v = self.eval(y);
            if !(v >= 1.0) || v < prev {
                return Err(FanError::BadGrowth(format!("{self} fails at y={y}")));
            }
            prev = v;
        }
        Ok(())
    }
}

impl fmt::Display for GrowthFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFn::Log => write!(f, "log"),
            GrowthFn::Power { alpha } => write!(f, "pow:{alpha}"),
            GrowthFn::Affine { a, b } => write!(f, "affine:{a},{b}"),
        }
    }
}

impl std::str::FromStr for GrowthFn {
    type Err = FanError;

    /// `log`, `pow:α` or `affine:a,b`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FanError::BadGrowth(format!("cannot parse {s:?}"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let g = if s == "log" {
            GrowthFn::Log
        } else if let Some(rest) = s.strip_prefix("pow:") {
            GrowthFn::Power { alpha: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("affine:") {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            GrowthFn::Affine {
                a: num(a)?,
                b: num(b)?,
            }
        } else {
            return Err(bad());
        };
        g.validate()?;
        Ok(g)
    }
}

/// `[L₁(Y), …, L_n(Y)]`.
pub fn ln_sequence(growth: &GrowthFn, y: f64, n: usize) -> Result<Vec<f64>, FanError> {
    if !(y >= 1.0) || n == 0 {
        return Err(FanError::BadArgument(format!(
            "need Y >= 1 and n >= 1, got Y={y}, n={n}"
        )));
    }
    let mut seq = Vec::with_capacity(n);
    let mut product = 1.0f64;
    let mut last = growth.eval(y);
    for index in 1..=n {
        if index > 1 {
            last = growth.eval(product).max(y * last);
        }
        if !last.is_finite() {
            return Err(FanError::Overflow { index });
        }
        seq.push(last);
        product *= last;
    }
    Ok(seq)
}

/// The three parameterization cases for S₃-cubics with resolvent F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Case {
    A,
    B,
    C,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Case {
    type Err = FanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Case::A),
            "B" | "b" => Ok(Case::B),
            "C" | "c" => Ok(Case::C),
            _ => Err(FanError::BadArgument(format!("unknown case {s:?}"))),
        }
    }
}

/// Decides the class-field Frobenius condition at a prime.
pub type FrobeniusOracle = Arc<dyn Fn(u64) -> bool + Send + Sync>;

/// Support predicate: Frobenius on `E[3]` is nontrivial and the case's
/// class-field condition holds.
#[derive(Clone)]
pub struct PrimePredicate {
    case: Case,
    oracle: FrobeniusOracle,
}

impl fmt::Debug for PrimePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrimePredicate")
            .field("case", &self.case)
            .finish_non_exhaustive()
    }
}

impl PrimePredicate {
    pub fn case(&self) -> Case {
        self.case
    }

    pub fn accepts(&self, rec: &PrimeClassRecord) -> bool {
        rec.dim_fp != 2 && (self.oracle)(rec.p)
    }
}

/// Case B needs no oracle; cases A and C require one.
pub fn case_filter(
    case: Case,
    oracle: Option<FrobeniusOracle>,
) -> Result<PrimePredicate, FanError> {
    let oracle = match (case, oracle) {
        (Case::B, _) => Arc::new(|_| true) as FrobeniusOracle,
        (_, Some(o)) => o,
        (c, None) => return Err(FanError::MissingOracle(c)),
    };
    Ok(PrimePredicate { case, oracle })
}

/// Classified primes for one curve together with the range they cover.
#[derive(Debug, Clone)]
pub struct ClassTable {
    records: BTreeMap<u64, PrimeClassRecord>,
    covered_up_to: u64,
}

impl ClassTable {
    pub fn new(records: impl IntoIterator<Item = PrimeClassRecord>, covered_up_to: u64) -> Self {
        ClassTable {
            records: records.into_iter().map(|r| (r.p, r)).collect(),
            covered_up_to,
        }
    }

    pub fn covered_up_to(&self) -> u64 {
        self.covered_up_to
    }

    pub fn get(&self, p: u64) -> Option<&PrimeClassRecord> {
        self.records.get(&p)
    }

    pub fn records(&self) -> impl Iterator<Item = &PrimeClassRecord> {
        self.records.values()
    }

    /// Accepted primes strictly below `bound`, ascending.
    fn support_below(&self, bound: f64, pred: &PrimePredicate) -> Vec<&PrimeClassRecord> {
        self.records
            .values()
            .filter(|r| (r.p as f64) < bound && pred.accepts(r))
            .collect()
    }

    fn ensure_covers(&self, bound: f64) -> Result<(), FanError> {
        // Primes q < bound are needed, i.e. up to ⌈bound⌉ − 1.
        let needed = bound.ceil();
        if needed > u64::MAX as f64 || (needed as u64).saturating_sub(1) > self.covered_up_to {
            return Err(FanError::MissingPrimes {
                needed: if needed > u64::MAX as f64 {
                    u64::MAX
                } else {
                    needed as u64
                },
                covered: self.covered_up_to,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FanElement {
    pub primes: Vec<u64>,
    pub w: u32,
    pub d_value: u64,
    pub cubic_poly: String,
}

impl FanElement {
    pub fn new(records: &[&PrimeClassRecord]) -> Result<Self, FanError> {
        let mut primes: Vec<u64> = records.iter().map(|r| r.p).collect();
        primes.sort_unstable();
        if primes.windows(2).any(|w| w[0] == w[1]) {
            return Err(FanError::BadArgument("primes must be distinct".into()));
        }
        let w = records.iter().map(|r| r.dim_fp as u32).sum();
        let d_value = primes
            .iter()
            .try_fold(1u64, |acc, &q| acc.checked_mul(q))
            .ok_or(FanError::DValueOverflow)?;
        Ok(FanElement {
            primes,
            w,
            d_value,
            cubic_poly: cubic_polynomial(d_value),
        })
    }

    pub fn m(&self) -> usize {
        self.primes.len()
    }

    /// Union with a fan element on disjoint primes.
    pub fn join(&self, other: &FanElement) -> Result<FanElement, FanError> {
        let mut primes = self.primes.clone();
        primes.extend(&other.primes);
        primes.sort_unstable();
        if primes.windows(2).any(|w| w[0] == w[1]) {
            return Err(FanError::BadArgument(
                "joined elements share a prime".into(),
            ));
        }
        let d_value = self
            .d_value
            .checked_mul(other.d_value)
            .ok_or(FanError::DValueOverflow)?;
        Ok(FanElement {
            primes,
            w: self.w + other.w,
            d_value,
            cubic_poly: cubic_polynomial(d_value),
        })
    }

    /// Twisting sequence for the Markov chain.
    pub fn steps(&self, table: &ClassTable) -> Vec<PrimeStep> {
        self.primes
            .iter()
            .filter_map(|&q| table.get(q))
            .map(PrimeStep::from)
            .collect()
    }
}

/// `x^3 - d`.
pub fn cubic_polynomial(d: u64) -> String {
    format!("x^3 - {d}")
}

/// Integer cube root, rounded down.
pub fn icbrt(n: u64) -> u64 {
    let mut r = (n as f64).cbrt() as u64;
    while r.checked_pow(3).is_none_or(|c| c > n) {
        r -= 1;
    }
    while (r + 1).checked_pow(3).is_some_and(|c| c <= n) {
        r += 1;
    }
    r
}

pub fn is_perfect_cube(n: u64) -> bool {
    icbrt(n).pow(3) == n
}

/// `x³ − d` is irreducible over Q exactly when `d` is not a cube.
pub fn cubic_is_irreducible(d: u64) -> bool {
    !is_perfect_cube(d)
}

/// Number of character lifts over an element: `6^m`.
pub fn lift_count(elem: &FanElement) -> u128 {
    (markov::LIFTS_PER_PRIME as u128).pow(elem.m() as u32)
}

fn check_fan_args(m: usize, x: f64) -> Result<(), FanError> {
    if m == 0 {
        return Err(FanError::BadArgument("m must be at least 1".into()));
    }
    if !(x >= 1.0) {
        return Err(FanError::BadArgument(format!("X must be >= 1, got {x}")));
    }
    Ok(())
}

/// Every fan element with `m` primes and weight `w`, lexicographically
/// sorted.
pub fn enumerate_fan(
    table: &ClassTable,
    m: usize,
    w: u32,
    x: f64,
    growth: &GrowthFn,
    pred: &PrimePredicate,
) -> Result<Vec<FanElement>, FanError> {
    check_fan_args(m, x)?;
    let bounds = ln_sequence(growth, x, m)?;
    table.ensure_covers(bounds[m - 1])?;
    let support = table.support_below(bounds[m - 1], pred);

    fn extend<'a>(
        support: &[&'a PrimeClassRecord],
        bounds: &[f64],
        start: usize,
        remaining_w: i64,
        chosen: &mut Vec<&'a PrimeClassRecord>,
        out: &mut Vec<Vec<&'a PrimeClassRecord>>,
    ) {
        let j = chosen.len();
        if j == bounds.len() {
            if remaining_w == 0 {
                out.push(chosen.clone());
            }
            return;
        }
        let slots = (bounds.len() - j) as i64;
        if remaining_w < 0 || remaining_w > 2 * slots {
            return;
        }
        for (k, rec) in support.iter().enumerate().skip(start) {
            if rec.p as f64 >= bounds[j] {
                break;
            }
            chosen.push(rec);
            extend(
                support,
                bounds,
                k + 1,
                remaining_w - rec.dim_fp as i64,
                chosen,
                out,
            );
            chosen.pop();
        }
    }

    let firsts: Vec<usize> = (0..support.len())
        .take_while(|&k| (support[k].p as f64) < bounds[0])
        .collect();
    let tuples: Vec<Vec<&PrimeClassRecord>> = firsts
        .par_iter()
        .map(|&k| {
            let mut out = Vec::new();
            let mut chosen = vec![support[k]];
            extend(
                &support,
                &bounds,
                k + 1,
                w as i64 - support[k].dim_fp as i64,
                &mut chosen,
                &mut out,
            );
            out
        })
        .flatten()
        .collect();
    tuples.iter().map(|t| FanElement::new(t)).collect()
}

/// Suffix counts for exact counting and uniform sampling.
///
/// `ways[k][j][v]` is the number of ways to fill positions `j..m` with
/// support primes of index `≥ k` and total weight `v`.
struct FanCounter<'a> {
    support: Vec<&'a PrimeClassRecord>,
    bounds: Vec<f64>,
    w: usize,
    ways: Vec<f64>,
}

impl<'a> FanCounter<'a> {
    fn new(support: Vec<&'a PrimeClassRecord>, bounds: Vec<f64>, w: usize) -> Self {
        let n = support.len();
        let m = bounds.len();
        let mut counter = FanCounter {
            support,
            bounds,
            w,
            ways: vec![0.0; (n + 1) * (m + 1) * (w + 1)],
        };
        let base = counter.idx(n, m, 0);
        counter.ways[base] = 1.0;
        for k in (0..n).rev() {
            let c = counter.support[k].dim_fp as usize;
            let q = counter.support[k].p as f64;
            for j in 0..=m {
                for v in 0..=w {
                    let mut total = counter.ways[counter.idx(k + 1, j, v)];
                    if j < m && q < counter.bounds[j] && v >= c {
                        total += counter.ways[counter.idx(k + 1, j + 1, v - c)];
                    }
                    let at = counter.idx(k, j, v);
                    counter.ways[at] = total;
                }
            }
        }
        counter
    }

    fn idx(&self, k: usize, j: usize, v: usize) -> usize {
        let m = self.bounds.len();
        (k * (m + 1) + j) * (self.w + 1) + v
    }

    fn size(&self) -> f64 {
        self.ways[self.idx(0, 0, self.w)]
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<&'a PrimeClassRecord> {
        let m = self.bounds.len();
        let mut chosen = Vec::with_capacity(m);
        let (mut k, mut v) = (0usize, self.w);
        for j in 0..m {
            let target = rng.random::<f64>() * self.ways[self.idx(k, j, v)];
            let mut acc = 0.0;
            let mut pick = None;
            for kk in k..self.support.len() {
                let rec = self.support[kk];
                let c = rec.dim_fp as usize;
                if (rec.p as f64) >= self.bounds[j] {
                    break;
                }
                if c > v {
                    continue;
                }
                let ways = self.ways[self.idx(kk + 1, j + 1, v - c)];
                if ways == 0.0 {
                    continue;
                }
                pick = Some(kk);
                acc += ways;
                if target < acc {
                    break;
                }
            }
            let kk = pick.expect("nonzero count implies a choice");
            chosen.push(self.support[kk]);
            v -= self.support[kk].dim_fp as usize;
            k = kk + 1;
        }
        chosen
    }
}

fn counter<'a>(
    table: &'a ClassTable,
    m: usize,
    w: u32,
    x: f64,
    growth: &GrowthFn,
    pred: &PrimePredicate,
) -> Result<FanCounter<'a>, FanError> {
    check_fan_args(m, x)?;
    let bounds = ln_sequence(growth, x, m)?;
    table.ensure_covers(bounds[m - 1])?;
    let support = table.support_below(bounds[m - 1], pred);
    Ok(FanCounter::new(support, bounds, w as usize))
}

/// Number of fan elements, by dynamic programming over the support.
pub fn fan_size(
    table: &ClassTable,
    m: usize,
    w: u32,
    x: f64,
    growth: &GrowthFn,
    pred: &PrimePredicate,
) -> Result<f64, FanError> {
    Ok(counter(table, m, w, x, growth, pred)?.size())
}

/// `samples` independent uniform draws from the fan.
pub fn sample_fan(
    table: &ClassTable,
    m: usize,
    w: u32,
    x: f64,
    growth: &GrowthFn,
    pred: &PrimePredicate,
    samples: usize,
    seed: u64,
) -> Result<Vec<FanElement>, FanError> {
    let counter = counter(table, m, w, x, growth, pred)?;
    if counter.size() == 0.0 {
        return Err(FanError::EmptyFan);
    }
    (0..samples)
        .map(|i| {
            let mut rng = markov::trial_rng(seed, i as u64);
            FanElement::new(&counter.sample(&mut rng))
        })
        .collect()
}

/// Empirical Selmer-dimension law over a fan against the operator prediction.
#[derive(Debug, Clone)]
pub struct FanDistribution {
    /// Elements enumerated, or sampled into the pool for long fans.
    pub elements: usize,
    pub fan_size: f64,
    pub empirical: Distribution,
    pub operator: Distribution,
    pub tv: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn fan_distribution(
    table: &ClassTable,
    m: usize,
    w: u32,
    x: f64,
    growth: &GrowthFn,
    pred: &PrimePredicate,
    rho: f64,
    trials: u64,
    seed: u64,
) -> Result<FanDistribution, FanError> {
    let initial = Distribution::parity_mixture(rho)?;
    let size = fan_size(table, m, w, x, growth, pred)?;
    let elements = if m <= ENUMERATION_MAX_M {
        enumerate_fan(table, m, w, x, growth, pred)?
    } else {
        sample_fan(
            table,
            m,
            w,
            x,
            growth,
            pred,
            SAMPLE_POOL,
            seed ^ 0x9e37_79b9_7f4a_7c15,
        )?
    };
    if elements.is_empty() {
        return Err(FanError::EmptyFan);
    }
    let streams: Vec<Vec<PrimeStep>> = elements.iter().map(|e| e.steps(table)).collect();
    let counts = markov::simulate_counts(trials, seed, |rng, _| {
        let pick = rng.random_range(0..streams.len());
        let s0 = sample_initial(&initial, rng.random::<f64>());
        Ok((s0, streams[pick].as_slice()))
    })?;
    let empirical = Distribution::from_counts(&counts)?;
    let operator = markov::evolve(&initial, w as usize);
    let tv = empirical.tv_distance(&operator);
    Ok(FanDistribution {
        elements: elements.len(),
        fan_size: size,
        empirical,
        operator,
        tv,
    })
}

fn sample_initial(d: &Distribution, u: f64) -> usize {
    let mut acc = 0.0;
    for (s, &m) in d.masses().iter().enumerate() {
        acc += m;
        if u < acc {
            return s;
        }
    }
    d.max_support().unwrap_or(0)
}
