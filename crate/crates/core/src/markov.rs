//! The alternating mod-3 Lagrangian Markov operator and its stationary laws.
//!
//! States are Selmer dimensions `s ≥ 0`. Twisting at one more prime moves
//! the dimension by an even amount, so parity is conserved and the operator
//! acts separately on even and odd states. From `s` it moves up by two with
//! probability `3^{−r(s)}` and down by two otherwise, where `r(s) = ⌊s/2⌋`.
//!
//! Within a parity class the chain is periodic with period two (every step
//! changes `s mod 4`), so `M^w(δ₀)` alternates between two sublattices and
//! only the average of consecutive powers converges; see [`evolve_averaged`].

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::PrimeClassRecord;

/// Largest state tracked by a [`Distribution`].
pub const S_MAX: usize = 64;

/// Tolerance on total mass.
pub const MASS_EPS: f64 = 1e-12;

/// Number of factors kept in the infinite products.
const PRODUCT_TERMS: i32 = 60;

/// Number of character lifts above a local condition at one prime.
pub const LIFTS_PER_PRIME: u32 = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("invalid transition index i={i}, j={j}")]
    BadIndex { i: u8, j: u8 },
    #[error("t={t} exceeds i={i}")]
    TExceedsI { i: u8, t: u8 },
    #[error("lift index {0} out of range 0..6")]
    BadLift(u8),
    #[error("inert primes never have full rational 3-torsion (i={0})")]
    InertFullTorsion(u8),
    #[error("tail bound needs s >= 4, got {0}")]
    TailTooSmall(usize),
    #[error("state {0} exceeds the support bound {S_MAX}")]
    StateTooLarge(usize),
    #[error("invalid mass {mass} at state {s}")]
    BadMass { s: usize, mass: f64 },
    #[error("total mass {0} is not 1")]
    NotNormalized(f64),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("rho must lie in [0, 1], got {0}")]
    BadRho(f64),
    #[error("unknown parity {0:?}")]
    BadParity(String),
    #[error("chain left the state space at trial {trial}")]
    NegativeState { trial: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(s: usize) -> Parity {
        if s % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl std::str::FromStr for Parity {
    type Err = MarkovError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            other => Err(MarkovError::BadParity(other.to_string())),
        }
    }
}

/// A probability vector on `0..=S_MAX`.
///
/// `overflow` records mass pushed past `S_MAX` and renormalized away.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    mass: Vec<f64>,
    overflow: f64,
}

impl Distribution {
    pub fn point(s: usize) -> Result<Self, MarkovError> {
        if s > S_MAX {
            return Err(MarkovError::StateTooLarge(s));
        }
        let mut mass = vec![0.0; S_MAX + 1];
        mass[s] = 1.0;
        Ok(Distribution {
            mass,
            overflow: 0.0,
        })
    }

    /// Validates non-negativity, support and total mass.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, MarkovError> {
        let mut mass = vec![0.0; S_MAX + 1];
        for (s, m) in pairs {
            if s > S_MAX {
                return Err(MarkovError::StateTooLarge(s));
            }
            if !(m >= 0.0) || !m.is_finite() {
                return Err(MarkovError::BadMass { s, mass: m });
            }
            mass[s] += m;
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_EPS {
            return Err(MarkovError::NotNormalized(total));
        }
        Ok(Distribution {
            mass,
            overflow: 0.0,
        })
    }

    /// Normalized histogram of counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self, MarkovError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MarkovError::NotNormalized(0.0));
        }
        Distribution::from_pairs(
            counts
                .iter()
                .enumerate()
                .map(|(s, &c)| (s, c as f64 / total as f64)),
        )
    }

    /// `ρ·δ₀ + (1−ρ)·δ₁`, the initial law used when only the parity split
    /// of the starting Selmer dimension is known.
    pub fn parity_mixture(rho: f64) -> Result<Self, MarkovError> {
        check_rho(rho)?;
        Distribution::from_pairs([(0, rho), (1, 1.0 - rho)])
    }

    pub fn get(&self, s: usize) -> f64 {
        self.mass.get(s).copied().unwrap_or(0.0)
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    /// Largest state with nonzero mass.
    pub fn max_support(&self) -> Option<usize> {
        self.mass.iter().rposition(|&m| m > 0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(s, _)| s)
    }

    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        self.mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn tv_distance(&self, other: &Distribution) -> f64 {
        0.5 * self.l1_distance(other)
    }

    /// Mass on states `≥ s`.
    pub fn tail(&self, s: usize) -> f64 {
        self.mass.iter().skip(s).sum()
    }

    /// `weight·self + (1−weight)·other`.
    pub fn mix(&self, other: &Distribution, weight: f64) -> Distribution {
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        Distribution {
            mass,
            overflow: weight * self.overflow + (1.0 - weight) * other.overflow,
        }
    }

    /// Cumulative inverse: the state at quantile `u ∈ [0, 1)`.
    fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (s, &m) in self.mass.iter().enumerate() {
            acc += m;
            if u < acc {
                return s;
            }
        }
        self.max_support().unwrap_or(0)
    }

    /// Nonzero masses keyed by state, the JSON form `{"s": mass}`.
    pub fn to_map(&self) -> BTreeMap<usize, f64> {
        self.support().map(|s| (s, self.mass[s])).collect()
    }

    pub fn from_map(map: &BTreeMap<usize, f64>) -> Result<Self, MarkovError> {
        Distribution::from_pairs(map.iter().map(|(&s, &m)| (s, m)))
    }
}

fn check_rho(rho: f64) -> Result<(), MarkovError> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(MarkovError::BadRho(rho))
    }
}

/// `⌊s/2⌋`: half the dimension, after dropping the parity-forced class.
pub fn r_omega(dim: usize) -> usize {
    dim / 2
}

fn pow3_neg(r: usize) -> f64 {
    3f64.powi(-(r as i32))
}

/// Probability that `t_ω(p) = j` for a prime in class `𝒫_i`, `i ∈ {1,2}`.
pub fn cij(i: u8, j: u8, r: usize) -> Result<f64, MarkovError> {
    let x = pow3_neg(r);
    let x2 = pow3_neg(2 * r);
    match (i, j) {
        (1, 0) => Ok(x),
        (1, 1) => Ok(1.0 - x),
        (1, 2) => Ok(0.0),
        (2, 0) => Ok(x2),
        (2, 1) => Ok(4.0 * (x - x2)),
        (2, 2) => Ok(1.0 - 4.0 * x + 3.0 * x2),
        _ => Err(MarkovError::BadIndex { i, j }),
    }
}

/// Change of Selmer dimension when twisting at a prime split in F.
///
/// For `i = 2, t = 0` the six lifts of the local condition split two
/// (dimension +4) to four (unchanged); lifts `0` and `1` are the former.
pub fn rank_delta_split(i: u8, t: u8, lift: u8) -> Result<i32, MarkovError> {
    if lift >= LIFTS_PER_PRIME as u8 {
        return Err(MarkovError::BadLift(lift));
    }
    if i > 2 {
        return Err(MarkovError::BadIndex { i, j: t });
    }
    if t > i {
        return Err(MarkovError::TExceedsI { i, t });
    }
    Ok(match (i, t) {
        (0, _) => 0,
        (1, 0) => 2,
        (1, _) => -2,
        (2, 0) if lift < 2 => 4,
        (2, 0) => 0,
        (2, 1) => 0,
        _ => -4,
    })
}

/// Change of Selmer dimension when twisting at a prime inert in F = Q(ζ₃).
pub fn rank_delta_inert(i: u8, t: u8) -> Result<i32, MarkovError> {
    match i {
        0 if t == 0 => Ok(0),
        1 if t == 0 => Ok(2),
        1 if t == 1 => Ok(-2),
        0 | 1 => Err(MarkovError::TExceedsI { i, t }),
        2 => Err(MarkovError::InertFullTorsion(2)),
        _ => Err(MarkovError::BadIndex { i, j: t }),
    }
}

/// Probability of moving from `s` to `s + 2`.
pub fn up_probability(s: usize) -> f64 {
    pow3_neg(r_omega(s))
}

/// One application of the operator.
pub fn ml_step(d: &Distribution) -> Distribution {
    let mut next = vec![0.0; S_MAX + 1];
    let mut lost = 0.0;
    for (s, &m) in d.mass.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let up = up_probability(s);
        if s + 2 <= S_MAX {
            next[s + 2] += m * up;
        } else {
            lost += m * up;
        }
        if s >= 2 {
            next[s - 2] += m * (1.0 - up);
        }
    }
    if lost > 0.0 {
        let kept: f64 = next.iter().sum();
        for x in &mut next {
            *x /= kept;
        }
    }
    Distribution {
        mass: next,
        overflow: d.overflow + lost,
    }
}

/// `M^w(d)`.
pub fn evolve(d: &Distribution, w: usize) -> Distribution {
    (0..w).fold(d.clone(), |acc, _| ml_step(&acc))
}

/// `(M^w(d) + M^{w+1}(d)) / 2`, which converges as `w → ∞` even though the
/// individual powers oscillate.
pub fn evolve_averaged(d: &Distribution, w: usize) -> Distribution {
    let a = evolve(d, w);
    let b = ml_step(&a);
    a.mix(&b, 0.5)
}

/// `∏_{k≥0} 1/(1 + 3^{−k})`.
pub fn even_normalizer() -> f64 {
    let mut acc = 1.0;
    for k in 0..PRODUCT_TERMS {
        let factor = 1.0 / (1.0 + 3f64.powi(-k));
        acc *= factor;
        if (factor - 1.0).abs() < 1e-15 {
            break;
        }
    }
    acc
}

/// `C = ∏_{k≥1} 1/(1 − 3^{−k})`.
pub fn decay_constant() -> f64 {
    let mut acc = 1.0;
    for k in 1..PRODUCT_TERMS {
        let factor = 1.0 / (1.0 - 3f64.powi(-k));
        acc *= factor;
        if (factor - 1.0).abs() < 1e-15 {
            break;
        }
    }
    acc
}

/// Stationary law supported on the given parity:
/// `E(s) = ∏_{k≥0} 1/(1+3^{−k}) · ∏_{k=1}^{⌊s/2⌋} 3/(3^k − 1)`.
pub fn stationary(parity: Parity) -> Distribution {
    let c = even_normalizer();
    let mut mass = vec![0.0; S_MAX + 1];
    let start = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let mut value = c;
    for s in (start..=S_MAX).step_by(2) {
        let k = (s / 2) as i32;
        if k > 0 {
            value *= 3.0 / (3f64.powi(k) - 1.0);
        }
        mass[s] = value;
    }
    Distribution {
        mass,
        overflow: 0.0,
    }
}

/// `ρ·E_even + (1−ρ)·E_odd`.
pub fn stationary_mixture(rho: f64) -> Result<Distribution, MarkovError> {
    check_rho(rho)?;
    Ok(stationary(Parity::Even).mix(&stationary(Parity::Odd), rho))
}

/// Mass on even states.
pub fn rho(d: &Distribution) -> f64 {
    d.mass.iter().step_by(2).sum()
}

/// `C·3^{−s(s−2)/8}` for even `s`, `C·3^{−(s−1)(s−3)/8}` for odd `s`.
pub fn tail_bound(s: usize) -> Result<f64, MarkovError> {
    if s < 4 {
        return Err(MarkovError::TailTooSmall(s));
    }
    let exponent = if s % 2 == 0 {
        s * (s - 2)
    } else {
        (s - 1) * (s - 3)
    } as f64
        / 8.0;
    Ok(decay_constant() * 3f64.powf(-exponent))
}

/// Stationary mass of the given parity on states `≥ s`.
pub fn tail_exact(parity: Parity, s: usize) -> Result<f64, MarkovError> {
    if s < 4 {
        return Err(MarkovError::TailTooSmall(s));
    }
    Ok(stationary(parity).tail(s))
}

/// One prime of a twisting sequence: its class `i = dim E[3](F_p)` and
/// whether it splits in F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeStep {
    pub class: u8,
    pub split: bool,
}

impl From<&PrimeClassRecord> for PrimeStep {
    fn from(r: &PrimeClassRecord) -> Self {
        PrimeStep {
            class: r.class_k,
            split: r.split_in_f,
        }
    }
}

/// Draws `j` from `c_{i,·}(r)` using quantile `u`.
fn draw_t(i: u8, r: usize, u: f64) -> Result<u8, MarkovError> {
    let mut acc = 0.0;
    for j in 0..=i {
        acc += cij(i, j, r)?;
        if u < acc {
            return Ok(j);
        }
    }
    Ok(i)
}

/// Runs one trajectory from `s0` through `stream`.
pub fn run_trial<R: Rng>(
    rng: &mut R,
    s0: usize,
    stream: &[PrimeStep],
) -> Result<Option<usize>, MarkovError> {
    let mut s = s0 as i64;
    for step in stream {
        if step.class == 0 {
            continue;
        }
        let t = draw_t(step.class, r_omega(s as usize), rng.random::<f64>())?;
        let delta = if step.split {
            let lift = rng.random_range(0..LIFTS_PER_PRIME) as u8;
            rank_delta_split(step.class, t, lift)?
        } else {
            rank_delta_inert(step.class, t)?
        };
        s += delta as i64;
        if s < 0 {
            return Ok(None);
        }
    }
    Ok(Some(s as usize))
}

/// Seeded generator for trial `trial`: the ChaCha key comes from `seed`, the
/// stream id is the trial number.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

const BATCH: u64 = 1024;

/// Monte Carlo estimate of the final Selmer-dimension law after twisting
/// through `stream`, starting from `initial`.
///
/// Each trial owns its random stream, so the result does not depend on how
/// trials are scheduled across threads.
pub fn simulate_chain(
    initial: &Distribution,
    stream: &[PrimeStep],
    trials: u64,
    seed: u64,
) -> Result<Distribution, MarkovError> {
    let counts = simulate_counts(trials, seed, |rng, _| {
        let s0 = initial.sample(rng.random::<f64>());
        Ok((s0, stream))
    })?;
    Distribution::from_counts(&counts)
}

/// Shared driver: `setup` picks the starting state and the stream for each
/// trial, using the trial's own generator.
pub(crate) fn simulate_counts<'a, F>(
    trials: u64,
    seed: u64,
    setup: F,
) -> Result<Vec<u64>, MarkovError>
where
    F: Fn(&mut ChaCha8Rng, u64) -> Result<(usize, &'a [PrimeStep]), MarkovError> + Sync,
{
    if trials == 0 {
        return Err(MarkovError::NoTrials);
    }
    let batches = trials.div_ceil(BATCH);
    let merged = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<Vec<u64>, MarkovError> {
            let mut counts = vec![0u64; S_MAX + 1];
            for trial in b * BATCH..((b + 1) * BATCH).min(trials) {
                let mut rng = trial_rng(seed, trial);
                let (s0, stream) = setup(&mut rng, trial)?;
                let end =
                    run_trial(&mut rng, s0, stream)?.ok_or(MarkovError::NegativeState { trial })?;
                counts[end.min(S_MAX)] += 1;
            }
            Ok(counts)
        })
        .try_reduce(
            || vec![0u64; S_MAX + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(merged)
}
