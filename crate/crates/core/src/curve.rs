//! Classification of rational primes for a fixed curve `y² = x³ + Ax + B`.
//!
//! For each good prime `p > 3` we compute `a_p`, the F₃-dimension of the
//! rational 3-torsion over F_p and F_{p²}, the splitting of `p` in Q(ζ₃), and
//! from these the conjugacy class of Frobenius acting on `E[3]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ff::{self, Field, Fp, Fp2};
use crate::gl2f3::{self, ConjClass};

/// Point counting is naive `O(p)`; larger primes are refused.
pub const MAX_PRIME: u64 = 1_000_000;

/// Below this bound, roots of ψ₃ over F_p are found by direct evaluation.
pub const DIRECT_ROOT_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error("singular curve: A={a}, B={b} has zero discriminant")]
    Singular { a: i64, b: i64 },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("primes p <= 3 are not supported (got {0})")]
    Unsupported(u64),
    #[error("prime {0} exceeds the point-counting limit {MAX_PRIME}")]
    TooLarge(u64),
    #[error("curve has bad reduction at {0}")]
    BadReduction(u64),
    #[error("max prime must be at least 100, got {0}")]
    RangeTooSmall(u64),
    #[error("internal consistency failure at p={p}: {detail}")]
    Consistency { p: u64, detail: String },
}

impl CurveError {
    fn consistency(p: u64, detail: impl Into<String>) -> Self {
        CurveError::Consistency {
            p,
            detail: detail.into(),
        }
    }
}

/// An elliptic curve `y² = x³ + Ax + B` over Q with integral coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveQ {
    pub a: i64,
    pub b: i64,
    pub label: Option<String>,
}

impl CurveQ {
    pub fn new(a: i64, b: i64, label: Option<String>) -> Result<Self, CurveError> {
        let curve = CurveQ { a, b, label };
        if curve.discriminant() == 0 {
            return Err(CurveError::Singular { a, b });
        }
        Ok(curve)
    }

    /// `−16(4A³ + 27B²)`.
    pub fn discriminant(&self) -> i128 {
        let a = self.a as i128;
        let b = self.b as i128;
        -16 * (4 * a * a * a + 27 * b * b)
    }

    /// The twist `y² = x³ + d²Ax + d³B`.
    pub fn quadratic_twist(&self, d: i64) -> Result<CurveQ, CurveError> {
        let label = self.label.as_ref().map(|l| format!("{l}^({d})"));
        CurveQ::new(d * d * self.a, d * d * d * self.b, label)
    }

    pub fn has_good_reduction(&self, p: u64) -> bool {
        self.discriminant().rem_euclid(p as i128) != 0
    }

    fn rhs(&self, f: &Fp, x: u64) -> u64 {
        let a = f.reduce(self.a);
        let b = f.reduce(self.b);
        f.add(f.mul(f.mul(x, x), x), f.add(f.mul(a, x), b))
    }

    fn rhs_in<F: Field>(
        &self,
        f: &F,
        base: &Fp,
        x: F::Elem,
        lift: impl Fn(u64) -> F::Elem,
    ) -> F::Elem {
        let a = lift(base.reduce(self.a));
        let b = lift(base.reduce(self.b));
        f.add(f.mul(f.mul(x, x), x), f.add(f.mul(a, x), b))
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Primes up to and including `n` (sieve of Eratosthenes).
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    out
}

fn check_prime(curve: &CurveQ, p: u64) -> Result<(), CurveError> {
    if p <= 3 {
        return Err(CurveError::Unsupported(p));
    }
    if p > MAX_PRIME {
        return Err(CurveError::TooLarge(p));
    }
    if !is_prime(p) {
        return Err(CurveError::NotPrime(p));
    }
    if !curve.has_good_reduction(p) {
        return Err(CurveError::BadReduction(p));
    }
    Ok(())
}

/// `a_p = p + 1 − #E(F_p) = −Σ_x (x³+Ax+B | p)`.
pub fn ap(curve: &CurveQ, p: u64) -> Result<i64, CurveError> {
    check_prime(curve, p)?;
    Ok(ap_unchecked(curve, p))
}

fn ap_unchecked(curve: &CurveQ, p: u64) -> i64 {
    let f = Fp::new(p);
    let mut is_square = vec![false; p as usize];
    for x in 1..p {
        is_square[(x * x % p) as usize] = true;
    }
    let mut sum: i64 = 0;
    for x in 0..p {
        let v = curve.rhs(&f, x);
        if v != 0 {
            sum += if is_square[v as usize] { 1 } else { -1 };
        }
    }
    -sum
}

/// Coefficients of ψ₃ = 3x⁴ + 6Ax² + 12Bx − A², from degree 0 upward.
pub fn division_poly_3(curve: &CurveQ) -> [i64; 5] {
    [-curve.a * curve.a, 12 * curve.b, 6 * curve.a, 0, 3]
}

fn psi3_mod(curve: &CurveQ, f: &Fp) -> Vec<u64> {
    division_poly_3(curve)
        .iter()
        .map(|&c| f.reduce(c))
        .collect()
}

/// Roots of ψ₃ in F_p.
pub fn psi3_roots_fp(curve: &CurveQ, p: u64) -> Result<Vec<u64>, CurveError> {
    let f = Fp::new(p);
    let psi = psi3_mod(curve, &f);
    if p <= DIRECT_ROOT_LIMIT {
        Ok((0..p).filter(|&x| ff::eval(&f, &psi, x) == 0).collect())
    } else {
        ff::roots(&f, &psi).map_err(|e| CurveError::consistency(p, e))
    }
}

/// Roots of ψ₃ in F_{p²}.
pub fn psi3_roots_fp2(curve: &CurveQ, p: u64) -> Result<Vec<(u64, u64)>, CurveError> {
    let f2 = Fp2::new(p).ok_or_else(|| CurveError::consistency(p, "no quadratic nonresidue"))?;
    let psi: Vec<(u64, u64)> = psi3_mod(curve, &f2.base())
        .into_iter()
        .map(|c| f2.embed(c))
        .collect();
    ff::roots(&f2, &psi).map_err(|e| CurveError::consistency(p, e))
}

fn torsion_dim(p: u64, points: usize) -> Result<u8, CurveError> {
    match points {
        0 => Ok(0),
        2 => Ok(1),
        8 => Ok(2),
        t => Err(CurveError::consistency(
            p,
            format!("{t} nonzero 3-torsion points"),
        )),
    }
}

fn dim3_fp_unchecked(curve: &CurveQ, p: u64) -> Result<u8, CurveError> {
    let f = Fp::new(p);
    let mut points = 0;
    for r in psi3_roots_fp(curve, p)? {
        match f.legendre(curve.rhs(&f, r)) {
            1 => points += 2,
            0 => return Err(CurveError::consistency(p, "ψ₃ root with y = 0")),
            _ => {}
        }
    }
    torsion_dim(p, points)
}

fn dim3_fp2_unchecked(curve: &CurveQ, p: u64) -> Result<u8, CurveError> {
    let f2 = Fp2::new(p).ok_or_else(|| CurveError::consistency(p, "no quadratic nonresidue"))?;
    let base = f2.base();
    let mut points = 0;
    for r in psi3_roots_fp2(curve, p)? {
        let y2 = curve.rhs_in(&f2, &base, r, |c| f2.embed(c));
        if y2 == f2.zero() {
            return Err(CurveError::consistency(p, "ψ₃ root with y = 0 over F_p²"));
        }
        if f2.is_nonzero_square(y2) {
            points += 2;
        }
    }
    torsion_dim(p, points)
}

/// `dim_{F₃} E[3](F_p)`, cross-checked against `3^dim | #E(F_p)`.
pub fn dim3_fp(curve: &CurveQ, p: u64) -> Result<u8, CurveError> {
    check_prime(curve, p)?;
    let dim = dim3_fp_unchecked(curve, p)?;
    let order = p as i64 + 1 - ap_unchecked(curve, p);
    if order % 3i64.pow(dim as u32) != 0 {
        return Err(CurveError::consistency(
            p,
            "3-torsion does not divide #E(F_p)",
        ));
    }
    Ok(dim)
}

/// `dim_{F₃} E[3](F_{p²})`.
pub fn dim3_fp2(curve: &CurveQ, p: u64) -> Result<u8, CurveError> {
    check_prime(curve, p)?;
    dim3_fp2_unchecked(curve, p)
}

/// Everything the rest of the crate needs to know about one prime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeClassRecord {
    pub p: u64,
    pub a_p: i64,
    pub dim_fp: u8,
    pub dim_fp2: u8,
    #[serde(rename = "split_in_F")]
    pub split_in_f: bool,
    pub class_k: u8,
    #[serde(rename = "class_F")]
    pub class_f: u8,
    #[serde(rename = "in_DB_support")]
    pub in_db_support: bool,
}

impl PrimeClassRecord {
    /// Checks the Hasse bound, `3^dim_fp | p+1−a_p`, `dim_fp ≤ dim_fp2`,
    /// and the derived fields.
    pub fn check_invariants(&self) -> Result<(), String> {
        let p = self.p as i64;
        if self.a_p * self.a_p > 4 * p {
            return Err(format!("Hasse bound fails: a_p={} p={}", self.a_p, p));
        }
        if (p + 1 - self.a_p) % 3i64.pow(self.dim_fp as u32) != 0 {
            return Err(format!("3^{} does not divide #E(F_{p})", self.dim_fp));
        }
        if self.dim_fp > self.dim_fp2 {
            return Err("dim over F_p exceeds dim over F_p²".into());
        }
        if self.dim_fp == 2 && p % 3 != 1 {
            return Err("full 3-torsion over F_p requires p ≡ 1 mod 3".into());
        }
        if self.split_in_f != (p % 3 == 1) {
            return Err("split flag disagrees with p mod 3".into());
        }
        if self.class_k != self.dim_fp {
            return Err("class_k differs from dim_fp".into());
        }
        let expect_f = if self.split_in_f {
            self.dim_fp
        } else {
            self.dim_fp2
        };
        if self.class_f != expect_f {
            return Err("class_F inconsistent with splitting".into());
        }
        if self.in_db_support != (self.dim_fp != 2) {
            return Err("D^B support flag inconsistent".into());
        }
        Ok(())
    }
}

pub fn classify_prime(curve: &CurveQ, p: u64) -> Result<PrimeClassRecord, CurveError> {
    check_prime(curve, p)?;
    if p % 3 == 0 {
        return Err(CurveError::Unsupported(p));
    }
    let a_p = ap_unchecked(curve, p);
    let dim_fp = dim3_fp_unchecked(curve, p)?;
    let dim_fp2 = dim3_fp2_unchecked(curve, p)?;
    let split_in_f = p % 3 == 1;
    let record = PrimeClassRecord {
        p,
        a_p,
        dim_fp,
        dim_fp2,
        split_in_f,
        class_k: dim_fp,
        class_f: if split_in_f { dim_fp } else { dim_fp2 },
        in_db_support: dim_fp != 2,
    };
    record
        .check_invariants()
        .map_err(|e| CurveError::consistency(p, e))?;
    Ok(record)
}

/// The unique conjugacy class matching a record's trace, determinant and
/// fixed-space dimensions over F_p and F_{p²}.
pub fn class_of_record(rec: &PrimeClassRecord) -> Result<&'static ConjClass, CurveError> {
    let trace = rec.a_p.rem_euclid(3) as u8;
    let det = (rec.p % 3) as u8;
    let matches: Vec<&ConjClass> = gl2f3::conjugacy_classes()
        .iter()
        .filter(|c| {
            c.trace == trace
                && c.det == det
                && c.fixed_dim == rec.dim_fp
                && c.square_fixed_dim == rec.dim_fp2
        })
        .collect();
    match matches.as_slice() {
        [one] => Ok(one),
        [] => Err(CurveError::consistency(rec.p, "no Frobenius class matches")),
        _ => Err(CurveError::consistency(rec.p, "ambiguous Frobenius class")),
    }
}

pub fn frobenius_class(curve: &CurveQ, p: u64) -> Result<&'static ConjClass, CurveError> {
    class_of_record(&classify_prime(curve, p)?)
}

/// Good primes `3 < p ≤ max_prime` not in `exclude`.
pub fn good_primes(curve: &CurveQ, max_prime: u64, exclude: &[u64]) -> Vec<u64> {
    primes_up_to(max_prime)
        .into_iter()
        .filter(|&p| p > 3 && curve.has_good_reduction(p) && !exclude.contains(&p))
        .collect()
}

/// Classifies the given primes in parallel on the current rayon pool,
/// returning records in input order.
pub fn classify_primes(
    curve: &CurveQ,
    primes: &[u64],
) -> Result<Vec<PrimeClassRecord>, CurveError> {
    primes
        .par_iter()
        .map(|&p| classify_prime(curve, p))
        .collect()
}

pub fn classify_range(
    curve: &CurveQ,
    max_prime: u64,
    exclude: &[u64],
) -> Result<Vec<PrimeClassRecord>, CurveError> {
    if max_prime > MAX_PRIME {
        return Err(CurveError::TooLarge(max_prime));
    }
    classify_primes(curve, &good_primes(curve, max_prime, exclude))
}

/// One line of a density comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub group: String,
    pub category: String,
    pub count: usize,
    pub total: usize,
    pub empirical: f64,
    pub predicted: f64,
    pub deviation: f64,
    /// Binomial standard error of the empirical fraction under the prediction.
    pub std_error: f64,
}

impl DensityRow {
    fn new(group: &str, category: String, count: usize, total: usize, predicted: f64) -> Self {
        let empirical = if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        };
        let std_error = if total == 0 {
            0.0
        } else {
            (predicted * (1.0 - predicted) / total as f64).sqrt()
        };
        DensityRow {
            group: group.to_string(),
            category,
            count,
            total,
            empirical,
            predicted,
            deviation: (empirical - predicted).abs(),
            std_error,
        }
    }
}

fn ratio_f64(r: num_rational::Ratio<u32>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Empirical class frequencies against the Chebotarev predictions from
/// GL₂(F₃), assuming the mod-3 image is all of GL₂(F₃).
pub fn density_report_from_records(
    records: &[PrimeClassRecord],
) -> Result<Vec<DensityRow>, CurveError> {
    let mut rows = Vec::new();
    for (group, det, split) in [("split", 1u8, true), ("inert", 2u8, false)] {
        let subset: Vec<&PrimeClassRecord> =
            records.iter().filter(|r| r.split_in_f == split).collect();
        let total = subset.len();
        for i in 0..=2u8 {
            let count = subset.iter().filter(|r| r.class_k == i).count();
            let predicted = ratio_f64(gl2f3::fixed_dim_density(det, i).expect("valid det"));
            rows.push(DensityRow::new(
                group,
                format!("P{i}"),
                count,
                total,
                predicted,
            ));
        }
        if !split {
            let order2 = subset
                .iter()
                .filter(|r| r.dim_fp == 1 && r.dim_fp2 == 2)
                .count();
            rows.push(DensityRow::new(
                group,
                "order2 (P1 and P2^F)".into(),
                order2,
                total,
                0.5,
            ));
            let order8 = subset
                .iter()
                .filter(|r| r.dim_fp == 0 && r.dim_fp2 == 0)
                .count();
            rows.push(DensityRow::new(
                group,
                "order8 (P0 and P0^F)".into(),
                order8,
                total,
                0.5,
            ));
        }
    }

    let classes = gl2f3::conjugacy_classes();
    let mut class_counts = vec![0usize; classes.len()];
    let mut det_totals = [0usize; 3];
    for r in records {
        let c = class_of_record(r)?;
        let idx = classes
            .iter()
            .position(|k| std::ptr::eq(k, c))
            .expect("class from table");
        class_counts[idx] += 1;
        det_totals[(r.p % 3) as usize] += 1;
    }
    for (c, &count) in classes.iter().zip(&class_counts) {
        let total = det_totals[c.det as usize];
        let predicted = c.size as f64 / 24.0;
        let category = format!("{} ord{} tr{}", c.representative, c.order, c.trace);
        rows.push(DensityRow::new("class", category, count, total, predicted));
    }
    Ok(rows)
}

pub fn density_report(curve: &CurveQ, max_prime: u64) -> Result<Vec<DensityRow>, CurveError> {
    if max_prime < 100 {
        return Err(CurveError::RangeTooSmall(max_prime));
    }
    let records = classify_range(curve, max_prime, &[])?;
    density_report_from_records(&records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(a: i64, b: i64) -> CurveQ {
        CurveQ::new(a, b, None).unwrap()
    }

    #[test]
    fn singular_curve_rejected() {
        assert_eq!(
            CurveQ::new(0, 0, None),
            Err(CurveError::Singular { a: 0, b: 0 })
        );
        assert!(CurveQ::new(-3, 2, None).is_err());
        assert!(CurveQ::new(1, 1, None).is_ok());
    }

    #[test]
    fn division_polynomial_substitution() {
        assert_eq!(division_poly_3(&curve(0, 1)), [0, 12, 0, 0, 3]);
        assert_eq!(division_poly_3(&curve(1, 0)), [-1, 0, 6, 0, 3]);
    }

    #[test]
    fn prime_preconditions() {
        let e = curve(1, 1);
        assert_eq!(ap(&e, 3), Err(CurveError::Unsupported(3)));
        assert_eq!(ap(&e, 9), Err(CurveError::NotPrime(9)));
        // disc(1,1) = −16·31
        assert_eq!(ap(&e, 31), Err(CurveError::BadReduction(31)));
        assert_eq!(ap(&e, 1_000_003), Err(CurveError::TooLarge(1_000_003)));
    }

    #[test]
    fn torsion_counts_map_to_dimensions() {
        assert_eq!(torsion_dim(7, 0), Ok(0));
        assert_eq!(torsion_dim(7, 2), Ok(1));
        assert_eq!(torsion_dim(7, 8), Ok(2));
        assert!(torsion_dim(7, 4).is_err());
    }

    #[test]
    fn identity_frobenius_forces_trace_two() {
        // y² = x³ − 16x + 16, conductor 37.
        let e = curve(-16, 16);
        let rec = good_primes(&e, 20_000, &[])
            .into_iter()
            .map(|p| classify_prime(&e, p).unwrap())
            .find(|r| r.dim_fp == 2)
            .expect("some prime with full rational 3-torsion");
        assert_eq!(rec.p % 3, 1);
        assert_eq!(rec.a_p.rem_euclid(3), 2);
        let c = class_of_record(&rec).unwrap();
        assert_eq!(c.order, 1);
    }

    #[test]
    fn split_flag_follows_p_mod_3() {
        let e = curve(1, 1);
        for p in good_primes(&e, 200, &[]) {
            let r = classify_prime(&e, p).unwrap();
            assert_eq!(r.split_in_f, p % 3 == 1);
            assert_eq!(r.in_db_support, r.dim_fp != 2);
        }
    }

    #[test]
    fn density_report_needs_range() {
        assert_eq!(
            density_report(&curve(1, 1), 50),
            Err(CurveError::RangeTooSmall(50))
        );
    }
}
