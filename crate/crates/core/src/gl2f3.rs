//! Exhaustive group theory of GL₂(F₃).
//!
//! The group has 48 elements, so every statement here is checked by brute
//! force: orders by repeated multiplication, conjugacy classes by orbits under
//! all 48 conjugators, subgroups by closure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("matrix {0:?} is singular mod 3")]
    Singular([[u8; 2]; 2]),
    #[error("determinant must be 1 or 2 mod 3, got {0}")]
    BadDeterminant(u8),
    #[error("fixed-space dimension must be 0, 1 or 2, got {0}")]
    BadFixedDim(u8),
}

/// An invertible 2×2 matrix over F₃, entries stored as residues `0..3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Gl2F3Element {
    entries: [[u8; 2]; 2],
}

impl Gl2F3Element {
    pub const IDENTITY: Gl2F3Element = Gl2F3Element {
        entries: [[1, 0], [0, 1]],
    };

    pub fn new(entries: [[i64; 2]; 2]) -> Result<Self, GroupError> {
        let r = |x: i64| x.rem_euclid(3) as u8;
        let entries = [
            [r(entries[0][0]), r(entries[0][1])],
            [r(entries[1][0]), r(entries[1][1])],
        ];
        let g = Gl2F3Element { entries };
        if g.det() == 0 {
            return Err(GroupError::Singular(entries));
        }
        Ok(g)
    }

    pub fn entries(&self) -> [[u8; 2]; 2] {
        self.entries
    }

    pub fn det(&self) -> u8 {
        let [[a, b], [c, d]] = self.entries;
        ((a * d + 2 * b * c) % 3) as u8
    }

    pub fn trace(&self) -> u8 {
        (self.entries[0][0] + self.entries[1][1]) % 3
    }

    pub fn mul(&self, other: &Self) -> Self {
        let a = self.entries;
        let b = other.entries;
        let mut out = [[0u8; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (a[i][0] * b[0][j] + a[i][1] * b[1][j]) % 3;
            }
        }
        Gl2F3Element { entries: out }
    }

    pub fn inverse(&self) -> Self {
        let [[a, b], [c, d]] = self.entries;
        // det⁻¹ = det in F₃.
        let s = self.det();
        let f = |x: u8| (x * s) % 3;
        Gl2F3Element {
            entries: [[f(d), f((3 - b) % 3)], [f((3 - c) % 3), f(a)]],
        }
    }

    pub fn pow(&self, mut n: u32) -> Self {
        let mut base = *self;
        let mut acc = Self::IDENTITY;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        acc
    }

    pub fn order(&self) -> u32 {
        let mut g = *self;
        let mut n = 1;
        while g != Self::IDENTITY {
            g = g.mul(self);
            n += 1;
        }
        n
    }

    pub fn conjugate_by(&self, h: &Self) -> Self {
        h.mul(self).mul(&h.inverse())
    }

    /// `dim ker(g − I)`.
    pub fn fixed_dim(&self) -> u8 {
        let [[a, b], [c, d]] = self.entries;
        let m = [[(a + 2) % 3, b], [c, (d + 2) % 3]];
        let rank = if m == [[0, 0], [0, 0]] {
            0
        } else if (m[0][0] * m[1][1] + 2 * m[0][1] * m[1][0]) % 3 == 0 {
            1
        } else {
            2
        };
        2 - rank
    }
}

impl fmt::Display for Gl2F3Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [[a, b], [c, d]] = self.entries;
        write!(f, "[[{a},{b}],[{c},{d}]]")
    }
}

/// All 48 elements of GL₂(F₃), sorted.
pub fn enumerate_group() -> Vec<Gl2F3Element> {
    (0..81u32)
        .filter_map(|idx| {
            let e = |k: u32| ((idx / 3u32.pow(k)) % 3) as i64;
            Gl2F3Element::new([[e(3), e(2)], [e(1), e(0)]]).ok()
        })
        .collect()
}

/// The elements of determinant 1.
pub fn sl2() -> Vec<Gl2F3Element> {
    enumerate_group()
        .into_iter()
        .filter(|g| g.det() == 1)
        .collect()
}

pub fn element_order(g: &Gl2F3Element) -> u32 {
    g.order()
}

/// A conjugacy class with the data of a Frobenius element acting on `E[3]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConjClass {
    pub representative: Gl2F3Element,
    pub size: usize,
    pub order: u32,
    pub det: u8,
    pub trace: u8,
    pub fixed_dim: u8,
    /// Fixed-space dimension of the square, i.e. of Frobenius over F_{p²}.
    pub square_fixed_dim: u8,
}

impl ConjClass {
    pub fn contains(&self, g: &Gl2F3Element) -> bool {
        enumerate_group()
            .iter()
            .any(|h| self.representative.conjugate_by(h) == *g)
    }
}

fn compute_classes() -> Vec<ConjClass> {
    let group = enumerate_group();
    let mut seen = BTreeSet::new();
    let mut classes = Vec::new();
    for g in &group {
        if seen.contains(g) {
            continue;
        }
        let orbit: BTreeSet<Gl2F3Element> = group.iter().map(|h| g.conjugate_by(h)).collect();
        seen.extend(orbit.iter().copied());
        let rep = *orbit.iter().next().expect("orbit contains g");
        classes.push(ConjClass {
            representative: rep,
            size: orbit.len(),
            order: rep.order(),
            det: rep.det(),
            trace: rep.trace(),
            fixed_dim: rep.fixed_dim(),
            square_fixed_dim: rep.mul(&rep).fixed_dim(),
        });
    }
    classes
}

/// Conjugacy classes, ordered by their smallest element. Computed once.
pub fn conjugacy_classes() -> &'static [ConjClass] {
    static CLASSES: OnceLock<Vec<ConjClass>> = OnceLock::new();
    CLASSES.get_or_init(compute_classes)
}

/// Index into [`conjugacy_classes`] of the class containing `g`.
pub fn class_index(g: &Gl2F3Element) -> usize {
    conjugacy_classes()
        .iter()
        .position(|c| c.contains(g))
        .expect("classes partition the group")
}

fn check_det(d: u8) -> Result<(), GroupError> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(GroupError::BadDeterminant(d))
    }
}

/// Histogram of `(order, fixed_dim)` over the coset `det = d`.
pub fn det_coset_stats(d: u8) -> Result<BTreeMap<(u32, u8), usize>, GroupError> {
    check_det(d)?;
    let mut hist = BTreeMap::new();
    for g in enumerate_group().iter().filter(|g| g.det() == d) {
        *hist.entry((g.order(), g.fixed_dim())).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Proportion of the coset `det = d` whose fixed space has dimension `i`.
pub fn fixed_dim_density(d: u8, i: u8) -> Result<Ratio<u32>, GroupError> {
    check_det(d)?;
    if i > 2 {
        return Err(GroupError::BadFixedDim(i));
    }
    let coset: Vec<_> = enumerate_group()
        .into_iter()
        .filter(|g| g.det() == d)
        .collect();
    let hits = coset.iter().filter(|g| g.fixed_dim() == i).count();
    Ok(Ratio::new(hits as u32, coset.len() as u32))
}

fn closure(gens: &BTreeSet<Gl2F3Element>) -> BTreeSet<Gl2F3Element> {
    let mut set = gens.clone();
    set.insert(Gl2F3Element::IDENTITY);
    loop {
        let products: Vec<_> = set
            .iter()
            .flat_map(|a| set.iter().map(move |b| a.mul(b)))
            .collect();
        let before = set.len();
        set.extend(products);
        if set.len() == before {
            return set;
        }
    }
}

/// Every subgroup of `group` (given as a list closed under multiplication),
/// found by repeatedly adjoining elements to already-known subgroups.
pub fn all_subgroups(group: &[Gl2F3Element]) -> Vec<BTreeSet<Gl2F3Element>> {
    let trivial: BTreeSet<_> = [Gl2F3Element::IDENTITY].into_iter().collect();
    let mut known: BTreeSet<BTreeSet<Gl2F3Element>> = [trivial.clone()].into_iter().collect();
    let mut frontier = vec![trivial];
    while let Some(h) = frontier.pop() {
        for g in group {
            if h.contains(g) {
                continue;
            }
            let mut gens = h.clone();
            gens.insert(*g);
            let joined = closure(&gens);
            if known.insert(joined.clone()) {
                frontier.push(joined);
            }
        }
    }
    known.into_iter().collect()
}

pub fn is_normal(sub: &BTreeSet<Gl2F3Element>, group: &[Gl2F3Element]) -> bool {
    sub.iter()
        .all(|x| group.iter().all(|h| sub.contains(&x.conjugate_by(h))))
}

/// Index-2 normal subgroups of SL₂(F₃), found exhaustively.
pub fn sl2_index2_normal_subgroups() -> Vec<BTreeSet<Gl2F3Element>> {
    let sl = sl2();
    all_subgroups(&sl)
        .into_iter()
        .filter(|h| 2 * h.len() == sl.len() && is_normal(h, &sl))
        .collect()
}

/// `true` when SL₂(F₃) has no normal subgroup of index 2.
pub fn sl2_no_index2_normal() -> bool {
    sl2_index2_normal_subgroups().is_empty()
}

/// Order of SL₂(F₃)/{±I}, counted as the number of cosets `{g, −g}`.
pub fn psl2_order() -> usize {
    let minus = Gl2F3Element::new([[2, 0], [0, 2]]).expect("−I is invertible");
    let cosets: BTreeSet<BTreeSet<Gl2F3Element>> = sl2()
        .into_iter()
        .map(|g| [g, g.mul(&minus)].into_iter().collect())
        .collect();
    cosets.len()
}
