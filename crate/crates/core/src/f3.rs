//! Linear algebra and finite geometry over F₃.
//!
//! Everything here is exhaustive: subspaces are enumerated through their
//! reduced row-echelon forms, which are unique, so two equal subspaces always
//! compare equal as values. Enumeration is capped at ambient dimension
//! [`MAX_ENUM_DIM`].

use std::fmt;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

/// Largest ambient dimension accepted by the enumeration routines.
pub const MAX_ENUM_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum F3Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("entry {0} is not a residue mod 3")]
    BadResidue(u8),
    #[error("subspace dimension {d} out of range 0..={dim}")]
    DimensionOutOfRange { d: usize, dim: usize },
    #[error("gram matrix must be square with even positive dimension, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("gram matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("gram matrix is degenerate (rank {rank} < {dim})")]
    Degenerate { rank: usize, dim: usize },
    #[error("block {block} has a degenerate form")]
    DegenerateBlock { block: usize },
    #[error("cannot split dimension {dim} into {blocks} equal even blocks")]
    BadBlocks { dim: usize, blocks: usize },
    #[error("ambient dimension {0} exceeds the enumeration limit {MAX_ENUM_DIM}")]
    TooLarge(usize),
    #[error("expected one designated subspace per block ({expected}), got {got}")]
    DesignatedCount { expected: usize, got: usize },
}

#[inline]
fn add3(a: u8, b: u8) -> u8 {
    (a + b) % 3
}

#[inline]
fn mul3(a: u8, b: u8) -> u8 {
    (a * b) % 3
}

#[inline]
fn neg3(a: u8) -> u8 {
    (3 - a) % 3
}

/// A vector over F₃ with coordinates stored as residues `0..3`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct F3Vector(Vec<u8>);

impl F3Vector {
    pub fn new(coords: Vec<u8>) -> Result<Self, F3Error> {
        if let Some(&bad) = coords.iter().find(|&&c| c > 2) {
            return Err(F3Error::BadResidue(bad));
        }
        Ok(F3Vector(coords))
    }

    /// Reduces arbitrary integers mod 3.
    pub fn from_integers(coords: &[i64]) -> Self {
        F3Vector(coords.iter().map(|c| c.rem_euclid(3) as u8).collect())
    }

    pub fn zero(len: usize) -> Self {
        F3Vector(vec![0; len])
    }

    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = vec![0; len];
        v[i] = 1;
        F3Vector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coords(&self) -> &[u8] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &F3Vector, scale: u8) -> F3Vector {
        F3Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| add3(a, mul3(scale, b)))
                .collect(),
        )
    }

    pub fn scaled(&self, scale: u8) -> F3Vector {
        F3Vector(self.0.iter().map(|&a| mul3(a, scale)).collect())
    }

    /// The `i`-th of the `3^len` vectors, in base-3 order.
    pub fn from_index(len: usize, mut index: u64) -> F3Vector {
        let mut v = vec![0u8; len];
        for c in v.iter_mut().rev() {
            *c = (index % 3) as u8;
            index /= 3;
        }
        F3Vector(v)
    }
}

impl fmt::Display for F3Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Reduced row-echelon form of the row span, zero rows dropped.
fn rref(mut rows: Vec<F3Vector>, ncols: usize) -> Vec<F3Vector> {
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r].0[col] != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        // 1 and 2 are their own inverses mod 3.
        let inv = rows[rank].0[col];
        rows[rank] = rows[rank].scaled(inv);
        for r in 0..rows.len() {
            if r != rank && rows[r].0[col] != 0 {
                let factor = neg3(rows[r].0[col]);
                rows[r] = rows[r].add_scaled(&rows[rank], factor);
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rows.truncate(rank);
    rows
}

/// Rank of a matrix over F₃.
pub fn rank(rows: &[F3Vector], ncols: usize) -> usize {
    rref(rows.to_vec(), ncols).len()
}

/// A subspace of F₃ⁿ stored by its reduced row-echelon basis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Vec<F3Vector>,
}

impl Subspace {
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: Vec::new(),
        }
    }

    /// Span of arbitrary generators, canonicalized.
    pub fn span(ambient_dim: usize, gens: &[F3Vector]) -> Result<Self, F3Error> {
        for g in gens {
            if g.len() != ambient_dim {
                return Err(F3Error::LengthMismatch {
                    expected: ambient_dim,
                    got: g.len(),
                });
            }
        }
        Ok(Subspace {
            ambient_dim,
            basis: rref(gens.to_vec(), ambient_dim),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[F3Vector] {
        &self.basis
    }

    pub fn contains(&self, v: &F3Vector) -> bool {
        if v.len() != self.ambient_dim {
            return false;
        }
        let mut rows = self.basis.clone();
        rows.push(v.clone());
        rref(rows, self.ambient_dim).len() == self.dim()
    }

    /// All `3^dim` elements.
    pub fn elements(&self) -> Vec<F3Vector> {
        let count = 3u64.pow(self.dim() as u32);
        (0..count)
            .map(|idx| {
                let coeffs = F3Vector::from_index(self.dim(), idx);
                self.basis
                    .iter()
                    .zip(coeffs.coords())
                    .fold(F3Vector::zero(self.ambient_dim), |acc, (b, &c)| {
                        acc.add_scaled(b, c)
                    })
            })
            .collect()
    }

    /// Image under the coordinate projection onto `range`.
    pub fn project(&self, range: Range<usize>) -> Subspace {
        let width = range.len();
        let rows: Vec<F3Vector> = self
            .basis
            .iter()
            .map(|b| F3Vector(b.0[range.clone()].to_vec()))
            .collect();
        Subspace {
            ambient_dim: width,
            basis: rref(rows, width),
        }
    }

    /// Embeds `self` into a larger space at coordinate offset `offset`.
    pub fn embed(&self, ambient_dim: usize, offset: usize) -> Subspace {
        let rows: Vec<F3Vector> = self
            .basis
            .iter()
            .map(|b| {
                let mut v = vec![0u8; ambient_dim];
                v[offset..offset + b.len()].copy_from_slice(&b.0);
                F3Vector(v)
            })
            .collect();
        Subspace {
            ambient_dim,
            basis: rref(rows, ambient_dim),
        }
    }

    /// Internal direct sum of subspaces of a common ambient space.
    pub fn sum(parts: &[Subspace]) -> Result<Subspace, F3Error> {
        let ambient = parts.first().map_or(0, |p| p.ambient_dim);
        let gens: Vec<F3Vector> = parts.iter().flat_map(|p| p.basis.iter().cloned()).collect();
        Subspace::span(ambient, &gens)
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, b) in self.basis.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, ">")
    }
}

/// An F₃ space with a symmetric nondegenerate bilinear form and a partition
/// of its coordinates into equal contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuadSpace {
    dim: usize,
    gram: Vec<Vec<u8>>,
    block_dim: usize,
}

impl QuadSpace {
    pub fn new(gram: &[Vec<i64>], n_blocks: usize) -> Result<Self, F3Error> {
        let dim = gram.len();
        if dim == 0 || dim % 2 != 0 {
            return Err(F3Error::BadShape {
                rows: dim,
                cols: gram.first().map_or(0, Vec::len),
            });
        }
        if let Some(row) = gram.iter().find(|r| r.len() != dim) {
            return Err(F3Error::BadShape {
                rows: dim,
                cols: row.len(),
            });
        }
        if n_blocks == 0 || dim % n_blocks != 0 {
            return Err(F3Error::BadBlocks {
                dim,
                blocks: n_blocks,
            });
        }
        let gram: Vec<Vec<u8>> = gram
            .iter()
            .map(|row| row.iter().map(|x| x.rem_euclid(3) as u8).collect())
            .collect();
        for i in 0..dim {
            for j in i + 1..dim {
                if gram[i][j] != gram[j][i] {
                    return Err(F3Error::NotSymmetric(i, j));
                }
            }
        }
        let rows: Vec<F3Vector> = gram.iter().cloned().map(F3Vector).collect();
        let r = rank(&rows, dim);
        if r < dim {
            return Err(F3Error::Degenerate { rank: r, dim });
        }
        Ok(QuadSpace {
            dim,
            gram,
            block_dim: dim / n_blocks,
        })
    }

    /// Orthogonal sum of `planes` hyperbolic planes `[[0,1],[1,0]]`, one block each.
    pub fn hyperbolic(planes: usize) -> Result<Self, F3Error> {
        let dim = 2 * planes;
        let mut gram = vec![vec![0i64; dim]; dim];
        for k in 0..planes {
            gram[2 * k][2 * k + 1] = 1;
            gram[2 * k + 1][2 * k] = 1;
        }
        QuadSpace::new(&gram, planes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &[Vec<u8>] {
        &self.gram
    }

    pub fn n_blocks(&self) -> usize {
        self.dim / self.block_dim
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn block_range(&self, i: usize) -> Range<usize> {
        i * self.block_dim..(i + 1) * self.block_dim
    }

    /// The form restricted to block `i`, as a single-block space.
    pub fn block_space(&self, i: usize) -> Result<QuadSpace, F3Error> {
        let range = self.block_range(i);
        let sub: Vec<Vec<i64>> = self.gram[range.clone()]
            .iter()
            .map(|row| row[range.clone()].iter().map(|&x| x as i64).collect())
            .collect();
        QuadSpace::new(&sub, 1).map_err(|e| match e {
            F3Error::Degenerate { .. } | F3Error::BadShape { .. } => {
                F3Error::DegenerateBlock { block: i }
            }
            other => other,
        })
    }

    fn check_len(&self, v: &F3Vector) -> Result<(), F3Error> {
        if v.len() != self.dim {
            return Err(F3Error::LengthMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    fn pair(&self, u: &[u8], v: &[u8]) -> u8 {
        let mut acc = 0u32;
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0 {
                continue;
            }
            for (j, &vj) in v.iter().enumerate() {
                acc += (ui * self.gram[i][j] * vj) as u32;
            }
        }
        (acc % 3) as u8
    }

    pub fn bilinear(&self, u: &F3Vector, v: &F3Vector) -> Result<u8, F3Error> {
        self.check_len(u)?;
        self.check_len(v)?;
        Ok(self.pair(&u.0, &v.0))
    }

    /// `q(v) = vᵀ·G·v mod 3`.
    pub fn quad_value(&self, v: &F3Vector) -> Result<u8, F3Error> {
        self.bilinear(v, v)
    }

    /// Whether the form (and hence `q`, since 2 is invertible) vanishes on `w`.
    pub fn is_totally_isotropic(&self, w: &Subspace) -> bool {
        let b = w.basis();
        (0..b.len()).all(|i| (i..b.len()).all(|j| self.pair(&b[i].0, &b[j].0) == 0))
    }

    pub fn is_lagrangian(&self, w: &Subspace) -> bool {
        w.ambient_dim() == self.dim && 2 * w.dim() == self.dim && self.is_totally_isotropic(w)
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Enumerates every `d`-dimensional subspace of F₃ⁿ through its echelon
/// form, keeping only those whose rows pass `accept` incrementally: `accept`
/// sees the rows built so far and a candidate next row.
fn enumerate_echelon<F>(n: usize, d: usize, accept: &F) -> Vec<Subspace>
where
    F: Fn(&[F3Vector], &F3Vector) -> bool,
{
    fn fill<F>(
        n: usize,
        pivots: &[usize],
        rows: &mut Vec<F3Vector>,
        accept: &F,
        out: &mut Vec<Subspace>,
    ) where
        F: Fn(&[F3Vector], &F3Vector) -> bool,
    {
        let k = rows.len();
        if k == pivots.len() {
            out.push(Subspace {
                ambient_dim: n,
                basis: rows.clone(),
            });
            return;
        }
        let pivot = pivots[k];
        let free: Vec<usize> = (pivot + 1..n).filter(|c| !pivots.contains(c)).collect();
        for idx in 0..3u64.pow(free.len() as u32) {
            let entries = F3Vector::from_index(free.len(), idx);
            let mut row = vec![0u8; n];
            row[pivot] = 1;
            for (&c, &e) in free.iter().zip(entries.coords()) {
                row[c] = e;
            }
            let row = F3Vector(row);
            if accept(rows, &row) {
                rows.push(row);
                fill(n, pivots, rows, accept, out);
                rows.pop();
            }
        }
    }

    let mut out = Vec::new();
    for pivots in combinations(n, d) {
        fill(n, &pivots, &mut Vec::with_capacity(d), accept, &mut out);
    }
    out.sort();
    out
}

/// All `d`-dimensional subspaces of the space's underlying vector space,
/// canonically sorted.
pub fn enumerate_subspaces(space: &QuadSpace, d: usize) -> Result<Vec<Subspace>, F3Error> {
    subspaces_of(space.dim(), d)
}

/// All `d`-dimensional subspaces of F₃ⁿ.
pub fn subspaces_of(n: usize, d: usize) -> Result<Vec<Subspace>, F3Error> {
    if n > MAX_ENUM_DIM {
        return Err(F3Error::TooLarge(n));
    }
    if d > n {
        return Err(F3Error::DimensionOutOfRange { d, dim: n });
    }
    Ok(enumerate_echelon(n, d, &|_, _| true))
}

/// All Lagrangian (maximal totally isotropic) subspaces.
pub fn lagrangians(space: &QuadSpace) -> Result<Vec<Subspace>, F3Error> {
    if space.dim() > MAX_ENUM_DIM {
        return Err(F3Error::TooLarge(space.dim()));
    }
    let accept = |prev: &[F3Vector], row: &F3Vector| {
        space.pair(&row.0, &row.0) == 0 && prev.iter().all(|p| space.pair(&p.0, &row.0) == 0)
    };
    Ok(enumerate_echelon(space.dim(), space.dim() / 2, &accept))
}

/// Subspaces whose projection onto every block is Lagrangian for that
/// block's form.
///
/// A subspace of dimension `n·(block_dim/2)` whose projections all have
/// dimension `block_dim/2` is the direct sum of those projections, so the
/// result is exactly the set of products of per-block Lagrangians.
pub fn coordinatewise_lagrangians(space: &QuadSpace) -> Result<Vec<Subspace>, F3Error> {
    if space.dim() > MAX_ENUM_DIM {
        return Err(F3Error::TooLarge(space.dim()));
    }
    if space.block_dim() % 2 != 0 {
        return Err(F3Error::BadBlocks {
            dim: space.dim(),
            blocks: space.n_blocks(),
        });
    }
    let mut per_block = Vec::with_capacity(space.n_blocks());
    for i in 0..space.n_blocks() {
        let block = space.block_space(i)?;
        let offset = space.block_range(i).start;
        let lags: Vec<Subspace> = lagrangians(&block)?
            .iter()
            .map(|l| l.embed(space.dim(), offset))
            .collect();
        per_block.push(lags);
    }

    let mut out = vec![Subspace::zero(space.dim())];
    for lags in &per_block {
        let mut next = Vec::with_capacity(out.len() * lags.len());
        for acc in &out {
            for l in lags {
                next.push(Subspace::sum(&[acc.clone(), l.clone()])?);
            }
        }
        out = next;
    }
    out.sort();
    Ok(out)
}

/// Coordinate-wise Lagrangians none of whose block projections equals the
/// designated unramified subspace of that block.
///
/// `unramified[i]` lives in the block's own coordinates (dimension
/// `block_dim`).
pub fn ramified_coordinatewise(
    space: &QuadSpace,
    unramified: &[Subspace],
) -> Result<Vec<Subspace>, F3Error> {
    if unramified.len() != space.n_blocks() {
        return Err(F3Error::DesignatedCount {
            expected: space.n_blocks(),
            got: unramified.len(),
        });
    }
    Ok(coordinatewise_lagrangians(space)?
        .into_iter()
        .filter(|w| (0..space.n_blocks()).all(|i| w.project(space.block_range(i)) != unramified[i]))
        .collect())
}

/// Gaussian binomial `[n choose k]₃`.
pub fn gaussian_binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..k {
        num *= 3u128.pow(n - i) - 1;
        den *= 3u128.pow(i + 1) - 1;
    }
    num / den
}

/// Number of Lagrangians in an orthogonal sum of `planes` hyperbolic planes
/// over F₃: `∏_{i<planes} (3^i + 1)`.
pub fn hyperbolic_lagrangian_count(planes: u32) -> u128 {
    (0..planes).map(|i| 3u128.pow(i) + 1).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[u8]) -> F3Vector {
        F3Vector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn quad_values() {
        let h = QuadSpace::hyperbolic(1).unwrap();
        assert_eq!(h.quad_value(&v(&[1, 0])).unwrap(), 0);
        assert_eq!(h.quad_value(&v(&[1, 1])).unwrap(), 2);
        let diag = QuadSpace::new(&[vec![1, 0], vec![0, 1]], 1).unwrap();
        assert_eq!(diag.quad_value(&v(&[1, 1])).unwrap(), 2);
        assert!(matches!(
            h.quad_value(&v(&[1])),
            Err(F3Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_forms() {
        assert!(matches!(
            QuadSpace::new(&[vec![0, 1], vec![2, 0]], 1),
            Err(F3Error::NotSymmetric(0, 1))
        ));
        assert!(matches!(
            QuadSpace::new(&[vec![1, 1], vec![1, 1]], 1),
            Err(F3Error::Degenerate { rank: 1, dim: 2 })
        ));
        assert!(matches!(
            QuadSpace::new(&[vec![1]], 1),
            Err(F3Error::BadShape { .. })
        ));
        assert!(matches!(
            QuadSpace::hyperbolic(2).unwrap().block_space(0),
            Ok(_)
        ));
        assert!(F3Vector::new(vec![0, 3]).is_err());
    }

    #[test]
    fn small_subspace_counts() {
        assert_eq!(subspaces_of(2, 1).unwrap().len(), 4);
        assert_eq!(subspaces_of(4, 2).unwrap().len(), 130);
        let zero = subspaces_of(2, 0).unwrap();
        assert_eq!(zero, vec![Subspace::zero(2)]);
        assert!(matches!(
            subspaces_of(2, 3),
            Err(F3Error::DimensionOutOfRange { .. })
        ));
        assert!(matches!(subspaces_of(9, 1), Err(F3Error::TooLarge(9))));
    }

    #[test]
    fn hyperbolic_plane_has_two_axes() {
        let h = QuadSpace::hyperbolic(1).unwrap();
        let lags = lagrangians(&h).unwrap();
        let axes = vec![
            Subspace::span(2, &[v(&[0, 1])]).unwrap(),
            Subspace::span(2, &[v(&[1, 0])]).unwrap(),
        ];
        assert_eq!(lags, axes);
    }

    #[test]
    fn anisotropic_plane_has_no_lagrangian() {
        // x² + y² = 0 has no nonzero solution mod 3.
        let diag = QuadSpace::new(&[vec![1, 0], vec![0, 1]], 1).unwrap();
        assert!(lagrangians(&diag).unwrap().is_empty());
        // x² − y² splits, so it has two isotropic lines.
        let split = QuadSpace::new(&[vec![1, 0], vec![0, 2]], 1).unwrap();
        assert_eq!(lagrangians(&split).unwrap().len(), 2);
    }

    #[test]
    fn degenerate_block_is_rejected() {
        // Nondegenerate overall, degenerate on each 2x2 diagonal block.
        let gram = vec![
            vec![0, 0, 1, 0],
            vec![0, 0, 0, 1],
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
        ];
        let space = QuadSpace::new(&gram, 2).unwrap();
        assert!(matches!(
            coordinatewise_lagrangians(&space),
            Err(F3Error::DegenerateBlock { block: 0 })
        ));
    }

    #[test]
    fn closed_forms() {
        assert_eq!(gaussian_binomial(4, 2), 130);
        assert_eq!(gaussian_binomial(3, 0), 1);
        assert_eq!(gaussian_binomial(2, 3), 0);
        assert_eq!(hyperbolic_lagrangian_count(2), 8);
        assert_eq!(hyperbolic_lagrangian_count(4), 2 * 4 * 10 * 28);
    }

    #[test]
    fn projection_and_membership() {
        let w = Subspace::span(4, &[v(&[1, 0, 1, 0]), v(&[0, 1, 0, 2])]).unwrap();
        assert_eq!(w.project(0..2).dim(), 2);
        assert!(w.contains(&v(&[1, 1, 1, 2])));
        assert!(!w.contains(&v(&[1, 1, 1, 1])));
        assert_eq!(w.elements().len(), 9);
    }
}
