//! Prime fields F_p, their quadratic extensions F_p[u]/(u² − n), and the
//! small amount of polynomial arithmetic needed to find roots of a quartic.

/// Arithmetic in a finite field, elements passed by value.
pub trait Field {
    type Elem: Copy + Eq + std::fmt::Debug;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn inv(&self, a: Self::Elem) -> Self::Elem;
    /// Field size.
    fn size(&self) -> u128;
    /// The `k`-th element of a fixed enumeration of the field, used to pick
    /// shifts when splitting polynomials.
    fn nth(&self, k: u128) -> Self::Elem;

    fn neg(&self, a: Self::Elem) -> Self::Elem {
        self.sub(self.zero(), a)
    }

    fn pow(&self, mut base: Self::Elem, mut exp: u128) -> Self::Elem {
        let mut acc = self.one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }
}

/// The prime field F_p for `p < 2³²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fp {
    p: u64,
}

impl Fp {
    pub fn new(p: u64) -> Self {
        debug_assert!(p < 1 << 32);
        Fp { p }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn reduce(&self, x: i64) -> u64 {
        x.rem_euclid(self.p as i64) as u64
    }

    /// Legendre symbol as −1, 0 or 1, by Euler's criterion.
    pub fn legendre(&self, a: u64) -> i8 {
        let a = a % self.p;
        if a == 0 {
            return 0;
        }
        if self.pow(a, ((self.p - 1) / 2) as u128) == 1 {
            1
        } else {
            -1
        }
    }

    /// Least quadratic nonresidue.
    pub fn least_nonresidue(&self) -> Option<u64> {
        (2..self.p).find(|&n| self.legendre(n) == -1)
    }
}

impl Field for Fp {
    type Elem = u64;

    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.p
    }
    fn sub(&self, a: u64, b: u64) -> u64 {
        (a + self.p - b) % self.p
    }
    fn mul(&self, a: u64, b: u64) -> u64 {
        a * b % self.p
    }
    fn inv(&self, a: u64) -> u64 {
        self.pow(a, (self.p - 2) as u128)
    }
    fn size(&self) -> u128 {
        self.p as u128
    }
    fn nth(&self, k: u128) -> u64 {
        (k % self.p as u128) as u64
    }
}

/// F_{p²} = F_p[u]/(u² − n) with `n` a nonresidue. Elements are `(a, b)`
/// meaning `a + b·u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fp2 {
    base: Fp,
    n: u64,
}

impl Fp2 {
    /// Builds the extension with the least nonresidue; `None` only when
    /// `p = 2`.
    pub fn new(p: u64) -> Option<Self> {
        let base = Fp::new(p);
        base.least_nonresidue().map(|n| Fp2 { base, n })
    }

    pub fn base(&self) -> Fp {
        self.base
    }

    pub fn nonresidue(&self) -> u64 {
        self.n
    }

    pub fn embed(&self, a: u64) -> (u64, u64) {
        (a % self.base.p, 0)
    }

    /// Norm to F_p: `a² − n·b²`.
    pub fn norm(&self, (a, b): (u64, u64)) -> u64 {
        let f = self.base;
        f.sub(f.mul(a, a), f.mul(self.n, f.mul(b, b)))
    }

    /// A nonzero element is a square in F_{p²} exactly when its norm is a
    /// square in F_p.
    pub fn is_nonzero_square(&self, z: (u64, u64)) -> bool {
        z != (0, 0) && self.base.legendre(self.norm(z)) == 1
    }
}

impl Field for Fp2 {
    type Elem = (u64, u64);

    fn zero(&self) -> (u64, u64) {
        (0, 0)
    }
    fn one(&self) -> (u64, u64) {
        (1, 0)
    }
    fn add(&self, x: (u64, u64), y: (u64, u64)) -> (u64, u64) {
        (self.base.add(x.0, y.0), self.base.add(x.1, y.1))
    }
    fn sub(&self, x: (u64, u64), y: (u64, u64)) -> (u64, u64) {
        (self.base.sub(x.0, y.0), self.base.sub(x.1, y.1))
    }
    fn mul(&self, x: (u64, u64), y: (u64, u64)) -> (u64, u64) {
        let f = self.base;
        let re = f.add(f.mul(x.0, y.0), f.mul(self.n, f.mul(x.1, y.1)));
        let im = f.add(f.mul(x.0, y.1), f.mul(x.1, y.0));
        (re, im)
    }
    fn inv(&self, x: (u64, u64)) -> (u64, u64) {
        // (a + bu)⁻¹ = (a − bu) / N(a + bu)
        let f = self.base;
        let ninv = f.inv(self.norm(x));
        (f.mul(x.0, ninv), f.mul(f.neg(x.1), ninv))
    }
    fn size(&self) -> u128 {
        let p = self.base.p as u128;
        p * p
    }
    fn nth(&self, k: u128) -> (u64, u64) {
        // Elements off the base field first: conjugate roots share their
        // quadratic character under any shift by an element of F_p.
        let p = self.base.p as u128;
        let off = p * (p - 1);
        if k < off {
            ((k % p) as u64, (1 + k / p) as u64)
        } else {
            (((k - off) % p) as u64, 0)
        }
    }
}

/// Dense polynomial, coefficients from low to high degree, no trailing zeros.
pub type Poly<E> = Vec<E>;

fn trim<F: Field>(f: &F, mut a: Poly<F::Elem>) -> Poly<F::Elem> {
    while a.last() == Some(&f.zero()) {
        a.pop();
    }
    a
}

pub fn degree<E>(a: &Poly<E>) -> Option<usize> {
    a.len().checked_sub(1)
}

/// Quotient and remainder of `a` by a nonzero `m`.
pub fn div_rem<F: Field>(
    f: &F,
    a: &Poly<F::Elem>,
    m: &Poly<F::Elem>,
) -> (Poly<F::Elem>, Poly<F::Elem>) {
    let m = trim(f, m.clone());
    let dm = degree(&m).expect("division by zero polynomial");
    let mut r = trim(f, a.clone());
    if r.len() < m.len() {
        return (Vec::new(), r);
    }
    let lead_inv = f.inv(m[dm]);
    let mut q = vec![f.zero(); r.len() - dm];
    while r.len() > dm && !r.is_empty() {
        let shift = r.len() - 1 - dm;
        let c = f.mul(*r.last().expect("nonempty"), lead_inv);
        q[shift] = c;
        for (i, &mi) in m.iter().enumerate() {
            r[shift + i] = f.sub(r[shift + i], f.mul(c, mi));
        }
        r = trim(f, r);
    }
    (trim(f, q), r)
}

fn mul_mod<F: Field>(
    f: &F,
    a: &Poly<F::Elem>,
    b: &Poly<F::Elem>,
    m: &Poly<F::Elem>,
) -> Poly<F::Elem> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut prod = vec![f.zero(); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            prod[i + j] = f.add(prod[i + j], f.mul(ai, bj));
        }
    }
    div_rem(f, &prod, m).1
}

/// `base^exp mod m` by square-and-multiply.
pub fn pow_mod<F: Field>(
    f: &F,
    base: &Poly<F::Elem>,
    mut exp: u128,
    m: &Poly<F::Elem>,
) -> Poly<F::Elem> {
    let mut acc = div_rem(f, &vec![f.one()], m).1;
    let mut b = div_rem(f, base, m).1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(f, &acc, &b, m);
        }
        b = mul_mod(f, &b, &b, m);
        exp >>= 1;
    }
    acc
}

pub fn gcd<F: Field>(f: &F, a: &Poly<F::Elem>, b: &Poly<F::Elem>) -> Poly<F::Elem> {
    let mut a = trim(f, a.clone());
    let mut b = trim(f, b.clone());
    while !b.is_empty() {
        let r = div_rem(f, &a, &b).1;
        a = b;
        b = r;
    }
    monic(f, a)
}

fn monic<F: Field>(f: &F, a: Poly<F::Elem>) -> Poly<F::Elem> {
    match a.last() {
        None => a,
        Some(&lead) => {
            let inv = f.inv(lead);
            a.into_iter().map(|c| f.mul(c, inv)).collect()
        }
    }
}

pub fn eval<F: Field>(f: &F, a: &Poly<F::Elem>, x: F::Elem) -> F::Elem {
    a.iter()
        .rev()
        .fold(f.zero(), |acc, &c| f.add(f.mul(acc, x), c))
}

/// Product of the distinct linear factors of `a`: `gcd(a, x^q − x)`.
pub fn linear_part<F: Field>(f: &F, a: &Poly<F::Elem>) -> Poly<F::Elem> {
    let a = monic(f, trim(f, a.clone()));
    if degree(&a).unwrap_or(0) == 0 {
        return vec![f.one()];
    }
    let x = vec![f.zero(), f.one()];
    let xq = pow_mod(f, &x, f.size(), &a);
    let mut diff = xq;
    diff.resize(diff.len().max(2), f.zero());
    diff[1] = f.sub(diff[1], f.one());
    let diff = trim(f, diff);
    if diff.is_empty() {
        return a;
    }
    gcd(f, &a, &diff)
}

/// Splits a squarefree product of linear factors into its roots
/// (equal-degree splitting with deterministic shifts).
fn split_linear<F: Field>(f: &F, g: &Poly<F::Elem>, out: &mut Vec<F::Elem>) -> Result<(), String> {
    match degree(g) {
        None | Some(0) => return Ok(()),
        Some(1) => {
            out.push(f.neg(f.mul(g[0], f.inv(g[1]))));
            return Ok(());
        }
        Some(_) => {}
    }
    let half = (f.size() - 1) / 2;
    for k in 0..f.size() {
        let shifted = vec![f.nth(k), f.one()];
        let mut t = pow_mod(f, &shifted, half, g);
        if t.is_empty() {
            continue;
        }
        t[0] = f.sub(t[0], f.one());
        let h = gcd(f, g, &trim(f, t));
        let dh = degree(&h).unwrap_or(0);
        if dh > 0 && dh < degree(g).unwrap_or(0) {
            let (q, _) = div_rem(f, g, &h);
            split_linear(f, &h, out)?;
            split_linear(f, &monic(f, q), out)?;
            return Ok(());
        }
    }
    Err(format!(
        "failed to split polynomial of degree {:?}",
        degree(g)
    ))
}

/// Distinct roots of `a` in the field, sorted.
pub fn roots<F: Field>(f: &F, a: &Poly<F::Elem>) -> Result<Vec<F::Elem>, String>
where
    F::Elem: Ord,
{
    let g = linear_part(f, a);
    let mut out = Vec::new();
    split_linear(f, &g, &mut out)?;
    out.sort();
    out.dedup();
    Ok(out)
}
