use proptest::prelude::*;
use s3selmer::f3::{
    self, coordinatewise_lagrangians, gaussian_binomial, lagrangians, ramified_coordinatewise,
    subspaces_of, F3Vector, QuadSpace, Subspace,
};

/// Counts `k`-dim subspaces of F₃ⁿ as ordered bases over |GL_k(F₃)|.
fn ordered_basis_count(n: u32, k: u32) -> u128 {
    let ordered: u128 = (0..k).map(|i| 3u128.pow(n) - 3u128.pow(i)).product();
    let gl: u128 = (0..k).map(|i| 3u128.pow(k) - 3u128.pow(i)).product();
    ordered / gl
}

fn all_vectors(n: usize) -> Vec<Vec<u8>> {
    (0..3usize.pow(n as u32))
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let d = (idx % 3) as u8;
                    idx /= 3;
                    d
                })
                .collect()
        })
        .collect()
}

fn pair(g: &[Vec<i64>], u: &[u8], v: &[u8]) -> i64 {
    let mut acc = 0;
    for i in 0..u.len() {
        for j in 0..v.len() {
            acc += u[i] as i64 * g[i][j] * v[j] as i64;
        }
    }
    acc.rem_euclid(3)
}

/// Lagrangians of a dim-2 or dim-4 form counted through ordered bases of
/// mutually orthogonal isotropic vectors, independent of the library.
fn brute_lagrangian_count(g: &[Vec<i64>]) -> u128 {
    let n = g.len();
    let vs = all_vectors(n);
    let iso: Vec<&Vec<u8>> = vs
        .iter()
        .filter(|v| v.iter().any(|&x| x != 0) && pair(g, v, v) == 0)
        .collect();
    match n {
        2 => iso.len() as u128 / 2,
        4 => {
            let mut ordered = 0u128;
            for a in &iso {
                for b in &iso {
                    let dependent = (0..3u8).any(|c| (0..n).all(|i| b[i] == (c * a[i]) % 3));
                    if !dependent && pair(g, a, b) == 0 {
                        ordered += 1;
                    }
                }
            }
            ordered / 48
        }
        _ => unreachable!(),
    }
}

#[test]
fn subspace_counts_match_gaussian_binomials() {
    for n in 0..=6u32 {
        for k in 0..=n {
            let closed = gaussian_binomial(n, k);
            assert_eq!(closed, ordered_basis_count(n, k), "n={n} k={k}");
            if n >= 1 {
                let listed = subspaces_of(n as usize, k as usize).unwrap();
                assert_eq!(listed.len() as u128, closed, "n={n} k={k}");
                assert!(
                    listed.windows(2).all(|w| w[0] < w[1]),
                    "sorted and distinct"
                );
            }
        }
    }
}

#[test]
fn small_counts() {
    assert_eq!(subspaces_of(2, 1).unwrap().len(), 4);
    assert_eq!(subspaces_of(4, 2).unwrap().len(), 130);
    let zero = subspaces_of(2, 0).unwrap();
    assert_eq!(zero, vec![Subspace::zero(2)]);
}

#[test]
fn hyperbolic_lagrangians_match_product_formula() {
    for planes in 1..=4usize {
        let space = QuadSpace::hyperbolic(planes).unwrap();
        let lags = lagrangians(&space).unwrap();
        let expected: u128 = (0..planes as u32).map(|i| 3u128.pow(i) + 1).product();
        assert_eq!(lags.len() as u128, expected, "planes={planes}");
        assert_eq!(f3::hyperbolic_lagrangian_count(planes as u32), expected);
        for w in &lags {
            assert_eq!(w.dim(), planes);
            assert!(space.is_totally_isotropic(w));
        }
    }
}

#[test]
fn no_isotropic_half_space_is_missed() {
    let space = QuadSpace::hyperbolic(2).unwrap();
    let lags = lagrangians(&space).unwrap();
    for w in subspaces_of(4, 2).unwrap() {
        assert_eq!(space.is_totally_isotropic(&w), lags.contains(&w));
    }
}

#[test]
fn coordinatewise_matches_brute_force_over_planes() {
    let space = QuadSpace::hyperbolic(2).unwrap();
    let blocks = [
        QuadSpace::hyperbolic(1).unwrap(),
        QuadSpace::hyperbolic(1).unwrap(),
    ];
    let brute: Vec<Subspace> = subspaces_of(4, 2)
        .unwrap()
        .into_iter()
        .filter(|w| {
            (0..2).all(|i| {
                let proj = w.project(space.block_range(i));
                proj.dim() == 1 && blocks[i].is_lagrangian(&proj)
            })
        })
        .collect();
    let listed = coordinatewise_lagrangians(&space).unwrap();
    assert_eq!(listed.len(), 4);
    assert_eq!(listed, brute);
}

#[test]
fn split_model_has_one_fully_ramified_product() {
    let space = QuadSpace::hyperbolic(2).unwrap();
    let line = lagrangians(&QuadSpace::hyperbolic(1).unwrap()).unwrap()[0].clone();
    let ramified = ramified_coordinatewise(&space, &[line.clone(), line]).unwrap();
    assert_eq!(ramified.len(), 1);
}

#[test]
fn anisotropic_and_diagonal_planes() {
    let sum_of_squares = QuadSpace::new(&[vec![1, 0], vec![0, 1]], 1).unwrap();
    assert_eq!(lagrangians(&sum_of_squares).unwrap().len(), 0);
    assert_eq!(brute_lagrangian_count(&[vec![1, 0], vec![0, 1]]), 0);
    let split = QuadSpace::new(&[vec![1, 0], vec![0, 2]], 1).unwrap();
    assert_eq!(lagrangians(&split).unwrap().len(), 2);
}

fn symmetric_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    proptest::collection::vec(0i64..3, n * (n + 1) / 2).prop_map(move |upper| {
        let mut g = vec![vec![0i64; n]; n];
        let mut it = upper.into_iter();
        for i in 0..n {
            for j in i..n {
                let x = it.next().unwrap();
                g[i][j] = x;
                g[j][i] = x;
            }
        }
        g
    })
}

fn vector(n: usize) -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..3, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn echelon_form_is_canonical(
        gens in proptest::collection::vec(vector(5), 0..5),
        seed in any::<u64>(),
    ) {
        let vs: Vec<F3Vector> = gens.iter().map(|g| F3Vector::new(g.clone()).unwrap()).collect();
        let w = Subspace::span(5, &vs).unwrap();
        // Idempotent.
        prop_assert_eq!(&Subspace::span(5, w.basis()).unwrap(), &w);
        // Independent of generator order and of redundant combinations.
        let mut shuffled = vs.clone();
        let len = shuffled.len();
        if len > 1 {
            shuffled.rotate_left((seed as usize) % len);
            let extra = shuffled[0].add_scaled(&shuffled[1], 2);
            shuffled.push(extra);
        }
        prop_assert_eq!(&Subspace::span(5, &shuffled).unwrap(), &w);
        for v in &vs {
            prop_assert!(w.contains(v));
        }
    }

    #[test]
    fn lagrangian_counts_match_brute_force(g in prop_oneof![symmetric_matrix(2), symmetric_matrix(4)]) {
        match QuadSpace::new(&g, 1) {
            Ok(space) => {
                let lags = lagrangians(&space).unwrap();
                prop_assert_eq!(lags.len() as u128, brute_lagrangian_count(&g));
                for w in &lags {
                    prop_assert!(space.is_lagrangian(w));
                }
                // A single block collapses to plain Lagrangians.
                prop_assert_eq!(coordinatewise_lagrangians(&space).unwrap(), lags);
            }
            Err(_) => {
                let rows: Vec<F3Vector> = g.iter().map(|r| F3Vector::from_integers(r)).collect();
                prop_assert!(f3::rank(&rows, g.len()) < g.len());
            }
        }
    }

    #[test]
    fn quad_value_is_the_diagonal_pairing(g in symmetric_matrix(4), v in vector(4)) {
        if let Ok(space) = QuadSpace::new(&g, 1) {
            let fv = F3Vector::new(v.clone()).unwrap();
            prop_assert_eq!(space.quad_value(&fv).unwrap() as i64, pair(&g, &v, &v));
        }
    }
}
