use std::collections::BTreeMap;

use s3selmer::gl2f3::{self, Gl2F3Element};

/// Every 2×2 matrix over F₃ with nonzero determinant, built from raw entries.
fn brute_group() -> Vec<[[i64; 2]; 2]> {
    let mut out = Vec::new();
    for a in 0..3i64 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    if (a * d - b * c).rem_euclid(3) != 0 {
                        out.push([[a, b], [c, d]]);
                    }
                }
            }
        }
    }
    out
}

fn brute_order(m: [[i64; 2]; 2]) -> u32 {
    let mul = |x: [[i64; 2]; 2], y: [[i64; 2]; 2]| {
        let mut z = [[0i64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                z[i][j] = (x[i][0] * y[0][j] + x[i][1] * y[1][j]).rem_euclid(3);
            }
        }
        z
    };
    let mut p = m;
    let mut n = 1;
    while p != [[1, 0], [0, 1]] {
        p = mul(p, m);
        n += 1;
    }
    n
}

#[test]
fn group_has_48_elements() {
    let group = gl2f3::enumerate_group();
    assert_eq!(group.len(), 48);
    assert_eq!(brute_group().len(), 48);
    assert!(group.contains(&Gl2F3Element::IDENTITY));
    assert!(group.iter().all(|g| g.det() != 0));
}

#[test]
fn orders_match_repeated_multiplication() {
    for m in brute_group() {
        let g = Gl2F3Element::new(m).unwrap();
        let n = gl2f3::element_order(&g);
        assert_eq!(n, brute_order(m), "{g}");
        assert_eq!(48 % n, 0);
    }
    assert_eq!(
        gl2f3::element_order(&Gl2F3Element::new([[2, 0], [0, 2]]).unwrap()),
        2
    );
    assert_eq!(brute_order([[0, 2], [1, 0]]), 4);
}

#[test]
fn classes_partition_and_carry_class_functions() {
    let group = gl2f3::enumerate_group();
    let classes = gl2f3::conjugacy_classes();
    assert_eq!(classes.iter().map(|c| c.size).sum::<usize>(), 48);
    for g in &group {
        let owners: Vec<_> = classes.iter().filter(|c| c.contains(g)).collect();
        assert_eq!(owners.len(), 1);
        for h in &group {
            let k = g.conjugate_by(h);
            assert_eq!(k.order(), g.order());
            assert_eq!(k.fixed_dim(), g.fixed_dim());
        }
        assert_eq!(owners[0].fixed_dim, g.fixed_dim());
    }
}

#[test]
fn det_minus_one_coset_histogram() {
    let hist = gl2f3::det_coset_stats(2).unwrap();
    let expected: BTreeMap<(u32, u8), usize> = [((2, 1), 12), ((8, 0), 12)].into_iter().collect();
    assert_eq!(hist, expected);
    let order8: Vec<usize> = gl2f3::conjugacy_classes()
        .iter()
        .filter(|c| c.order == 8)
        .map(|c| c.size)
        .collect();
    assert_eq!(order8, vec![6, 6]);
    assert_eq!(
        gl2f3::det_coset_stats(1).unwrap().values().sum::<usize>(),
        24
    );
    assert!(gl2f3::det_coset_stats(0).is_err());
}

#[test]
fn special_linear_group_facts() {
    assert_eq!(gl2f3::sl2().len(), 24);
    assert!(gl2f3::sl2_no_index2_normal());
    assert!(gl2f3::sl2_index2_normal_subgroups().is_empty());
    assert_eq!(gl2f3::psl2_order(), 12);
}
