use boab_core::balancing::{strategy_penalty, StrategyKind, StrategySpec};
use boab_core::kernels::{gram, hsic_v, mmd2_u, mmd2_v, KernelSpec};
use boab_core::math::eigen::symmetric_eigen;
use boab_core::math::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![(0.2f64..3.0).prop_map(KernelSpec::rbf), Just(KernelSpec::linear())]
}

/// Rows, a permutation of them, and arm labels that use every arm.
fn labelled(n: usize, k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(0..k, n)).prop_map(move |(perm, mut t)| {
        for (a, slot) in t.iter_mut().take(k).enumerate() {
            *slot = a;
        }
        (perm, t)
    })
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    m.select_rows(perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_psd(x in matrix(7, 3), spec in kernel()) {
        let g = gram(&spec, &x, &x).unwrap();
        prop_assert!(g.max_abs_diff(&g.transpose()) <= 1e-12);
        let (vals, _) = symmetric_eigen(&g).unwrap();
        let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!(vals.iter().all(|&v| v >= -1e-9 * scale), "{vals:?}");
    }

    #[test]
    fn mmd_is_symmetric_and_v_is_nonnegative(p in matrix(5, 2), q in matrix(6, 2), spec in kernel()) {
        let pq = mmd2_v(&spec, &p, &q, false).unwrap().value;
        let qp = mmd2_v(&spec, &q, &p, false).unwrap().value;
        prop_assert!((pq - qp).abs() <= 1e-12 * (1.0 + pq.abs()));
        prop_assert!(pq >= -1e-12);
        let u = mmd2_u(&spec, &p, &q, false).unwrap().value;
        prop_assert!((u - mmd2_u(&spec, &q, &p, false).unwrap().value).abs() <= 1e-12 * (1.0 + u.abs()));
        prop_assert!(mmd2_v(&spec, &p, &p, false).unwrap().value.abs() <= 1e-12);
    }

    #[test]
    fn hsic_ignores_joint_row_order(z in matrix(8, 3), e in matrix(8, 2), (perm, _) in labelled(8, 2)) {
        let (kz, ke) = (KernelSpec::rbf(1.3), KernelSpec::rbf(0.8));
        let a = hsic_v(&kz, &ke, &z, &e, false).unwrap().value;
        let b = hsic_v(&kz, &ke, &permute_rows(&z, &perm), &permute_rows(&e, &perm), false).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(a >= -1e-12);
    }

    #[test]
    fn penalties_are_permutation_equivariant(
        z in matrix(12, 2),
        table in matrix(3, 2),
        (perm, t) in labelled(12, 3),
        kind in prop_oneof![Just(StrategyKind::Pair), Just(StrategyKind::Ova), Just(StrategyKind::Agg)],
    ) {
        let spec = StrategySpec {
            kernel: KernelSpec::rbf(1.1),
            embed_kernel: KernelSpec::rbf(0.9),
            ..StrategySpec::new(kind)
        };
        let a = strategy_penalty(&spec, &z, &t, &table, None, true).unwrap();
        let zp = permute_rows(&z, &perm);
        let tp: Vec<usize> = perm.iter().map(|&i| t[i]).collect();
        let b = strategy_penalty(&spec, &zp, &tp, &table, None, true).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12 * (1.0 + a.value.abs()));
        let ga = permute_rows(&a.grad_z.unwrap(), &perm);
        prop_assert!(ga.max_abs_diff(&b.grad_z.unwrap()) <= 1e-12);
    }

    #[test]
    fn relabelling_arms_leaves_pair_and_ova_unchanged(z in matrix(12, 2), (_, t) in labelled(12, 3)) {
        let swap: Vec<usize> = t.iter().map(|&a| [2, 0, 1][a]).collect();
        for kind in [StrategyKind::Pair, StrategyKind::Ova] {
            let spec = StrategySpec { kernel: KernelSpec::rbf(1.0), ..StrategySpec::new(kind) };
            let table = Matrix::zeros(3, 2);
            let a = strategy_penalty(&spec, &z, &t, &table, None, false).unwrap().value;
            let b = strategy_penalty(&spec, &z, &swap, &table, None, false).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

/// `Σ_{i≠j}` and full double sums written out by hand.
#[test]
fn mmd_u_against_hand_sum() {
    let p = Matrix::column(&[0.0, 1.0, 3.0]);
    let q = Matrix::column(&[0.5, 2.0]);
    let k = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
    let (ps, qs) = ([0.0, 1.0, 3.0], [0.5, 2.0]);
    let mut pp = 0.0;
    for (i, a) in ps.iter().enumerate() {
        for (j, b) in ps.iter().enumerate() {
            if i != j {
                pp += k(*a, *b);
            }
        }
    }
    let qq = 2.0 * k(0.5, 2.0);
    let pq: f64 = ps.iter().flat_map(|a| qs.iter().map(move |b| k(*a, *b))).sum();
    let want = pp / 6.0 + qq / 2.0 - 2.0 * pq / 6.0;
    let got = mmd2_u(&KernelSpec::rbf(1.0), &p, &q, false).unwrap().value;
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
}
