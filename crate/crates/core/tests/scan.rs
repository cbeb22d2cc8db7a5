use bmt_core::reference::scan_from_definition;
use bmt_core::scan::{
    apply_scan, discretize, invert_scan, merge_scans, selective_scan, selective_scan_adjoint, selective_scan_fused, ScanDirection,
    ScanOrder, SsmParams,
};
use bmt_core::Tensor;
use proptest::prelude::*;

fn t64(dims: Vec<usize>, v: Vec<f64>) -> Tensor<f64> {
    Tensor::new(dims, v).unwrap()
}

fn vals(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

prop_compose! {
    fn dims(max_l: usize)(l in 1usize..=max_l, d in 1usize..=4, m in 1usize..=4) -> (usize, usize, usize) {
        (l, d, m)
    }
}

prop_compose! {
    fn raw_scan()((l, d, m) in dims(16))
        (a in vals(l * d * m, 0.0, 1.0), b in vals(l * d * m, -1.0, 1.0), c in vals(l * m, -1.0, 1.0),
         ds in vals(d, -1.0, 1.0), x in vals(l * d, -1.0, 1.0), dy in vals(l * d, -1.0, 1.0),
         l in Just(l), d in Just(d), m in Just(m))
        -> RawScan {
        (t64(vec![l, d, m], a), t64(vec![l, d, m], b), t64(vec![l, m], c), ds, t64(vec![l, d], x), t64(vec![l, d], dy))
    }
}

prop_compose! {
    fn params(max_l: usize)((l, d, m) in dims(max_l))
        (a_log in vals(d * m, -1.0, 1.0), b in vals(l * m, -1.0, 1.0), c in vals(l * m, -1.0, 1.0),
         delta in vals(l * d, 0.01, 1.0), ds in vals(d, -1.0, 1.0), x in vals(l * d, -1.0, 1.0),
         l in Just(l), d in Just(d), m in Just(m))
        -> (SsmParams<f64>, Tensor<f64>) {
        let p = SsmParams::from_log(&t64(vec![d, m], a_log), ds, t64(vec![l, m], b), t64(vec![l, m], c), t64(vec![l, d], delta)).unwrap();
        (p, t64(vec![l, d], x))
    }
}

/// Materialized scan inputs `(Ā, B̄, C, D, x, dy)`.
type RawScan = (Tensor<f64>, Tensor<f64>, Tensor<f64>, Vec<f64>, Tensor<f64>, Tensor<f64>);

fn loss(a: &Tensor<f64>, b: &Tensor<f64>, c: &Tensor<f64>, ds: &[f64], x: &Tensor<f64>, dy: &Tensor<f64>) -> f64 {
    let y = selective_scan(a, b, c, ds, x).unwrap();
    y.data().iter().zip(dy.data()).map(|(p, q)| p * q).sum()
}

/// Central difference of the loss along input `i` of the tensor selected by
/// `pick`.
fn numeric((a, b, c, ds, x, dy): &RawScan, pick: usize, i: usize) -> f64 {
    let eps = 1e-4;
    let eval = |delta: f64| {
        let (mut a, mut b, mut c, mut ds, mut x) = (a.clone(), b.clone(), c.clone(), ds.clone(), x.clone());
        match pick {
            0 => a.data_mut()[i] += delta,
            1 => b.data_mut()[i] += delta,
            2 => c.data_mut()[i] += delta,
            3 => ds[i] += delta,
            _ => x.data_mut()[i] += delta,
        }
        loss(&a, &b, &c, &ds, &x, dy)
    };
    (eval(eps) - eval(-eps)) / (2.0 * eps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_matches_central_differences(case in raw_scan()) {
        let (a, b, c, ds, x, dy) = &case;
        let g = selective_scan_adjoint(a, b, c, ds, x, dy).unwrap();
        let analytic = [g.a_bar.data(), g.b_bar.data(), g.c.data(), &g.d_skip[..], g.x.data()];
        for (pick, grad) in analytic.iter().enumerate() {
            for (i, &an) in grad.iter().enumerate() {
                let nu = numeric(&case, pick, i);
                let rel = (an - nu).abs() / an.abs().max(nu.abs()).max(1.0);
                prop_assert!(rel < 1e-6, "input {pick}[{i}]: analytic {an}, numeric {nu}");
            }
        }
    }

    #[test]
    fn cumulative_sum_case(l in 1usize..200, x in vals(200, -3.0, 3.0)) {
        let x = t64(vec![l, 1], x[..l].to_vec());
        let ones = t64(vec![l, 1, 1], vec![1.0; l]);
        let c = t64(vec![l, 1], vec![1.0; l]);
        let y = selective_scan(&ones, &ones, &c, &[0.0], &x).unwrap();
        let mut acc = 0.0;
        for k in 0..l {
            acc += x.data()[k];
            prop_assert_eq!(y.data()[k], acc);
        }
    }

    #[test]
    fn pure_skip_case((p, x) in params(32)) {
        let p = SsmParams::new(p.a.clone(), vec![1.0; p.hidden()], p.b.map(|_| 0.0), p.c.clone(), p.delta.clone()).unwrap();
        prop_assert_eq!(selective_scan_fused(&p, &x).unwrap(), x);
    }

    #[test]
    fn fused_matches_materialized_and_definition((p, x) in params(64)) {
        let fused = selective_scan_fused(&p, &x).unwrap();
        let (ab, bb) = discretize(&p).unwrap();
        let seq = selective_scan(&ab, &bb, &p.c, &p.d_skip, &x).unwrap();
        let (l, d, m) = (p.seq_len(), p.hidden(), p.state());
        let def = scan_from_definition(p.a.data(), &p.d_skip, p.b.data(), p.c.data(), p.delta.data(), x.data(), l, d, m);
        for ((f, s), r) in fused.data().iter().zip(seq.data()).zip(&def) {
            prop_assert!((f - s).abs() <= 1e-12 * s.abs().max(1.0));
            prop_assert!((f - r).abs() <= 1e-12 * r.abs().max(1.0));
        }
    }

    #[test]
    fn output_is_linear_in_x((p, x) in params(48), alpha in -2.0f64..2.0, beta in -2.0f64..2.0, seed in any::<u64>()) {
        let x2 = x.map(|v| (v * 7.0 + seed as f64 * 1e-3).sin());
        let mix = x.zip_map(&x2, |a, b| alpha * a + beta * b).unwrap();
        let (y1, y2, ym) = (
            selective_scan_fused(&p, &x).unwrap(),
            selective_scan_fused(&p, &x2).unwrap(),
            selective_scan_fused(&p, &mix).unwrap(),
        );
        for i in 0..ym.len() {
            let want = alpha * y1.data()[i] + beta * y2.data()[i];
            prop_assert!((ym.data()[i] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn scan_orders_invert_exactly(h in 1usize..=32, w in 1usize..=32, d in 1usize..=3) {
        let x = Tensor::from_fn(vec![h, w, d], |i| i as f32).unwrap();
        for kind in ScanDirection::ALL {
            let order = ScanOrder::new(kind, h, w);
            let seq = apply_scan(&order, &x).unwrap();
            prop_assert_eq!(seq.dims(), &[h * w, d][..]);
            let back = invert_scan(&order, &seq).unwrap().reshape(vec![h, w, d]).unwrap();
            prop_assert_eq!(&back, &x);
            let mut perm = order.permutation();
            perm.sort_unstable();
            prop_assert_eq!(perm, (0..h * w).collect::<Vec<_>>());
        }
    }
}

#[test]
fn backward_orders_reverse_forward_orders() {
    let (h, w) = (3, 5);
    let fwd = ScanOrder::new(ScanDirection::RowForward, h, w).permutation();
    let bwd = ScanOrder::new(ScanDirection::RowBackward, h, w).permutation();
    assert_eq!(bwd, fwd.iter().rev().copied().collect::<Vec<_>>());
    let col = ScanOrder::new(ScanDirection::ColumnForward, h, w).permutation();
    assert_eq!(&col[..3], &[0, 5, 10]);
}

#[test]
fn long_sequence_stays_bounded() {
    let (l, d, m) = (1024, 3, 4);
    let a_log = Tensor::from_fn(vec![d, m], |i| (i as f32 * 0.3).sin()).unwrap();
    let b = Tensor::from_fn(vec![l, m], |i| (i as f32 * 0.7).cos()).unwrap();
    let c = Tensor::from_fn(vec![l, m], |i| (i as f32 * 0.11).sin()).unwrap();
    let delta = Tensor::from_fn(vec![l, d], |i| 0.01 + (i % 10) as f32 * 0.05).unwrap();
    let x = Tensor::from_fn(vec![l, d], |i| (i as f32 * 1.3).sin()).unwrap();
    let p = SsmParams::from_log(&a_log, vec![1.0; d], b, c, delta).unwrap();
    let y = selective_scan_fused(&p, &x).unwrap();
    // |Σ C h| <= m · max|B̄ x| / (1 - max Ā) + |D x|, with max|B̄ x| <= 0.46
    let a_max = (0.01f32 * -(-1.0f32).exp()).exp();
    let bound = m as f32 * 0.46 / (1.0 - a_max) + 1.0;
    assert!(y.data().iter().all(|v| v.is_finite() && v.abs() <= bound));
}

#[test]
fn invalid_parameters_are_rejected() {
    let a = Tensor::full(vec![1, 1], -1.0).unwrap();
    let bc = Tensor::full(vec![2, 1], 1.0).unwrap();
    let bad_delta = Tensor::new(vec![2, 1], vec![0.1, 0.0]).unwrap();
    assert!(SsmParams::new(a.clone(), vec![1.0], bc.clone(), bc.clone(), bad_delta).is_err());
    let p = SsmParams::new(a, vec![1.0], bc.clone(), bc, Tensor::full(vec![2, 1], 0.1).unwrap()).unwrap();
    assert!(selective_scan_fused(&p, &Tensor::zeros(vec![3, 1]).unwrap()).is_err());
}

#[test]
fn merge_normalizes_over_channels() {
    let a = Tensor::from_fn(vec![2, 2, 4], |i| i as f32).unwrap();
    let b = Tensor::from_fn(vec![2, 2, 4], |i| (i % 3) as f32).unwrap();
    let y = merge_scans(&[a, b], &[1.0; 4], &[0.0; 4]).unwrap();
    for px in y.data().chunks(4) {
        let mean: f32 = px.iter().sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-5);
    }
    assert!(merge_scans::<f32>(&[], &[], &[]).is_err());
}
