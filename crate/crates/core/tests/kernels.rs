use bmt_core::binary::{
    bconv2d, pack_bits, rsign, sign, sign_binarize_conv, unpack_bits, xnor_gemm, xnor_popcount_dot, BConvLayer, BiLinearLayer, BitMatrix,
    ConvGeometry,
};
use bmt_core::{reference, Tensor};
use proptest::prelude::*;

fn signs(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { -1.0 }), n)
}

fn floats(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, n)
}

prop_compose! {
    fn linear_case()(cin in 1usize..=256, cout in 1usize..=256, rows in 1usize..=3)
        (w in floats(cin * cout), x in floats(cin * rows), thr in floats(cin), cin in Just(cin), cout in Just(cout), rows in Just(rows))
        -> (Tensor, Tensor, Vec<f32>) {
        let thr = thr.into_iter().map(|t| t * 0.25).collect();
        (Tensor::new(vec![cout, cin], w).unwrap(), Tensor::new(vec![rows, cin], x).unwrap(), thr)
    }
}

prop_compose! {
    fn conv_case()(cin in 1usize..=24, cout in 1usize..=8, h in 1usize..=8, w in 1usize..=8, stride in 1usize..=2)
        (wt in floats(cout * cin * 9), x in floats(h * w * cin), cin in Just(cin), cout in Just(cout), h in Just(h), w in Just(w), stride in Just(stride))
        -> (Tensor, Tensor, usize) {
        (Tensor::new(vec![cout, cin, 3, 3], wt).unwrap(), Tensor::new(vec![h, w, cin], x).unwrap(), stride)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bi_linear_counts_match_float_reference((w, x, thr) in linear_case()) {
        let layer = BiLinearLayer::from_float(&w, thr).unwrap();
        let got: Vec<i64> = layer.forward_counts(&x).unwrap().into_iter().map(i64::from).collect();
        prop_assert_eq!(got, reference::bi_linear_counts(&layer, &x).unwrap());
    }

    #[test]
    fn bi_linear_output_is_scaled_counts((w, x, thr) in linear_case()) {
        let layer = BiLinearLayer::from_float(&w, thr).unwrap();
        let y = layer.forward(&x).unwrap();
        let counts = layer.forward_counts(&x).unwrap();
        let n = layer.out_dim();
        for (i, (v, c)) in y.data().iter().zip(&counts).enumerate() {
            prop_assert_eq!(*v, *c as f32 * layer.scale()[i % n]);
        }
    }

    #[test]
    fn xnor_dot_matches_sign_product(n in 1usize..300, seed in any::<u64>()) {
        let a: Vec<f32> = (0..n).map(|i| if (seed >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let b: Vec<f32> = (0..n).map(|i| if (seed.rotate_left(7) >> (i % 61)) & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let want: f32 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        let got = xnor_popcount_dot(&pack_bits(&a).unwrap(), &pack_bits(&b).unwrap(), n).unwrap();
        prop_assert_eq!(got as f32, want);
    }

    #[test]
    fn pack_unpack_roundtrip(v in (1usize..300).prop_flat_map(signs)) {
        prop_assert_eq!(unpack_bits(&pack_bits(&v).unwrap(), v.len()), v);
    }

    #[test]
    fn gemm_matches_reference(rows in 1usize..20, cols in 1usize..20, k in 1usize..200, seed in any::<u64>()) {
        let bit = |r: usize, c: usize, s: u64| (r * 31 + c * 17 + s as usize).count_ones().is_multiple_of(2);
        let a = BitMatrix::from_fn(rows, k, |r, c| bit(r, c, seed));
        let b = BitMatrix::from_fn(cols, k, |r, c| bit(r, c, seed >> 3));
        let want = reference::gemm_nt(&a.to_signs(), &b.to_signs(), rows, cols, k);
        let got = xnor_gemm(&a, &b).unwrap();
        prop_assert!(got.iter().zip(&want).all(|(g, w)| *g as f64 == *w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn bconv_matches_zero_padded_reference((w, x, stride) in conv_case()) {
        let layer = sign_binarize_conv(&w, ConvGeometry::new(3, stride, 1)).unwrap();
        let (oh, ow, got) = layer.forward_counts(&x).unwrap();
        let want = reference::bconv_counts(&layer, &x).unwrap();
        prop_assert_eq!(want.dims(), &[oh, ow, layer.out_channels()][..]);
        prop_assert!(got.iter().zip(want.data()).all(|(g, w)| *g as f64 == *w));
    }

    #[test]
    fn one_by_one_conv_is_per_pixel_linear(cin in 1usize..40, cout in 1usize..10, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let wt = Tensor::from_fn(vec![cout, cin, 1, 1], |i| ((i as u64 ^ seed) % 7) as f32 - 3.0).unwrap();
        let x = Tensor::from_fn(vec![h, w, cin], |i| ((i as u64 * 13 + seed) % 11) as f32 - 5.0).unwrap();
        let conv = sign_binarize_conv(&wt, ConvGeometry::new(1, 1, 0)).unwrap();
        let lin = BiLinearLayer::from_float(&wt.clone().reshape(vec![cout, cin]).unwrap(), vec![0.0; cin]).unwrap();
        let (a, b) = (bconv2d(&conv, &x).unwrap(), lin.forward(&x).unwrap());
        prop_assert_eq!(a.data(), b.data());
    }
}

#[test]
fn sign_ties_map_to_minus_one() {
    let t = Tensor::new(vec![4], vec![0.0, -0.0, 1e-30, -1e-30]).unwrap();
    assert_eq!(sign(&t).unwrap().to_signs(), vec![-1.0, -1.0, 1.0, -1.0]);
    let r = rsign(&Tensor::new(vec![2], vec![0.25, 0.26]).unwrap(), &[0.25, 0.25]).unwrap();
    assert_eq!(r.to_signs(), vec![-1.0, 1.0]);
}

#[test]
fn constant_kernel_is_exact_on_sign_inputs() {
    // all weights c > 0: S = c and every bit is +1
    let c = 0.375f32;
    let w = Tensor::full(vec![3, 2, 3, 3], c).unwrap();
    let layer = sign_binarize_conv(&w, ConvGeometry::new(3, 1, 1)).unwrap();
    assert!(layer.scale().iter().all(|&s| s == c));
    let x = Tensor::from_fn(vec![4, 5, 2], |i| if i % 3 == 0 { 1.0 } else { -1.0 }).unwrap();
    let want = reference::conv2d(&x, &w, 1, 1, 1).unwrap();
    let got = bconv2d(&layer, &x).unwrap();
    for (g, w) in got.data().iter().zip(want.data()) {
        assert_eq!(*g as f64, *w);
    }
}

#[test]
fn padding_bits_never_leak() {
    // 65 columns: the last word carries 63 padding bits
    let a = BitMatrix::from_fn(1, 65, |_, _| false);
    let b = BitMatrix::from_fn(1, 65, |_, _| false);
    assert_eq!(xnor_gemm(&a, &b).unwrap(), vec![65]);
    let layer =
        BConvLayer::new(BitMatrix::from_fn(9, 65, |_, _| true), vec![1.0], vec![0.0; 65], 65, 1, ConvGeometry::new(3, 1, 1)).unwrap();
    // corner pixel sees 4 in-bounds taps of 65 matching bits
    let x = Tensor::full(vec![3, 3, 65], 1.0).unwrap();
    let (_, _, counts) = layer.forward_counts(&x).unwrap();
    assert_eq!(counts[0], 4 * 65);
    assert_eq!(counts[4], 9 * 65);
}

#[test]
fn mismatched_shapes_are_errors() {
    let layer = BiLinearLayer::from_float(&Tensor::full(vec![2, 3], 1.0).unwrap(), vec![0.0; 3]).unwrap();
    assert!(layer.forward(&Tensor::zeros(vec![1, 4]).unwrap()).is_err());
    let w = Tensor::full(vec![2, 3, 3, 3], 1.0).unwrap();
    let conv = sign_binarize_conv(&w, ConvGeometry::new(3, 1, 1)).unwrap();
    assert!(bconv2d(&conv, &Tensor::zeros(vec![4, 4, 2]).unwrap()).is_err());
    let mut nan = Tensor::zeros(vec![1, 3]).unwrap();
    nan.data_mut()[1] = f32::NAN;
    assert!(layer.forward(&nan).is_err());
}
