use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;

use bmt_core::binary::{sign_binarize_conv, BitMatrix, ConvGeometry};
use bmt_core::blocks::{BmtBlock, BmtSpec, EmbedPosition, MambaSpec, SwinSpec};
use bmt_core::nn::{normal_tensor, seeded_rng, Precision};
use bmt_core::scan::{discretize, selective_scan, selective_scan_fused, SsmParams};
use bmt_core::{par, reference, Tensor};

const MN: usize = 64;

fn gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    let mut rng = seeded_rng(1);
    for k in [256usize, 1024, 4096] {
        let a = BitMatrix::from_fn(MN, k, |_, _| rng.random_bool(0.5));
        let b = BitMatrix::from_fn(MN, k, |_, _| rng.random_bool(0.5));
        let (af, bf) = (a.to_signs(), b.to_signs());
        group.throughput(Throughput::Elements((2 * MN * MN * k) as u64));
        for (label, seq) in [("packed-parallel", false), ("packed-sequential", true)] {
            par::force_sequential(seq);
            group.bench_with_input(BenchmarkId::new(label, k), &k, |bch, _| bch.iter(|| bmt_core::binary::xnor_gemm(&a, &b).unwrap()));
        }
        par::force_sequential(false);
        group.bench_with_input(BenchmarkId::new("float", k), &k, |bch, &k| bch.iter(|| reference::gemm_nt_f32(&af, &bf, MN, MN, k)));
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("scan");
    let (d, m) = (16, 16);
    let mut rng = seeded_rng(2);
    for l in [256usize, 1024, 4096] {
        let mut t = |dims: Vec<usize>, lo: f32, hi: f32| Tensor::from_fn(dims, |_| rng.random_range(lo..hi)).unwrap();
        let a_log = t(vec![d, m], -1.0, 1.0);
        let p = SsmParams::from_log(&a_log, vec![1.0; d], t(vec![l, m], -1.0, 1.0), t(vec![l, m], -1.0, 1.0), t(vec![l, d], 0.01, 0.1))
            .unwrap();
        let x = t(vec![l, d], -1.0, 1.0);
        group.throughput(Throughput::Elements((l * d * m) as u64));
        group.bench_with_input(BenchmarkId::new("fused", l), &l, |bch, _| bch.iter(|| selective_scan_fused(&p, &x).unwrap()));
        group.bench_with_input(BenchmarkId::new("materialized", l), &l, |bch, _| {
            bch.iter(|| {
                let (ab, bb) = discretize(&p).unwrap();
                selective_scan(&ab, &bb, &p.c, &p.d_skip, &x).unwrap()
            })
        });
    }
    group.finish();
}

fn bconv(c: &mut Criterion) {
    let mut group = c.benchmark_group("bconv3x3");
    let mut rng = seeded_rng(3);
    let ch = 64;
    let w = normal_tensor(vec![ch, ch, 3, 3], 1.0, &mut rng).unwrap();
    let layer = sign_binarize_conv(&w, ConvGeometry::new(3, 1, 1)).unwrap();
    for n in [32usize, 64, 128] {
        let x = normal_tensor(vec![n, n, ch], 1.0, &mut rng).unwrap();
        group.throughput(Throughput::Elements((n * n) as u64));
        for (label, seq) in [("parallel", false), ("sequential", true)] {
            par::force_sequential(seq);
            group.bench_with_input(BenchmarkId::new(label, n), &n, |bch, _| bch.iter(|| bmt_core::binary::bconv2d(&layer, &x).unwrap()));
        }
        par::force_sequential(false);
    }
    group.finish();
}

fn block(c: &mut Criterion) {
    let mut group = c.benchmark_group("bmt_block");
    group.sample_size(10);
    let mut rng = seeded_rng(4);
    let spec = BmtSpec {
        mamba: MambaSpec {
            dim: 20,
            expand: 4,
            d_state: 16,
            n_scans: 4,
            embed_dim: 64,
            precision: Precision::Binary,
            embed_columns: EmbedPosition::B,
            dt_range: (1e-3, 1e-1),
        },
        swin: SwinSpec { dim: 20, head_dim: 20, window: 8, shift: true, mlp_ratio: 2 },
    };
    let blk = BmtBlock::random(spec, &mut rng).unwrap();
    let x = normal_tensor(vec![32, 32, 40], 1.0, &mut rng).unwrap();
    let g = vec![0.1; 64];
    for (label, seq) in [("parallel", false), ("sequential", true)] {
        par::force_sequential(seq);
        group.bench_function(label, |bch| bch.iter(|| blk.forward(&x, &g, EmbedPosition::B).unwrap()));
    }
    par::force_sequential(false);
    group.finish();
}

criterion_group!(benches, gemm, scan, bconv, block);
criterion_main!(benches);
