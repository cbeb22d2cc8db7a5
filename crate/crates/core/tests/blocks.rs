use bmt_core::blocks::{
    roll, window_partition, window_reverse, BiMambaBlock, BiSwinBlock, BmtBlock, BmtSpec, EmbedPosition, MambaSpec, Probe, SwinSpec,
};
use bmt_core::cfa::EventMask;
use bmt_core::check::{differing_keys, expected_keys, positive_embedding, projection_keys};
use bmt_core::nn::{normal_tensor, seeded_rng, Precision};
use bmt_core::pipeline::{Model, ModelConfig, RunOptions, Tiling};
use bmt_core::Tensor;
use proptest::prelude::*;

fn mamba(dim: usize, columns: EmbedPosition) -> MambaSpec {
    MambaSpec {
        dim,
        expand: 2,
        d_state: 4,
        n_scans: 4,
        embed_dim: 8,
        precision: Precision::Binary,
        embed_columns: columns,
        dt_range: (1e-3, 1e-1),
    }
}

fn swin(dim: usize, shift: bool) -> SwinSpec {
    SwinSpec { dim, head_dim: 4, window: 4, shift, mlp_ratio: 2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attention_rows_are_distributions(h in 1usize..12, w in 1usize..12, shift in any::<bool>(), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let block = BiSwinBlock::random(swin(8, shift), &mut rng).unwrap();
        let x = normal_tensor(vec![h, w, 8], 1.0, &mut rng).unwrap();
        let probs = block.attention_probs(&x).unwrap();
        let t = *probs.dims().last().unwrap();
        for row in probs.data().chunks(t) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gate_mamba_is_identity(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let mut block = BiMambaBlock::random(mamba(6, EmbedPosition::B), &mut rng).unwrap();
        block.gate_proj_mut().scale_output(0.0).unwrap();
        let x = normal_tensor(vec![h, w, 6], 1.0, &mut rng).unwrap();
        prop_assert_eq!(block.forward(&x, &[0.2; 8], EmbedPosition::B).unwrap(), x);
    }

    #[test]
    fn zero_fuse_block_is_identity(h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let spec = BmtSpec { mamba: mamba(4, EmbedPosition::B), swin: swin(4, true) };
        let mut block = BmtBlock::random(spec, &mut rng).unwrap();
        block.fuse_mut().scale_output(0.0).unwrap();
        let x = normal_tensor(vec![h, w, 8], 1.0, &mut rng).unwrap();
        prop_assert_eq!(block.forward(&x, &[0.5; 8], EmbedPosition::B).unwrap(), x);
    }

    #[test]
    fn windows_roundtrip_and_roll_inverts(hb in 1usize..4, wb in 1usize..4, ws in 1usize..5, dy in -7isize..7, dx in -7isize..7) {
        let (h, w) = (hb * ws, wb * ws);
        let x = Tensor::from_fn(vec![h, w, 3], |i| i as f32).unwrap();
        let win = window_partition(&x, ws).unwrap();
        prop_assert_eq!(window_reverse(&win, ws, h, w).unwrap(), x.clone());
        prop_assert_eq!(roll(&roll(&x, dy, dx).unwrap(), -dy, -dx).unwrap(), x);
    }
}

#[test]
fn zero_scale_swin_is_identity() {
    let mut rng = seeded_rng(3);
    let mut block = BiSwinBlock::random(swin(8, true), &mut rng).unwrap();
    block.qkv_mut().scale_output(0.0).unwrap();
    block.proj_mut().scale_output(0.0).unwrap();
    block.fc1_mut().scale_output(0.0).unwrap();
    block.fc2_mut().scale_output(0.0).unwrap();
    let x = normal_tensor(vec![8, 12, 8], 1.0, &mut rng).unwrap();
    assert_eq!(block.forward(&x).unwrap(), x);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut rng = seeded_rng(0);
    assert!(BiSwinBlock::random(SwinSpec { head_dim: 3, ..swin(8, false) }, &mut rng).is_err());
    assert!(BiMambaBlock::random(MambaSpec { n_scans: 5, ..mamba(4, EmbedPosition::B) }, &mut rng).is_err());
    assert!(BiMambaBlock::random(MambaSpec { dt_range: (0.0, 1.0), ..mamba(4, EmbedPosition::B) }, &mut rng).is_err());
}

/// The first block of the main network, built with embedding columns on
/// every projection, changes exactly the projections selected at run time.
#[test]
fn embedding_position_probe_in_main_network() {
    let cfg = ModelConfig { embed_columns: Some(EmbedPosition::All), ..ModelConfig::compact() };
    let model = Model::random(&cfg).unwrap();
    let n2 = model.n2();
    let mut rng = seeded_rng(11);
    let x = Tensor::from_fn(vec![16, 16, 1], |i| ((i * 37) % 17) as f32 / 17.0).unwrap();
    let g = positive_embedding(n2.blocks()[0].mamba(), &mut rng).unwrap();
    let run = |pos| -> Probe { n2.first_block_probe(&x, &g, pos).unwrap().mamba_inner };
    let base = run(EmbedPosition::None);
    let projections = projection_keys(cfg.n_scans);
    for pos in EmbedPosition::ALL_VARIANTS {
        let probe = run(pos);
        let changed = differing_keys(&probe, &base);
        let got: Vec<String> = changed.iter().filter(|k| projections.contains(k)).cloned().collect();
        assert_eq!(got, expected_keys(pos, cfg.n_scans), "position {pos}");
        assert_eq!(changed.iter().any(|k| k == "merged"), pos != EmbedPosition::None, "position {pos}");
    }
}

/// With short scan memory, overlapping tiles reproduce the whole-image
/// result.
#[test]
fn tiled_inference_matches_whole_image() {
    let cfg = ModelConfig { dt_min: 50.0, dt_max: 100.0, ..ModelConfig::compact() };
    let model = Model::random(&cfg).unwrap();
    let n = 96;
    let raw = Tensor::from_fn(vec![n, n, 1], |i| ((i * 7919) % 101) as f32 / 101.0).unwrap();
    let mask = EventMask::empty(n, n);
    let whole = model.run(&raw, &mask).unwrap();
    let opts = RunOptions { tiling: Some(Tiling { tile: 32, overlap: 48 }), ..Default::default() };
    let tiled = model.run_with(&raw, &mask, &opts).unwrap().rgb;
    let worst = whole.data().iter().zip(tiled.data()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
    assert!(worst < 1e-5, "max tile deviation {worst}");
}
