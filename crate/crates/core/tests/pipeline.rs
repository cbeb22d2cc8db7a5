use bmt_core::cfa::{event_mask, EventMask};
use bmt_core::cost::{compare_costs, OpsConvention};
use bmt_core::pipeline::{account, Model, ModelConfig, RunOptions};
use bmt_core::weights::WeightContainer;
use bmt_core::{Error, Tensor};

fn raw(h: usize, w: usize) -> Tensor {
    Tensor::from_fn(vec![h, w, 1], |i| ((i * 2654435761) % 1000) as f32 / 1000.0).unwrap()
}

#[test]
fn same_seed_same_output() {
    let cfg = ModelConfig::compact();
    let x = raw(20, 13);
    let mask = event_mask(20, 13, 1.0 / 16.0, 4).unwrap();
    let a = Model::random(&cfg).unwrap().run(&x, &mask).unwrap();
    let b = Model::random(&cfg).unwrap().run(&x, &mask).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dims(), &[20, 13, 3]);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let other = Model::random(&ModelConfig { seed: 1, ..cfg }).unwrap().run(&x, &mask).unwrap();
    assert_ne!(a, other);
}

#[test]
fn weight_file_roundtrip() {
    let cfg = ModelConfig::compact();
    let model = Model::random(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bmtw");
    model.save(&path).unwrap();
    let loaded = Model::load(&cfg, &path).unwrap();
    assert_eq!(loaded, model);
    let x = raw(16, 16);
    let mask = EventMask::empty(16, 16);
    assert_eq!(loaded.run(&x, &mask).unwrap(), model.run(&x, &mask).unwrap());
}

#[test]
fn weights_for_another_config_are_rejected() {
    let weights = Model::random(&ModelConfig::compact()).unwrap().weights().unwrap();
    let bigger = ModelConfig { base_channels: 16, ..ModelConfig::compact() };
    assert!(matches!(Model::from_weights(&bigger, &weights), Err(Error::Mismatch(_))));
    let mut extra = weights.clone();
    extra.insert_f32("n2.unused", vec![1], vec![0.0]).unwrap();
    assert!(Model::from_weights(&ModelConfig::compact(), &extra).is_err());
    assert!(WeightContainer::from_bytes(b"nope").is_err());
}

#[test]
fn inpainting_touches_only_events() {
    let model = Model::random(&ModelConfig::compact()).unwrap();
    let x = raw(12, 12);
    let mask = event_mask(12, 12, 0.25, 9).unwrap();
    let out = model.run_with(&x, &mask, &RunOptions::default()).unwrap();
    for (i, (&a, &b)) in out.inpainted.data().iter().zip(x.data()).enumerate() {
        if !mask.bits()[i] {
            assert_eq!(a, b);
        }
    }
    assert_eq!(out.embedding.len(), model.config().embed_dim);
}

#[test]
fn bad_inputs_are_errors() {
    let model = Model::random(&ModelConfig::compact()).unwrap();
    let mask = EventMask::empty(8, 8);
    assert!(model.run(&Tensor::zeros(vec![8, 8, 3]).unwrap(), &mask).is_err());
    assert!(model.run(&raw(8, 9), &mask).is_err());
    let mut nan = raw(8, 8);
    nan.data_mut()[3] = f32::NAN;
    assert!(model.run(&nan, &mask).is_err());
    let opts = RunOptions { embedding: Some(vec![0.0; 3]), ..Default::default() };
    assert!(model.run_with(&raw(8, 8), &mask, &opts).is_err());
}

#[test]
fn config_files_are_validated() {
    assert!(ModelConfig::from_toml_str("base_channels = 0").is_err());
    assert!(ModelConfig::from_toml_str("no_such_key = 1").is_err());
    assert!(ModelConfig::from_toml_str("encoder_depths = [1]\ndecoder_depths = [1, 1]").is_err());
    assert!(ModelConfig::from_toml_str("mamba_fraction = 1.5").is_err());
    let cfg = ModelConfig::from_toml_str("seed = 9\nembed_position = \"delta\"").unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(ModelConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
}

#[test]
fn ops_scale_with_pixel_count() {
    let cfg = ModelConfig::compact();
    for conv in [OpsConvention::Layers, OpsConvention::Full] {
        let a = account(&cfg, (64, 64), conv).unwrap();
        let b = account(&cfg, (128, 128), conv).unwrap();
        assert_eq!(a.total_params(), b.total_params());
        assert_eq!(a.rows().len(), b.rows().len());
        // per-pixel rows scale with the area, per-image rows (the embedding
        // adapters) do not
        let mut constant = 0.0;
        for (ra, rb) in a.rows().iter().zip(b.rows()) {
            assert_eq!(ra.name, rb.name);
            if ra.ops() == 0.0 && rb.ops() == 0.0 {
                continue;
            }
            if ra.ops() == rb.ops() {
                assert!(ra.name.ends_with("adapter"), "{} does not scale", ra.name);
                constant += ra.ops();
            } else {
                assert_eq!(rb.ops(), 4.0 * ra.ops(), "{conv:?}: {}", ra.name);
            }
        }
        assert!(constant < 1e-4 * a.total_ops());
    }
    assert!(account(&cfg, (0, 64), OpsConvention::Layers).is_err());
}

#[test]
fn default_config_lands_in_reported_bands() {
    let binary = account(&ModelConfig::default(), (256, 256), OpsConvention::Layers).unwrap();
    let float = account(&ModelConfig::fp_mamba(), (256, 256), OpsConvention::Layers).unwrap();
    let params_m = binary.params_m();
    assert!((1.024..=1.536).contains(&params_m), "{params_m} M params");
    let r = compare_costs(&float, &binary).unwrap();
    assert!((75.0..=85.0).contains(&r.params_pct), "params reduction {}", r.params_pct);
    assert!((83.0..=92.0).contains(&r.ops_pct), "ops reduction {}", r.ops_pct);
    let csv = binary.to_csv();
    assert!(csv.lines().count() > binary.rows().len());
}
