use std::path::Path;

use crate::blocks::EmbedPosition;
use crate::cfa::EventMask;
use crate::cost::{CostReport, OpsConvention};
use crate::encoder::VisualEncoder;
use crate::error::{Error, Result};
use crate::nn::{crop, seeded_rng};
use crate::par;
use crate::pipeline::{InpaintNet, MainNet, ModelConfig};
use crate::tensor::Tensor;
use crate::weights::{Parameters, WeightContainer, WeightReader};

const ENCODER_SEED_SALT: u64 = 0x5eed_e5c0;

/// Window and overlap sizes for tiled inference of the main network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tiling {
    pub tile: usize,
    pub overlap: usize,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Use this embedding instead of running the visual encoder.
    pub embedding: Option<Vec<f32>>,
    /// Override the configured embedding position.
    pub position: Option<EmbedPosition>,
    pub tiling: Option<Tiling>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rgb: Tensor,
    pub inpainted: Tensor,
    pub embedding: Vec<f32>,
}

/// The complete pipeline: visual encoder, event inpainting, main network.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    encoder: VisualEncoder,
    n1: InpaintNet,
    n2: MainNet,
}

impl Model {
    pub fn random(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        let encoder = VisualEncoder::random(&config.encoder_channels, config.embed_dim, config.seed ^ ENCODER_SEED_SALT)?;
        let n1 = InpaintNet::random(config.n1_channels, config.n1_depth, &mut rng)?;
        let n2 = MainNet::random(config, &mut rng)?;
        Ok(Model { config: config.clone(), encoder, n1, n2 })
    }

    /// Builds the architecture of `config` and loads every tensor from
    /// `weights`. Missing, misshapen or unknown tensors are errors.
    pub fn from_weights(config: &ModelConfig, weights: &WeightContainer) -> Result<Self> {
        let mut model = Model::random(config)?;
        let mut src = WeightReader::new(weights);
        model.encoder = VisualEncoder::from_weights(&config.encoder_channels, config.embed_dim, "encoder", &mut src)?;
        model.n1.import("n1", &mut src)?;
        model.n2.import("n2", &mut src)?;
        src.finish()?;
        Ok(model)
    }

    pub fn load(config: &ModelConfig, path: impl AsRef<Path>) -> Result<Self> {
        Model::from_weights(config, &WeightContainer::load(path)?)
    }

    pub fn weights(&self) -> Result<WeightContainer> {
        let mut out = WeightContainer::new();
        self.encoder.export("encoder", &mut out)?;
        self.n1.export("n1", &mut out)?;
        self.n2.export("n2", &mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.weights()?.save(path)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &VisualEncoder {
        &self.encoder
    }

    pub fn n1(&self) -> &InpaintNet {
        &self.n1
    }

    pub fn n1_mut(&mut self) -> &mut InpaintNet {
        &mut self.n1
    }

    pub fn n2(&self) -> &MainNet {
        &self.n2
    }

    pub fn n2_mut(&mut self) -> &mut MainNet {
        &mut self.n2
    }

    pub fn encode(&self, raw: &Tensor) -> Result<Vec<f32>> {
        self.encoder.encode(raw)
    }

    /// Clamped RGB for the default options.
    pub fn run(&self, raw: &Tensor, mask: &EventMask) -> Result<Tensor> {
        Ok(self.run_with(raw, mask, &RunOptions::default())?.rgb)
    }

    pub fn run_with(&self, raw: &Tensor, mask: &EventMask, opts: &RunOptions) -> Result<RunOutput> {
        let (_, _, c) = raw.hwc()?;
        if c != 1 {
            return Err(Error::shape(format!("pipeline expects single-channel RAW, got {c} channels")));
        }
        raw.check_finite("pipeline input")?;
        let embedding = match &opts.embedding {
            Some(g) if g.len() != self.config.embed_dim => {
                return Err(Error::shape(format!("embedding has {} values, model expects {}", g.len(), self.config.embed_dim)))
            }
            Some(g) => g.clone(),
            None => self.encode(raw)?,
        };
        let pos = opts.position.unwrap_or(self.config.embed_position);
        let inpainted = self.n1.forward(raw, mask)?;
        let out = match opts.tiling {
            Some(t) => self.main_tiled(&inpainted, &embedding, pos, t)?,
            None => self.n2.forward(&inpainted, &embedding, pos)?,
        };
        Ok(RunOutput { rgb: out.map(|v| v.clamp(0.0, 1.0)), inpainted, embedding })
    }

    /// Spatial alignment of tile origins: one attention window at the
    /// coarsest level.
    pub fn tile_alignment(&self) -> usize {
        self.config.window_size << self.config.levels()
    }

    fn main_tiled(&self, x: &Tensor, g: &[f32], pos: EmbedPosition, t: Tiling) -> Result<Tensor> {
        let (h, w, _) = x.hwc()?;
        let a = self.tile_alignment();
        if t.tile == 0 {
            return Err(Error::Config("tile size must be positive".into()));
        }
        let tile = t.tile.div_ceil(a) * a;
        let overlap = t.overlap.div_ceil(a) * a;
        let (ny, nx) = (h.div_ceil(tile), w.div_ceil(tile));
        let parts = par::map_range(ny * nx, |k| -> Result<(usize, usize, Tensor)> {
            let (ty, tx) = (k / nx, k % nx);
            let (y0, x0) = (ty * tile, tx * tile);
            let (y1, x1) = ((y0 + tile).min(h), (x0 + tile).min(w));
            let (ry0, rx0) = (y0.saturating_sub(overlap), x0.saturating_sub(overlap));
            let (ry1, rx1) = ((y1 + overlap).min(h), (x1 + overlap).min(w));
            let region = crop(x, ry0, rx0, ry1 - ry0, rx1 - rx0)?;
            let out = self.n2.forward(&region, g, pos)?;
            Ok((y0, x0, crop(&out, y0 - ry0, x0 - rx0, y1 - y0, x1 - x0)?))
        });
        let mut full = Tensor::zeros(vec![h, w, 3])?;
        let dst = full.data_mut();
        for part in parts {
            let (y0, x0, p) = part?;
            let (ph, pw, _) = p.hwc()?;
            for y in 0..ph {
                let row = &p.data()[y * pw * 3..(y + 1) * pw * 3];
                dst[((y0 + y) * w + x0) * 3..][..pw * 3].copy_from_slice(row);
            }
        }
        Ok(full)
    }

    pub fn cost(&self, resolution: (usize, usize), convention: OpsConvention) -> Result<CostReport> {
        let (h, w) = resolution;
        if h == 0 || w == 0 {
            return Err(Error::Config("resolution must be positive".into()));
        }
        let mut report = CostReport::new(resolution, convention);
        self.encoder.cost("encoder", h, w, &mut report)?;
        self.n1.cost("n1", h, w, &mut report);
        self.n2.cost("n2", h, w, &mut report)?;
        report.push_functional("clamp", (h * w * 3) as u64);
        Ok(report)
    }
}

/// Parameter and operation count of the model described by `config`.
pub fn account(config: &ModelConfig, resolution: (usize, usize), convention: OpsConvention) -> Result<CostReport> {
    Model::random(config)?.cost(resolution, convention)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(h: usize, w: usize) -> (Tensor, EventMask) {
        let raw = Tensor::from_fn(vec![h, w, 1], |i| ((i * 37) % 101) as f32 / 100.0).unwrap();
        (raw, EventMask::from_fn(h, w, |y, x| (y * 5 + x) % 17 == 0))
    }

    #[test]
    fn weights_roundtrip_reproduces_output() {
        let cfg = ModelConfig::compact();
        let model = Model::random(&cfg).unwrap();
        let (raw, mask) = sample(16, 12);
        let bytes = model.weights().unwrap().to_bytes().unwrap();
        let back = Model::from_weights(&cfg, &WeightContainer::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.run(&raw, &mask).unwrap(), model.run(&raw, &mask).unwrap());
        let other = ModelConfig { base_channels: 16, ..cfg };
        assert!(Model::from_weights(&other, &model.weights().unwrap()).is_err());
    }

    #[test]
    fn output_is_clamped_rgb() {
        let model = Model::random(&ModelConfig::compact()).unwrap();
        let (raw, mask) = sample(9, 13);
        let out = model.run(&raw, &mask).unwrap();
        assert_eq!(out.dims(), &[9, 13, 3]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let wrong = RunOptions { embedding: Some(vec![0.0; 3]), ..RunOptions::default() };
        assert!(model.run_with(&raw, &mask, &wrong).is_err());
    }
}
