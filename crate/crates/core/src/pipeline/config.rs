use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::{BmtSpec, EmbedPosition, MambaSpec, SwinSpec};
use crate::encoder::DEFAULT_STAGE_CHANNELS;
use crate::error::{Error, Result};
use crate::nn::Precision;

/// Architecture hyperparameters. Level `i` of the U-shaped main network runs
/// at `base_channels * 2^i` channels and `1 / 2^i` resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
    /// Blocks per encoder level, shallowest first.
    pub encoder_depths: Vec<usize>,
    pub mid_depth: usize,
    /// Blocks per decoder level, deepest first.
    pub decoder_depths: Vec<usize>,
    pub mamba_expand: usize,
    pub d_state: usize,
    pub n_scans: usize,
    /// Share of each block's channels routed to the Mamba branch.
    pub mamba_fraction: f64,
    pub mamba_precision: Precision,
    pub dt_min: f32,
    pub dt_max: f32,
    pub window_size: usize,
    pub head_dim: usize,
    pub mlp_ratio: usize,
    pub embed_dim: usize,
    pub embed_position: EmbedPosition,
    /// Projections that carry an input column for the global scalar.
    /// Defaults to `embed_position`; `all` allows switching positions at
    /// fixed weights.
    pub embed_columns: Option<EmbedPosition>,
    /// Kernel of the full-precision down/up-sampling convolutions.
    pub updown_kernel: usize,
    pub n1_depth: usize,
    pub n1_channels: usize,
    pub encoder_channels: Vec<usize>,
    /// Seed of the random initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 40,
            encoder_depths: vec![2, 4],
            mid_depth: 6,
            decoder_depths: vec![4, 2],
            mamba_expand: 4,
            d_state: 16,
            n_scans: 4,
            mamba_fraction: 0.5,
            mamba_precision: Precision::Binary,
            dt_min: 1e-3,
            dt_max: 1e-1,
            window_size: 8,
            head_dim: 20,
            mlp_ratio: 2,
            embed_dim: 64,
            embed_position: EmbedPosition::B,
            embed_columns: None,
            updown_kernel: 3,
            n1_depth: 4,
            n1_channels: 32,
            encoder_channels: DEFAULT_STAGE_CHANNELS.to_vec(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// The default architecture with a full-precision Mamba branch.
    pub fn fp_mamba() -> Self {
        ModelConfig { mamba_precision: Precision::Float, ..ModelConfig::default() }
    }

    /// A small configuration for quick runs and tests.
    pub fn compact() -> Self {
        ModelConfig {
            base_channels: 8,
            encoder_depths: vec![1, 1],
            mid_depth: 2,
            decoder_depths: vec![1, 1],
            mamba_expand: 2,
            d_state: 4,
            window_size: 4,
            head_dim: 4,
            embed_dim: 16,
            n1_depth: 2,
            n1_channels: 8,
            encoder_channels: vec![8, 8, 16, 16],
            ..ModelConfig::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.encoder_depths.len()
    }

    /// Spatial factor image sizes must be padded to.
    pub fn size_multiple(&self) -> usize {
        1 << self.levels()
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn columns(&self) -> EmbedPosition {
        self.embed_columns.unwrap_or(self.embed_position)
    }

    pub fn block_spec(&self, level: usize, index: usize) -> BmtSpec {
        let c = self.channels_at(level);
        let cm = ((c as f64) * self.mamba_fraction).round() as usize;
        BmtSpec {
            mamba: MambaSpec {
                dim: cm,
                expand: self.mamba_expand,
                d_state: self.d_state,
                n_scans: self.n_scans,
                embed_dim: self.embed_dim,
                precision: self.mamba_precision,
                embed_columns: self.columns(),
                dt_range: (self.dt_min, self.dt_max),
            },
            swin: SwinSpec {
                dim: c - cm,
                head_dim: self.head_dim,
                window: self.window_size,
                shift: index % 2 == 1,
                mlp_ratio: self.mlp_ratio,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("base_channels", self.base_channels),
            ("mamba_expand", self.mamba_expand),
            ("d_state", self.d_state),
            ("window_size", self.window_size),
            ("head_dim", self.head_dim),
            ("mlp_ratio", self.mlp_ratio),
            ("embed_dim", self.embed_dim),
            ("updown_kernel", self.updown_kernel),
            ("n1_channels", self.n1_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.encoder_depths.is_empty() {
            return bad("at least one encoder level is required".into());
        }
        if self.encoder_depths.len() != self.decoder_depths.len() {
            return bad(format!("{} encoder levels but {} decoder levels", self.encoder_depths.len(), self.decoder_depths.len()));
        }
        if self.updown_kernel.is_multiple_of(2) {
            return bad("updown_kernel must be odd".into());
        }
        if !(1..=4).contains(&self.n_scans) {
            return bad(format!("n_scans must be 1..=4, got {}", self.n_scans));
        }
        if !(self.mamba_fraction > 0.0 && self.mamba_fraction < 1.0) {
            return bad("mamba_fraction must lie strictly between 0 and 1".into());
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return bad("encoder_channels must be non-empty and positive".into());
        }
        let cols = self.columns();
        let p = self.embed_position;
        if (p.feeds_b() && !cols.feeds_b()) || (p.feeds_c() && !cols.feeds_c()) || (p.feeds_delta() && !cols.feeds_delta()) {
            return bad(format!("embed_position '{p}' is not covered by embed_columns '{cols}'"));
        }
        for level in 0..=self.levels() {
            let c = self.channels_at(level);
            if !c.is_multiple_of(2) {
                return bad(format!("level {level} has an odd channel count {c}"));
            }
            let spec = self.block_spec(level, 0);
            if spec.mamba.dim == 0 || spec.swin.dim == 0 {
                return bad(format!("level {level}: channel split leaves a branch empty"));
            }
            if !spec.swin.dim.is_multiple_of(self.head_dim) {
                return bad(format!("level {level}: attention width {} is not a multiple of head_dim {}", spec.swin.dim, self.head_dim));
            }
        }
        if !(self.dt_min > 0.0 && self.dt_max >= self.dt_min && self.dt_max.is_finite()) {
            return bad(format!("invalid dt range {}..{}", self.dt_min, self.dt_max));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
