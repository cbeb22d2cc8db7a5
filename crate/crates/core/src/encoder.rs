//! Compact binarized encoder that summarizes a RAW frame as a fixed-length
//! global embedding.
//!
//! Four stride-2 binary convolutions, a per-pixel binary projection to
//! `embed_dim`, then global average pooling, so the embedding length does not
//! depend on the frame size. Weights are seeded random unless supplied; an
//! embedding computed elsewhere can be loaded from a file instead.

use std::path::Path;

use crate::binary::{bconv2d, sign_binarize_conv, BConvLayer, BiLinearLayer, ConvGeometry};
use crate::cost::{self, ConvCostShape, CostReport};
use crate::error::{Error, Result};
use crate::nn::{normal_tensor, seeded_rng};
use crate::tensor::Tensor;
use crate::weights::{join, Parameters, WeightContainer, WeightReader};

pub const DEFAULT_STAGE_CHANNELS: [usize; 4] = [16, 32, 64, 64];

/// Threshold applied to the RAW input of the first stage.
pub const INPUT_THRESHOLD: f32 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct VisualEncoder {
    stages: Vec<BConvLayer>,
    head: BiLinearLayer,
    frozen: bool,
}

impl VisualEncoder {
    /// Seeded random weights; the result is frozen.
    pub fn random(stage_channels: &[usize], embed_dim: usize, seed: u64) -> Result<Self> {
        if stage_channels.is_empty() || stage_channels.contains(&0) || embed_dim == 0 {
            return Err(Error::Config("encoder channels and embed_dim must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut stages = Vec::with_capacity(stage_channels.len());
        let mut c_in = 1;
        for &c_out in stage_channels {
            let w = normal_tensor(vec![c_out, c_in, 3, 3], 1.0, &mut rng)?;
            let mut layer = sign_binarize_conv(&w, ConvGeometry::new(3, 2, 1))?;
            if stages.is_empty() {
                layer.set_threshold(vec![INPUT_THRESHOLD; c_in])?;
            }
            stages.push(layer);
            c_in = c_out;
        }
        let hw = normal_tensor(vec![embed_dim, c_in], 1.0 / (c_in as f32).sqrt(), &mut rng)?;
        let head = BiLinearLayer::from_float(&hw, vec![0.0; c_in])?;
        Ok(VisualEncoder { stages, head, frozen: true })
    }

    pub fn embed_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    fn check_mutable(&self) -> Result<()> {
        if self.frozen {
            Err(Error::Frozen)
        } else {
            Ok(())
        }
    }

    /// Replaces the projection head. Fails on a frozen encoder.
    pub fn set_head(&mut self, head: BiLinearLayer) -> Result<()> {
        self.check_mutable()?;
        if head.in_dim() != self.head.in_dim() {
            return Err(Error::shape("encoder head input width differs"));
        }
        self.head = head;
        Ok(())
    }

    pub fn encode(&self, raw: &Tensor) -> Result<Vec<f32>> {
        let (_, _, c) = raw.hwc()?;
        if c != 1 {
            return Err(Error::shape(format!("encoder expects single-channel RAW, got {c} channels")));
        }
        raw.check_finite("encoder input")?;
        let mut x = raw.clone();
        for s in &self.stages {
            x = bconv2d(s, &x)?;
        }
        let feats = self.head.forward(&x)?;
        let n = feats.rows() as f32;
        let mut g = vec![0f32; self.embed_dim()];
        for row in feats.data().chunks(self.embed_dim()) {
            for (a, v) in g.iter_mut().zip(row) {
                *a += v;
            }
        }
        for v in &mut g {
            *v /= n;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder"));
        }
        Ok(g)
    }

    pub fn cost(&self, name: &str, h: usize, w: usize, report: &mut CostReport) -> Result<()> {
        let (mut ch, mut cw) = (h, w);
        for (i, s) in self.stages.iter().enumerate() {
            let g = s.geometry();
            let (oh, ow) = g.output_size(ch, cw)?;
            report.push(cost::bconv_row(
                join(name, &format!("stage{i}")),
                &ConvCostShape {
                    c_in: s.in_channels(),
                    c_out: s.out_channels(),
                    kernel: g.kernel,
                    groups: g.groups,
                    in_pixels: ch * cw,
                    out_pixels: oh * ow,
                },
            ));
            (ch, cw) = (oh, ow);
        }
        let rows = ch * cw;
        report.push(cost::bi_linear_row(join(name, "head"), self.head.in_dim(), self.head.out_dim(), rows));
        report.push_functional(join(name, "pool"), (rows * self.embed_dim()) as u64);
        Ok(())
    }

    /// Builds an encoder from stored weights. The result is frozen.
    pub fn from_weights(stage_channels: &[usize], embed_dim: usize, prefix: &str, src: &mut WeightReader<'_>) -> Result<Self> {
        let mut enc = VisualEncoder::random(stage_channels, embed_dim, 0)?;
        enc.frozen = false;
        enc.import(prefix, src)?;
        enc.frozen = true;
        Ok(enc)
    }
}

impl Parameters for VisualEncoder {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        for (i, s) in self.stages.iter().enumerate() {
            s.export(&join(prefix, &format!("stage{i}")), out)?;
        }
        self.head.export(&join(prefix, "head"), out)
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        self.check_mutable()?;
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.import(&join(prefix, &format!("stage{i}")), src)?;
        }
        self.head.import(&join(prefix, "head"), src)
    }
}

/// Reads an embedding stored as raw little-endian f32 values.
pub fn load_external_embedding(path: impl AsRef<Path>, embed_dim: usize) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != embed_dim * 4 {
        return Err(Error::Format(format!(
            "{}: embedding file holds {} bytes, expected {} ({} f32 values)",
            path.display(),
            bytes.len(),
            embed_dim * 4,
            embed_dim
        )));
    }
    let g: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!("{}: non-finite embedding values", path.display())));
    }
    Ok(g)
}

pub fn save_embedding(path: impl AsRef<Path>, g: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = g.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_length_is_size_independent() {
        let enc = VisualEncoder::random(&DEFAULT_STAGE_CHANNELS, 64, 1).unwrap();
        for n in [1usize, 7, 64] {
            let raw = Tensor::from_fn(vec![n, n, 1], |i| (i % 5) as f32 / 4.0).unwrap();
            assert_eq!(enc.encode(&raw).unwrap().len(), 64);
        }
        assert!(enc.encode(&Tensor::zeros(vec![4, 4, 3]).unwrap()).is_err());
    }

    #[test]
    fn frozen_rejects_mutation() {
        let mut enc = VisualEncoder::random(&[4, 4], 8, 1).unwrap();
        let mut c = WeightContainer::new();
        enc.export("e", &mut c).unwrap();
        let mut r = WeightReader::new(&c);
        assert!(matches!(enc.import("e", &mut r), Err(Error::Frozen)));
        let head = BiLinearLayer::from_float(&Tensor::full(vec![8, 4], 1.0).unwrap(), vec![0.0; 4]).unwrap();
        assert!(matches!(enc.set_head(head.clone()), Err(Error::Frozen)));
        enc.set_frozen(false);
        enc.set_head(head).unwrap();
        let mut r = WeightReader::new(&c);
        let back = VisualEncoder::from_weights(&[4, 4], 8, "e", &mut r).unwrap();
        r.finish().unwrap();
        assert!(back.is_frozen());
    }

    #[test]
    fn external_embedding_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        save_embedding(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(load_external_embedding(&p, 3).unwrap(), vec![1.0, -2.0, 0.5]);
        assert!(load_external_embedding(&p, 4).is_err());
        let missing = dir.path().join("absent.bin");
        let err = load_external_embedding(&missing, 3).unwrap_err().to_string();
        assert!(err.contains("absent.bin"));
    }
}
