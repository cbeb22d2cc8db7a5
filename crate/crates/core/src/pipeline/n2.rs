use rand::Rng;

use crate::binary::ConvGeometry;
use crate::blocks::{BmtBlock, BmtProbe, EmbedPosition};
use crate::cost::{self, ConvCostShape, CostReport};
use crate::error::{Error, Result};
use crate::nn::{crop, normal_tensor, pad_reflect, pixel_shuffle, pixel_unshuffle, Conv2d};
use crate::pipeline::ModelConfig;
use crate::tensor::Tensor;
use crate::weights::{join, Parameters, WeightContainer, WeightReader};

/// U-shaped demosaicing network built from BMT blocks.
///
/// Each encoder level is followed by a full-precision conv that halves the
/// channels and a pixel-unshuffle; the decoder mirrors it with a conv that
/// doubles the channels, a pixel-shuffle, and a 1x1 conv merging the skip.
#[derive(Clone, Debug, PartialEq)]
pub struct MainNet {
    conv_in: Conv2d,
    enc: Vec<Vec<BmtBlock>>,
    down: Vec<Conv2d>,
    mid: Vec<BmtBlock>,
    up: Vec<Conv2d>,
    merge: Vec<Conv2d>,
    dec: Vec<Vec<BmtBlock>>,
    conv_out: Conv2d,
}

fn stack(cfg: &ModelConfig, level: usize, depth: usize, rng: &mut impl Rng) -> Result<Vec<BmtBlock>> {
    (0..depth).map(|j| BmtBlock::random(cfg.block_spec(level, j), rng)).collect()
}

fn run_stack(blocks: &[BmtBlock], mut x: Tensor, g: &[f32], pos: EmbedPosition) -> Result<Tensor> {
    for b in blocks {
        x = b.forward(&x, g, pos)?;
    }
    Ok(x)
}

impl MainNet {
    pub fn random(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let levels = cfg.levels();
        let g3 = ConvGeometry::new(3, 1, 1);
        let k = cfg.updown_kernel;
        let gk = ConvGeometry::new(k, 1, k / 2);
        let c0 = cfg.base_channels;
        let conv_in = Conv2d::random(1, c0, g3, rng)?;
        let mut enc = Vec::with_capacity(levels);
        let mut down = Vec::with_capacity(levels);
        for (i, &d) in cfg.encoder_depths.iter().enumerate() {
            let c = cfg.channels_at(i);
            enc.push(stack(cfg, i, d, rng)?);
            down.push(Conv2d::random(c, c / 2, gk, rng)?);
        }
        let mid = stack(cfg, levels, cfg.mid_depth, rng)?;
        let mut up = Vec::with_capacity(levels);
        let mut merge = Vec::with_capacity(levels);
        let mut dec = Vec::with_capacity(levels);
        for i in 0..levels {
            let c = cfg.channels_at(i);
            up.push(Conv2d::random(2 * c, 4 * c, gk, rng)?);
            merge.push(Conv2d::random(2 * c, c, ConvGeometry::new(1, 1, 0), rng)?);
            dec.push(stack(cfg, i, cfg.decoder_depths[levels - 1 - i], rng)?);
        }
        // Small output weights around mid-grey keep an untrained network's
        // output mostly inside the clamp range.
        let w_out = normal_tensor(vec![3, c0, 3, 3], 0.1 / ((9 * c0) as f32).sqrt(), rng)?;
        let conv_out = Conv2d::new(w_out, vec![0.5; 3], g3)?;
        Ok(MainNet { conv_in, enc, down, mid, up, merge, dec, conv_out })
    }

    pub fn levels(&self) -> usize {
        self.enc.len()
    }

    pub fn size_multiple(&self) -> usize {
        1 << self.levels()
    }

    /// Every block, encoder first, then the bottleneck, then the decoder
    /// from the deepest level up.
    pub fn blocks(&self) -> Vec<&BmtBlock> {
        let mut out: Vec<&BmtBlock> = self.enc.iter().flatten().collect();
        out.extend(self.mid.iter());
        for d in self.dec.iter().rev() {
            out.extend(d.iter());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut BmtBlock> {
        let mut out: Vec<&mut BmtBlock> = self.enc.iter_mut().flatten().collect();
        out.extend(self.mid.iter_mut());
        for d in self.dec.iter_mut().rev() {
            out.extend(d.iter_mut());
        }
        out
    }

    fn padded(&self, x: &Tensor) -> Result<(Tensor, usize, usize)> {
        let (h, w, c) = x.hwc()?;
        if c != 1 {
            return Err(Error::shape(format!("main network expects single-channel RAW, got {c} channels")));
        }
        let m = self.size_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        Ok((pad_reflect(x, 0, ph - h, 0, pw - w)?, h, w))
    }

    /// Unclamped `H x W x 3` output.
    pub fn forward(&self, x: &Tensor, g: &[f32], pos: EmbedPosition) -> Result<Tensor> {
        x.check_finite("main network input")?;
        let (xp, h, w) = self.padded(x)?;
        let mut f = self.conv_in.forward(&xp)?;
        let mut skips = Vec::with_capacity(self.levels());
        for (blocks, down) in self.enc.iter().zip(&self.down) {
            f = run_stack(blocks, f, g, pos)?;
            let next = pixel_unshuffle(&down.forward(&f)?, 2)?;
            skips.push(f);
            f = next;
        }
        f = run_stack(&self.mid, f, g, pos)?;
        for i in (0..self.levels()).rev() {
            let upsampled = pixel_shuffle(&self.up[i].forward(&f)?, 2)?;
            f = self.merge[i].forward(&Tensor::concat_last(&[&upsampled, &skips[i]])?)?;
            f = run_stack(&self.dec[i], f, g, pos)?;
        }
        let out = self.conv_out.forward(&f)?;
        crop(&out, 0, 0, h, w)
    }

    /// Branch activations of the first block.
    pub fn first_block_probe(&self, x: &Tensor, g: &[f32], pos: EmbedPosition) -> Result<BmtProbe> {
        let block =
            self.enc.first().and_then(|b| b.first()).ok_or_else(|| Error::Config("the first encoder level has no blocks".into()))?;
        let (xp, _, _) = self.padded(x)?;
        let f = self.conv_in.forward(&xp)?;
        let (_, probe) = block.forward_probed(&f, g, pos, true)?;
        Ok(probe.expect("probe requested"))
    }

    pub fn cost(&self, name: &str, h: usize, w: usize, report: &mut CostReport) -> Result<()> {
        let m = self.size_multiple();
        let (mut lh, mut lw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let conv = |c: &Conv2d, p: String, hw: usize, report: &mut CostReport| {
            let g = c.geometry();
            report.push(cost::conv_row(
                p,
                &ConvCostShape {
                    c_in: c.in_channels(),
                    c_out: c.out_channels(),
                    kernel: g.kernel,
                    groups: g.groups,
                    in_pixels: hw,
                    out_pixels: hw,
                },
                true,
            ));
        };
        let mut dims = Vec::with_capacity(self.levels() + 1);
        conv(&self.conv_in, join(name, "conv_in"), lh * lw, report);
        for (i, (blocks, down)) in self.enc.iter().zip(&self.down).enumerate() {
            dims.push((lh, lw));
            for (j, b) in blocks.iter().enumerate() {
                b.cost(&join(name, &format!("enc{i}.{j}")), lh, lw, report)?;
            }
            conv(down, join(name, &format!("down{i}")), lh * lw, report);
            (lh, lw) = (lh / 2, lw / 2);
        }
        for (j, b) in self.mid.iter().enumerate() {
            b.cost(&join(name, &format!("mid.{j}")), lh, lw, report)?;
        }
        for i in (0..self.levels()).rev() {
            conv(&self.up[i], join(name, &format!("up{i}")), lh * lw, report);
            (lh, lw) = dims[i];
            conv(&self.merge[i], join(name, &format!("merge{i}")), lh * lw, report);
            for (j, b) in self.dec[i].iter().enumerate() {
                b.cost(&join(name, &format!("dec{i}.{j}")), lh, lw, report)?;
            }
        }
        conv(&self.conv_out, join(name, "conv_out"), lh * lw, report);
        Ok(())
    }
}

impl Parameters for MainNet {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        self.conv_in.export(&join(prefix, "conv_in"), out)?;
        for i in 0..self.levels() {
            for (j, b) in self.enc[i].iter().enumerate() {
                b.export(&join(prefix, &format!("enc{i}.{j}")), out)?;
            }
            self.down[i].export(&join(prefix, &format!("down{i}")), out)?;
        }
        for (j, b) in self.mid.iter().enumerate() {
            b.export(&join(prefix, &format!("mid.{j}")), out)?;
        }
        for i in 0..self.levels() {
            self.up[i].export(&join(prefix, &format!("up{i}")), out)?;
            self.merge[i].export(&join(prefix, &format!("merge{i}")), out)?;
            for (j, b) in self.dec[i].iter().enumerate() {
                b.export(&join(prefix, &format!("dec{i}.{j}")), out)?;
            }
        }
        self.conv_out.export(&join(prefix, "conv_out"), out)
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        self.conv_in.import(&join(prefix, "conv_in"), src)?;
        for i in 0..self.levels() {
            for (j, b) in self.enc[i].iter_mut().enumerate() {
                b.import(&join(prefix, &format!("enc{i}.{j}")), src)?;
            }
            self.down[i].import(&join(prefix, &format!("down{i}")), src)?;
        }
        for (j, b) in self.mid.iter_mut().enumerate() {
            b.import(&join(prefix, &format!("mid.{j}")), src)?;
        }
        for i in 0..self.levels() {
            self.up[i].import(&join(prefix, &format!("up{i}")), src)?;
            self.merge[i].import(&join(prefix, &format!("merge{i}")), src)?;
            for (j, b) in self.dec[i].iter_mut().enumerate() {
                b.import(&join(prefix, &format!("dec{i}.{j}")), src)?;
            }
        }
        self.conv_out.import(&join(prefix, "conv_out"), src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    #[test]
    fn odd_sizes_are_padded_and_cropped() {
        let cfg = ModelConfig::compact();
        let net = MainNet::random(&cfg, &mut seeded_rng(1)).unwrap();
        let g = vec![0.1; cfg.embed_dim];
        let x = Tensor::from_fn(vec![7, 10, 1], |i| (i % 3) as f32 / 3.0).unwrap();
        let y = net.forward(&x, &g, EmbedPosition::B).unwrap();
        assert_eq!(y.dims(), &[7, 10, 3]);
        let probe = net.first_block_probe(&x, &g, EmbedPosition::B).unwrap();
        assert_eq!(probe.mamba.dims(), &[8, 12, 4]);
    }
}
