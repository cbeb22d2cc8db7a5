use rand::Rng;

use crate::binary::{bconv2d, BConvLayer, ConvGeometry};
use crate::cfa::EventMask;
use crate::cost::{self, ConvCostShape, CostReport, CostRow};
use crate::error::{Error, Result};
use crate::nn::{export_vec, import_vec, Conv2d, ConvProjection, Precision};
use crate::tensor::Tensor;
use crate::weights::{join, Parameters, WeightContainer, WeightReader};

/// Event-pixel inpainting network.
///
/// A full-precision stem, `depth` binary residual blocks
/// `f + amp ⊙ bconv(f)`, and a full-precision tail predicting a RAW
/// correction. Only pixels flagged in the event mask take the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintNet {
    head: Conv2d,
    blocks: Vec<BConvLayer>,
    amp: Vec<Vec<f32>>,
    tail: Conv2d,
}

impl InpaintNet {
    pub fn random(channels: usize, depth: usize, rng: &mut impl Rng) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("inpainting width must be positive".into()));
        }
        let g = ConvGeometry::new(3, 1, 1);
        let head = Conv2d::random(1, channels, g, rng)?;
        let mut blocks = Vec::with_capacity(depth);
        for _ in 0..depth {
            match ConvProjection::random(channels, channels, g, Precision::Binary, rng)? {
                ConvProjection::Binary(l) => blocks.push(l),
                ConvProjection::Float(_) => unreachable!(),
            }
        }
        let tail = Conv2d::random(channels, 1, g, rng)?;
        Ok(InpaintNet { head, blocks, amp: vec![vec![1.0; channels]; depth], tail })
    }

    pub fn channels(&self) -> usize {
        self.head.out_channels()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Zeroes the tail so the prediction equals the input RAW.
    pub fn zero_tail(&mut self) -> Result<()> {
        let g = self.tail.geometry();
        let w = Tensor::zeros(self.tail.weight().dims().to_vec())?;
        self.tail = Conv2d::new(w, vec![0.0; 1], g)?;
        Ok(())
    }

    /// Unmasked prediction `raw + tail(features)`.
    pub fn predict(&self, raw: &Tensor) -> Result<Tensor> {
        let (_, _, c) = raw.hwc()?;
        if c != 1 {
            return Err(Error::shape(format!("inpainting expects single-channel RAW, got {c} channels")));
        }
        let mut f = self.head.forward(raw)?;
        for (layer, amp) in self.blocks.iter().zip(&self.amp) {
            let r = bconv2d(layer, &f)?;
            let ch = amp.len();
            for (i, (v, d)) in f.data_mut().iter_mut().zip(r.data()).enumerate() {
                *v += amp[i % ch] * d;
            }
        }
        let pred = raw.add(&self.tail.forward(&f)?)?;
        pred.check_finite("inpainting")?;
        Ok(pred)
    }

    /// Replaces event pixels by the prediction; all other pixels pass through.
    pub fn forward(&self, raw: &Tensor, mask: &EventMask) -> Result<Tensor> {
        let (h, w, _) = raw.hwc()?;
        if (mask.height(), mask.width()) != (h, w) {
            return Err(Error::shape(format!("mask is {} x {} but RAW is {h} x {w}", mask.height(), mask.width())));
        }
        if mask.count() == 0 {
            return Ok(raw.clone());
        }
        let pred = self.predict(raw)?;
        let mut out = raw.clone();
        for ((o, p), &m) in out.data_mut().iter_mut().zip(pred.data()).zip(mask.bits()) {
            if m {
                *o = *p;
            }
        }
        Ok(out)
    }

    pub fn cost(&self, name: &str, h: usize, w: usize, report: &mut CostReport) {
        let shape = |c_in, c_out| ConvCostShape { c_in, c_out, kernel: 3, groups: 1, in_pixels: h * w, out_pixels: h * w };
        let c = self.channels();
        report.push(cost::conv_row(join(name, "head"), &shape(1, c), true));
        for i in 0..self.depth() {
            let b = join(name, &format!("block{i}"));
            report.push(cost::bconv_row(join(&b, "conv"), &shape(c, c)));
            report.push(CostRow { name: join(&b, "amp"), float_params: c as u64, float_ops: (h * w * c) as u64, ..CostRow::default() });
            report.push_functional(join(&b, "residual"), (h * w * c) as u64);
        }
        report.push(cost::conv_row(join(name, "tail"), &shape(c, 1), true));
        report.push_functional(join(name, "blend"), (2 * h * w) as u64);
    }
}

impl Parameters for InpaintNet {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        self.head.export(&join(prefix, "head"), out)?;
        for (i, (b, a)) in self.blocks.iter().zip(&self.amp).enumerate() {
            let p = join(prefix, &format!("block{i}"));
            b.export(&join(&p, "conv"), out)?;
            export_vec(&p, "amp", a, out)?;
        }
        self.tail.export(&join(prefix, "tail"), out)
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        self.head.import(&join(prefix, "head"), src)?;
        for (i, (b, a)) in self.blocks.iter_mut().zip(&mut self.amp).enumerate() {
            let p = join(prefix, &format!("block{i}"));
            b.import(&join(&p, "conv"), src)?;
            import_vec(&p, "amp", a, src)?;
        }
        self.tail.import(&join(prefix, "tail"), src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    #[test]
    fn only_event_pixels_change() {
        let net = InpaintNet::random(8, 2, &mut seeded_rng(3)).unwrap();
        let raw = Tensor::from_fn(vec![8, 8, 1], |i| (i % 7) as f32 / 7.0).unwrap();
        let mask = EventMask::from_fn(8, 8, |y, x| y == 2 && x % 3 == 0);
        let out = net.forward(&raw, &mask).unwrap();
        let mut changed = 0;
        for (i, (a, b)) in out.data().iter().zip(raw.data()).enumerate() {
            if mask.bits()[i] {
                changed += (a != b) as usize;
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(changed > 0);
        assert!(net.forward(&raw, &EventMask::empty(4, 8)).is_err());
    }

    #[test]
    fn zero_tail_is_identity() {
        let mut net = InpaintNet::random(4, 1, &mut seeded_rng(0)).unwrap();
        net.zero_tail().unwrap();
        let raw = Tensor::from_fn(vec![4, 5, 1], |i| i as f32 * 0.05).unwrap();
        let mask = EventMask::from_fn(4, 5, |_, _| true);
        assert_eq!(net.forward(&raw, &mask).unwrap(), raw);
    }
}
