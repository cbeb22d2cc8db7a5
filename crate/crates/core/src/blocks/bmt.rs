use rand::Rng;

use crate::blocks::{BiMambaBlock, BiSwinBlock, EmbedPosition, MambaSpec, Probe, SwinSpec};
use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::nn::{Precision, Projection};
use crate::par;
use crate::tensor::Tensor;
use crate::weights::{join, Parameters, WeightContainer, WeightReader};

/// The first `mamba.dim` channels go to the Mamba branch, the remaining
/// `swin.dim` to the attention branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BmtSpec {
    pub mamba: MambaSpec,
    pub swin: SwinSpec,
}

impl BmtSpec {
    pub fn dim(&self) -> usize {
        self.mamba.dim + self.swin.dim
    }
}

/// Pre-fusion activations of one block.
#[derive(Clone, Debug)]
pub struct BmtProbe {
    pub mamba: Tensor,
    pub swin: Tensor,
    pub fused: Tensor,
    pub mamba_inner: Probe,
}

/// Two-branch block: `y = x + fuse([mamba(x_a), swin(x_b)])`.
#[derive(Clone, Debug, PartialEq)]
pub struct BmtBlock {
    mamba: BiMambaBlock,
    swin: BiSwinBlock,
    fuse: Projection,
}

impl BmtBlock {
    pub fn random(spec: BmtSpec, rng: &mut impl Rng) -> Result<Self> {
        let c = spec.dim();
        let mamba = BiMambaBlock::random(spec.mamba, rng)?;
        let swin = BiSwinBlock::random(spec.swin, rng)?;
        let fuse = Projection::random(c, c, Precision::Binary, rng)?;
        Ok(BmtBlock { mamba, swin, fuse })
    }

    pub fn dim(&self) -> usize {
        self.fuse.in_dim()
    }

    pub fn mamba(&self) -> &BiMambaBlock {
        &self.mamba
    }

    pub fn mamba_mut(&mut self) -> &mut BiMambaBlock {
        &mut self.mamba
    }

    pub fn swin(&self) -> &BiSwinBlock {
        &self.swin
    }

    pub fn swin_mut(&mut self) -> &mut BiSwinBlock {
        &mut self.swin
    }

    pub fn fuse_mut(&mut self) -> &mut Projection {
        &mut self.fuse
    }

    pub fn forward(&self, x: &Tensor, g: &[f32], pos: EmbedPosition) -> Result<Tensor> {
        Ok(self.forward_probed(x, g, pos, false)?.0)
    }

    pub fn forward_probed(&self, x: &Tensor, g: &[f32], pos: EmbedPosition, keep: bool) -> Result<(Tensor, Option<BmtProbe>)> {
        let c = x.last_dim();
        if c % 2 != 0 {
            return Err(Error::shape(format!("bmt block needs an even channel count, got {c}")));
        }
        if c != self.dim() {
            return Err(Error::shape(format!("bmt block expects {} channels, got {c}", self.dim())));
        }
        let ca = self.mamba.spec().dim;
        let xa = x.narrow_last(0, ca)?;
        let xb = x.narrow_last(ca, c - ca)?;
        let mut inner = Probe::new();
        let (a, b) = par::join(|| self.mamba.forward_probed(&xa, g, pos, keep.then_some(&mut inner)), || self.swin.forward(&xb));
        let (a, b) = (a?, b?);
        let fused = self.fuse.forward(&Tensor::concat_last(&[&a, &b])?)?;
        let y = x.add(&fused)?;
        y.check_finite("bmt")?;
        let probe = keep.then_some(BmtProbe { mamba: a, swin: b, fused, mamba_inner: inner });
        Ok((y, probe))
    }

    pub fn cost(&self, name: &str, h: usize, w: usize, report: &mut CostReport) -> Result<()> {
        self.mamba.cost(&join(name, "mamba"), h, w, report)?;
        self.swin.cost(&join(name, "swin"), h, w, report)?;
        self.fuse.cost(&join(name, "fuse"), h * w, report);
        report.push_functional(join(name, "residual"), (h * w * self.dim()) as u64);
        Ok(())
    }
}

impl Parameters for BmtBlock {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        self.mamba.export(&join(prefix, "mamba"), out)?;
        self.swin.export(&join(prefix, "swin"), out)?;
        self.fuse.export(&join(prefix, "fuse"), out)
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        self.mamba.import(&join(prefix, "mamba"), src)?;
        self.swin.import(&join(prefix, "swin"), src)?;
        self.fuse.import(&join(prefix, "fuse"), src)
    }
}
