use rand::Rng;

use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::nn::{crop, normal_tensor, pad_reflect, LayerNorm, Precision, Projection};
use crate::par;
use crate::tensor::{gelu, Tensor};
use crate::weights::{join, Parameters, WeightContainer, WeightReader};

#[derive(Clone, Debug, PartialEq)]
pub struct SwinSpec {
    pub dim: usize,
    pub head_dim: usize,
    pub window: usize,
    pub shift: bool,
    pub mlp_ratio: usize,
}

impl SwinSpec {
    pub fn heads(&self) -> usize {
        self.dim / self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.head_dim == 0 || self.window == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config("swin dims must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.head_dim) {
            return Err(Error::Config(format!("swin dim {} is not a multiple of head_dim {}", self.dim, self.head_dim)));
        }
        Ok(())
    }
}

/// `torch.roll` over the two spatial axes: pixel `(y, x)` moves to
/// `((y + dy) mod H, (x + dx) mod W)`.
pub fn roll(x: &Tensor, dy: isize, dx: isize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    let src = x.data();
    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        let ty = (y as isize + dy).rem_euclid(h as isize) as usize;
        for xx in 0..w {
            let tx = (xx as isize + dx).rem_euclid(w as isize) as usize;
            out[(ty * w + tx) * c..][..c].copy_from_slice(&src[(y * w + xx) * c..][..c]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// `[H x W x C] -> [nW x ws² x C]`; windows row-major, tokens row-major
/// inside each window.
pub fn window_partition(x: &Tensor, ws: usize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    if ws == 0 || h % ws != 0 || w % ws != 0 {
        return Err(Error::shape(format!("{h} x {w} is not a multiple of window {ws}")));
    }
    let (nh, nw) = (h / ws, w / ws);
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for wy in 0..nh {
        for wx in 0..nw {
            for ty in 0..ws {
                let row = (wy * ws + ty) * w + wx * ws;
                out.extend_from_slice(&src[row * c..(row + ws) * c]);
            }
        }
    }
    Tensor::new(vec![nh * nw, ws * ws, c], out)
}

/// Inverse of [`window_partition`].
pub fn window_reverse(windows: &Tensor, ws: usize, h: usize, w: usize) -> Result<Tensor> {
    let [n, t, c] = *windows.dims() else {
        return Err(Error::shape("window_reverse expects [nW x T x C]"));
    };
    if ws == 0 || !h.is_multiple_of(ws) || !w.is_multiple_of(ws) || t != ws * ws || n != (h / ws) * (w / ws) {
        return Err(Error::shape(format!("{n} windows of {t} tokens do not tile {h} x {w}")));
    }
    let nw = w / ws;
    let src = windows.data();
    let mut out = vec![0f32; h * w * c];
    for (i, win) in src.chunks(t * c).enumerate() {
        let (wy, wx) = (i / nw, i % nw);
        for ty in 0..ws {
            let row = (wy * ws + ty) * w + wx * ws;
            out[row * c..(row + ws) * c].copy_from_slice(&win[ty * ws * c..(ty + 1) * ws * c]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Binarized window-attention block (pre-norm). Projections are binary;
/// scores, softmax and the attention-weighted sum stay full precision.
#[derive(Clone, Debug, PartialEq)]
pub struct BiSwinBlock {
    spec: SwinSpec,
    norm1: LayerNorm,
    qkv: Projection,
    rel_bias: Vec<f32>,
    proj: Projection,
    norm2: LayerNorm,
    fc1: Projection,
    fc2: Projection,
}

struct Layout {
    hp: usize,
    wp: usize,
    shift: usize,
}

impl BiSwinBlock {
    pub fn random(spec: SwinSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let (c, ws) = (spec.dim, spec.window);
        let hidden = c * spec.mlp_ratio;
        let b = Precision::Binary;
        let table = (2 * ws - 1) * (2 * ws - 1) * spec.heads();
        Ok(BiSwinBlock {
            norm1: LayerNorm::new(c),
            qkv: Projection::random(c, 3 * c, b, rng)?,
            rel_bias: normal_tensor(vec![table], 0.02, rng)?.into_data(),
            proj: Projection::random(c, c, b, rng)?,
            norm2: LayerNorm::new(c),
            fc1: Projection::random(c, hidden, b, rng)?,
            fc2: Projection::random(hidden, c, b, rng)?,
            spec,
        })
    }

    pub fn spec(&self) -> &SwinSpec {
        &self.spec
    }

    pub fn qkv_mut(&mut self) -> &mut Projection {
        &mut self.qkv
    }

    pub fn proj_mut(&mut self) -> &mut Projection {
        &mut self.proj
    }

    pub fn fc1_mut(&mut self) -> &mut Projection {
        &mut self.fc1
    }

    pub fn fc2_mut(&mut self) -> &mut Projection {
        &mut self.fc2
    }

    fn layout(&self, h: usize, w: usize) -> Layout {
        let ws = self.spec.window;
        let (hp, wp) = (h.div_ceil(ws) * ws, w.div_ceil(ws) * ws);
        let shift = if self.spec.shift && hp > ws && wp > ws { ws / 2 } else { 0 };
        Layout { hp, wp, shift }
    }

    /// Attention over every window: returns `[nW x T x C]` outputs and, when
    /// asked, the `[nW x heads x T x T]` probabilities.
    fn attend(&self, qkv: &Tensor, lay: &Layout, keep_probs: bool) -> Result<(Tensor, Option<Tensor>)> {
        let ws = self.spec.window;
        let t = ws * ws;
        let c = self.spec.dim;
        let nh = self.spec.heads();
        let dh = self.spec.head_dim;
        let n_win = qkv.dims()[0];
        let nw_x = lay.wp / ws;
        let scale = 1.0 / (dh as f32).sqrt();
        let span = 2 * ws - 1;
        let region = |v: usize, len: usize| {
            if v < len - ws {
                0
            } else if v < len - lay.shift {
                1
            } else {
                2
            }
        };
        let src = qkv.data();
        let results: Vec<(Vec<f32>, Vec<f32>)> = par::map_range(n_win, |wi| {
            let win = &src[wi * t * 3 * c..(wi + 1) * t * 3 * c];
            let (wy, wx) = (wi / nw_x, wi % nw_x);
            let label = |tok: usize| {
                let (ty, tx) = (wy * ws + tok / ws, wx * ws + tok % ws);
                region(ty, lay.hp) * 3 + region(tx, lay.wp)
            };
            let labels: Vec<usize> = (0..t).map(label).collect();
            let mut out = vec![0f32; t * c];
            let mut probs = if keep_probs { vec![0f32; nh * t * t] } else { Vec::new() };
            let mut row = vec![0f32; t];
            for hd in 0..nh {
                for i in 0..t {
                    let q = &win[i * 3 * c + hd * dh..][..dh];
                    let (iy, ix) = (i / ws, i % ws);
                    let mut max = f32::NEG_INFINITY;
                    for (j, r) in row.iter_mut().enumerate() {
                        if lay.shift > 0 && labels[i] != labels[j] {
                            *r = f32::NEG_INFINITY;
                            continue;
                        }
                        let k = &win[j * 3 * c + c + hd * dh..][..dh];
                        let dot: f32 = q.iter().zip(k).map(|(a, b)| a * b).sum();
                        let rel = (iy + ws - 1 - j / ws) * span + (ix + ws - 1 - j % ws);
                        *r = dot * scale + self.rel_bias[rel * nh + hd];
                        max = max.max(*r);
                    }
                    let mut sum = 0f32;
                    for r in row.iter_mut() {
                        *r = (*r - max).exp();
                        sum += *r;
                    }
                    let o = &mut out[i * c + hd * dh..][..dh];
                    for (j, r) in row.iter_mut().enumerate() {
                        *r /= sum;
                        if *r == 0.0 {
                            continue;
                        }
                        let v = &win[j * 3 * c + 2 * c + hd * dh..][..dh];
                        for (oe, ve) in o.iter_mut().zip(v) {
                            *oe += *r * ve;
                        }
                    }
                    if keep_probs {
                        probs[(hd * t + i) * t..][..t].copy_from_slice(&row);
                    }
                }
            }
            (out, probs)
        });
        let mut out = Vec::with_capacity(n_win * t * c);
        let mut probs = Vec::new();
        for (o, p) in results {
            out.extend(o);
            probs.extend(p);
        }
        let out = Tensor::new(vec![n_win, t, c], out)?;
        out.check_finite("window attention")?;
        let probs = if keep_probs { Some(Tensor::new(vec![n_win, nh, t, t], probs)?) } else { None };
        Ok((out, probs))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (h, w, c) = x.hwc()?;
        if c != self.spec.dim {
            return Err(Error::shape(format!("bi_swin expects {} channels, got {c}", self.spec.dim)));
        }
        x.check_finite("bi_swin input")?;
        Ok((h, w))
    }

    fn windows_qkv(&self, x: &Tensor, lay: &Layout) -> Result<Tensor> {
        let (h, w, _) = x.hwc()?;
        let xn = self.norm1.forward(x)?;
        let padded = pad_reflect(&xn, 0, lay.hp - h, 0, lay.wp - w)?;
        let s = lay.shift as isize;
        let shifted = if s > 0 { roll(&padded, -s, -s)? } else { padded };
        self.qkv.forward(&window_partition(&shifted, self.spec.window)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.check_input(x)?;
        let lay = self.layout(h, w);
        let qkv = self.windows_qkv(x, &lay)?;
        let (att, _) = self.attend(&qkv, &lay, false)?;
        let merged = window_reverse(&self.proj.forward(&att)?, self.spec.window, lay.hp, lay.wp)?;
        let s = lay.shift as isize;
        let unshifted = if s > 0 { roll(&merged, s, s)? } else { merged };
        let x1 = x.add(&crop(&unshifted, 0, 0, h, w)?)?;
        let hidden = self.fc1.forward(&self.norm2.forward(&x1)?)?.map(gelu);
        let y = x1.add(&self.fc2.forward(&hidden)?)?;
        y.check_finite("bi_swin")?;
        Ok(y)
    }

    /// Attention probabilities `[nW x heads x T x T]` for input `x`.
    pub fn attention_probs(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.check_input(x)?;
        let lay = self.layout(h, w);
        let qkv = self.windows_qkv(x, &lay)?;
        Ok(self.attend(&qkv, &lay, true)?.1.expect("probabilities requested"))
    }

    pub fn cost(&self, name: &str, h: usize, w: usize, report: &mut CostReport) -> Result<()> {
        let lay = self.layout(h, w);
        let n = lay.hp * lay.wp;
        let t = (self.spec.window * self.spec.window) as u64;
        let c = self.spec.dim as u64;
        let hidden = self.fc1.out_dim() as u64;
        let (n64, l64) = (n as u64, (h * w) as u64);
        self.norm1.cost(&join(name, "norm1"), h * w, report);
        self.qkv.cost(&join(name, "qkv"), n, report);
        report.push_params(join(name, "rel_bias"), self.rel_bias.len());
        // scores and weighted sum (MAC = 2 each), scale + bias + softmax
        let heads = self.spec.heads() as u64;
        report.push_functional(join(name, "attention"), 4 * n64 * t * c + 5 * n64 * t * heads);
        self.proj.cost(&join(name, "proj"), n, report);
        self.norm2.cost(&join(name, "norm2"), h * w, report);
        self.fc1.cost(&join(name, "fc1"), h * w, report);
        report.push_functional(join(name, "gelu"), 8 * l64 * hidden);
        self.fc2.cost(&join(name, "fc2"), h * w, report);
        report.push_functional(join(name, "residual"), 2 * l64 * c);
        Ok(())
    }
}

impl Parameters for BiSwinBlock {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        self.norm1.export(&join(prefix, "norm1"), out)?;
        self.qkv.export(&join(prefix, "qkv"), out)?;
        out.insert_f32(join(prefix, "rel_bias"), vec![self.rel_bias.len()], self.rel_bias.clone())?;
        self.proj.export(&join(prefix, "proj"), out)?;
        self.norm2.export(&join(prefix, "norm2"), out)?;
        self.fc1.export(&join(prefix, "fc1"), out)?;
        self.fc2.export(&join(prefix, "fc2"), out)
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        self.norm1.import(&join(prefix, "norm1"), src)?;
        self.qkv.import(&join(prefix, "qkv"), src)?;
        crate::nn::import_vec(prefix, "rel_bias", &mut self.rel_bias, src)?;
        self.proj.import(&join(prefix, "proj"), src)?;
        self.norm2.import(&join(prefix, "norm2"), src)?;
        self.fc1.import(&join(prefix, "fc1"), src)?;
        self.fc2.import(&join(prefix, "fc2"), src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    fn spec(dim: usize, window: usize, shift: bool) -> SwinSpec {
        SwinSpec { dim, head_dim: 2, window, shift, mlp_ratio: 2 }
    }

    #[test]
    fn roll_moves_pixels() {
        let x = Tensor::from_fn(vec![2, 3, 1], |i| i as f32).unwrap();
        let r = roll(&x, 1, -1).unwrap();
        assert_eq!(r.at(&[1, 0, 0]), x.at(&[0, 1, 0]));
        assert_eq!(roll(&r, -1, 1).unwrap(), x);
    }

    #[test]
    fn single_token_window_is_finite() {
        let mut rng = seeded_rng(5);
        let b = BiSwinBlock::random(spec(4, 1, false), &mut rng).unwrap();
        let x = normal_tensor(vec![1, 1, 4], 1.0, &mut rng).unwrap();
        let p = b.attention_probs(&x).unwrap();
        assert_eq!(p.data(), &[1.0, 1.0]);
        let y = b.forward(&x).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shifted_mask_blocks_cross_region_pairs() {
        let mut rng = seeded_rng(6);
        let b = BiSwinBlock::random(spec(4, 4, true), &mut rng).unwrap();
        let x = normal_tensor(vec![8, 8, 4], 1.0, &mut rng).unwrap();
        let p = b.attention_probs(&x).unwrap();
        // last window straddles the wrap-around: token 0 sits in region (1, 1),
        // token 15 in region (2, 2)
        assert_eq!(p.at(&[3, 0, 0, 15]), 0.0);
        assert!(p.at(&[0, 0, 0, 15]) > 0.0);
    }

    #[test]
    fn non_multiple_sizes_are_padded_and_cropped() {
        let mut rng = seeded_rng(7);
        let b = BiSwinBlock::random(spec(4, 4, true), &mut rng).unwrap();
        let x = normal_tensor(vec![6, 9, 4], 1.0, &mut rng).unwrap();
        assert_eq!(b.forward(&x).unwrap().dims(), &[6, 9, 4]);
    }
}
