//! Full-precision layers, spatial helpers, and the binary/float projection
//! wrappers the blocks are built from.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binary::{bconv2d, sign_binarize_conv, BConvLayer, BiLinearLayer, ConvGeometry};
use crate::cost::{self, ConvCostShape, CostReport};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{layer_norm, Tensor};
use crate::weights::{join, Parameters, WeightContainer, WeightReader, WeightTensor};

pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tensor of i.i.d. `N(0, std²)` draws.
pub fn normal_tensor(dims: Vec<usize>, std: f32, rng: &mut impl Rng) -> Result<Tensor> {
    let n = Normal::new(0.0f32, std).map_err(|e| Error::InvalidValue(e.to_string()))?;
    Tensor::from_fn(dims, |_| n.sample(rng))
}

/// Whether a layer is binarized or kept full precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Binary,
    Float,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Vec<f32>>,
}

impl Linear {
    /// `weight` is `[out x in]`.
    pub fn new(weight: Tensor, bias: Option<Vec<f32>>) -> Result<Self> {
        let [out, _] = *weight.dims() else {
            return Err(Error::shape(format!("linear weight must be 2-D, got {:?}", weight.shape())));
        };
        if bias.as_ref().is_some_and(|b| b.len() != out) {
            return Err(Error::shape("linear bias length differs from output size"));
        }
        weight.check_finite("linear weight")?;
        Ok(Linear { weight, bias })
    }

    pub fn random(c_in: usize, c_out: usize, bias: bool, rng: &mut impl Rng) -> Result<Self> {
        let w = normal_tensor(vec![c_out, c_in], 1.0 / (c_in as f32).sqrt(), rng)?;
        Linear::new(w, bias.then(|| vec![0.0; c_out]))
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (cin, cout) = (self.in_dim(), self.out_dim());
        if x.last_dim() != cin {
            return Err(Error::shape(format!("linear expects {cin} inputs, got {:?}", x.shape())));
        }
        x.check_finite("linear input")?;
        let src = x.data();
        let w = self.weight.data();
        let mut out = vec![0f32; x.rows() * cout];
        let rows_per_task = (4096 / cout).max(1);
        par::for_each_chunk_mut(&mut out, rows_per_task * cout, |task, chunk| {
            for (i, row_out) in chunk.chunks_mut(cout).enumerate() {
                let r = task * rows_per_task + i;
                let xr = &src[r * cin..(r + 1) * cin];
                for (o, y) in row_out.iter_mut().enumerate() {
                    let wr = &w[o * cin..(o + 1) * cin];
                    let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
                    for (a, b) in xr.iter().zip(wr) {
                        acc += a * b;
                    }
                    *y = acc;
                }
            }
        });
        let out = Tensor::from_rows(x.lead_dims(), cout, out)?;
        out.check_finite("linear")?;
        Ok(out)
    }
}

/// Full-precision 2-D convolution over `H x W x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    weight: Tensor,
    bias: Vec<f32>,
    geom: ConvGeometry,
    // [group][tap][ci][o_in_group]
    packed: Vec<f32>,
}

impl Conv2d {
    /// `weight` is `[C_out x C_in/groups x k x k]`.
    pub fn new(weight: Tensor, bias: Vec<f32>, geom: ConvGeometry) -> Result<Self> {
        let [c_out, cg, kh, kw] = *weight.dims() else {
            return Err(Error::shape(format!("conv weight must be 4-D, got {:?}", weight.shape())));
        };
        if kh != geom.kernel || kw != geom.kernel {
            return Err(Error::shape("conv kernel does not match geometry"));
        }
        geom.validate(cg * geom.groups, c_out)?;
        if bias.len() != c_out {
            return Err(Error::shape("conv bias length differs from output channels"));
        }
        weight.check_finite("conv weight")?;
        let kk = kh * kw;
        let og = c_out / geom.groups;
        let mut packed = vec![0f32; weight.len()];
        let w = weight.data();
        for o in 0..c_out {
            let (g, oo) = (o / og, o % og);
            for ci in 0..cg {
                for tap in 0..kk {
                    packed[((g * kk + tap) * cg + ci) * og + oo] = w[(o * cg + ci) * kk + tap];
                }
            }
        }
        Ok(Conv2d { weight, bias, geom, packed })
    }

    pub fn random(c_in: usize, c_out: usize, geom: ConvGeometry, rng: &mut impl Rng) -> Result<Self> {
        let cg = c_in / geom.groups.max(1);
        let fan_in = cg * geom.kernel * geom.kernel;
        let w = normal_tensor(vec![c_out, cg, geom.kernel, geom.kernel], 1.0 / (fan_in as f32).sqrt(), rng)?;
        Conv2d::new(w, vec![0.0; c_out], geom)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1] * self.geom.groups
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geom
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, c) = x.hwc()?;
        let c_in = self.in_channels();
        if c != c_in {
            return Err(Error::shape(format!("conv expects {c_in} channels, got {:?}", x.shape())));
        }
        x.check_finite("conv input")?;
        let (oh, ow) = self.geom.output_size(h, w)?;
        let c_out = self.out_channels();
        let groups = self.geom.groups;
        let (cg, og) = (c_in / groups, c_out / groups);
        let k = self.geom.kernel;
        let kk = k * k;
        let (stride, pad) = (self.geom.stride as isize, self.geom.padding as isize);
        let src = x.data();
        let mut out = vec![0f32; oh * ow * c_out];
        par::for_each_chunk_mut(&mut out, ow * c_out, |oy, row| {
            for ox in 0..ow {
                let acc = &mut row[ox * c_out..(ox + 1) * c_out];
                acc.copy_from_slice(&self.bias);
                for ky in 0..k {
                    let iy = oy as isize * stride + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize * stride + kx as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let tap = ky * k + kx;
                        let px = &src[(iy as usize * w + ix as usize) * c_in..][..c_in];
                        for g in 0..groups {
                            let accg = &mut acc[g * og..(g + 1) * og];
                            let wt = &self.packed[(g * kk + tap) * cg * og..][..cg * og];
                            for (ci, &v) in px[g * cg..(g + 1) * cg].iter().enumerate() {
                                for (a, &wv) in accg.iter_mut().zip(&wt[ci * og..(ci + 1) * og]) {
                                    *a += v * wv;
                                }
                            }
                        }
                    }
                }
            }
        });
        let out = Tensor::new(vec![oh, ow, c_out], out)?;
        out.check_finite("conv")?;
        Ok(out)
    }
}

/// Layer norm over the last axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gain: vec![1.0; dim], bias: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, x.dims().len() - 1, &self.gain, &self.bias)
    }

    pub fn cost(&self, name: &str, rows: usize, report: &mut CostReport) {
        report.push(cost::norm_row(name, self.dim(), rows));
    }
}

/// `[H x W x C·r²] -> [H·r x W·r x C]`; input channel `c·r² + dy·r + dx`
/// lands at offset `(dy, dx)` of output channel `c`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::shape(format!("{c} channels not divisible by {r}²")));
    }
    let co = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = x.data();
    let mut out = vec![0f32; oh * ow * co];
    for y in 0..h {
        for xx in 0..w {
            let px = &src[(y * w + xx) * c..][..c];
            for ch in 0..co {
                for dy in 0..r {
                    for dx in 0..r {
                        out[((y * r + dy) * ow + xx * r + dx) * co + ch] = px[ch * r * r + dy * r + dx];
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, co], out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::shape(format!("{h} x {w} not divisible by {r}")));
    }
    let (oh, ow, co) = (h / r, w / r, c * r * r);
    let src = x.data();
    let mut out = vec![0f32; oh * ow * co];
    for y in 0..oh {
        for xx in 0..ow {
            let px = &mut out[(y * ow + xx) * co..][..co];
            for ch in 0..c {
                for dy in 0..r {
                    for dx in 0..r {
                        px[ch * r * r + dy * r + dx] = src[((y * r + dy) * w + xx * r + dx) * c + ch];
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, co], out)
}

/// Mirror index without repeating the edge (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reflect-pads an `H x W x C` tensor by `(top, bottom, left, right)`.
pub fn pad_reflect(x: &Tensor, top: usize, bottom: usize, left: usize, right: usize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    let (oh, ow) = (h + top + bottom, w + left + right);
    let src = x.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        let sy = reflect_index(y as isize - top as isize, h);
        for xx in 0..ow {
            let sx = reflect_index(xx as isize - left as isize, w);
            out.extend_from_slice(&src[(sy * w + sx) * c..][..c]);
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// `H x W x C` window starting at `(y0, x0)`.
pub fn crop(x: &Tensor, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor> {
    let (sh, sw, c) = x.hwc()?;
    if y0 + h > sh || x0 + w > sw {
        return Err(Error::shape(format!("crop {h} x {w} at ({y0}, {x0}) exceeds {sh} x {sw}")));
    }
    let src = x.data();
    let mut out = Vec::with_capacity(h * w * c);
    for y in y0..y0 + h {
        out.extend_from_slice(&src[(y * sw + x0) * c..][..w * c]);
    }
    Tensor::new(vec![h, w, c], out)
}

/// A per-vector projection that is either binarized or full precision.
#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    Binary(BiLinearLayer),
    Float(Linear),
}

impl Projection {
    pub fn random(c_in: usize, c_out: usize, precision: Precision, rng: &mut impl Rng) -> Result<Self> {
        Ok(match precision {
            Precision::Binary => {
                let w = normal_tensor(vec![c_out, c_in], 1.0 / (c_in as f32).sqrt(), rng)?;
                Projection::Binary(BiLinearLayer::from_float(&w, vec![0.0; c_in])?)
            }
            Precision::Float => Projection::Float(Linear::random(c_in, c_out, true, rng)?),
        })
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Projection::Binary(l) => l.in_dim(),
            Projection::Float(l) => l.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Projection::Binary(l) => l.out_dim(),
            Projection::Float(l) => l.out_dim(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Projection::Binary(l) => l.forward(x),
            Projection::Float(l) => l.forward(x),
        }
    }

    /// Multiplies the output by `factor` (scales for a binary layer, weights
    /// and bias for a float one).
    pub fn scale_output(&mut self, factor: f32) -> Result<()> {
        match self {
            Projection::Binary(l) => {
                let s = l.scale().iter().map(|v| v * factor).collect();
                l.set_scale(s)
            }
            Projection::Float(l) => {
                let w = l.weight.map(|v| v * factor);
                let b = l.bias.as_ref().map(|b| b.iter().map(|v| v * factor).collect());
                *l = Linear::new(w, b)?;
                Ok(())
            }
        }
    }

    pub fn cost(&self, name: &str, rows: usize, report: &mut CostReport) {
        report.push(match self {
            Projection::Binary(l) => cost::bi_linear_row(name, l.in_dim(), l.out_dim(), rows),
            Projection::Float(l) => cost::linear_row(name, l.in_dim(), l.out_dim(), l.bias.is_some(), rows),
        });
    }
}

/// A convolution that is either binarized or full precision.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvProjection {
    Binary(BConvLayer),
    Float(Conv2d),
}

impl ConvProjection {
    pub fn random(c_in: usize, c_out: usize, geom: ConvGeometry, precision: Precision, rng: &mut impl Rng) -> Result<Self> {
        Ok(match precision {
            Precision::Binary => {
                let cg = c_in / geom.groups.max(1);
                let fan_in = cg * geom.kernel * geom.kernel;
                let w = normal_tensor(vec![c_out, cg, geom.kernel, geom.kernel], 1.0 / (fan_in as f32).sqrt(), rng)?;
                ConvProjection::Binary(sign_binarize_conv(&w, geom)?)
            }
            Precision::Float => ConvProjection::Float(Conv2d::random(c_in, c_out, geom, rng)?),
        })
    }

    pub fn geometry(&self) -> ConvGeometry {
        match self {
            ConvProjection::Binary(l) => l.geometry(),
            ConvProjection::Float(l) => l.geometry(),
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            ConvProjection::Binary(l) => l.in_channels(),
            ConvProjection::Float(l) => l.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            ConvProjection::Binary(l) => l.out_channels(),
            ConvProjection::Float(l) => l.out_channels(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            ConvProjection::Binary(l) => bconv2d(l, x),
            ConvProjection::Float(l) => l.forward(x),
        }
    }

    pub fn cost(&self, name: &str, in_hw: (usize, usize), report: &mut CostReport) -> Result<()> {
        let g = self.geometry();
        let (oh, ow) = g.output_size(in_hw.0, in_hw.1)?;
        let shape = ConvCostShape {
            c_in: self.in_channels(),
            c_out: self.out_channels(),
            kernel: g.kernel,
            groups: g.groups,
            in_pixels: in_hw.0 * in_hw.1,
            out_pixels: oh * ow,
        };
        report.push(match self {
            ConvProjection::Binary(_) => cost::bconv_row(name, &shape),
            ConvProjection::Float(_) => cost::conv_row(name, &shape, true),
        });
        Ok(())
    }
}

impl Parameters for BiLinearLayer {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        out.insert(join(prefix, "weight"), WeightTensor::Packed(self.weight().clone()))?;
        out.insert_f32(join(prefix, "scale"), vec![self.out_dim()], self.scale().to_vec())?;
        out.insert_f32(join(prefix, "threshold"), vec![self.in_dim()], self.threshold().to_vec())
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        let (i, o) = (self.in_dim(), self.out_dim());
        self.set_weight(src.bits(&join(prefix, "weight"), o, i)?)?;
        self.set_scale(src.f32(&join(prefix, "scale"), &[o])?)?;
        self.set_threshold(src.f32(&join(prefix, "threshold"), &[i])?)
    }
}

impl Parameters for BConvLayer {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        out.insert(join(prefix, "weight"), WeightTensor::Packed(self.weight().clone()))?;
        out.insert_f32(join(prefix, "scale"), vec![self.out_channels()], self.scale().to_vec())?;
        out.insert_f32(join(prefix, "threshold"), vec![self.in_channels()], self.threshold().to_vec())
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        let (rows, cols) = (self.weight().rows(), self.weight().cols());
        self.set_weight(src.bits(&join(prefix, "weight"), rows, cols)?)?;
        self.set_scale(src.f32(&join(prefix, "scale"), &[self.out_channels()])?)?;
        self.set_threshold(src.f32(&join(prefix, "threshold"), &[self.in_channels()])?)
    }
}

impl Parameters for Linear {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        out.insert_f32(join(prefix, "weight"), self.weight.dims().to_vec(), self.weight.data().to_vec())?;
        if let Some(b) = &self.bias {
            out.insert_f32(join(prefix, "bias"), vec![b.len()], b.clone())?;
        }
        Ok(())
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        let dims = self.weight.dims().to_vec();
        let w = Tensor::new(dims.clone(), src.f32(&join(prefix, "weight"), &dims)?)?;
        let b = match &self.bias {
            Some(b) => Some(src.f32(&join(prefix, "bias"), &[b.len()])?),
            None => None,
        };
        *self = Linear::new(w, b)?;
        Ok(())
    }
}

impl Parameters for Conv2d {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        out.insert_f32(join(prefix, "weight"), self.weight.dims().to_vec(), self.weight.data().to_vec())?;
        out.insert_f32(join(prefix, "bias"), vec![self.bias.len()], self.bias.clone())
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        let dims = self.weight.dims().to_vec();
        let w = Tensor::new(dims.clone(), src.f32(&join(prefix, "weight"), &dims)?)?;
        let b = src.f32(&join(prefix, "bias"), &[self.bias.len()])?;
        *self = Conv2d::new(w, b, self.geom)?;
        Ok(())
    }
}

impl Parameters for LayerNorm {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        out.insert_f32(join(prefix, "gain"), vec![self.dim()], self.gain.clone())?;
        out.insert_f32(join(prefix, "bias"), vec![self.dim()], self.bias.clone())
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        let n = self.dim();
        let gain = src.f32(&join(prefix, "gain"), &[n])?;
        let bias = src.f32(&join(prefix, "bias"), &[n])?;
        if gain.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite norm parameters in '{prefix}'")));
        }
        self.gain = gain;
        self.bias = bias;
        Ok(())
    }
}

impl Parameters for Projection {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        match self {
            Projection::Binary(l) => l.export(prefix, out),
            Projection::Float(l) => l.export(prefix, out),
        }
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        match self {
            Projection::Binary(l) => l.import(prefix, src),
            Projection::Float(l) => l.import(prefix, src),
        }
    }
}

impl Parameters for ConvProjection {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        match self {
            ConvProjection::Binary(l) => l.export(prefix, out),
            ConvProjection::Float(l) => l.export(prefix, out),
        }
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        match self {
            ConvProjection::Binary(l) => l.import(prefix, src),
            ConvProjection::Float(l) => l.import(prefix, src),
        }
    }
}

/// Float vector parameter stored under `prefix.name`.
pub(crate) fn export_vec(prefix: &str, name: &str, v: &[f32], out: &mut WeightContainer) -> Result<()> {
    out.insert_f32(join(prefix, name), vec![v.len()], v.to_vec())
}

pub(crate) fn import_vec(prefix: &str, name: &str, v: &mut Vec<f32>, src: &mut WeightReader<'_>) -> Result<()> {
    let n = v.len();
    let got = src.f32(&join(prefix, name), &[n])?;
    if got.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue(format!("non-finite values in '{}'", join(prefix, name))));
    }
    *v = got;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor, w: &Tensor, geom: ConvGeometry) -> Vec<f32> {
        let (h, wd, c) = x.hwc().unwrap();
        let (oh, ow) = geom.output_size(h, wd).unwrap();
        let [co, cg, k, _] = *w.dims() else { unreachable!() };
        let og = co / geom.groups;
        let mut out = vec![0f32; oh * ow * co];
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..co {
                    let g = o / og;
                    let mut acc = 0.0;
                    for ci in 0..cg {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                                let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data()[(iy as usize * wd + ix as usize) * c + g * cg + ci]
                                        * w.data()[((o * cg + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[(oy * ow + ox) * co + o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loop() {
        let mut rng = seeded_rng(3);
        for geom in [
            ConvGeometry::new(3, 1, 1),
            ConvGeometry::new(3, 2, 1),
            ConvGeometry { groups: 2, ..ConvGeometry::new(3, 1, 1) },
            ConvGeometry::new(1, 1, 0),
        ] {
            let conv = Conv2d::random(4, 6, geom, &mut rng).unwrap();
            let x = normal_tensor(vec![7, 5, 4], 1.0, &mut rng).unwrap();
            let y = conv.forward(&x).unwrap();
            let want = naive_conv(&x, conv.weight(), geom);
            for (a, b) in y.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn linear_hand_case() {
        let l = Linear::new(Tensor::new(vec![1, 2], vec![2.0, -1.0]).unwrap(), Some(vec![0.5])).unwrap();
        let y = l.forward(&Tensor::new(vec![2, 2], vec![1.0, 1.0, 3.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.5, 4.5]);
    }

    #[test]
    fn shuffle_roundtrip_and_layout() {
        let x = Tensor::from_fn(vec![4, 6, 3], |i| i as f32).unwrap();
        let u = pixel_unshuffle(&x, 2).unwrap();
        assert_eq!(u.dims(), &[2, 3, 12]);
        // channel 0, offset (1, 0) of the top-left block is x[1, 0, 0]
        assert_eq!(u.at(&[0, 0, 2]), x.at(&[1, 0, 0]));
        assert_eq!(pixel_shuffle(&u, 2).unwrap(), x);
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect_index(-1, 4), 1);
        assert_eq!(reflect_index(4, 4), 2);
        assert_eq!(reflect_index(-3, 3), 1);
        assert_eq!(reflect_index(5, 1), 0);
        let x = Tensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let p = pad_reflect(&x, 0, 0, 2, 1).unwrap();
        assert_eq!(p.data(), &[3.0, 2.0, 1.0, 2.0, 3.0, 2.0]);
        assert_eq!(crop(&p, 0, 2, 1, 3).unwrap(), x);
    }

    #[test]
    fn projection_roundtrips_through_container() {
        let mut rng = seeded_rng(1);
        for precision in [Precision::Binary, Precision::Float] {
            let p = Projection::random(5, 3, precision, &mut rng).unwrap();
            let mut c = WeightContainer::new();
            p.export("p", &mut c).unwrap();
            let mut q = Projection::random(5, 3, precision, &mut rng).unwrap();
            let mut r = WeightReader::new(&c);
            q.import("p", &mut r).unwrap();
            r.finish().unwrap();
            assert_eq!(p, q);
        }
    }
}
