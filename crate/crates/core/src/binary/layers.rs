use crate::binary::bits::{dot_row_many, dot_words, tail_mask, words_for, BitMatrix, WORD_BITS};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

/// `+1` where `w > 0`, `-1` otherwise (zero maps to `-1`). The tensor is
/// viewed as `[rows x last_dim]`.
pub fn sign(w: &Tensor) -> Result<BitMatrix> {
    w.check_finite("sign input")?;
    let cols = w.last_dim();
    let d = w.data();
    Ok(BitMatrix::from_fn(w.rows(), cols, |r, c| d[r * cols + c] > 0.0))
}

/// Per-channel thresholded sign: `+1` where `a > alpha[c]`, else `-1`.
pub fn rsign(a: &Tensor, alpha: &[f32]) -> Result<BitMatrix> {
    let cols = a.last_dim();
    if alpha.len() != cols {
        return Err(Error::shape(format!("rsign threshold has {} entries for {cols} channels", alpha.len())));
    }
    a.check_finite("rsign input")?;
    let wpr = words_for(cols);
    let mut words = vec![0u64; a.rows() * wpr];
    pack_rows_into(a.data(), cols, alpha, &mut words, wpr);
    BitMatrix::from_words(a.rows(), cols, words)
}

/// RSign + pack of each `cols`-wide row of `src` into `wpr` words.
fn pack_rows_into(src: &[f32], cols: usize, alpha: &[f32], words: &mut [u64], wpr: usize) {
    let rows_per_task = 256;
    par::for_each_chunk_mut(words, rows_per_task * wpr, |task, chunk| {
        for (i, row_words) in chunk.chunks_mut(wpr).enumerate() {
            let r = task * rows_per_task + i;
            pack_row(&src[r * cols..(r + 1) * cols], alpha, row_words);
        }
    });
}

#[inline]
fn pack_row(row: &[f32], alpha: &[f32], out: &mut [u64]) {
    out.fill(0);
    for (c, (&v, &t)) in row.iter().zip(alpha).enumerate() {
        if v > t {
            out[c / WORD_BITS] |= 1 << (c % WORD_BITS);
        }
    }
}

fn check_params(name: &str, v: &[f32], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::shape(format!("{name} has {} entries, expected {len}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

/// Binary linear layer: `y_o = S_o · Σ_i W^b_oi · RSign(x)_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLinearLayer {
    weight: BitMatrix,
    scale: Vec<f32>,
    threshold: Vec<f32>,
}

impl BiLinearLayer {
    /// `weight` is `[C_out x C_in]`.
    pub fn new(weight: BitMatrix, scale: Vec<f32>, threshold: Vec<f32>) -> Result<Self> {
        check_params("scale", &scale, weight.rows())?;
        check_params("threshold", &threshold, weight.cols())?;
        Ok(BiLinearLayer { weight, scale, threshold })
    }

    /// Binarizes a float `[C_out x C_in]` weight; each output scale starts as
    /// the mean absolute weight of its row.
    pub fn from_float(w: &Tensor, threshold: Vec<f32>) -> Result<Self> {
        if w.dims().len() != 2 {
            return Err(Error::shape(format!("linear weight must be 2-D, got {:?}", w.shape())));
        }
        let bits = sign(w)?;
        let scale = w.data().chunks(w.last_dim()).map(|r| r.iter().map(|v| v.abs()).sum::<f32>() / r.len() as f32).collect();
        BiLinearLayer::new(bits, scale, threshold)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &BitMatrix {
        &self.weight
    }

    pub fn scale(&self) -> &[f32] {
        &self.scale
    }

    pub fn threshold(&self) -> &[f32] {
        &self.threshold
    }

    pub fn set_scale(&mut self, scale: Vec<f32>) -> Result<()> {
        check_params("scale", &scale, self.out_dim())?;
        self.scale = scale;
        Ok(())
    }

    pub fn set_threshold(&mut self, threshold: Vec<f32>) -> Result<()> {
        check_params("threshold", &threshold, self.in_dim())?;
        self.threshold = threshold;
        Ok(())
    }

    pub fn set_weight(&mut self, weight: BitMatrix) -> Result<()> {
        if weight.rows() != self.out_dim() || weight.cols() != self.in_dim() {
            return Err(Error::shape(format!("weight {weight:?} does not fit a {} -> {} layer", self.in_dim(), self.out_dim())));
        }
        self.weight = weight;
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.last_dim() != self.in_dim() {
            return Err(Error::shape(format!("bi_linear expects {} input channels, got {:?}", self.in_dim(), x.shape())));
        }
        x.check_finite("bi_linear input")
    }

    /// Integer products before scaling, `[rows x C_out]` row-major.
    pub fn forward_counts(&self, x: &Tensor) -> Result<Vec<i32>> {
        self.check_input(x)?;
        let acts = rsign(x, &self.threshold)?;
        crate::binary::bits::xnor_gemm(&acts, &self.weight)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (cin, cout) = (self.in_dim(), self.out_dim());
        let rows = x.rows();
        let wpr = words_for(cin);
        let src = x.data();
        let mut out = vec![0f32; rows * cout];
        let rows_per_task = (2048 / cout).max(1);
        par::for_each_chunk_mut(&mut out, rows_per_task * cout, |task, chunk| {
            let mut act = vec![0u64; wpr];
            let mut counts = vec![0i32; cout];
            for (i, row_out) in chunk.chunks_mut(cout).enumerate() {
                let r = task * rows_per_task + i;
                pack_row(&src[r * cin..(r + 1) * cin], &self.threshold, &mut act);
                dot_row_many(&act, &self.weight, &mut counts);
                for ((o, &c), &s) in row_out.iter_mut().zip(&counts).zip(&self.scale) {
                    *o = c as f32 * s;
                }
            }
        });
        let out = Tensor::from_rows(x.lead_dims(), cout, out)?;
        out.check_finite("bi_linear")?;
        Ok(out)
    }
}

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry { kernel, stride, padding, groups: 1 }
    }

    pub fn depthwise(kernel: usize, channels: usize) -> Self {
        ConvGeometry { kernel, stride: 1, padding: kernel / 2, groups: channels }
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel;
        if self.stride == 0 || k == 0 || h + 2 * self.padding < k || w + 2 * self.padding < k {
            return Err(Error::shape(format!("{h} x {w} input is too small for kernel {k} with padding {}", self.padding)));
        }
        Ok(((h + 2 * self.padding - k) / self.stride + 1, (w + 2 * self.padding - k) / self.stride + 1))
    }

    pub(crate) fn validate(&self, c_in: usize, c_out: usize) -> Result<()> {
        if self.groups == 0 || !c_in.is_multiple_of(self.groups) || !c_out.is_multiple_of(self.groups) {
            return Err(Error::shape(format!("groups {} must divide both {c_in} input and {c_out} output channels", self.groups)));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::shape("kernel and stride must be positive"));
        }
        Ok(())
    }
}

/// Binary convolution. Weight rows are indexed `o * k * k + (ky * k + kx)`
/// and hold the `C_in / groups` input-channel bits of that kernel tap.
#[derive(Clone, Debug, PartialEq)]
pub struct BConvLayer {
    weight: BitMatrix,
    scale: Vec<f32>,
    threshold: Vec<f32>,
    c_in: usize,
    c_out: usize,
    geom: ConvGeometry,
}

/// Binarizes a `[C_out x C_in/groups x k x k]` float kernel. The scale of
/// output channel `o` is the mean of `|w|` over that channel's weights.
pub fn sign_binarize_conv(w: &Tensor, geom: ConvGeometry) -> Result<BConvLayer> {
    w.check_finite("sign_binarize_conv input")?;
    let (c_out, cg, kh, kw) = match *w.dims() {
        [a, b, c, d] => (a, b, c, d),
        _ => return Err(Error::shape(format!("conv weight must be 4-D, got {:?}", w.shape()))),
    };
    if kh != geom.kernel || kw != geom.kernel {
        return Err(Error::shape(format!("kernel {kh} x {kw} does not match geometry {}", geom.kernel)));
    }
    let c_in = cg * geom.groups;
    geom.validate(c_in, c_out)?;
    let kk = kh * kw;
    let d = w.data();
    let weight = BitMatrix::from_fn(c_out * kk, cg, |row, ci| {
        let (o, tap) = (row / kk, row % kk);
        d[(o * cg + ci) * kk + tap] > 0.0
    });
    let per = cg * kk;
    let scale = d.chunks(per).map(|ch| ch.iter().map(|v| v.abs()).sum::<f32>() / per as f32).collect();
    BConvLayer::new(weight, scale, vec![0.0; c_in], c_in, c_out, geom)
}

impl BConvLayer {
    pub fn new(weight: BitMatrix, scale: Vec<f32>, threshold: Vec<f32>, c_in: usize, c_out: usize, geom: ConvGeometry) -> Result<Self> {
        geom.validate(c_in, c_out)?;
        let kk = geom.kernel * geom.kernel;
        if weight.rows() != c_out * kk || weight.cols() != c_in / geom.groups {
            return Err(Error::shape(format!(
                "conv weight {weight:?} does not fit {c_in} -> {c_out}, k={}, groups={}",
                geom.kernel, geom.groups
            )));
        }
        check_params("scale", &scale, c_out)?;
        check_params("threshold", &threshold, c_in)?;
        Ok(BConvLayer { weight, scale, threshold, c_in, c_out, geom })
    }

    pub fn with_threshold(mut self, threshold: Vec<f32>) -> Result<Self> {
        self.set_threshold(threshold)?;
        Ok(self)
    }

    pub fn set_threshold(&mut self, threshold: Vec<f32>) -> Result<()> {
        check_params("threshold", &threshold, self.c_in)?;
        self.threshold = threshold;
        Ok(())
    }

    pub fn set_scale(&mut self, scale: Vec<f32>) -> Result<()> {
        check_params("scale", &scale, self.c_out)?;
        self.scale = scale;
        Ok(())
    }

    pub fn set_weight(&mut self, weight: BitMatrix) -> Result<()> {
        if weight.rows() != self.weight.rows() || weight.cols() != self.weight.cols() {
            return Err(Error::shape(format!("conv weight {weight:?} does not replace {:?}", self.weight)));
        }
        self.weight = weight;
        Ok(())
    }

    pub fn weight(&self) -> &BitMatrix {
        &self.weight
    }

    pub fn scale(&self) -> &[f32] {
        &self.scale
    }

    pub fn threshold(&self) -> &[f32] {
        &self.threshold
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geom
    }

    pub fn in_channels(&self) -> usize {
        self.c_in
    }

    pub fn out_channels(&self) -> usize {
        self.c_out
    }

    /// Binary weight count `C_out · C_in/groups · k²`.
    pub fn weight_count(&self) -> usize {
        self.weight.rows() * self.weight.cols()
    }

    /// Integer ±1 correlation sums before scaling, `[H' x W' x C_out]`.
    /// Taps falling in the zero padding contribute nothing.
    pub fn forward_counts(&self, x: &Tensor) -> Result<(usize, usize, Vec<i32>)> {
        let (h, w, c) = x.hwc()?;
        if c != self.c_in {
            return Err(Error::shape(format!("bconv2d expects {} channels, got {:?}", self.c_in, x.shape())));
        }
        x.check_finite("bconv2d input")?;
        let (oh, ow) = self.geom.output_size(h, w)?;
        let groups = self.geom.groups;
        let cg = self.c_in / groups;
        let og = self.c_out / groups;
        let wpg = words_for(cg);
        let mask = tail_mask(cg);

        // activation bits laid out [pixel][group][word]
        let mut acts = vec![0u64; h * w * groups * wpg];
        let src = x.data();
        let thr = &self.threshold;
        par::for_each_chunk_mut(&mut acts, w * groups * wpg, |y, row| {
            for xx in 0..w {
                let p = y * w + xx;
                for g in 0..groups {
                    let off = (xx * groups + g) * wpg;
                    let lo = p * self.c_in + g * cg;
                    pack_row(&src[lo..lo + cg], &thr[g * cg..(g + 1) * cg], &mut row[off..off + wpg]);
                }
            }
        });

        let k = self.geom.kernel;
        let kk = k * k;
        let (stride, pad) = (self.geom.stride as isize, self.geom.padding as isize);
        let mut out = vec![0i32; oh * ow * self.c_out];
        par::for_each_chunk_mut(&mut out, ow * self.c_out, |oy, row| {
            for ox in 0..ow {
                let px = &mut row[ox * self.c_out..(ox + 1) * self.c_out];
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
                        let base = (iy as usize * w + ix as usize) * groups * wpg;
                        for (o, acc) in px.iter_mut().enumerate() {
                            let g = o / og;
                            let a = &acts[base + g * wpg..base + (g + 1) * wpg];
                            *acc += dot_words(a, self.weight.row(o * kk + tap), cg, mask);
                        }
                    }
                }
            }
        });
        Ok((oh, ow, out))
    }
}

/// Binary 2-D convolution on an `H x W x C_in` tensor.
pub fn bconv2d(layer: &BConvLayer, x: &Tensor) -> Result<Tensor> {
    let (oh, ow, counts) = layer.forward_counts(x)?;
    let c = layer.c_out;
    let data = counts.chunks(c).flat_map(|px| px.iter().zip(&layer.scale).map(|(&v, &s)| v as f32 * s)).collect();
    let out = Tensor::new(vec![oh, ow, c], data)?;
    out.check_finite("bconv2d")?;
    Ok(out)
}
