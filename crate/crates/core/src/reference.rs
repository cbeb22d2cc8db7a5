//! Naive float implementations used as oracles by the check suites, the
//! tests and the benchmarks. Written for clarity, not speed, and sharing no
//! code with the packed kernels.

use crate::binary::{BConvLayer, BiLinearLayer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `out[r][o] = Σ_i a[r][i] · b[o][i]` in f64, `a` is `rows x k`, `b` is
/// `cols x k`.
pub fn gemm_nt(a: &[f32], b: &[f32], rows: usize, cols: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0f64; rows * cols];
    for r in 0..rows {
        for o in 0..cols {
            let mut acc = 0f64;
            for i in 0..k {
                acc += a[r * k + i] as f64 * b[o * k + i] as f64;
            }
            out[r * cols + o] = acc;
        }
    }
    out
}

/// Same product in f32 with a plain triple loop; the float baseline of the
/// GEMM benchmark.
pub fn gemm_nt_f32(a: &[f32], b: &[f32], rows: usize, cols: usize, k: usize) -> Vec<f32> {
    let mut out = vec![0f32; rows * cols];
    for r in 0..rows {
        let ar = &a[r * k..(r + 1) * k];
        for o in 0..cols {
            let br = &b[o * k..(o + 1) * k];
            out[r * cols + o] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    out
}

fn to_sign(v: f32, threshold: f32) -> f32 {
    if v > threshold {
        1.0
    } else {
        -1.0
    }
}

/// Pre-scale integer products of a binary linear layer, computed with ±1
/// floats.
pub fn bi_linear_counts(layer: &BiLinearLayer, x: &Tensor) -> Result<Vec<i64>> {
    let (k, n) = (layer.in_dim(), layer.out_dim());
    if x.last_dim() != k {
        return Err(Error::shape("reference bi_linear: input width differs"));
    }
    let acts: Vec<f32> = x.data().iter().enumerate().map(|(i, &v)| to_sign(v, layer.threshold()[i % k])).collect();
    let w = layer.weight().to_signs();
    Ok(gemm_nt(&acts, &w, x.rows(), n, k).into_iter().map(|v| v as i64).collect())
}

/// Direct convolution with explicit zero padding. `weight` is
/// `[C_out x C_in/groups x k x k]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, stride: usize, padding: usize, groups: usize) -> Result<Tensor<f64>> {
    let (h, w, c) = x.hwc()?;
    let [c_out, cg, k, _] = *weight.dims() else {
        return Err(Error::shape("reference conv: weight must be 4-D"));
    };
    if cg * groups != c || c_out % groups != 0 {
        return Err(Error::shape("reference conv: channel mismatch"));
    }
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    let mut padded = vec![0f64; ph * pw * c];
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                padded[((y + padding) * pw + xx + padding) * c + ch] = x.data()[(y * w + xx) * c + ch] as f64;
            }
        }
    }
    let (oh, ow) = ((ph - k) / stride + 1, (pw - k) / stride + 1);
    let og = c_out / groups;
    let wd = weight.data();
    let mut out = vec![0f64; oh * ow * c_out];
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..c_out {
                let g = o / og;
                let mut acc = 0f64;
                for ci in 0..cg {
                    for ky in 0..k {
                        for kx in 0..k {
                            let v = padded[((oy * stride + ky) * pw + ox * stride + kx) * c + g * cg + ci];
                            acc += v * wd[((o * cg + ci) * k + ky) * k + kx] as f64;
                        }
                    }
                }
                out[(oy * ow + ox) * c_out + o] = acc;
            }
        }
    }
    Tensor::new(vec![oh, ow, c_out], out)
}

/// Pre-scale sums of a binary convolution: the input is mapped to ±1,
/// padded with true zeros, and convolved with the ±1 kernel.
pub fn bconv_counts(layer: &BConvLayer, x: &Tensor) -> Result<Tensor<f64>> {
    let (_, _, c) = x.hwc()?;
    let g = layer.geometry();
    let signs = Tensor::from_fn(x.dims().to_vec(), |i| to_sign(x.data()[i], layer.threshold()[i % c]))?;
    let (c_out, k) = (layer.out_channels(), g.kernel);
    let cg = layer.in_channels() / g.groups;
    let bits = layer.weight();
    let kernel = Tensor::from_fn(vec![c_out, cg, k, k], |i| {
        let tap = i % (k * k);
        let ci = (i / (k * k)) % cg;
        let o = i / (k * k * cg);
        bits.sign_at(o * k * k + tap, ci)
    })?;
    conv2d(&signs, &kernel, g.stride, g.padding, g.groups)
}

/// Linear recurrence written straight from its definition, in f64.
/// `a` is `[d x m]` (continuous, negative), `b`, `c` are `[L x m]`,
/// `delta`, `x` are `[L x d]`.
#[allow(clippy::too_many_arguments)]
pub fn scan_from_definition(
    a: &[f64],
    d_skip: &[f64],
    b: &[f64],
    c: &[f64],
    delta: &[f64],
    x: &[f64],
    l: usize,
    d: usize,
    m: usize,
) -> Vec<f64> {
    let mut y = vec![0f64; l * d];
    for j in 0..d {
        for s in 0..m {
            let mut h = 0f64;
            for k in 0..l {
                let dt = delta[k * d + j];
                h = (dt * a[j * m + s]).exp() * h + dt * b[k * m + s] * x[k * d + j];
                y[k * d + j] += c[k * m + s] * h;
            }
        }
        for k in 0..l {
            y[k * d + j] += d_skip[j] * x[k * d + j];
        }
    }
    y
}
