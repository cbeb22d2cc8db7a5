//! Image quality metrics on `[0, 1]` images of shape `H x W x C`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Value reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let dims = a.hwc()?;
    if a.dims() != b.dims() {
        return Err(Error::Mismatch(format!("image shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    a.check_finite("metric input")?;
    b.check_finite("metric input")?;
    Ok(dims)
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

/// PSNR in dB for a data range of 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * e.log10()).min(PSNR_CAP_DB))
}

fn gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over the valid region of a single `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM with an 11x11 Gaussian window (σ = 1.5), averaged over
/// channels. Images smaller than the window use the largest odd window
/// that fits.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (h, w, c) = same_shape(a, b)?;
    let mut n = SSIM_WINDOW.min(h).min(w);
    if n % 2 == 0 {
        n -= 1;
    }
    let k = gaussian(n, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    for ch in 0..c {
        let plane = |t: &Tensor| -> Vec<f64> { t.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect() };
        let (x, y) = (plane(a), plane(b));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, _, _) = filter_valid(&x, h, w, &k);
        let (my, _, _) = filter_valid(&y, h, w, &k);
        let (sxx, _, _) = filter_valid(&xx, h, w, &k);
        let (syy, _, _) = filter_valid(&yy, h, w, &k);
        let (sxy, oh, ow) = filter_valid(&xy, h, w, &k);
        let mut acc = 0.0;
        for i in 0..oh * ow {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / (oh * ow) as f64;
    }
    Ok(total / c as f64)
}

/// `"PP.PP dB, S.SSSS"`.
pub fn format_metrics(psnr_db: f64, ssim_value: f64) -> String {
    format!("{psnr_db:.2} dB, {ssim_value:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(vec![h, w, 3], |i| {
            let p = i / 3;
            ((p / w) as f32 / h as f32 + (p % w) as f32 / w as f32 + (i % 3) as f32) / 4.0
        })
        .unwrap()
    }

    #[test]
    fn identical_images() {
        let a = card(16, 20);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(format_metrics(100.0, 1.0), "100.00 dB, 1.0000");
    }

    #[test]
    fn psnr_of_constant_offset() {
        let a = Tensor::full(vec![4, 4, 1], 0.5).unwrap();
        let b = Tensor::full(vec![4, 4, 1], 0.6).unwrap();
        // mse = 0.01 -> 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&a, &card(4, 4)).is_err());
    }

    #[test]
    fn ssim_drops_with_noise_and_is_symmetric() {
        let a = card(24, 24);
        let b = Tensor::from_fn(vec![24, 24, 3], |i| a.data()[i] + if i % 2 == 0 { 0.05 } else { -0.05 }).unwrap();
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.99 && s > 0.0);
        assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ssim(&card(5, 6), &card(5, 6)).unwrap() > 0.999);
    }
}
