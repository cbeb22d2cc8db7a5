//! Color filter arrays, event-pixel masks and the degradation model
//! `RAW = mosaic(RGB)` with event pixels erased, plus a bilinear demosaic
//! baseline.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::seeded_rng;
use crate::tensor::Tensor;

pub const R: usize = 0;
pub const G: usize = 1;
pub const B: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfaPattern {
    Bayer,
    #[default]
    QuadBayer,
}

const BAYER_TILE: [[usize; 2]; 2] = [[R, G], [G, B]];
const QUAD_TILE: [[usize; 4]; 4] = [[R, R, G, G], [R, R, G, G], [G, G, B, B], [G, G, B, B]];

impl CfaPattern {
    pub fn period(self) -> usize {
        match self {
            CfaPattern::Bayer => 2,
            CfaPattern::QuadBayer => 4,
        }
    }

    /// Channel index recorded at pixel `(y, x)`.
    #[inline]
    pub fn channel_at(self, y: usize, x: usize) -> usize {
        match self {
            CfaPattern::Bayer => BAYER_TILE[y % 2][x % 2],
            CfaPattern::QuadBayer => QUAD_TILE[y % 4][x % 4],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CfaPattern::Bayer => "bayer",
            CfaPattern::QuadBayer => "quad_bayer",
        }
    }
}

/// `true` marks an event pixel (no color sample).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventMask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl EventMask {
    pub fn empty(h: usize, w: usize) -> Self {
        EventMask { h, w, bits: vec![false; h * w] }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..h * w).map(|i| f(i / w, i % w)).collect();
        EventMask { h, w, bits }
    }

    pub fn from_bits(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::shape(format!("{} mask bits for {h} x {w}", bits.len())));
        }
        Ok(EventMask { h, w, bits })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.w + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Sub-mask starting at `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.h || x0 + w > self.w {
            return Err(Error::shape("mask crop out of range"));
        }
        Ok(EventMask::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x)))
    }
}

/// Order in which pixels of a 4 x 4 tile become event pixels as density
/// grows. The first entry is the single event pixel of the default layout.
pub const EVENT_PRIORITY: [(usize, usize); 16] =
    [(1, 1), (3, 3), (1, 3), (3, 1), (0, 0), (2, 2), (0, 2), (2, 0), (0, 1), (2, 3), (0, 3), (2, 1), (1, 0), (3, 2), (1, 2), (3, 0)];

/// One event pixel per 4 x 4 tile.
pub const DEFAULT_EVENT_DENSITY: f64 = 1.0 / 16.0;

/// Event layout: each 4 x 4 tile gets `floor(16 p)` events from
/// [`EVENT_PRIORITY`] plus one more with probability `frac(16 p)`, drawn
/// from a seeded generator in tile raster order.
pub fn event_mask(h: usize, w: usize, density: f64, seed: u64) -> Result<EventMask> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidValue(format!("event density {density} outside [0, 1]")));
    }
    let per = density * 16.0;
    let base = per.floor() as usize;
    let frac = per - base as f64;
    let mut rng = seeded_rng(seed);
    let mut mask = EventMask::empty(h, w);
    for ty in 0..h.div_ceil(4) {
        for tx in 0..w.div_ceil(4) {
            let mut n = base;
            if frac > 0.0 && rng.random::<f64>() < frac {
                n += 1;
            }
            for &(dy, dx) in &EVENT_PRIORITY[..n.min(16)] {
                let (y, x) = (ty * 4 + dy, tx * 4 + dx);
                if y < h && x < w {
                    mask.set(y, x, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Keeps, at each pixel, the channel the pattern selects. Sizes need not be
/// multiples of the period; the pattern simply continues.
pub fn mosaic(img: &Tensor, pattern: CfaPattern) -> Result<Tensor> {
    let (h, w, c) = img.hwc()?;
    if c != 3 {
        return Err(Error::shape(format!("mosaic expects 3 channels, got {c}")));
    }
    img.check_finite("mosaic input")?;
    let src = img.data();
    let raw = (0..h * w).map(|i| src[i * 3 + pattern.channel_at(i / w, i % w)]).collect();
    Tensor::new(vec![h, w, 1], raw)
}

/// Erases event pixels (value 0).
pub fn inject_events(raw: &Tensor, mask: &EventMask) -> Result<Tensor> {
    let (h, w, c) = raw.hwc()?;
    if c != 1 || (h, w) != (mask.h, mask.w) {
        return Err(Error::shape(format!("{h} x {w} x {c} RAW does not match {} x {} mask", mask.h, mask.w)));
    }
    let data = raw.data().iter().zip(&mask.bits).map(|(&v, &e)| if e { 0.0 } else { v }).collect();
    Tensor::new(vec![h, w, 1], data)
}

/// Linear interpolation along one line from the positions where `sample`
/// holds; ends extend the nearest sample.
fn interp_line(values: &[f32], sample: &[bool], out: &mut [f32]) {
    let n = values.len();
    let mut prev: Option<usize> = None;
    let mut next_of = vec![None; n];
    let mut nxt = None;
    for i in (0..n).rev() {
        if sample[i] {
            nxt = Some(i);
        }
        next_of[i] = nxt;
    }
    for i in 0..n {
        if sample[i] {
            prev = Some(i);
            out[i] = values[i];
            continue;
        }
        out[i] = match (prev, next_of[i]) {
            (Some(a), Some(b)) => {
                let t = (i - a) as f32 / (b - a) as f32;
                values[a] + t * (values[b] - values[a])
            }
            (Some(a), None) => values[a],
            (None, Some(b)) => values[b],
            (None, None) => 0.0,
        };
    }
}

/// Per-channel bilinear demosaic. Channels whose samples form a row x column
/// grid (R and B) are interpolated separably; G, present in every row and
/// column, takes the mean of a horizontal and a vertical interpolation.
/// Affine signals are reproduced exactly away from the borders.
pub fn bilinear_demosaic(raw: &Tensor, pattern: CfaPattern) -> Result<Tensor> {
    let (h, w, c) = raw.hwc()?;
    if c != 1 {
        return Err(Error::shape(format!("demosaic expects single-channel RAW, got {c}")));
    }
    raw.check_finite("demosaic input")?;
    let src = raw.data();
    let p = pattern.period();
    let mut out = vec![0f32; h * w * 3];
    for ch in [R, G, B] {
        let rows_with: Vec<bool> = (0..h).map(|y| (0..p).any(|x| pattern.channel_at(y, x) == ch)).collect();
        let cols_with: Vec<bool> = (0..w).map(|x| (0..p).any(|y| pattern.channel_at(y, x) == ch)).collect();
        let separable = (0..p).all(|y| {
            (0..p).all(|x| {
                let grid = (0..p).any(|xx| pattern.channel_at(y, xx) == ch) && (0..p).any(|yy| pattern.channel_at(yy, x) == ch);
                grid == (pattern.channel_at(y, x) == ch)
            })
        });
        let mut plane = vec![0f32; h * w];
        let mut line = vec![0f32; w.max(h)];
        if separable {
            let mut horiz = vec![0f32; h * w];
            for y in (0..h).filter(|&y| rows_with[y]) {
                let row = &src[y * w..(y + 1) * w];
                interp_line(row, &cols_with, &mut horiz[y * w..(y + 1) * w]);
            }
            let mut col = vec![0f32; h];
            for x in 0..w {
                for y in 0..h {
                    col[y] = horiz[y * w + x];
                }
                interp_line(&col, &rows_with, &mut line[..h]);
                for y in 0..h {
                    plane[y * w + x] = line[y];
                }
            }
        } else {
            let mut mark = vec![false; w.max(h)];
            for y in 0..h {
                for (x, m) in mark[..w].iter_mut().enumerate() {
                    *m = pattern.channel_at(y, x) == ch;
                }
                interp_line(&src[y * w..(y + 1) * w], &mark[..w], &mut line[..w]);
                plane[y * w..(y + 1) * w].copy_from_slice(&line[..w]);
            }
            let mut col = vec![0f32; h];
            for x in 0..w {
                for y in 0..h {
                    col[y] = src[y * w + x];
                    mark[y] = pattern.channel_at(y, x) == ch;
                }
                interp_line(&col, &mark[..h], &mut line[..h]);
                for y in 0..h {
                    plane[y * w + x] = 0.5 * (plane[y * w + x] + line[y]);
                }
            }
        }
        for (i, v) in plane.into_iter().enumerate() {
            out[i * 3 + ch] = v;
        }
    }
    Tensor::new(vec![h, w, 3], out)
}

/// Low-frequency synthetic RGB image: slow gradients and one period of
/// sinusoid per channel across the frame.
pub fn smooth_test_card(h: usize, w: usize) -> Result<Tensor> {
    use std::f32::consts::TAU;
    Tensor::from_fn(vec![h, w, 3], |i| {
        let (p, ch) = (i / 3, i % 3);
        let u = (p % w) as f32 / w.max(1) as f32;
        let v = (p / w) as f32 / h.max(1) as f32;
        match ch {
            0 => 0.2 + 0.6 * u,
            1 => 0.5 + 0.3 * (TAU * (u + v) / 2.0).sin(),
            _ => 0.3 + 0.5 * v * (1.0 - 0.5 * u),
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub pattern: CfaPattern,
    pub event_density: f64,
    pub seed: u64,
    /// Standard deviation of additive Gaussian noise; `None` disables it.
    pub noise_sigma: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { pattern: CfaPattern::QuadBayer, event_density: DEFAULT_EVENT_DENSITY, seed: 0, noise_sigma: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Degraded {
    pub raw: Tensor,
    pub mask: EventMask,
}

/// Mosaic, optional noise (clamped to `[0, 1]`), then event erasure.
pub fn degrade(rgb: &Tensor, cfg: &SimConfig) -> Result<Degraded> {
    let (h, w, _) = rgb.hwc()?;
    let mut raw = mosaic(rgb, cfg.pattern)?;
    if let Some(sigma) = cfg.noise_sigma.filter(|&s| s > 0.0) {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidValue(e.to_string()))?;
        // separate stream from the event layout
        let mut rng = seeded_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        for v in raw.data_mut() {
            *v = (*v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    let mask = event_mask(h, w, cfg.event_density, cfg.seed)?;
    let raw = inject_events(&raw, &mask)?;
    Ok(Degraded { raw, mask })
}
