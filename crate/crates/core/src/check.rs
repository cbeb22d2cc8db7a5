//! Runtime verification suites: every kernel checked against a naive oracle
//! on seeded random instances. Used by the `check` command.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::Rng;

use crate::binary::{pack_bits, unpack_bits, BiLinearLayer, ConvGeometry};
use crate::blocks::{BiMambaBlock, BiSwinBlock, BmtBlock, BmtSpec, EmbedPosition, MambaSpec, Probe, SwinSpec};
use crate::cfa::{self, CfaPattern, SimConfig};
use crate::error::{Error, Result};
use crate::imageio;
use crate::metrics::psnr;
use crate::nn::{normal_tensor, seeded_rng, ConvProjection, Precision, Rng64};
use crate::reference;
use crate::scan::{
    apply_scan, invert_scan, selective_scan, selective_scan_adjoint, selective_scan_fused, ScanDirection, ScanOrder, SsmParams,
};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Kernels,
    Scan,
    Blocks,
    Sim,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["all", "kernels", "scan", "blocks", "sim"];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Kernels => "kernels",
            Suite::Scan => "scan",
            Suite::Blocks => "blocks",
            Suite::Sim => "sim",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::All, Suite::Kernels, Suite::Scan, Suite::Blocks, Suite::Sim]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}' ({})", Suite::NAMES.join("|"))))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

type Check = fn(&mut Rng64) -> std::result::Result<String, String>;

fn outcome(suite: &'static str, name: &'static str, seed: u64, f: Check) -> CheckOutcome {
    let mut rng = seeded_rng(seed);
    let (passed, detail) = match f(&mut rng) {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckOutcome { suite, name, passed, detail }
}

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs `suite` with seeded random instances.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckOutcome> {
    let table: [(&'static str, &'static str, Check); 17] = [
        ("kernels", "bi_linear_oracle", kernel_bi_linear),
        ("kernels", "bconv_zero_padding", kernel_bconv),
        ("kernels", "pack_roundtrip", kernel_pack),
        ("scan", "cumulative_sum", scan_cumsum),
        ("scan", "pure_skip", scan_skip),
        ("scan", "adjoint_finite_difference", scan_adjoint),
        ("scan", "order_roundtrip", scan_orders),
        ("scan", "fused_matches_definition", scan_fused),
        ("scan", "long_sequence_bounded", scan_stability),
        ("blocks", "attention_rows_normalized", block_attention),
        ("blocks", "zero_gate_identity", block_zero_gate),
        ("blocks", "zero_scale_swin_identity", block_swin_identity),
        ("blocks", "zero_fuse_identity", block_fuse_identity),
        ("blocks", "embedding_probe", block_embedding_probe),
        ("sim", "quad_bayer_tile", sim_tile),
        ("sim", "event_pixels_zero", sim_events),
        ("sim", "seeded_reproducible", sim_reproducible),
    ];
    let mut out: Vec<CheckOutcome> = table
        .iter()
        .enumerate()
        .filter(|(_, (s, _, _))| suite == Suite::All || suite.name() == *s)
        .map(|(i, &(s, n, f))| outcome(s, n, seed.wrapping_add(i as u64), f))
        .collect();
    if matches!(suite, Suite::All | Suite::Sim) {
        out.push(outcome("sim", "bilinear_smooth_card", seed, sim_bilinear));
    }
    out
}

fn uniform(rng: &mut Rng64, dims: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi)).expect("non-empty dims")
}

pub fn kernel_bi_linear(rng: &mut Rng64) -> std::result::Result<String, String> {
    for trial in 0..200 {
        let (cin, cout, rows) = (rng.random_range(1..=256), rng.random_range(1..=256), rng.random_range(1..=3));
        let w = uniform(rng, vec![cout, cin], -1.0, 1.0);
        let thr = (0..cin).map(|_| rng.random_range(-0.2f32..0.2)).collect();
        let layer = BiLinearLayer::from_float(&w, thr).map_err(err)?;
        let x = uniform(rng, vec![rows, cin], -1.0, 1.0);
        let got = layer.forward_counts(&x).map_err(err)?;
        let want = reference::bi_linear_counts(&layer, &x).map_err(err)?;
        if got.iter().map(|&v| v as i64).ne(want.iter().copied()) {
            return Err(format!("trial {trial}: {cin} -> {cout} counts differ"));
        }
    }
    Ok("200 instances exact".into())
}

pub fn kernel_bconv(rng: &mut Rng64) -> std::result::Result<String, String> {
    for trial in 0..50 {
        let groups = if rng.random_bool(0.2) { 2 } else { 1 };
        let cin = groups * rng.random_range(1..=40);
        let cout = groups * rng.random_range(1..=8);
        let stride = rng.random_range(1..=2);
        let (h, w) = (rng.random_range(1..=9), rng.random_range(1..=9));
        let mut geom = ConvGeometry::new(3, stride, 1);
        geom.groups = groups;
        let layer = match ConvProjection::random(cin, cout, geom, Precision::Binary, rng).map_err(err)? {
            ConvProjection::Binary(l) => l,
            ConvProjection::Float(_) => unreachable!(),
        };
        let x = uniform(rng, vec![h, w, cin], -1.0, 1.0);
        let (oh, ow, got) = layer.forward_counts(&x).map_err(err)?;
        let want = reference::bconv_counts(&layer, &x).map_err(err)?;
        if want.dims() != [oh, ow, cout] || got.iter().map(|&v| v as f64).ne(want.data().iter().copied()) {
            return Err(format!("trial {trial}: {h}x{w}x{cin} -> {cout}, stride {stride}: sums differ"));
        }
    }
    Ok("50 instances exact".into())
}

pub fn kernel_pack(rng: &mut Rng64) -> std::result::Result<String, String> {
    for n in [1usize, 63, 64, 65, 200] {
        let v: Vec<f32> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let words = pack_bits(&v).map_err(err)?;
        if unpack_bits(&words, n) != v {
            return Err(format!("length {n} does not round-trip"));
        }
    }
    Ok("lengths 1..200 round-trip".into())
}

pub fn scan_cumsum(rng: &mut Rng64) -> std::result::Result<String, String> {
    for _ in 0..20 {
        let (l, d) = (rng.random_range(1..=64), rng.random_range(1..=4));
        let x = uniform(rng, vec![l, d], -2.0, 2.0);
        let ones = Tensor::full(vec![l, d, 1], 1.0).map_err(err)?;
        let c = Tensor::full(vec![l, 1], 1.0).map_err(err)?;
        let y = selective_scan(&ones, &ones, &c, &vec![0.0; d], &x).map_err(err)?;
        for j in 0..d {
            let mut acc = 0f32;
            for k in 0..l {
                acc += x.data()[k * d + j];
                if y.data()[k * d + j] != acc {
                    return Err(format!("L={l}: position {k} is not the prefix sum"));
                }
            }
        }
    }
    Ok("prefix sums exact".into())
}

pub fn scan_skip(rng: &mut Rng64) -> std::result::Result<String, String> {
    for _ in 0..20 {
        let (l, d, m) = (rng.random_range(1..=32), rng.random_range(1..=4), rng.random_range(1..=4));
        let x = uniform(rng, vec![l, d], -2.0, 2.0);
        let a_log = uniform(rng, vec![d, m], -1.0, 1.0);
        let b = Tensor::zeros(vec![l, m]).map_err(err)?;
        let c = uniform(rng, vec![l, m], -1.0, 1.0);
        let delta = uniform(rng, vec![l, d], 0.01, 1.0);
        let p = SsmParams::from_log(&a_log, vec![1.0; d], b, c, delta).map_err(err)?;
        if selective_scan_fused(&p, &x).map_err(err)? != x {
            return Err(format!("L={l}, d={d}, m={m}: output differs from x"));
        }
    }
    Ok("output equals input exactly".into())
}

fn random64(rng: &mut Rng64, dims: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi)).expect("non-empty dims")
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1)` over every
/// input of `n` random instances. The loss `Σ dy ⊙ y` is affine in each
/// individual input, so central differences carry only rounding error.
pub fn adjoint_max_error(rng: &mut Rng64, n: usize) -> Result<f64> {
    let mut worst = 0f64;
    for _ in 0..n {
        let (l, d, m) = (rng.random_range(1..=16), rng.random_range(1..=4), rng.random_range(1..=4));
        let mut a = random64(rng, vec![l, d, m], 0.0, 1.0);
        let mut b = random64(rng, vec![l, d, m], -1.0, 1.0);
        let mut c = random64(rng, vec![l, m], -1.0, 1.0);
        let mut ds: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = random64(rng, vec![l, d], -1.0, 1.0);
        let dy = random64(rng, vec![l, d], -1.0, 1.0);
        let grads = selective_scan_adjoint(&a, &b, &c, &ds, &x, &dy)?;
        let loss = |a: &Tensor<f64>, b: &Tensor<f64>, c: &Tensor<f64>, ds: &[f64], x: &Tensor<f64>| -> Result<f64> {
            let y = selective_scan(a, b, c, ds, x)?;
            Ok(y.data().iter().zip(dy.data()).map(|(p, q)| p * q).sum())
        };
        let eps = 1e-3;
        let mut compare = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * eps);
            let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(e);
        };
        macro_rules! probe {
            ($t:ident, $g:expr) => {
                for i in 0..$t.data().len() {
                    let v = $t.data()[i];
                    $t.data_mut()[i] = v + eps;
                    let plus = loss(&a, &b, &c, &ds, &x)?;
                    $t.data_mut()[i] = v - eps;
                    let minus = loss(&a, &b, &c, &ds, &x)?;
                    $t.data_mut()[i] = v;
                    compare($g[i], plus, minus);
                }
            };
        }
        probe!(a, grads.a_bar.data());
        probe!(b, grads.b_bar.data());
        probe!(c, grads.c.data());
        probe!(x, grads.x.data());
        for i in 0..d {
            let v = ds[i];
            ds[i] = v + eps;
            let plus = loss(&a, &b, &c, &ds, &x)?;
            ds[i] = v - eps;
            let minus = loss(&a, &b, &c, &ds, &x)?;
            ds[i] = v;
            compare(grads.d_skip[i], plus, minus);
        }
    }
    Ok(worst)
}

pub fn scan_adjoint(rng: &mut Rng64) -> std::result::Result<String, String> {
    let e = adjoint_max_error(rng, 50).map_err(err)?;
    if e < 1e-6 {
        Ok(format!("50 f64 instances, max relative error {e:.2e}"))
    } else {
        Err(format!("max relative error {e:.2e} exceeds 1e-6"))
    }
}

pub fn scan_orders(rng: &mut Rng64) -> std::result::Result<String, String> {
    for _ in 0..20 {
        let (h, w, d) = (rng.random_range(1..=32), rng.random_range(1..=32), rng.random_range(1..=3));
        let x = uniform(rng, vec![h, w, d], -1.0, 1.0);
        for kind in ScanDirection::ALL {
            let order = ScanOrder::new(kind, h, w);
            let seq = apply_scan(&order, &x).map_err(err)?;
            let back = invert_scan(&order, &seq).map_err(err)?.reshape(vec![h, w, d]).map_err(err)?;
            if back != x {
                return Err(format!("{} on {h}x{w} does not invert", kind.name()));
            }
        }
    }
    Ok("4 directions invert exactly".into())
}

fn random_params(rng: &mut Rng64, l: usize, d: usize, m: usize) -> (SsmParams<f64>, Tensor<f64>) {
    let a_log = random64(rng, vec![d, m], -1.0, 1.0);
    let b = random64(rng, vec![l, m], -1.0, 1.0);
    let c = random64(rng, vec![l, m], -1.0, 1.0);
    let delta = random64(rng, vec![l, d], 0.01, 1.0);
    let ds = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = random64(rng, vec![l, d], -1.0, 1.0);
    (SsmParams::from_log(&a_log, ds, b, c, delta).expect("valid params"), x)
}

pub fn scan_fused(rng: &mut Rng64) -> std::result::Result<String, String> {
    let mut worst = 0f64;
    for _ in 0..20 {
        let (l, d, m) = (rng.random_range(1..=40), rng.random_range(1..=4), rng.random_range(1..=4));
        let (p, x) = random_params(rng, l, d, m);
        let fused = selective_scan_fused(&p, &x).map_err(err)?;
        let a: Vec<f64> = p.a.data().to_vec();
        let want = reference::scan_from_definition(&a, &p.d_skip, p.b.data(), p.c.data(), p.delta.data(), x.data(), l, d, m);
        for (g, w) in fused.data().iter().zip(&want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    if worst < 1e-12 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("fused scan deviates by {worst:.1e}"))
    }
}

pub fn scan_stability(rng: &mut Rng64) -> std::result::Result<String, String> {
    let (l, d, m) = (1024, 4, 4);
    let (p, x) = random_params(rng, l, d, m);
    let y = selective_scan_fused(&p, &x).map_err(err)?;
    // |h| <= max|B̄ x| / (1 - max Ā), then |y| <= Σ|C| |h| + |D x|
    let (a, dt) = (p.a.data(), p.delta.data());
    let mut a_max = 0f64;
    let mut bx_max = 0f64;
    for k in 0..l {
        for j in 0..d {
            for s in 0..m {
                a_max = a_max.max((dt[k * d + j] * a[j * m + s]).exp());
                bx_max = bx_max.max((dt[k * d + j] * p.b.data()[k * m + s] * x.data()[k * d + j]).abs());
            }
        }
    }
    let h_bound = bx_max / (1.0 - a_max);
    for k in 0..l {
        let c_sum: f64 = p.c.data()[k * m..(k + 1) * m].iter().map(|v| v.abs()).sum();
        for j in 0..d {
            let bound = c_sum * h_bound + (p.d_skip[j] * x.data()[k * d + j]).abs();
            if y.data()[k * d + j].abs() > bound * (1.0 + 1e-12) {
                return Err(format!("position {k} exceeds the contraction bound"));
            }
        }
    }
    Ok(format!("L={l} finite and within bound"))
}

fn mamba_spec(dim: usize, columns: EmbedPosition) -> MambaSpec {
    MambaSpec {
        dim,
        expand: 2,
        d_state: 4,
        n_scans: 4,
        embed_dim: 8,
        precision: Precision::Binary,
        embed_columns: columns,
        dt_range: (1e-3, 1e-1),
    }
}

fn swin_spec(dim: usize, shift: bool) -> SwinSpec {
    SwinSpec { dim, head_dim: 4, window: 4, shift, mlp_ratio: 2 }
}

pub fn block_attention(rng: &mut Rng64) -> std::result::Result<String, String> {
    let mut worst = 0f64;
    for shift in [false, true] {
        let block = BiSwinBlock::random(swin_spec(8, shift), rng).map_err(err)?;
        let x = normal_tensor(vec![10, 9, 8], 1.0, rng).map_err(err)?;
        let probs = block.attention_probs(&x).map_err(err)?;
        let t = *probs.dims().last().unwrap();
        for row in probs.data().chunks(t) {
            worst = worst.max((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs());
        }
    }
    if worst <= 1e-5 {
        Ok(format!("max |row sum - 1| = {worst:.1e}"))
    } else {
        Err(format!("row sums deviate by {worst:.1e}"))
    }
}

pub fn block_zero_gate(rng: &mut Rng64) -> std::result::Result<String, String> {
    let mut block = BiMambaBlock::random(mamba_spec(6, EmbedPosition::B), rng).map_err(err)?;
    block.gate_proj_mut().scale_output(0.0).map_err(err)?;
    let x = normal_tensor(vec![5, 7, 6], 1.0, rng).map_err(err)?;
    let g = vec![0.3; 8];
    if block.forward(&x, &g, EmbedPosition::B).map_err(err)? == x {
        Ok("output equals input".into())
    } else {
        Err("zero gate changed the input".into())
    }
}

pub fn block_swin_identity(rng: &mut Rng64) -> std::result::Result<String, String> {
    let mut block = BiSwinBlock::random(swin_spec(8, true), rng).map_err(err)?;
    block.qkv_mut().scale_output(0.0).map_err(err)?;
    block.proj_mut().scale_output(0.0).map_err(err)?;
    block.fc1_mut().scale_output(0.0).map_err(err)?;
    block.fc2_mut().scale_output(0.0).map_err(err)?;
    let x = normal_tensor(vec![9, 6, 8], 1.0, rng).map_err(err)?;
    if block.forward(&x).map_err(err)? == x {
        Ok("output equals input".into())
    } else {
        Err("zero-scale block changed the input".into())
    }
}

pub fn block_fuse_identity(rng: &mut Rng64) -> std::result::Result<String, String> {
    let spec = BmtSpec { mamba: mamba_spec(4, EmbedPosition::B), swin: swin_spec(4, false) };
    let mut block = BmtBlock::random(spec, rng).map_err(err)?;
    block.fuse_mut().scale_output(0.0).map_err(err)?;
    let x = normal_tensor(vec![6, 6, 8], 1.0, rng).map_err(err)?;
    if block.forward(&x, &[0.5; 8], EmbedPosition::B).map_err(err)? == x {
        Ok("output equals input".into())
    } else {
        Err("zero fuse changed the input".into())
    }
}

/// Probe keys whose activations differ between two runs.
pub fn differing_keys(a: &Probe, b: &Probe) -> Vec<String> {
    a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect()
}

/// Probe keys recorded at projection outputs, before the scan.
pub fn projection_keys(n_scans: usize) -> Vec<String> {
    let mut keys: Vec<String> = vec!["conv".into(), "gate".into(), "in_proj".into()];
    for i in 0..n_scans {
        keys.extend(["b", "c", "delta"].map(|p| format!("dir{i}.{p}")));
    }
    keys.sort();
    keys
}

/// Projection keys an embedding position is expected to change, relative
/// to `None`.
pub fn expected_keys(pos: EmbedPosition, n_scans: usize) -> Vec<String> {
    let mut keys = Vec::new();
    for i in 0..n_scans {
        if pos.feeds_b() {
            keys.push(format!("dir{i}.b"));
        }
        if pos.feeds_c() {
            keys.push(format!("dir{i}.c"));
        }
        if pos.feeds_delta() {
            keys.push(format!("dir{i}.delta"));
        }
    }
    keys.sort();
    keys
}

/// An embedding whose adapter scalar is strictly positive, so that feeding it
/// flips the binarized input column relative to the neutral value.
pub fn positive_embedding(block: &BiMambaBlock, rng: &mut impl Rng) -> Result<Vec<f32>> {
    let n = block.spec().embed_dim;
    for _ in 0..1000 {
        let g: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if block.adapter_scalar(&g)? > 0.0 {
            return Ok(g);
        }
    }
    Err(Error::InvalidValue("no embedding with a positive adapter output found".into()))
}

pub fn block_embedding_probe(rng: &mut Rng64) -> std::result::Result<String, String> {
    let block = BiMambaBlock::random(mamba_spec(6, EmbedPosition::All), rng).map_err(err)?;
    let g = positive_embedding(&block, rng).map_err(err)?;
    let x = normal_tensor(vec![6, 5, 6], 1.0, rng).map_err(err)?;
    let run = |pos| -> Result<Probe> {
        let mut p = Probe::new();
        block.forward_probed(&x, &g, pos, Some(&mut p))?;
        Ok(p)
    };
    let base = run(EmbedPosition::None).map_err(err)?;
    for pos in EmbedPosition::ALL_VARIANTS {
        let probe = run(pos).map_err(err)?;
        let changed = differing_keys(&probe, &base);
        let projections = projection_keys(4);
        let got: Vec<String> = changed.iter().filter(|k| projections.contains(k)).cloned().collect();
        let want = expected_keys(pos, 4);
        if got != want {
            return Err(format!("position {pos}: changed {got:?}, expected {want:?}"));
        }
        if (pos != EmbedPosition::None) != changed.iter().any(|k| k == "merged") {
            return Err(format!("position {pos}: scan output change does not match"));
        }
    }
    Ok("each position changes only its projections".into())
}

fn expected_channel(y: usize, x: usize) -> usize {
    const ROWS: [[usize; 4]; 4] = [
        [cfa::R, cfa::R, cfa::G, cfa::G],
        [cfa::R, cfa::R, cfa::G, cfa::G],
        [cfa::G, cfa::G, cfa::B, cfa::B],
        [cfa::G, cfa::G, cfa::B, cfa::B],
    ];
    ROWS[y % 4][x % 4]
}

pub fn sim_tile(_: &mut Rng64) -> std::result::Result<String, String> {
    let color = [0.25f32, 0.5, 0.75];
    let img = Tensor::from_fn(vec![8, 12, 3], |i| color[i % 3]).map_err(err)?;
    let raw = cfa::mosaic(&img, CfaPattern::QuadBayer).map_err(err)?;
    for y in 0..8 {
        for x in 0..12 {
            let want = color[expected_channel(y, x)];
            if raw.data()[y * 12 + x] != want {
                return Err(format!("pixel ({y}, {x}) holds {} instead of {want}", raw.data()[y * 12 + x]));
            }
        }
    }
    Ok("4x4 tile matches the RRGG/RRGG/GGBB/GGBB layout".into())
}

pub fn sim_events(rng: &mut Rng64) -> std::result::Result<String, String> {
    let img = uniform(rng, vec![32, 40, 3], 0.1, 1.0);
    for density in [1.0 / 16.0, 0.1, 0.3] {
        let cfg = SimConfig { event_density: density, seed: rng.random(), ..SimConfig::default() };
        let d = cfa::degrade(&img, &cfg).map_err(err)?;
        let events = d.mask.count();
        if events == 0 {
            return Err(format!("density {density} produced no events"));
        }
        for (v, &m) in d.raw.data().iter().zip(d.mask.bits()) {
            if m && *v != 0.0 {
                return Err(format!("event pixel holds {v} at density {density}"));
            }
        }
    }
    Ok("every event pixel reads exactly 0".into())
}

/// Hash of the encoded RAW and mask sidecar.
pub fn degraded_hash(d: &cfa::Degraded) -> Result<u64> {
    let mut h = DefaultHasher::new();
    imageio::encode_pgm16(&d.raw)?.hash(&mut h);
    imageio::encode_mask(&d.mask).hash(&mut h);
    Ok(h.finish())
}

pub fn sim_reproducible(rng: &mut Rng64) -> std::result::Result<String, String> {
    let img = uniform(rng, vec![24, 24, 3], 0.0, 1.0);
    let cfg = SimConfig { seed: 7, noise_sigma: Some(0.01), ..SimConfig::default() };
    let a = degraded_hash(&cfa::degrade(&img, &cfg).map_err(err)?).map_err(err)?;
    let b = degraded_hash(&cfa::degrade(&img, &cfg).map_err(err)?).map_err(err)?;
    let other = SimConfig { seed: 8, ..cfg };
    let c = degraded_hash(&cfa::degrade(&img, &other).map_err(err)?).map_err(err)?;
    if a != b {
        return Err("same seed produced different files".into());
    }
    if a == c {
        return Err("different seeds produced identical files".into());
    }
    Ok(format!("hash {a:016x} stable across runs"))
}

/// PSNR of the bilinear baseline on the smooth test card at density 0.
pub fn bilinear_card_psnr(h: usize, w: usize) -> Result<f64> {
    let card = cfa::smooth_test_card(h, w)?;
    let cfg = SimConfig { event_density: 0.0, ..SimConfig::default() };
    let d = cfa::degrade(&card, &cfg)?;
    psnr(&cfa::bilinear_demosaic(&d.raw, cfg.pattern)?, &card)
}

pub fn sim_bilinear(_: &mut Rng64) -> std::result::Result<String, String> {
    let p = bilinear_card_psnr(64, 64).map_err(err)?;
    if p > 25.0 {
        Ok(format!("{p:.2} dB on a 64x64 card"))
    } else {
        Err(format!("{p:.2} dB is not above 25 dB"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for n in Suite::NAMES {
            assert_eq!(n.parse::<Suite>().unwrap().name(), n);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn blocks_and_sim_suites_pass() {
        for o in run_suite(Suite::Blocks, 1).into_iter().chain(run_suite(Suite::Sim, 1)) {
            assert!(o.passed, "{o}");
        }
    }
}
