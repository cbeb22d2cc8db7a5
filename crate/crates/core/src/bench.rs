//! Wall-clock throughput tables for the `bench` command. The criterion
//! benches under `benches/` give statistically robust numbers; this module
//! produces the quick comparison table.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::binary::{xnor_gemm, BitMatrix};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;
use crate::reference::gemm_nt_f32;
use crate::scan::{discretize, selective_scan, selective_scan_fused, SsmParams};
use crate::tensor::Tensor;

pub const DEFAULT_GEMM_SIZES: [usize; 3] = [256, 1024, 4096];
pub const DEFAULT_SCAN_SIZES: [usize; 3] = [256, 1024, 4096];
/// Rows and columns of the GEMM benchmark; the size list sets the depth `K`.
pub const GEMM_MN: usize = 64;
const SCAN_CHANNELS: usize = 16;
const SCAN_STATE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchKernel {
    XnorGemm,
    Scan,
}

impl BenchKernel {
    pub fn name(self) -> &'static str {
        match self {
            BenchKernel::XnorGemm => "xnor-gemm",
            BenchKernel::Scan => "scan",
        }
    }

    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            BenchKernel::XnorGemm => DEFAULT_GEMM_SIZES.to_vec(),
            BenchKernel::Scan => DEFAULT_SCAN_SIZES.to_vec(),
        }
    }
}

impl FromStr for BenchKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xnor-gemm" => Ok(BenchKernel::XnorGemm),
            "scan" => Ok(BenchKernel::Scan),
            _ => Err(Error::Config(format!("unknown kernel '{s}' (xnor-gemm|scan)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub kernel: BenchKernel,
    pub size: usize,
    /// Seconds per call of the optimized kernel.
    pub fast_secs: f64,
    /// Seconds per call of the baseline.
    pub baseline_secs: f64,
    /// Operations per call used for the throughput columns.
    pub ops: f64,
}

impl BenchRow {
    pub fn throughput(&self) -> f64 {
        self.ops / self.fast_secs
    }

    pub fn baseline_throughput(&self) -> f64 {
        self.ops / self.baseline_secs
    }

    pub fn speedup(&self) -> f64 {
        self.baseline_secs / self.fast_secs
    }
}

/// Median per-call time over repeated batches lasting at least `budget`.
fn time_per_call(budget: Duration, mut f: impl FnMut()) -> f64 {
    f();
    let mut per_call = Vec::new();
    let start = Instant::now();
    while per_call.len() < 5 || (start.elapsed() < budget && per_call.len() < 1000) {
        let t = Instant::now();
        f();
        per_call.push(t.elapsed().as_secs_f64());
    }
    per_call.sort_by(f64::total_cmp);
    per_call[per_call.len() / 2].max(1e-9)
}

/// Packed XNOR-popcount GEMM against a float GEMM on the same ±1 operands,
/// both `64 x K` times `K x 64`.
pub fn bench_gemm(k: usize, budget: Duration, seed: u64) -> Result<BenchRow> {
    if k == 0 {
        return Err(Error::Config("GEMM depth must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let a = BitMatrix::from_fn(GEMM_MN, k, |_, _| rng.random_bool(0.5));
    let b = BitMatrix::from_fn(GEMM_MN, k, |_, _| rng.random_bool(0.5));
    let (af, bf) = (a.to_signs(), b.to_signs());
    let mut sink = 0i64;
    let fast = time_per_call(budget, || {
        sink += xnor_gemm(&a, &b).expect("matching depth")[0] as i64;
    });
    let mut fsink = 0f32;
    let base = time_per_call(budget, || {
        fsink += gemm_nt_f32(&af, &bf, GEMM_MN, GEMM_MN, k)[0];
    });
    std::hint::black_box((sink, fsink));
    Ok(BenchRow { kernel: BenchKernel::XnorGemm, size: k, fast_secs: fast, baseline_secs: base, ops: 2.0 * (GEMM_MN * GEMM_MN * k) as f64 })
}

/// Fused discretize-and-scan against materializing `Ā`, `B̄` and running the
/// sequential reference, for a length-`l` sequence.
pub fn bench_scan(l: usize, budget: Duration, seed: u64) -> Result<BenchRow> {
    if l == 0 {
        return Err(Error::Config("scan length must be positive".into()));
    }
    let (d, m) = (SCAN_CHANNELS, SCAN_STATE);
    let mut rng = seeded_rng(seed);
    let mut t = |dims: Vec<usize>, lo: f32, hi: f32| Tensor::from_fn(dims, |_| rng.random_range(lo..hi));
    let a_log = t(vec![d, m], -1.0, 1.0)?;
    let p = SsmParams::from_log(&a_log, vec![1.0; d], t(vec![l, m], -1.0, 1.0)?, t(vec![l, m], -1.0, 1.0)?, t(vec![l, d], 0.01, 0.1)?)?;
    let x = t(vec![l, d], -1.0, 1.0)?;
    let mut sink = 0f32;
    let fast = time_per_call(budget, || {
        sink += selective_scan_fused(&p, &x).expect("valid scan").data()[0];
    });
    let base = time_per_call(budget, || {
        let (ab, bb) = discretize(&p).expect("valid params");
        sink += selective_scan(&ab, &bb, &p.c, &p.d_skip, &x).expect("valid scan").data()[0];
    });
    std::hint::black_box(sink);
    Ok(BenchRow {
        kernel: BenchKernel::Scan,
        size: l,
        fast_secs: fast,
        baseline_secs: base,
        // exp, two multiply-adds and the output multiply-add per state
        ops: (l * d * m * 7) as f64,
    })
}

pub fn run(kernel: BenchKernel, sizes: &[usize], budget: Duration, seed: u64) -> Result<Vec<BenchRow>> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|s| match kernel {
            BenchKernel::XnorGemm => bench_gemm(s, budget, seed),
            BenchKernel::Scan => bench_scan(s, budget, seed),
        })
        .collect()
}

pub struct Table<'a>(pub &'a [BenchRow]);

impl fmt::Display for Table<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (label, fast, base) = match self.0.first().map(|r| r.kernel) {
            Some(BenchKernel::Scan) => ("L", "fused", "reference"),
            _ => ("K", "packed", "float"),
        };
        writeln!(
            f,
            "{:>6} {:>14} {:>14} {:>14} {:>14} {:>8}",
            label,
            format!("{fast} us"),
            format!("{base} us"),
            format!("{fast} G/s"),
            format!("{base} G/s"),
            "speedup"
        )?;
        for r in self.0 {
            writeln!(
                f,
                "{:>6} {:>14.2} {:>14.2} {:>14.3} {:>14.3} {:>7.2}x",
                r.size,
                r.fast_secs * 1e6,
                r.baseline_secs * 1e6,
                r.throughput() / 1e9,
                r.baseline_throughput() / 1e9,
                r.speedup()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_sorted_and_positive() {
        let rows = run(BenchKernel::XnorGemm, &[128, 64], Duration::from_millis(1), 0).unwrap();
        assert_eq!(rows.iter().map(|r| r.size).collect::<Vec<_>>(), vec![64, 128]);
        assert!(rows.iter().all(|r| r.throughput() > 0.0 && r.speedup() > 0.0));
        let text = Table(&rows).to_string();
        assert_eq!(text.lines().count(), 3);
        assert!("bogus".parse::<BenchKernel>().is_err());
    }
}
