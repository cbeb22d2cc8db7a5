//! Parameter / operation accounting.
//!
//! Binary weights count 1/32 of a float parameter and binary operations 1/64
//! of a float operation. Per-channel scales `S` and thresholds `α` are float
//! parameters, and applying them (one multiply per output, one comparison per
//! input) is float work. A multiply-accumulate counts as 2 operations, for
//! float and binary (pre-division) alike.
//!
//! Under [`OpsConvention::Layers`] only layers that carry parameters
//! (convolutions, linear maps, norms) contribute operations, the usual
//! hook-based counting. [`OpsConvention::Full`] additionally charges
//! parameter-free work: the scan recurrence, attention matmuls, softmax,
//! activations, gates and residual adds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operations charged per normalized element (mean, variance, normalize,
/// affine).
pub const NORM_OPS_PER_ELEMENT: u64 = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpsConvention {
    #[default]
    Layers,
    Full,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub float_params: u64,
    /// Binary weight count before the /32 rule.
    pub binary_params: u64,
    pub float_ops: u64,
    /// Binary operation count before the /64 rule.
    pub binary_ops: u64,
}

impl CostRow {
    pub fn binary_params_effective(&self) -> f64 {
        self.binary_params as f64 / 32.0
    }

    pub fn binary_ops_effective(&self) -> f64 {
        self.binary_ops as f64 / 64.0
    }

    pub fn params(&self) -> f64 {
        self.float_params as f64 + self.binary_params_effective()
    }

    pub fn ops(&self) -> f64 {
        self.float_ops as f64 + self.binary_ops_effective()
    }
}

/// Binary linear map applied to `rows` vectors.
pub fn bi_linear_row(name: impl Into<String>, c_in: usize, c_out: usize, rows: usize) -> CostRow {
    let (ci, co, r) = (c_in as u64, c_out as u64, rows as u64);
    CostRow { name: name.into(), float_params: co + ci, binary_params: co * ci, float_ops: r * (co + ci), binary_ops: 2 * r * co * ci }
}

/// Float linear map applied to `rows` vectors.
pub fn linear_row(name: impl Into<String>, c_in: usize, c_out: usize, bias: bool, rows: usize) -> CostRow {
    let (ci, co, r) = (c_in as u64, c_out as u64, rows as u64);
    let b = u64::from(bias);
    CostRow { name: name.into(), float_params: co * ci + b * co, binary_params: 0, float_ops: 2 * r * co * ci + b * r * co, binary_ops: 0 }
}

pub struct ConvCostShape {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub groups: usize,
    pub in_pixels: usize,
    pub out_pixels: usize,
}

/// Binary convolution with `S`/`α` sidecars.
pub fn bconv_row(name: impl Into<String>, s: &ConvCostShape) -> CostRow {
    let w = (s.c_out * (s.c_in / s.groups) * s.kernel * s.kernel) as u64;
    CostRow {
        name: name.into(),
        float_params: (s.c_out + s.c_in) as u64,
        binary_params: w,
        float_ops: (s.out_pixels * s.c_out + s.in_pixels * s.c_in) as u64,
        binary_ops: 2 * w * s.out_pixels as u64,
    }
}

/// Float convolution.
pub fn conv_row(name: impl Into<String>, s: &ConvCostShape, bias: bool) -> CostRow {
    let w = (s.c_out * (s.c_in / s.groups) * s.kernel * s.kernel) as u64;
    let b = u64::from(bias);
    let p = s.out_pixels as u64;
    CostRow {
        name: name.into(),
        float_params: w + b * s.c_out as u64,
        binary_params: 0,
        float_ops: 2 * w * p + b * p * s.c_out as u64,
        binary_ops: 0,
    }
}

/// Layer norm with gain and bias over `dim`, applied to `rows` vectors.
pub fn norm_row(name: impl Into<String>, dim: usize, rows: usize) -> CostRow {
    CostRow {
        name: name.into(),
        float_params: 2 * dim as u64,
        binary_params: 0,
        float_ops: NORM_OPS_PER_ELEMENT * (dim * rows) as u64,
        binary_ops: 0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    rows: Vec<CostRow>,
    resolution: (usize, usize),
    convention: OpsConvention,
}

impl CostReport {
    pub fn new(resolution: (usize, usize), convention: OpsConvention) -> Self {
        CostReport { rows: Vec::new(), resolution, convention }
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    pub fn convention(&self) -> OpsConvention {
        self.convention
    }

    pub fn rows(&self) -> &[CostRow] {
        &self.rows
    }

    pub fn push(&mut self, row: CostRow) {
        self.rows.push(row);
    }

    /// Float parameters that belong to no layer (e.g. `A_log`, `D`).
    pub fn push_params(&mut self, name: impl Into<String>, count: usize) {
        self.rows.push(CostRow { name: name.into(), float_params: count as u64, ..CostRow::default() });
    }

    /// Parameter-free float work. Recorded only under the full convention.
    pub fn push_functional(&mut self, name: impl Into<String>, ops: u64) {
        if self.convention == OpsConvention::Full && ops > 0 {
            self.rows.push(CostRow { name: name.into(), float_ops: ops, ..CostRow::default() });
        }
    }

    /// Appends every row of `other`.
    pub fn extend(&mut self, other: CostReport) {
        self.rows.extend(other.rows);
    }

    pub fn total_params(&self) -> f64 {
        self.rows.iter().map(CostRow::params).sum()
    }

    pub fn total_ops(&self) -> f64 {
        self.rows.iter().map(CostRow::ops).sum()
    }

    pub fn params_m(&self) -> f64 {
        self.total_params() / 1e6
    }

    pub fn ops_g(&self) -> f64 {
        self.total_ops() / 1e9
    }

    pub fn summary_line(&self) -> String {
        format!("Params(M), OPs(G): {:.4}, {:.4}", self.params_m(), self.ops_g())
    }

    /// Header noting the counting conventions in force.
    pub fn header(&self) -> String {
        let conv = match self.convention {
            OpsConvention::Layers => "parametric layers only",
            OpsConvention::Full => "including parameter-free ops",
        };
        format!(
            "# resolution {}x{}; MAC = 2 ops ({conv}); binary params /32, binary ops /64; \
             absolute OPs may differ by 2x from a MAC = 1 count",
            self.resolution.0, self.resolution.1
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,float_params,binary_params,binary_params_effective,float_ops,binary_ops,binary_ops_effective\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.name,
                r.float_params,
                r.binary_params,
                r.binary_params_effective(),
                r.float_ops,
                r.binary_ops,
                r.binary_ops_effective()
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reduction {
    pub params_pct: f64,
    pub ops_pct: f64,
}

/// Percentage reduction of `b` relative to `a`.
pub fn compare_costs(a: &CostReport, b: &CostReport) -> Result<Reduction> {
    if a.resolution != b.resolution {
        return Err(Error::Config(format!("cannot compare reports at {:?} and {:?}", a.resolution, b.resolution)));
    }
    Ok(reduction(a.total_params(), b.total_params(), a.total_ops(), b.total_ops()))
}

/// `(1 - b/a) * 100` for each metric.
pub fn reduction(params_a: f64, params_b: f64, ops_a: f64, ops_b: f64) -> Reduction {
    let pct = |a: f64, b: f64| if a == 0.0 { 0.0 } else { (1.0 - b / a) * 100.0 };
    Reduction { params_pct: pct(params_a, params_b), ops_pct: pct(ops_a, ops_b) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bi_linear_256_counts() {
        let r = bi_linear_row("l", 256, 256, 256 * 256);
        assert_eq!(r.binary_params_effective(), 2048.0);
        assert_eq!(r.params(), 2560.0);
        assert_eq!(r.binary_ops, 2 * 65536 * 65536);
        assert_eq!(r.binary_ops_effective(), 134_217_728.0);
    }

    #[test]
    fn float_rows_pass_through() {
        let r = linear_row("f", 10, 4, false, 3);
        assert_eq!(r.params(), 40.0);
        assert_eq!(r.ops(), 240.0);
    }

    #[test]
    fn functional_rows_follow_convention() {
        let mut a = CostReport::new((8, 8), OpsConvention::Layers);
        a.push_functional("scan", 100);
        assert!(a.rows().is_empty());
        let mut b = CostReport::new((8, 8), OpsConvention::Full);
        b.push_functional("scan", 100);
        assert_eq!(b.total_ops(), 100.0);
    }

    #[test]
    fn reduction_arithmetic() {
        let r = reduction(6.15, 1.28, 54.07, 6.56);
        assert!((r.params_pct - 79.19).abs() < 0.01);
        assert!((r.ops_pct - 87.87).abs() < 0.01);
        assert_eq!(reduction(3.0, 3.0, 2.0, 2.0), Reduction { params_pct: 0.0, ops_pct: 0.0 });
        let a = CostReport::new((8, 8), OpsConvention::Layers);
        let b = CostReport::new((16, 8), OpsConvention::Layers);
        assert!(compare_costs(&a, &b).is_err());
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let mut rep = CostReport::new((4, 4), OpsConvention::Layers);
        rep.push(bi_linear_row("a", 2, 2, 16));
        rep.push_params("b", 3);
        assert_eq!(rep.to_csv().lines().count(), 3);
        assert!(rep.summary_line().starts_with("Params(M), OPs(G)"));
    }
}
