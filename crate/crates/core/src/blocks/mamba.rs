use rand::Rng;

use crate::binary::ConvGeometry;
use crate::blocks::{record, EmbedPosition, Probe};
use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::nn::{export_vec, import_vec, ConvProjection, LayerNorm, Precision, Projection};
use crate::scan::{apply_scan, invert_scan, merge_scans, selective_scan_fused, ScanDirection, ScanOrder, SsmParams};
use crate::tensor::{silu, silu_scalar, softplus, Tensor};
use crate::weights::{join, Parameters, WeightContainer, WeightReader};

/// Hyperparameters of one Bi-Mamba branch.
#[derive(Clone, Debug, PartialEq)]
pub struct MambaSpec {
    /// Branch input/output channels.
    pub dim: usize,
    /// Hidden width `d = expand * dim`.
    pub expand: usize,
    /// State size `m`.
    pub d_state: usize,
    /// Number of scan orders (1..=4).
    pub n_scans: usize,
    /// Length of the global embedding fed to the adapter.
    pub embed_dim: usize,
    pub precision: Precision,
    /// Projections built with the extra global-scalar input column.
    pub embed_columns: EmbedPosition,
    /// Initial step size range `[dt_min, dt_max]`, sampled log-uniformly.
    pub dt_range: (f32, f32),
}

impl MambaSpec {
    pub fn hidden(&self) -> usize {
        self.dim * self.expand
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.expand == 0 || self.d_state == 0 || self.embed_dim == 0 {
            return Err(Error::Config("mamba dims must be positive".into()));
        }
        if !(1..=4).contains(&self.n_scans) {
            return Err(Error::Config(format!("n_scans must be 1..=4, got {}", self.n_scans)));
        }
        let (lo, hi) = self.dt_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("invalid dt range {lo}..{hi}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Direction {
    kind: ScanDirection,
    c_proj: Projection,
    delta_proj: Projection,
    b_proj: Projection,
    a_log: Tensor,
    d_skip: Vec<f32>,
    dt_bias: Vec<f32>,
}

/// Binarized Mamba branch over an `H x W x dim` map.
///
/// ```text
/// x' = SiLU(dwconv(in_proj(x)))
/// O_i = invert_i(SSM_i(scan_i(x')))      C_i, Δ_i, B_i projected from scan_i(x') (+ s)
/// y = x + SiLU(gate_proj(x)) ⊙ out_proj(LN(Σ O_i))
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct BiMambaBlock {
    spec: MambaSpec,
    in_proj: Projection,
    dwconv: ConvProjection,
    gate_proj: Projection,
    out_proj: Projection,
    out_norm: LayerNorm,
    adapter: Projection,
    dirs: Vec<Direction>,
}

fn inverse_softplus(y: f32) -> f32 {
    // ln(e^y - 1), stable for small y
    y + (-(-y).exp_m1()).ln()
}

impl BiMambaBlock {
    pub fn random(spec: MambaSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let (c, d, m) = (spec.dim, spec.hidden(), spec.d_state);
        let p = spec.precision;
        let cols = spec.embed_columns;
        let extra = |on: bool| usize::from(on);
        let in_proj = Projection::random(c, d, p, rng)?;
        let dwconv = ConvProjection::random(d, d, ConvGeometry::depthwise(3, d), p, rng)?;
        let gate_proj = Projection::random(c, c, p, rng)?;
        let out_proj = Projection::random(d, c, p, rng)?;
        let adapter = Projection::random(spec.embed_dim, 1, p, rng)?;
        let (lo, hi) = spec.dt_range;
        let mut dirs = Vec::with_capacity(spec.n_scans);
        for &kind in &ScanDirection::ALL[..spec.n_scans] {
            let c_proj = Projection::random(d + extra(cols.feeds_c()), m, p, rng)?;
            let delta_proj = Projection::random(d + extra(cols.feeds_delta()), d, p, rng)?;
            let b_proj = Projection::random(d + extra(cols.feeds_b()), m, p, rng)?;
            let a_log = Tensor::from_fn(vec![d, m], |i| ((i % m) as f32 + 1.0).ln())?;
            let dt_bias = (0..d)
                .map(|_| {
                    let u: f32 = rng.random();
                    inverse_softplus((lo.ln() + u * (hi.ln() - lo.ln())).exp())
                })
                .collect();
            dirs.push(Direction { kind, c_proj, delta_proj, b_proj, a_log, d_skip: vec![1.0; d], dt_bias });
        }
        Ok(BiMambaBlock { spec, in_proj, dwconv, gate_proj, out_proj, out_norm: LayerNorm::new(d), adapter, dirs })
    }

    pub fn spec(&self) -> &MambaSpec {
        &self.spec
    }

    pub fn gate_proj_mut(&mut self) -> &mut Projection {
        &mut self.gate_proj
    }

    pub fn adapter_mut(&mut self) -> &mut Projection {
        &mut self.adapter
    }

    pub fn out_proj_mut(&mut self) -> &mut Projection {
        &mut self.out_proj
    }

    /// The global scalar `s` for embedding `g`.
    pub fn adapter_scalar(&self, g: &[f32]) -> Result<f32> {
        if g.len() != self.spec.embed_dim {
            return Err(Error::shape(format!("global embedding has length {}, adapter expects {}", g.len(), self.spec.embed_dim)));
        }
        let t = Tensor::new(vec![1, g.len()], g.to_vec())?;
        Ok(self.adapter.forward(&t)?.data()[0])
    }

    fn check_position(&self, pos: EmbedPosition) -> Result<()> {
        let cols = self.spec.embed_columns;
        let ok = (!pos.feeds_b() || cols.feeds_b()) && (!pos.feeds_c() || cols.feeds_c()) && (!pos.feeds_delta() || cols.feeds_delta());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("embed position '{pos}' needs projections built for '{cols}'")))
        }
    }

    pub fn forward(&self, x: &Tensor, g: &[f32], pos: EmbedPosition) -> Result<Tensor> {
        self.forward_probed(x, g, pos, None)
    }

    /// Forward pass that also records intermediate activations under
    /// `in_proj`, `conv`, `gate`, `dir{i}.{b,c,delta}`, `merged` and `out`.
    pub fn forward_probed(&self, x: &Tensor, g: &[f32], pos: EmbedPosition, mut probe: Option<&mut Probe>) -> Result<Tensor> {
        let (h, w, c) = x.hwc()?;
        if c != self.spec.dim {
            return Err(Error::shape(format!("bi_mamba expects {} channels, got {c}", self.spec.dim)));
        }
        x.check_finite("bi_mamba input")?;
        self.check_position(pos)?;
        let s = self.adapter_scalar(g)?;
        let l = h * w;

        let xin = self.in_proj.forward(x)?;
        record(&mut probe, "in_proj", &xin);
        let xc = silu(&self.dwconv.forward(&xin)?)?;
        record(&mut probe, "conv", &xc);

        let cols = self.spec.embed_columns;
        let col = |on: bool| Tensor::full(vec![l, 1], if on { s } else { 0.0 });
        let (b_col, c_col, dt_col) = (col(pos.feeds_b())?, col(pos.feeds_c())?, col(pos.feeds_delta())?);
        let with = |xi: &Tensor, has: bool, extra: &Tensor| -> Result<Tensor> {
            if has {
                Tensor::concat_last(&[xi, extra])
            } else {
                Ok(xi.clone())
            }
        };

        let mut outputs = Vec::with_capacity(self.dirs.len());
        for (i, dir) in self.dirs.iter().enumerate() {
            let order = ScanOrder::new(dir.kind, h, w);
            let xi = apply_scan(&order, &xc)?;
            let cm = dir.c_proj.forward(&with(&xi, cols.feeds_c(), &c_col)?)?;
            let draw = dir.delta_proj.forward(&with(&xi, cols.feeds_delta(), &dt_col)?)?;
            let bm = dir.b_proj.forward(&with(&xi, cols.feeds_b(), &b_col)?)?;
            record(&mut probe, format!("dir{i}.c"), &cm);
            record(&mut probe, format!("dir{i}.delta"), &draw);
            record(&mut probe, format!("dir{i}.b"), &bm);
            let d = xi.last_dim();
            let mut delta = draw.into_data();
            for (k, v) in delta.iter_mut().enumerate() {
                *v = softplus(*v + dir.dt_bias[k % d]);
            }
            let delta = Tensor::new(vec![l, d], delta)?;
            let params = SsmParams::from_log(&dir.a_log, dir.d_skip.clone(), bm, cm, delta)?;
            let y = selective_scan_fused(&params, &xi)?;
            outputs.push(invert_scan(&order, &y)?);
        }
        let merged = merge_scans(&outputs, &self.out_norm.gain, &self.out_norm.bias)?;
        record(&mut probe, "merged", &merged);
        let proj = self.out_proj.forward(&merged)?;
        let gate = self.gate_proj.forward(x)?;
        record(&mut probe, "gate", &gate);
        let y = x.zip_map(&gate.zip_map(&proj, |gv, pv| silu_scalar(gv) * pv)?, |a, b| a + b)?;
        y.check_finite("bi_mamba")?;
        record(&mut probe, "out", &y);
        Ok(y)
    }

    pub fn cost(&self, name: &str, h: usize, w: usize, report: &mut CostReport) -> Result<()> {
        let l = h * w;
        let (c, d, m) = (self.spec.dim, self.spec.hidden(), self.spec.d_state);
        let (l64, c64, d64, m64) = (l as u64, c as u64, d as u64, m as u64);
        self.adapter.cost(&join(name, "adapter"), 1, report);
        self.in_proj.cost(&join(name, "in_proj"), l, report);
        self.dwconv.cost(&join(name, "dwconv"), (h, w), report)?;
        report.push_functional(join(name, "conv_silu"), 4 * l64 * d64);
        for (i, dir) in self.dirs.iter().enumerate() {
            let p = join(name, &format!("dir{i}"));
            dir.c_proj.cost(&join(&p, "c_proj"), l, report);
            dir.delta_proj.cost(&join(&p, "delta_proj"), l, report);
            dir.b_proj.cost(&join(&p, "b_proj"), l, report);
            report.push_params(join(&p, "ssm_params"), dir.a_log.len() + 2 * d);
            // softplus, discretize (exp, 2 mul), state update and readout MACs, skip MAC
            report.push_functional(join(&p, "scan"), l64 * d64 * (2 + 3 * m64 + 4 * m64 + 2));
        }
        report.push_functional(join(name, "merge_sum"), l64 * d64 * (self.dirs.len() as u64 - 1));
        self.out_norm.cost(&join(name, "out_norm"), l, report);
        self.out_proj.cost(&join(name, "out_proj"), l, report);
        self.gate_proj.cost(&join(name, "gate_proj"), l, report);
        // gate SiLU, gating multiply, residual add
        report.push_functional(join(name, "gate_residual"), l64 * c64 * 6);
        Ok(())
    }
}

impl Parameters for BiMambaBlock {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()> {
        self.in_proj.export(&join(prefix, "in_proj"), out)?;
        self.dwconv.export(&join(prefix, "dwconv"), out)?;
        self.gate_proj.export(&join(prefix, "gate_proj"), out)?;
        self.out_proj.export(&join(prefix, "out_proj"), out)?;
        self.out_norm.export(&join(prefix, "out_norm"), out)?;
        self.adapter.export(&join(prefix, "adapter"), out)?;
        for (i, dir) in self.dirs.iter().enumerate() {
            let p = join(prefix, &format!("dir{i}"));
            dir.c_proj.export(&join(&p, "c_proj"), out)?;
            dir.delta_proj.export(&join(&p, "delta_proj"), out)?;
            dir.b_proj.export(&join(&p, "b_proj"), out)?;
            out.insert_f32(join(&p, "a_log"), dir.a_log.dims().to_vec(), dir.a_log.data().to_vec())?;
            export_vec(&p, "d", &dir.d_skip, out)?;
            export_vec(&p, "dt_bias", &dir.dt_bias, out)?;
        }
        Ok(())
    }

    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()> {
        self.in_proj.import(&join(prefix, "in_proj"), src)?;
        self.dwconv.import(&join(prefix, "dwconv"), src)?;
        self.gate_proj.import(&join(prefix, "gate_proj"), src)?;
        self.out_proj.import(&join(prefix, "out_proj"), src)?;
        self.out_norm.import(&join(prefix, "out_norm"), src)?;
        self.adapter.import(&join(prefix, "adapter"), src)?;
        for (i, dir) in self.dirs.iter_mut().enumerate() {
            let p = join(prefix, &format!("dir{i}"));
            dir.c_proj.import(&join(&p, "c_proj"), src)?;
            dir.delta_proj.import(&join(&p, "delta_proj"), src)?;
            dir.b_proj.import(&join(&p, "b_proj"), src)?;
            let dims = dir.a_log.dims().to_vec();
            dir.a_log = Tensor::new(dims.clone(), src.f32(&join(&p, "a_log"), &dims)?)?;
            dir.a_log.check_finite("a_log")?;
            import_vec(&p, "d", &mut dir.d_skip, src)?;
            import_vec(&p, "dt_bias", &mut dir.dt_bias, src)?;
        }
        Ok(())
    }
}
