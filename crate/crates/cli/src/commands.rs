use std::time::Duration;

use anyhow::{bail, Context, Result};

use bmt_core::bench::{self, BenchKernel, Table};
use bmt_core::cfa::{self, CfaPattern, EventMask, SimConfig};
use bmt_core::check::{self, Suite};
use bmt_core::cost::compare_costs;
use bmt_core::imageio;
use bmt_core::metrics::{format_metrics, psnr, ssim};
use bmt_core::pipeline::{account as account_config, Model, ModelConfig, RunOptions, Tiling};

use crate::manifest::{self, DemosaicManifest, SimulateManifest};
use crate::{AccountArgs, BenchArgs, CheckArgs, DemosaicArgs, Kernel, MetricsArgs, SimulateArgs, SuiteArg};

/// A preset name (`@default`, `@compact`, `@fp-mamba`) or a TOML file.
fn load_config(source: &str) -> Result<ModelConfig> {
    match source {
        "@default" => Ok(ModelConfig::default()),
        "@compact" => Ok(ModelConfig::compact()),
        "@fp-mamba" => Ok(ModelConfig::fp_mamba()),
        s if s.starts_with('@') => bail!("unknown preset '{s}' (@default, @compact, @fp-mamba)"),
        path => ModelConfig::load(path).with_context(|| format!("loading config {path}")),
    }
}

fn print_config(label: &str, cfg: &ModelConfig) {
    println!("# resolved {label}");
    print!("{}", cfg.to_toml_string());
}

pub fn simulate(a: &SimulateArgs) -> Result<bool> {
    let rgb = imageio::read_rgb(&a.input)?;
    let cfg = SimConfig { pattern: CfaPattern::from(a.pattern), event_density: a.event_density, seed: a.seed, noise_sigma: a.noise_sigma };
    let d = cfa::degrade(&rgb, &cfg)?;
    let mask_path = a.mask.clone().unwrap_or_else(|| a.output.with_extension("mask"));
    imageio::write_pgm16(&a.output, &d.raw)?;
    imageio::write_mask(&mask_path, &d.mask)?;
    let (h, w, _) = d.raw.hwc()?;
    let m = manifest::write(
        &a.output,
        &SimulateManifest {
            input: &a.input,
            raw: &a.output,
            mask: &mask_path,
            height: h,
            width: w,
            pattern: cfg.pattern.name(),
            seed: cfg.seed,
            event_density: cfg.event_density,
            noise_sigma: cfg.noise_sigma,
            event_pixels: d.mask.count(),
        },
    )?;
    println!(
        "wrote {h}x{w} RAW to {}, {} event pixels to {}, manifest {}",
        a.output.display(),
        d.mask.count(),
        mask_path.display(),
        m.display()
    );
    Ok(true)
}

pub fn demosaic(a: &DemosaicArgs) -> Result<bool> {
    let raw = imageio::read_gray(&a.raw)?;
    let (h, w, _) = raw.hwc()?;
    let mask = match &a.mask {
        Some(p) => imageio::read_mask(p)?,
        None => EventMask::empty(h, w),
    };
    if (mask.height(), mask.width()) != (h, w) {
        bail!("mask is {}x{} but RAW is {h}x{w}", mask.height(), mask.width());
    }
    let mut record = DemosaicManifest {
        raw: &a.raw,
        mask: a.mask.as_deref(),
        output: &a.output,
        height: h,
        width: w,
        method: "network",
        weights: None,
        seed: None,
        config: None,
        tile: None,
        overlap: None,
        pattern: None,
    };
    let cfg;
    let rgb = if a.bilinear {
        let pattern = CfaPattern::from(a.pattern);
        println!("method: bilinear ({}); event pixels are interpolated as recorded", pattern.name());
        record.method = "bilinear";
        record.pattern = Some(pattern.name());
        cfa::bilinear_demosaic(&raw, pattern)?
    } else {
        cfg = load_config(&a.config)?;
        print_config("model config", &cfg);
        let model = match &a.weights {
            Some(p) => Model::load(&cfg, p).with_context(|| format!("loading weights {}", p.display()))?,
            None => {
                println!(
                    "no --weights given: using the seeded random init (seed {}); the output is not a trained reconstruction",
                    cfg.seed
                );
                record.seed = Some(cfg.seed);
                Model::random(&cfg)?
            }
        };
        let tiling = a.tile.map(|tile| Tiling { tile, overlap: a.overlap.unwrap_or(tile / 2) });
        if let Some(t) = tiling {
            println!("tiling: {} px tiles, {} px overlap (aligned to {} px)", t.tile, t.overlap, model.tile_alignment());
            record.tile = Some(t.tile);
            record.overlap = Some(t.overlap);
        }
        record.weights = a.weights.as_deref();
        record.config = Some(&cfg);
        let opts = RunOptions { tiling, ..Default::default() };
        model.run_with(&raw, &mask, &opts)?.rgb
    };
    imageio::write_png_rgb8(&a.output, &rgb)?;
    let m = manifest::write(&a.output, &record)?;
    println!("wrote {h}x{w} RGB to {}, manifest {}", a.output.display(), m.display());
    Ok(true)
}

pub fn account(a: &AccountArgs) -> Result<bool> {
    let cfg = load_config(&a.config)?;
    print_config("model config", &cfg);
    let report = account_config(&cfg, a.resolution, a.convention.into())?;
    println!("{}", report.header());
    println!("{}", report.summary_line());
    print!("{}", report.to_csv());
    if let Some(path) = &a.csv {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(other) = &a.compare {
        let base_cfg = load_config(other)?;
        print_config("comparison config", &base_cfg);
        let base = account_config(&base_cfg, a.resolution, a.convention.into())?;
        let r = compare_costs(&base, &report)?;
        println!("comparison {}", base.summary_line());
        println!("reduction vs {other}: params {:.2}%, OPs {:.2}%", r.params_pct, r.ops_pct);
    }
    Ok(true)
}

pub fn metrics(a: &MetricsArgs) -> Result<bool> {
    let x = imageio::read_rgb(&a.a)?;
    let y = imageio::read_rgb(&a.b)?;
    println!("{}", format_metrics(psnr(&x, &y)?, ssim(&x, &y)?));
    Ok(true)
}

pub fn bench(a: &BenchArgs) -> Result<bool> {
    let kernel = match a.kernel {
        Kernel::XnorGemm => BenchKernel::XnorGemm,
        Kernel::Scan => BenchKernel::Scan,
    };
    let sizes = if a.sizes.is_empty() { kernel.default_sizes() } else { a.sizes.clone() };
    let rows = bench::run(kernel, &sizes, Duration::from_millis(a.budget_ms), a.seed)?;
    println!("kernel: {}", kernel.name());
    print!("{}", Table(&rows));
    Ok(true)
}

pub fn check(a: &CheckArgs) -> Result<bool> {
    let suite = match a.suite {
        SuiteArg::All => Suite::All,
        SuiteArg::Kernels => Suite::Kernels,
        SuiteArg::Scan => Suite::Scan,
        SuiteArg::Blocks => Suite::Blocks,
        SuiteArg::Sim => Suite::Sim,
    };
    let outcomes = check::run_suite(suite, a.seed);
    for o in &outcomes {
        println!("{o}");
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} checks passed", outcomes.len());
    Ok(passed == outcomes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        assert_eq!(load_config("@compact").unwrap(), ModelConfig::compact());
        assert!(load_config("@nope").is_err());
        assert!(load_config("/does/not/exist.toml").is_err());
    }
}
