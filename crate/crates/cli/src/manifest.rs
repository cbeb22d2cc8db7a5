//! JSON manifests written next to simulate and demosaic outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// `out.pgm` -> `out.pgm.json`
pub fn path_for(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write<T: Serialize>(output: &Path, manifest: &T) -> Result<PathBuf> {
    let path = path_for(output);
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Serialize)]
pub struct SimulateManifest<'a> {
    pub input: &'a Path,
    pub raw: &'a Path,
    pub mask: &'a Path,
    pub height: usize,
    pub width: usize,
    pub pattern: &'static str,
    pub seed: u64,
    pub event_density: f64,
    pub noise_sigma: Option<f64>,
    pub event_pixels: usize,
}

#[derive(Serialize)]
pub struct DemosaicManifest<'a> {
    pub raw: &'a Path,
    pub mask: Option<&'a Path>,
    pub output: &'a Path,
    pub height: usize,
    pub width: usize,
    pub method: &'static str,
    /// Weight file, or `null` when the seeded random init was used.
    pub weights: Option<&'a Path>,
    pub seed: Option<u64>,
    pub config: Option<&'a bmt_core::pipeline::ModelConfig>,
    pub tile: Option<usize>,
    pub overlap: Option<usize>,
    pub pattern: Option<&'static str>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(path_for(Path::new("a/out.pgm")), PathBuf::from("a/out.pgm.json"));
    }
}
