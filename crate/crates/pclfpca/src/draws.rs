//! On-disk layout for posterior draws.
//!
//! A run directory holds one CSV per parameter block per chain
//! (`xi_chain0.csv`, `c_chain1.csv`, ...; one row per snapshot, columns
//! flattened in row-major order) plus `manifest.json` with the configs,
//! seed, dimensions and a SHA-256 content hash over all draw files.
//! Wall-clock timing lives in a separate `timing.json` so reruns with the
//! same config and seed produce bit-identical manifests.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{McmcConfig, McmcState, ModelConfig, PosteriorDraws};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

const BLOCKS: [&str; 7] = ["xi", "c", "mu", "s", "p_raw", "p", "alpha_tau"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawsManifest {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub mcmc: McmcConfig,
    pub n_curves: usize,
    pub n_points: usize,
    pub snapshots_per_chain: usize,
    pub files: Vec<String>,
    /// SHA-256 over the concatenated draw files, in `files` order.
    pub content_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timing {
    wall_clock_secs: f64,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn block_rows(state: &McmcState, block: &str) -> Vec<String> {
    match block {
        "xi" => state.xi.iter().map(|&v| fmt(v)).collect(),
        "c" => state.c.iter().flatten().map(|&v| v.to_string()).collect(),
        "mu" => state.mu.iter().flatten().map(|&v| fmt(v)).collect(),
        "s" => state.s.iter().flatten().map(|&v| fmt(v)).collect(),
        "p_raw" => state.p_raw.iter().flatten().map(|&v| fmt(v)).collect(),
        "p" => state.p.iter().flatten().map(|&v| fmt(v)).collect(),
        "alpha_tau" => state
            .alpha
            .iter()
            .map(|&v| fmt(v))
            .chain(std::iter::once(fmt(state.tau)))
            .collect(),
        _ => unreachable!("unknown block"),
    }
}

/// Persist draws to `dir`, creating it if needed.
pub fn save(draws: &PosteriorDraws, dir: &Path) -> Result<DrawsManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut hasher = Sha256::new();
    for block in BLOCKS {
        for (chain_idx, chain) in draws.chains.iter().enumerate() {
            let name = format!("{block}_chain{chain_idx}.csv");
            let mut contents = String::new();
            for state in chain {
                contents.push_str(&block_rows(state, block).join(","));
                contents.push('\n');
            }
            fs::write(dir.join(&name), &contents)?;
            hasher.update(contents.as_bytes());
            files.push(name);
        }
    }
    let manifest = DrawsManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        model: draws.model.clone(),
        mcmc: draws.mcmc,
        n_curves: draws.n_curves,
        n_points: draws.n_points,
        snapshots_per_chain: draws.mcmc.snapshots_per_chain(),
        files,
        content_sha256: format!("{:x}", hasher.finalize()),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(
        dir.join("timing.json"),
        serde_json::to_string_pretty(&Timing { wall_clock_secs: draws.wall_clock_secs })?,
    )?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DrawsManifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load draws back from a run directory.
pub fn load(dir: &Path) -> Result<PosteriorDraws> {
    let manifest = load_manifest(dir)?;
    let n = manifest.n_curves;
    let k = manifest.model.k;
    let j = manifest.model.j;
    let chains_count = manifest.mcmc.chains;

    let read_block = |block: &str, chain_idx: usize| -> Result<Vec<Vec<f64>>> {
        let name = format!("{block}_chain{chain_idx}.csv");
        let text = fs::read_to_string(dir.join(&name))?;
        text.lines()
            .map(|line| {
                line.split(',')
                    .map(|cell| {
                        cell.parse::<f64>()
                            .map_err(|e| Error::Format(format!("{name}: {e}")))
                    })
                    .collect()
            })
            .collect()
    };

    let mut chains = Vec::with_capacity(chains_count);
    for chain_idx in 0..chains_count {
        let xi = read_block("xi", chain_idx)?;
        let c = read_block("c", chain_idx)?;
        let mu = read_block("mu", chain_idx)?;
        let s = read_block("s", chain_idx)?;
        let p_raw = read_block("p_raw", chain_idx)?;
        let p = read_block("p", chain_idx)?;
        let alpha_tau = read_block("alpha_tau", chain_idx)?;

        let snapshots = xi.len();
        let mut chain = Vec::with_capacity(snapshots);
        for w in 0..snapshots {
            let unflatten = |flat: &[f64], cols: usize| -> Vec<Vec<f64>> {
                flat.chunks(cols).map(|chunk| chunk.to_vec()).collect()
            };
            // nalgebra iteration is column-major; rebuild with the same order.
            let xi_mat = DMatrix::from_iterator(n, k, xi[w].iter().copied());
            chain.push(McmcState {
                xi: xi_mat,
                c: c[w].chunks(n).map(|ch| ch.iter().map(|&v| v as usize).collect()).collect(),
                mu: unflatten(&mu[w], j),
                s: unflatten(&s[w], j),
                p_raw: unflatten(&p_raw[w], j),
                p: unflatten(&p[w], j),
                alpha: alpha_tau[w][..k].to_vec(),
                tau: alpha_tau[w][k],
            });
        }
        chains.push(chain);
    }

    Ok(PosteriorDraws {
        chains,
        model: manifest.model,
        mcmc: manifest.mcmc,
        n_curves: manifest.n_curves,
        n_points: manifest.n_points,
        wall_clock_secs: 0.0,
    })
}
