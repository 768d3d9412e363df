//! Run manifests: the resolved configuration plus content hashes of every
//! input, written next to the outputs. Re-running a manifest reproduces the
//! outputs bit for bit (the RNG is fully seeded and output formatting is
//! deterministic).

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub routing: PathBuf,
    pub links: PathBuf,
    pub truth: Option<PathBuf>,
    pub stage1: String,
    pub node_map: Option<PathBuf>,
    pub particles: usize,
    pub move_iters: usize,
    pub rda_steps: usize,
    pub window: usize,
    pub rho: f64,
    pub tau: f64,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub resampling: String,
    pub dump_particles: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn for_run(config: RunConfig) -> anyhow::Result<Self> {
        let mut inputs = vec![InputDigest {
            path: config.routing.clone(),
            sha256: sha256_file(&config.routing)?,
        }];
        inputs.push(InputDigest { path: config.links.clone(), sha256: sha256_file(&config.links)? });
        if let Some(t) = &config.truth {
            inputs.push(InputDigest { path: t.clone(), sha256: sha256_file(t)? });
        }
        if let Some(m) = &config.node_map {
            inputs.push(InputDigest { path: m.clone(), sha256: sha256_file(m)? });
        }
        Ok(Manifest {
            tool: "nettomo".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: "run".to_string(),
            config,
            inputs,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
