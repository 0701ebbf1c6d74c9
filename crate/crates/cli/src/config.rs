//! Plain-text key=value pipeline configuration. Command-line flags override
//! config-file values, which override built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub rule_file: Option<PathBuf>,
    pub seed: Option<u64>,
    pub skip_probability: Option<f64>,
    pub lm_order: Option<usize>,
    pub lm_weight: Option<f64>,
    pub beam: Option<usize>,
    pub data_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = PipelineConfig::default();
        for (idx, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value, found {:?}", idx + 1, line);
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "rule_file" => cfg.rule_file = Some(PathBuf::from(value)),
                "seed" => cfg.seed = Some(value.parse().context("bad seed")?),
                "skip_probability" => {
                    cfg.skip_probability = Some(value.parse().context("bad skip_probability")?)
                }
                "lm_order" => cfg.lm_order = Some(value.parse().context("bad lm_order")?),
                "lm_weight" => cfg.lm_weight = Some(value.parse().context("bad lm_weight")?),
                "beam" => cfg.beam = Some(value.parse().context("bad beam")?),
                "data_dir" => cfg.data_dir = Some(PathBuf::from(value)),
                other => bail!("config line {}: unknown key {:?}", idx + 1, other),
            }
        }
        Ok(cfg)
    }

    /// The resolved values as key=value lines, for stamping into outputs.
    pub fn stamp(&self, rule_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("rule_hash={rule_hash}\n"));
        if let Some(v) = &self.rule_file {
            out.push_str(&format!("rule_file={}\n", v.display()));
        }
        if let Some(v) = self.seed {
            out.push_str(&format!("seed={v}\n"));
        }
        if let Some(v) = self.skip_probability {
            out.push_str(&format!("skip_probability={v}\n"));
        }
        if let Some(v) = self.lm_order {
            out.push_str(&format!("lm_order={v}\n"));
        }
        if let Some(v) = self.lm_weight {
            out.push_str(&format!("lm_weight={v}\n"));
        }
        if let Some(v) = self.beam {
            out.push_str(&format!("beam={v}\n"));
        }
        out
    }
}
