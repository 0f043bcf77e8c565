//! Run configuration files: a TOML mirror of the training configuration
//! plus file paths, merged under explicit precedence (defaults, then file,
//! then command-line flags), and a stable hash over the effective
//! configuration for model provenance.

use crate::error::{Error, Result};
use crate::line_search::LineSearchConfig;
use crate::solver::ProjectionConfig;
use crate::trainer::TrainConfig;
use std::path::Path;

/// The on-disk shape: every training field optional (absent means "keep
/// the current value"), plus optional dataset/output paths so a run can be
/// described entirely by one file. Unknown keys are rejected, here and
/// inside the nested sections.
#[derive(Debug, Clone, Default, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    /// Dataset CSV to train on.
    pub data: Option<String>,
    /// Model output path.
    pub out: Option<String>,
    /// Curve CSV output path.
    pub curve: Option<String>,
    pub hidden_units: Option<usize>,
    pub max_epochs: Option<usize>,
    pub min_mse_delta: Option<f64>,
    pub init_scale: Option<f64>,
    pub seed: Option<u64>,
    pub target_mse: Option<f64>,
    pub line_search: Option<LineSearchConfig>,
    pub solver_epoch: Option<ProjectionConfig>,
    pub solver_linesearch: Option<ProjectionConfig>,
}

impl RunConfigFile {
    /// Overlay this file's set fields onto `base` and return the result.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        if let Some(v) = self.hidden_units {
            cfg.hidden_units = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.min_mse_delta {
            cfg.min_mse_delta = v;
        }
        if let Some(v) = self.init_scale {
            cfg.init_scale = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.target_mse {
            cfg.target_mse = Some(v);
        }
        if let Some(v) = &self.line_search {
            cfg.line_search = v.clone();
        }
        if let Some(v) = &self.solver_epoch {
            cfg.solver_epoch = v.clone();
        }
        if let Some(v) = &self.solver_linesearch {
            cfg.solver_linesearch = v.clone();
        }
        cfg
    }
}

/// Map a TOML parse failure onto the crate's line-addressed parse error.
fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        msg: e.message().to_string(),
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfigFile> {
    toml::from_str(text).map_err(|e| toml_error(text, e))
}

pub fn load_run_config(path: &Path) -> Result<RunConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_config(&text)
}

/// FNV-1a over a byte string; stable, documented, dependency-free.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash of the effective training configuration: FNV-1a over its canonical
/// TOML rendering. Two runs share a hash exactly when every training field
/// (solver and search settings included) agrees.
pub fn config_hash(cfg: &TrainConfig) -> Result<u64> {
    let text = toml::to_string(cfg)
        .map_err(|e| Error::InvalidConfig(format!("configuration not serializable: {e}")))?;
    Ok(fnv1a64(text.as_bytes()))
}
