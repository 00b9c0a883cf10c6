//! Run configuration: one TOML file, then flag overrides on top.

use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use formgraph::eval::{DecodeOptions, Decoder};
use formgraph::gnn::ModelConfig;
use formgraph::ilp::{ConstraintConfig, SolverOptions};

use crate::Fail;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub decoder: Decoder,
    pub time_limit_seconds: f64,
    pub node_limit: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            decoder: Decoder::Ilp,
            time_limit_seconds: 10.0,
            node_limit: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub decode: DecodeConfig,
    pub constraints: ConstraintConfig,
}

impl RunConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, Fail> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Fail::usage)?;
        toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(Fail::usage)
    }

    pub fn decode_options(&self) -> Result<DecodeOptions, Fail> {
        let secs = self.decode.time_limit_seconds;
        if !(secs.is_finite() && secs > 0.0) {
            return Err(Fail::usage(anyhow::anyhow!(
                "decode.time_limit_seconds must be positive, got {secs}"
            )));
        }
        Ok(DecodeOptions {
            decoder: self.decode.decoder,
            constraints: self.constraints,
            solver: SolverOptions {
                time_limit: Duration::from_secs_f64(secs),
                node_limit: self.decode.node_limit,
            },
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[model]\nseed = 9\n[decode]\ndecoder = \"greedy\"\n").unwrap();
        assert_eq!(cfg.model.seed, 9);
        assert_eq!(cfg.model.hidden_dim, 64);
        assert_eq!(cfg.decode.decoder, Decoder::Greedy);
        assert!(cfg.constraints.c2);
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[modle]\nseed = 1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
