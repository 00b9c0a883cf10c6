use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::params::ModelParams;
use crate::gnn::ModelConfig;
use crate::write_atomic;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rerun a trained scorer. Floats are written with
/// round-trip precision, so a reload is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    pub iteration: usize,
    pub val_f1: f64,
    pub param_count: usize,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: &ModelConfig, params: ModelParams, iteration: usize, val_f1: f64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: config.seed,
            param_count: params.active_count(config),
            config: config.clone(),
            iteration,
            val_f1,
            params,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(ckpt)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ckpt.config.validate()?;
    let expected = ModelParams::zeros(&ckpt.config);
    if expected.len() != ckpt.params.len() || expected.heads.len() != ckpt.params.heads.len() {
        return Err(Error::Config(
            "checkpoint tensors do not match its config".into(),
        ));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reload_is_bit_exact() {
        let cfg = ModelConfig::default();
        let mut params = ModelParams::init(&cfg);
        // Values with long binary expansions.
        params.cls_b[0] = 0.1 + 0.2;
        params.cls_b[1] = 1.0 / 3.0;
        params.cls_b[2] = f64::MIN_POSITIVE;
        let ck = Checkpoint::new(&cfg, params, 7, 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let a: Vec<u64> = ck.params.to_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params.to_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let cfg = ModelConfig::default();
        let mut ck = Checkpoint::new(&cfg, ModelParams::init(&cfg), 1, 0.0);
        ck.params.cls_b.pop();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&ck, &path).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
