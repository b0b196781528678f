//! Manifest of published checkpoints usable with `--with-checkpoints`.
//!
//! Files are not downloaded by the tool. Each entry names the upstream
//! repository and the file name expected under `VIP_CHECKPOINT_DIR`.

use std::path::PathBuf;

use serde::Deserialize;
use vip_core::model::ModelConfig;
use vip_core::{Result, VipError};

pub const CHECKPOINT_ENV: &str = "VIP_CHECKPOINT_DIR";
const MANIFEST: &str = include_str!("../checkpoints.json");

#[derive(Clone, Debug, Deserialize)]
pub struct Checkpoint {
    pub name: String,
    pub variant: String,
    pub registers: usize,
    pub source: String,
    pub file: String,
}

impl Checkpoint {
    pub fn config(&self) -> Result<ModelConfig> {
        ModelConfig::dinov2(&self.variant, self.registers)
    }

    pub fn path(&self) -> Result<PathBuf> {
        let root = std::env::var_os(CHECKPOINT_ENV).ok_or_else(|| {
            VipError::InvalidArgument(format!(
                "checkpoint `{}` requested but {CHECKPOINT_ENV} is not set",
                self.name
            ))
        })?;
        Ok(PathBuf::from(root).join(&self.file))
    }
}

pub fn manifest() -> Vec<Checkpoint> {
    serde_json::from_str(MANIFEST).expect("embedded manifest is valid")
}

pub fn find(name: &str) -> Option<Checkpoint> {
    manifest().into_iter().find(|c| c.name == name)
}

/// Parses `dinov2-<variant>` or `dinov2-<variant>-reg<N>`.
pub fn preset(name: &str) -> Option<Result<ModelConfig>> {
    let rest = name.strip_prefix("dinov2-")?;
    let (variant, regs) = match rest.split_once("-reg") {
        Some((v, n)) => (v, n.parse().ok()?),
        None => (rest, 0),
    };
    Some(ModelConfig::dinov2(variant, regs))
}
