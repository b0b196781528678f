use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, VipError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpKind {
    #[default]
    GeluMlp,
    Swiglu,
}

fn default_eps() -> f32 {
    1e-6
}

fn default_in_chans() -> usize {
    3
}

/// Architecture hyperparameters of a pre-norm ViT with optional register tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub patch_size: usize,
    #[serde(default)]
    pub num_registers: usize,
    #[serde(default)]
    pub mlp_kind: MlpKind,
    /// MLP hidden width. For SwiGLU this is the width of each gate half.
    pub mlp_hidden: usize,
    #[serde(default)]
    pub layerscale: bool,
    #[serde(default = "default_eps")]
    pub eps: f32,
    /// Patch grid the stored positional embeddings were trained at.
    pub pos_grid: [usize; 2],
    #[serde(default = "default_in_chans")]
    pub in_chans: usize,
}

impl ModelConfig {
    /// A small GELU-MLP config, handy for tests and demos.
    pub fn tiny(depth: usize, dim: usize, heads: usize, num_registers: usize) -> Self {
        Self {
            depth,
            dim,
            heads,
            patch_size: 2,
            num_registers,
            mlp_kind: MlpKind::GeluMlp,
            mlp_hidden: 2 * dim,
            layerscale: false,
            eps: default_eps(),
            pos_grid: [2, 2],
            in_chans: 3,
        }
    }

    /// Published DINOv2 family variants (`small`, `base`, `large`, `giant`), patch 14, 518px grid.
    pub fn dinov2(variant: &str, num_registers: usize) -> Result<Self> {
        let (depth, dim, heads, kind, hidden) = match variant {
            "small" => (12, 384, 6, MlpKind::GeluMlp, 1536),
            "base" => (12, 768, 12, MlpKind::GeluMlp, 3072),
            "large" => (24, 1024, 16, MlpKind::GeluMlp, 4096),
            "giant" => (40, 1536, 24, MlpKind::Swiglu, 4096),
            other => {
                return Err(VipError::invalid(format!(
                    "unknown DINOv2 variant `{other}`"
                )))
            }
        };
        Ok(Self {
            depth,
            dim,
            heads,
            patch_size: 14,
            num_registers,
            mlp_kind: kind,
            mlp_hidden: hidden,
            layerscale: true,
            eps: 1e-6,
            pos_grid: [37, 37],
            in_chans: 3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VipError::invalid(format!("model config: {m}")));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.patch_size == 0 {
            return bad("patch_size must be at least 1");
        }
        if self.heads == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad("dim must be a positive multiple of heads");
        }
        if self.mlp_hidden == 0 || self.in_chans == 0 {
            return bad("mlp_hidden and in_chans must be positive");
        }
        if self.pos_grid.contains(&0) {
            return bad("pos_grid extents must be positive");
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Length of one flattened input patch (`in_chans · patch_size²`).
    pub fn patch_dim(&self) -> usize {
        self.in_chans * self.patch_size * self.patch_size
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
