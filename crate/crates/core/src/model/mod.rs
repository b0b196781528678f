//! Pre-norm ViT with a CLS token, optional register tokens and instrumented
//! forward passes.
//!
//! # Weight naming
//!
//! The canonical names (what [`Model::to_tensors`] writes) are
//!
//! | name | shape |
//! |------|-------|
//! | `patch_embed.proj.weight` | `[dim, in_chans, patch, patch]` |
//! | `patch_embed.proj.bias` | `[dim]` |
//! | `cls_token` | `[1, 1, dim]` |
//! | `register_tokens` | `[1, num_registers, dim]` (only when `num_registers > 0`) |
//! | `pos_embed` | `[1, 1 + pos_grid.0 * pos_grid.1, dim]` |
//! | `blocks.{i}.norm1.{weight,bias}` | `[dim]` |
//! | `blocks.{i}.attn.{q,k,v,proj}.weight` | `[dim, dim]` |
//! | `blocks.{i}.attn.{q,k,v,proj}.bias` | `[dim]` |
//! | `blocks.{i}.ls1.gamma`, `blocks.{i}.ls2.gamma` | `[dim]` (only with `layerscale`) |
//! | `blocks.{i}.norm2.{weight,bias}` | `[dim]` |
//! | `blocks.{i}.mlp.fc1.weight` / `.bias` | `[hidden, dim]` / `[hidden]` (GELU MLP) |
//! | `blocks.{i}.mlp.fc2.weight` / `.bias` | `[dim, hidden]` / `[dim]` (GELU MLP) |
//! | `blocks.{i}.mlp.w12.weight` / `.bias` | `[2 * hidden, dim]` / `[2 * hidden]` (SwiGLU) |
//! | `blocks.{i}.mlp.w3.weight` / `.bias` | `[dim, hidden]` / `[dim]` (SwiGLU) |
//! | `norm.{weight,bias}` | `[dim]` |
//!
//! A fused `blocks.{i}.attn.qkv.{weight,bias}` (`[3 * dim, dim]`, rows ordered
//! q, k, v) is accepted in place of the separate projections. Containers
//! exported from the Hugging Face `Dinov2Model` / `Dinov2WithRegistersModel`
//! classes are detected by their `embeddings.cls_token` key and remapped.

pub mod config;
pub mod container;
mod forward;
pub mod layout;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use config::{MlpKind, ModelConfig};
pub use container::NamedTensors;
pub use forward::{AttentionMask, ForwardOptions, ForwardTrace, LayerTrace, Patches};
pub use layout::{TokenGroup, TokenLayout};

use crate::error::{Result, VipError};
use crate::tensor::{LayerNormParams, Tensor};

/// A dense layer `y = x · weightᵀ + bias` with `weight` stored `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        crate::tensor::linear(x, &self.weight, Some(&self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub proj: Linear,
}

#[derive(Clone, Debug)]
pub enum Mlp {
    Gelu { fc1: Linear, fc2: Linear },
    SwiGlu { w12: Linear, w3: Linear },
}

#[derive(Clone, Debug)]
pub struct Block {
    pub norm1: LayerNormParams,
    pub attn: Attention,
    pub ls1: Option<Vec<f32>>,
    pub norm2: LayerNormParams,
    pub mlp: Mlp,
    pub ls2: Option<Vec<f32>>,
}

/// An immutable, loaded model.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    patch_embed: Linear,
    cls_token: Vec<f32>,
    register_tokens: Option<Tensor>,
    /// `[1 + g0·g1, dim]`; row 0 belongs to the CLS token.
    pos_embed: Tensor,
    blocks: Vec<Block>,
    norm: LayerNormParams,
}

/// Every tensor a config requires, as `(canonical name, shape)` pairs.
pub fn expected_tensors(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.dim;
    let h = config.mlp_hidden;
    let p = config.patch_size;
    let g = config.pos_grid[0] * config.pos_grid[1];
    let mut out = vec![
        ("patch_embed.proj.weight".to_string(), vec![d, config.in_chans, p, p]),
        ("patch_embed.proj.bias".to_string(), vec![d]),
        ("cls_token".to_string(), vec![1, 1, d]),
    ];
    if config.num_registers > 0 {
        out.push(("register_tokens".into(), vec![1, config.num_registers, d]));
    }
    out.push(("pos_embed".into(), vec![1, 1 + g, d]));
    for i in 0..config.depth {
        let b = |s: &str| format!("blocks.{i}.{s}");
        out.push((b("norm1.weight"), vec![d]));
        out.push((b("norm1.bias"), vec![d]));
        for proj in ["q", "k", "v", "proj"] {
            out.push((b(&format!("attn.{proj}.weight")), vec![d, d]));
            out.push((b(&format!("attn.{proj}.bias")), vec![d]));
        }
        if config.layerscale {
            out.push((b("ls1.gamma"), vec![d]));
        }
        out.push((b("norm2.weight"), vec![d]));
        out.push((b("norm2.bias"), vec![d]));
        match config.mlp_kind {
            MlpKind::GeluMlp => {
                out.push((b("mlp.fc1.weight"), vec![h, d]));
                out.push((b("mlp.fc1.bias"), vec![h]));
                out.push((b("mlp.fc2.weight"), vec![d, h]));
                out.push((b("mlp.fc2.bias"), vec![d]));
            }
            MlpKind::Swiglu => {
                out.push((b("mlp.w12.weight"), vec![2 * h, d]));
                out.push((b("mlp.w12.bias"), vec![2 * h]));
                out.push((b("mlp.w3.weight"), vec![d, h]));
                out.push((b("mlp.w3.bias"), vec![d]));
            }
        }
        if config.layerscale {
            out.push((b("ls2.gamma"), vec![d]));
        }
    }
    out.push(("norm.weight".into(), vec![d]));
    out.push(("norm.bias".into(), vec![d]));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Naming {
    Canonical,
    HuggingFace,
}

/// Maps a canonical name onto the Hugging Face DINOv2 key.
fn hf_name(canonical: &str) -> String {
    let fixed = match canonical {
        "cls_token" => Some("embeddings.cls_token"),
        "register_tokens" => Some("embeddings.register_tokens"),
        "pos_embed" => Some("embeddings.position_embeddings"),
        "patch_embed.proj.weight" => Some("embeddings.patch_embeddings.projection.weight"),
        "patch_embed.proj.bias" => Some("embeddings.patch_embeddings.projection.bias"),
        "norm.weight" => Some("layernorm.weight"),
        "norm.bias" => Some("layernorm.bias"),
        _ => None,
    };
    if let Some(f) = fixed {
        return f.to_string();
    }
    let Some(rest) = canonical.strip_prefix("blocks.") else {
        return canonical.to_string();
    };
    let (idx, tail) = rest.split_once('.').unwrap_or((rest, ""));
    let tail = match tail {
        "attn.q.weight" => "attention.attention.query.weight",
        "attn.q.bias" => "attention.attention.query.bias",
        "attn.k.weight" => "attention.attention.key.weight",
        "attn.k.bias" => "attention.attention.key.bias",
        "attn.v.weight" => "attention.attention.value.weight",
        "attn.v.bias" => "attention.attention.value.bias",
        "attn.proj.weight" => "attention.output.dense.weight",
        "attn.proj.bias" => "attention.output.dense.bias",
        "ls1.gamma" => "layer_scale1.lambda1",
        "ls2.gamma" => "layer_scale2.lambda1",
        "mlp.w12.weight" => "mlp.weights_in.weight",
        "mlp.w12.bias" => "mlp.weights_in.bias",
        "mlp.w3.weight" => "mlp.weights_out.weight",
        "mlp.w3.bias" => "mlp.weights_out.bias",
        other => other,
    };
    format!("encoder.layer.{idx}.{tail}")
}

/// Pulls tensors out of a container with exact shape checks.
struct TensorSource {
    tensors: NamedTensors,
    naming: Naming,
}

impl TensorSource {
    fn new(tensors: NamedTensors) -> Self {
        let naming = if tensors.contains_key("embeddings.cls_token") {
            Naming::HuggingFace
        } else {
            Naming::Canonical
        };
        Self { tensors, naming }
    }

    fn key(&self, canonical: &str) -> String {
        match self.naming {
            Naming::Canonical => canonical.to_string(),
            Naming::HuggingFace => hf_name(canonical),
        }
    }

    fn take(&mut self, canonical: &str, shape: &[usize]) -> Result<Tensor> {
        let key = self.key(canonical);
        let t = match self.tensors.remove(&key) {
            Some(t) => t,
            None => self.take_fused(canonical)?,
        };
        if t.shape() != shape {
            return Err(VipError::ShapeMismatch {
                name: key,
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        Ok(t)
    }

    /// Slices q, k or v out of a fused `attn.qkv` tensor.
    fn take_fused(&mut self, canonical: &str) -> Result<Tensor> {
        let missing = || VipError::MissingTensor(self.key(canonical));
        let Some((prefix, part)) = canonical
            .strip_suffix(".weight")
            .map(|p| (p, "weight"))
            .or_else(|| canonical.strip_suffix(".bias").map(|p| (p, "bias")))
        else {
            return Err(missing());
        };
        let slot = match prefix.rsplit_once('.') {
            Some((head, "q")) if head.ends_with(".attn") => (head, 0),
            Some((head, "k")) if head.ends_with(".attn") => (head, 1),
            Some((head, "v")) if head.ends_with(".attn") => (head, 2),
            _ => return Err(missing()),
        };
        let fused_name = format!("{}.qkv.{part}", slot.0);
        let Some(fused) = self.tensors.get(&fused_name) else {
            return Err(missing());
        };
        let rows = fused.shape()[0];
        if rows % 3 != 0 {
            return Err(VipError::ShapeMismatch {
                name: fused_name,
                expected: vec![3 * (rows / 3)],
                found: fused.shape().to_vec(),
            });
        }
        let per = fused.numel() / 3;
        let data = fused.data()[slot.1 * per..(slot.1 + 1) * per].to_vec();
        let mut shape = fused.shape().to_vec();
        shape[0] = rows / 3;
        Tensor::new(shape, data)
    }
}

fn linear_from(src: &mut TensorSource, name: &str, out: usize, inp: usize) -> Result<Linear> {
    let weight = src.take(&format!("{name}.weight"), &[out, inp])?;
    let bias = src.take(&format!("{name}.bias"), &[out])?.into_data();
    Ok(Linear { weight, bias })
}

fn norm_from(src: &mut TensorSource, name: &str, dim: usize, eps: f32) -> Result<LayerNormParams> {
    Ok(LayerNormParams {
        gain: src.take(&format!("{name}.weight"), &[dim])?.into_data(),
        bias: src.take(&format!("{name}.bias"), &[dim])?.into_data(),
        eps,
    })
}

impl Model {
    /// Loads a model from a weight container on disk.
    pub fn load_weights(path: &Path, config: ModelConfig) -> Result<Self> {
        let tensors = container::read(path)?;
        Self::from_tensors(tensors, config)
    }

    /// Builds a model from named tensors, validating every name and shape.
    pub fn from_tensors(tensors: NamedTensors, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut src = TensorSource::new(tensors);
        let d = config.dim;
        let h = config.mlp_hidden;
        let eps = config.eps;
        let p = config.patch_size;
        let g = config.pos_grid[0] * config.pos_grid[1];

        let pe_w = src.take("patch_embed.proj.weight", &[d, config.in_chans, p, p])?;
        let patch_embed = Linear {
            weight: pe_w.reshape(vec![d, config.patch_dim()])?,
            bias: src.take("patch_embed.proj.bias", &[d])?.into_data(),
        };
        let cls_token = src.take("cls_token", &[1, 1, d])?.into_data();
        let register_tokens = if config.num_registers > 0 {
            let t = src.take("register_tokens", &[1, config.num_registers, d])?;
            Some(t.reshape(vec![config.num_registers, d])?)
        } else {
            None
        };
        let pos_embed = src.take("pos_embed", &[1, 1 + g, d])?.reshape(vec![1 + g, d])?;

        let mut blocks = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let b = |s: &str| format!("blocks.{i}.{s}");
            let norm1 = norm_from(&mut src, &b("norm1"), d, eps)?;
            let attn = Attention {
                q: linear_from(&mut src, &b("attn.q"), d, d)?,
                k: linear_from(&mut src, &b("attn.k"), d, d)?,
                v: linear_from(&mut src, &b("attn.v"), d, d)?,
                proj: linear_from(&mut src, &b("attn.proj"), d, d)?,
            };
            let ls1 = if config.layerscale {
                Some(src.take(&b("ls1.gamma"), &[d])?.into_data())
            } else {
                None
            };
            let norm2 = norm_from(&mut src, &b("norm2"), d, eps)?;
            let mlp = match config.mlp_kind {
                MlpKind::GeluMlp => Mlp::Gelu {
                    fc1: linear_from(&mut src, &b("mlp.fc1"), h, d)?,
                    fc2: linear_from(&mut src, &b("mlp.fc2"), d, h)?,
                },
                MlpKind::Swiglu => Mlp::SwiGlu {
                    w12: linear_from(&mut src, &b("mlp.w12"), 2 * h, d)?,
                    w3: linear_from(&mut src, &b("mlp.w3"), d, h)?,
                },
            };
            let ls2 = if config.layerscale {
                Some(src.take(&b("ls2.gamma"), &[d])?.into_data())
            } else {
                None
            };
            blocks.push(Block {
                norm1,
                attn,
                ls1,
                norm2,
                mlp,
                ls2,
            });
        }
        let norm = norm_from(&mut src, "norm", d, eps)?;
        Ok(Self {
            config,
            patch_embed,
            cls_token,
            register_tokens,
            pos_embed,
            blocks,
            norm,
        })
    }

    /// A randomly initialized model, deterministic in `seed`.
    ///
    /// Linear weights are N(0, 1/fan_in), biases N(0, 0.1²), norm gains
    /// 1 + N(0, 0.1²), embeddings N(0, 1), layer-scale gains U(0.5, 1.5).
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = NamedTensors::new();
        for (name, shape) in expected_tensors(&config) {
            let n: usize = shape.iter().product();
            let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
            let data: Vec<f32> = if name.ends_with("gamma") {
                (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
            } else if name.contains("norm") && name.ends_with("weight") {
                let dist = Normal::new(1.0, 0.1).unwrap();
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            } else if name.ends_with("weight") {
                let dist = Normal::new(0.0, (1.0 / fan_in as f32).sqrt()).unwrap();
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            } else if name.ends_with("bias") {
                let dist = Normal::new(0.0, 0.1).unwrap();
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            } else {
                let dist = Normal::new(0.0, 1.0).unwrap();
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            };
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Self::from_tensors(tensors, config)
    }

    /// Exports all parameters under their canonical names.
    pub fn to_tensors(&self) -> NamedTensors {
        let c = &self.config;
        let d = c.dim;
        let mut out = NamedTensors::new();
        let mut put = |name: String, shape: Vec<usize>, data: &[f32]| {
            out.insert(name, Tensor::new(shape, data.to_vec()).expect("consistent shape"));
        };
        fn put_linear(put: &mut impl FnMut(String, Vec<usize>, &[f32]), name: String, l: &Linear) {
            put(format!("{name}.weight"), l.weight.shape().to_vec(), l.weight.data());
            put(format!("{name}.bias"), vec![l.bias.len()], &l.bias);
        }
        put(
            "patch_embed.proj.weight".into(),
            vec![d, c.in_chans, c.patch_size, c.patch_size],
            self.patch_embed.weight.data(),
        );
        put("patch_embed.proj.bias".into(), vec![d], &self.patch_embed.bias);
        put("cls_token".into(), vec![1, 1, d], &self.cls_token);
        if let Some(r) = &self.register_tokens {
            put("register_tokens".into(), vec![1, c.num_registers, d], r.data());
        }
        put(
            "pos_embed".into(),
            vec![1, self.pos_embed.shape()[0], d],
            self.pos_embed.data(),
        );
        for (i, blk) in self.blocks.iter().enumerate() {
            let b = |s: &str| format!("blocks.{i}.{s}");
            put(b("norm1.weight"), vec![d], &blk.norm1.gain);
            put(b("norm1.bias"), vec![d], &blk.norm1.bias);
            put_linear(&mut put, b("attn.q"), &blk.attn.q);
            put_linear(&mut put, b("attn.k"), &blk.attn.k);
            put_linear(&mut put, b("attn.v"), &blk.attn.v);
            put_linear(&mut put, b("attn.proj"), &blk.attn.proj);
            if let Some(g) = &blk.ls1 {
                put(b("ls1.gamma"), vec![d], g);
            }
            put(b("norm2.weight"), vec![d], &blk.norm2.gain);
            put(b("norm2.bias"), vec![d], &blk.norm2.bias);
            match &blk.mlp {
                Mlp::Gelu { fc1, fc2 } => {
                    put_linear(&mut put, b("mlp.fc1"), fc1);
                    put_linear(&mut put, b("mlp.fc2"), fc2);
                }
                Mlp::SwiGlu { w12, w3 } => {
                    put_linear(&mut put, b("mlp.w12"), w12);
                    put_linear(&mut put, b("mlp.w3"), w3);
                }
            }
            if let Some(g) = &blk.ls2 {
                put(b("ls2.gamma"), vec![d], g);
            }
        }
        put("norm.weight".into(), vec![d], &self.norm.gain);
        put("norm.bias".into(), vec![d], &self.norm.bias);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = std::collections::HashMap::from([(
            "config".to_string(),
            serde_json::to_string(&self.config)?,
        )]);
        container::write(path, &self.to_tensors(), Some(meta))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, layer: usize) -> Result<&Block> {
        self.blocks.get(layer).ok_or_else(|| {
            VipError::invalid(format!(
                "layer {layer} out of range for depth {}",
                self.config.depth
            ))
        })
    }

    pub fn final_norm(&self) -> &LayerNormParams {
        &self.norm
    }

    pub fn num_parameters(&self) -> usize {
        self.to_tensors().values().map(Tensor::numel).sum()
    }

    pub fn layout(&self, grid: (usize, usize)) -> TokenLayout {
        TokenLayout::new(self.config.num_registers, grid)
    }
}
