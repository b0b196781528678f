//! Attribution of the CLS output of one layer to token groups.
//!
//! At a layer with attention weights `a` (per head) and value vectors `v`,
//! the CLS attention output is `ls ⊙ (W_o · concat_h(Σ_i a_hi v_hi) + b_o)`.
//! The sum over tokens splits by group (patches, registers, CLS itself).
//! The output-projection bias `ls ⊙ b_o` does not depend on any token and is
//! kept as its own bucket. The residual (skip) input is the last bucket.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::model::{ForwardTrace, Model, TokenGroup, TokenLayout};
use crate::tensor::{self, dot};

/// Contributions to the CLS output at one layer; every field has `dim` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ClsDecomposition {
    pub layer: usize,
    pub patch_contrib: Vec<f32>,
    pub register_contrib: Vec<f32>,
    pub cls_self_contrib: Vec<f32>,
    /// Output-projection bias (times layer scale), shared by all tokens.
    pub bias_contrib: Vec<f32>,
    pub skip_contrib: Vec<f32>,
    /// Attention-block CLS output; equals patch + register + cls_self + bias.
    pub attn_total: Vec<f32>,
    /// Residual stream after the attention add; equals attn_total + skip.
    pub full_out: Vec<f32>,
}

impl ClsDecomposition {
    /// Everything that is not a patch contribution: registers, CLS-self, bias and skip.
    pub fn nonpatch_contrib(&self) -> Vec<f32> {
        (0..self.patch_contrib.len())
            .map(|i| {
                self.register_contrib[i]
                    + self.cls_self_contrib[i]
                    + self.bias_contrib[i]
                    + self.skip_contrib[i]
            })
            .collect()
    }

    /// Two-way view with CLS-self folded into the register bucket.
    pub fn register_with_cls(&self) -> Vec<f32> {
        self.register_contrib
            .iter()
            .zip(&self.cls_self_contrib)
            .map(|(r, c)| r + c)
            .collect()
    }

    pub fn bucket_sum(&self) -> Vec<f32> {
        (0..self.patch_contrib.len())
            .map(|i| {
                (self.patch_contrib[i] as f64
                    + self.register_contrib[i] as f64
                    + self.cls_self_contrib[i] as f64
                    + self.bias_contrib[i] as f64) as f32
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionPartition {
    pub patch_share: f64,
    pub register_share: f64,
    pub cls_self_share: f64,
}

impl AttentionPartition {
    /// Register share with the CLS-self share folded in.
    pub fn register_with_cls_share(&self) -> f64 {
        self.register_share + self.cls_self_share
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionNorms {
    pub patch_norm: f64,
    pub nonpatch_norm: f64,
    pub skip_norm: f64,
}

fn check(trace: &ForwardTrace, layout: &TokenLayout, layer: usize) -> Result<()> {
    let l = trace.layer(layer)?;
    let tokens = l.attention.shape()[1];
    layout.check_tokens(tokens)?;
    if *layout != trace.layout {
        return Err(VipError::invalid("layout does not match the trace"));
    }
    Ok(())
}

/// Splits the CLS output of `layer` into its group contributions.
pub fn decompose_cls(
    model: &Model,
    trace: &ForwardTrace,
    layout: &TokenLayout,
    layer: usize,
) -> Result<ClsDecomposition> {
    check(trace, layout, layer)?;
    let rec = trace.layer(layer)?;
    let block = model.block(layer)?;
    let (heads, t, hd) = rec.attn_values.dims3()?;
    let d = heads * hd;
    if d != model.config().dim {
        return Err(VipError::invalid("trace does not belong to this model"));
    }
    let cls = layout.cls_index;

    // Per-group concatenated head outputs.
    let group_mix = |group: TokenGroup| -> Vec<f32> {
        let mut out = vec![0.0f32; d];
        for h in 0..heads {
            let arow = rec.attention.row(h * t + cls);
            let mut acc = vec![0.0f64; hd];
            for &i in layout.indices(group) {
                let a = arow[i] as f64;
                for (s, &v) in acc.iter_mut().zip(rec.attn_values.row(h * t + i)) {
                    *s += a * v as f64;
                }
            }
            for (o, s) in out[h * hd..(h + 1) * hd].iter_mut().zip(acc) {
                *o = s as f32;
            }
        }
        out
    };
    let ls = block.ls1.as_deref();
    let project = |mix: &[f32]| -> Vec<f32> {
        let w = &block.attn.proj.weight;
        (0..d)
            .map(|o| {
                let v = dot(w.row(o), mix);
                (v * ls.map_or(1.0, |g| g[o] as f64)) as f32
            })
            .collect()
    };

    let patch_contrib = project(&group_mix(TokenGroup::Patches));
    let register_contrib = project(&group_mix(TokenGroup::Registers));
    let cls_self_contrib = project(&group_mix(TokenGroup::Cls));
    let bias_contrib = block
        .attn
        .proj
        .bias
        .iter()
        .enumerate()
        .map(|(o, &b)| (b as f64 * ls.map_or(1.0, |g| g[o] as f64)) as f32)
        .collect();

    Ok(ClsDecomposition {
        layer,
        patch_contrib,
        register_contrib,
        cls_self_contrib,
        bias_contrib,
        skip_contrib: rec.skip_in.row(cls).to_vec(),
        attn_total: rec.attn_block_out.row(cls).to_vec(),
        full_out: rec.residual_mid.row(cls).to_vec(),
    })
}

/// Head-averaged CLS attention mass per token group.
pub fn attention_partition(
    trace: &ForwardTrace,
    layout: &TokenLayout,
    layer: usize,
) -> Result<AttentionPartition> {
    check(trace, layout, layer)?;
    let rec = trace.layer(layer)?;
    let (heads, t, _) = rec.attention.dims3()?;
    let mut avg = vec![0.0f64; t];
    for h in 0..heads {
        for (a, &v) in avg.iter_mut().zip(rec.attention.row(h * t + layout.cls_index)) {
            *a += v as f64;
        }
    }
    avg.iter_mut().for_each(|a| *a /= heads as f64);
    let share = |g: TokenGroup| layout.indices(g).iter().map(|&i| avg[i]).sum::<f64>();
    Ok(AttentionPartition {
        patch_share: share(TokenGroup::Patches),
        register_share: share(TokenGroup::Registers),
        cls_self_share: share(TokenGroup::Cls),
    })
}

/// Head-averaged CLS-to-patch attention as a `[p1, p2]` map.
pub fn cls_patch_attention_map(
    trace: &ForwardTrace,
    layer: usize,
) -> Result<tensor::Tensor> {
    let layout = &trace.layout;
    let rec = trace.layer(layer)?;
    let (heads, t, _) = rec.attention.dims3()?;
    let mut map = vec![0.0f64; layout.patch_indices.len()];
    for h in 0..heads {
        let row = rec.attention.row(h * t + layout.cls_index);
        for (m, &i) in map.iter_mut().zip(&layout.patch_indices) {
            *m += row[i] as f64;
        }
    }
    let data = map.iter().map(|m| (m / heads as f64) as f32).collect();
    tensor::Tensor::new(vec![layout.grid.0, layout.grid.1], data)
}

pub fn contribution_norms(d: &ClsDecomposition) -> ContributionNorms {
    ContributionNorms {
        patch_norm: tensor::norm(&d.patch_contrib),
        nonpatch_norm: tensor::norm(&d.nonpatch_contrib()),
        skip_norm: tensor::norm(&d.skip_contrib),
    }
}

/// Cosine between the patch contribution and the whole attention output.
pub fn patch_total_cosine(d: &ClsDecomposition) -> Result<f64> {
    tensor::cosine(&d.patch_contrib, &d.attn_total).ok_or_else(|| {
        VipError::UndefinedResult("cosine with a zero-norm vector".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Patches};
    use crate::tensor::Tensor;

    fn decomposition_with(patch: Vec<f32>, reg: Vec<f32>, cls: Vec<f32>, skip: Vec<f32>) -> ClsDecomposition {
        let zero = vec![0.0; patch.len()];
        let attn_total: Vec<f32> = (0..patch.len()).map(|i| patch[i] + reg[i] + cls[i]).collect();
        let full_out = attn_total.iter().zip(&skip).map(|(a, s)| a + s).collect();
        ClsDecomposition {
            layer: 0,
            patch_contrib: patch,
            register_contrib: reg,
            cls_self_contrib: cls,
            bias_contrib: zero,
            skip_contrib: skip,
            attn_total,
            full_out,
        }
    }

    #[test]
    fn norms_and_cosines() {
        let d = decomposition_with(vec![3.0, 0.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        let n = contribution_norms(&d);
        assert_eq!(n.patch_norm, 3.0);
        assert_eq!(n.skip_norm, 0.0);
        assert_eq!(patch_total_cosine(&d).unwrap(), 1.0);

        let d = decomposition_with(vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.0; 2], vec![0.0; 2]);
        assert!(patch_total_cosine(&d).unwrap().abs() < 1e-6);

        let d = decomposition_with(vec![0.0; 2], vec![1.0, 0.0], vec![0.0; 2], vec![0.0; 2]);
        assert!(matches!(patch_total_cosine(&d), Err(VipError::UndefinedResult(_))));
    }

    fn setup(registers: usize) -> (Model, ForwardTrace) {
        let cfg = ModelConfig::tiny(2, 8, 2, registers);
        let m = Model::random(cfg.clone(), 11).unwrap();
        let data = (0..4 * cfg.patch_dim()).map(|i| ((i * 37 % 17) as f32 - 8.0) / 8.0).collect();
        let p = Patches::new(Tensor::new(vec![4, cfg.patch_dim()], data).unwrap(), (2, 2)).unwrap();
        let tr = m.forward(&p).unwrap();
        (m, tr)
    }

    #[test]
    fn buckets_sum_to_outputs() {
        let (m, tr) = setup(2);
        let layout = tr.layout.clone();
        let d = decompose_cls(&m, &tr, &layout, 1).unwrap();
        for (s, t) in d.bucket_sum().iter().zip(&d.attn_total) {
            assert!((s - t).abs() < 1e-5);
        }
        for i in 0..8 {
            assert!((d.attn_total[i] + d.skip_contrib[i] - d.full_out[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn no_registers_means_zero_register_bucket() {
        let (m, tr) = setup(0);
        let layout = tr.layout.clone();
        let d = decompose_cls(&m, &tr, &layout, 1).unwrap();
        assert!(d.register_contrib.iter().all(|&v| v == 0.0));
        let p = attention_partition(&tr, &layout, 1).unwrap();
        assert_eq!(p.register_share, 0.0);
        assert!((p.patch_share + p.cls_self_share - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let (m, tr) = setup(1);
        let wrong = TokenLayout::new(2, (2, 2));
        assert!(decompose_cls(&m, &tr, &wrong, 0).is_err());
        assert!(attention_partition(&tr, &wrong, 0).is_err());
        assert!(attention_partition(&tr, &tr.layout, 5).is_err());
    }

    #[test]
    fn patch_map_matches_partition() {
        let (_, tr) = setup(2);
        let map = cls_patch_attention_map(&tr, 1).unwrap();
        assert_eq!(map.shape(), &[2, 2]);
        let p = attention_partition(&tr, &tr.layout, 1).unwrap();
        let s: f64 = map.data().iter().map(|&v| v as f64).sum();
        assert!((s - p.patch_share).abs() < 1e-6);
    }
}
