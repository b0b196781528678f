use super::{Block, Mlp, Model, TokenGroup, TokenLayout};
use crate::error::{Result, VipError};
use crate::tensor::{self, Tensor};

/// Flattened image patches in row-major grid order.
///
/// Each row is one patch laid out channel-major (`c, y, x`), matching the
/// `[dim, in_chans, patch, patch]` patch-embedding kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Patches {
    data: Tensor,
    grid: (usize, usize),
}

impl Patches {
    pub fn new(data: Tensor, grid: (usize, usize)) -> Result<Self> {
        let (n, _) = data.dims2()?;
        if n != grid.0 * grid.1 {
            return Err(VipError::invalid(format!(
                "{n} patches do not fill a {}x{} grid",
                grid.0, grid.1
            )));
        }
        Ok(Self { data, grid })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn num_patches(&self) -> usize {
        self.grid.0 * self.grid.1
    }
}

/// Post-softmax edit of the CLS attention row at one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    pub layer: usize,
    /// The only group the CLS token may still attend to. CLS-self attention
    /// is removed for either choice.
    pub keep: TokenGroup,
    /// Rescale the surviving entries to sum to one.
    pub renormalize: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    pub mask: Option<AttentionMask>,
    /// Layers whose full record is kept; `None` keeps all of them.
    pub record_layers: Option<Vec<usize>>,
    /// Layer at which the CLS attention-block output (bias included) is
    /// dropped, leaving only the skip path. The recorded CLS attention row
    /// is zero there.
    pub skip_only_layer: Option<usize>,
}

/// Everything recorded for one block.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// `[heads, tokens, tokens]`, post-softmax (and post-mask, if masked).
    pub attention: Tensor,
    /// `[tokens, dim]` residual stream entering the block, before norm1.
    pub hidden_raw: Tensor,
    /// `[tokens, dim]` norm1 output, the attention input.
    pub hidden_in: Tensor,
    /// `[heads, tokens, head_dim]` value vectors.
    pub attn_values: Tensor,
    /// `[tokens, dim]` attention output after projection and layer scale.
    pub attn_block_out: Tensor,
    /// `[tokens, dim]` residual added to the attention output.
    pub skip_in: Tensor,
    /// `[tokens, dim]` residual stream after the attention add.
    pub residual_mid: Tensor,
    /// `[tokens, dim]` block output after the MLP add.
    pub block_out: Tensor,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub layout: TokenLayout,
    pub mask: Option<AttentionMask>,
    layers: Vec<Option<LayerTrace>>,
    /// CLS row of every block output, recorded regardless of `record_layers`.
    pub cls_per_layer: Vec<Vec<f32>>,
    /// `[tokens, dim]` after the final layer norm.
    pub final_output: Tensor,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> Result<&LayerTrace> {
        match self.layers.get(layer) {
            Some(Some(l)) => Ok(l),
            Some(None) => Err(VipError::invalid(format!("layer {layer} was not recorded"))),
            None => Err(VipError::invalid(format!(
                "layer {layer} out of range for depth {}",
                self.layers.len()
            ))),
        }
    }

    /// The global image embedding (CLS row of the final output).
    pub fn cls_embedding(&self) -> &[f32] {
        self.final_output.row(self.layout.cls_index)
    }

    pub fn num_tokens(&self) -> usize {
        self.layout.num_tokens()
    }
}

/// Cubic convolution kernel with `a = -0.75`.
fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.75;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for resampling `inp` samples to `out` (half-pixel centers, clamped borders).
fn cubic_taps(inp: usize, out: usize) -> Vec<[(usize, f64); 4]> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let mut taps = [(0usize, 0.0f64); 4];
            for (j, tap) in taps.iter_mut().enumerate() {
                let idx = (base as i64 + j as i64 - 1).clamp(0, inp as i64 - 1) as usize;
                *tap = (idx, cubic_weight(t - (j as f64 - 1.0)));
            }
            taps
        })
        .collect()
}

/// Bicubic resize of a `[h·w, dim]` grid of embeddings.
pub(crate) fn bicubic_resize(grid: &Tensor, from: (usize, usize), to: (usize, usize)) -> Result<Tensor> {
    let (n, d) = grid.dims2()?;
    debug_assert_eq!(n, from.0 * from.1);
    let rows = cubic_taps(from.0, to.0);
    let cols = cubic_taps(from.1, to.1);
    let mut out = vec![0.0f32; to.0 * to.1 * d];
    let mut acc = vec![0.0f64; d];
    for (oy, ry) in rows.iter().enumerate() {
        for (ox, cx) in cols.iter().enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(sy, wy) in ry {
                for &(sx, wx) in cx {
                    let w = wy * wx;
                    let src = grid.row(sy * from.1 + sx);
                    for (a, &s) in acc.iter_mut().zip(src) {
                        *a += w * s as f64;
                    }
                }
            }
            let dst = &mut out[(oy * to.1 + ox) * d..(oy * to.1 + ox + 1) * d];
            for (o, a) in dst.iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
    }
    Tensor::new(vec![to.0 * to.1, d], out)
}

/// Splits `[tokens, dim]` into per-head `[heads, tokens, head_dim]`.
fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let (t, d) = x.dims2()?;
    let hd = d / heads;
    let mut out = vec![0.0f32; t * d];
    for tok in 0..t {
        let row = x.row(tok);
        for h in 0..heads {
            out[(h * t + tok) * hd..(h * t + tok + 1) * hd]
                .copy_from_slice(&row[h * hd..(h + 1) * hd]);
        }
    }
    Tensor::new(vec![heads, t, hd], out)
}

impl Model {
    /// Patch embedding, positional embedding and token assembly.
    fn embed(&self, patches: &Patches) -> Result<Tensor> {
        let c = &self.config;
        let (n, pd) = patches.data().dims2()?;
        if pd != c.patch_dim() {
            return Err(VipError::invalid(format!(
                "patch vectors have {pd} entries, model expects {}",
                c.patch_dim()
            )));
        }
        let d = c.dim;
        let embedded = self.patch_embed.forward(patches.data())?;

        let g0 = (c.pos_grid[0], c.pos_grid[1]);
        let stored = Tensor::new(
            vec![g0.0 * g0.1, d],
            self.pos_embed.data()[d..].to_vec(),
        )?;
        let pos = if patches.grid() == g0 {
            stored
        } else {
            bicubic_resize(&stored, g0, patches.grid())?
        };

        let tokens = 1 + c.num_registers + n;
        let mut out = Vec::with_capacity(tokens * d);
        out.extend(
            self.cls_token
                .iter()
                .zip(&self.pos_embed.data()[..d])
                .map(|(a, b)| a + b),
        );
        if let Some(r) = &self.register_tokens {
            out.extend_from_slice(r.data());
        }
        for (e, p) in embedded.rows().zip(pos.rows()) {
            out.extend(e.iter().zip(p).map(|(a, b)| a + b));
        }
        Tensor::new(vec![tokens, d], out)
    }

    /// Unmasked instrumented forward pass.
    pub fn forward(&self, patches: &Patches) -> Result<ForwardTrace> {
        self.forward_with(patches, &ForwardOptions::default())
    }

    /// Forward pass with the CLS row of `layer` restricted to one token group.
    pub fn forward_masked(
        &self,
        patches: &Patches,
        layer: usize,
        keep: TokenGroup,
        renormalize: bool,
    ) -> Result<ForwardTrace> {
        self.forward_with(
            patches,
            &ForwardOptions {
                mask: Some(AttentionMask {
                    layer,
                    keep,
                    renormalize,
                }),
                ..ForwardOptions::default()
            },
        )
    }

    /// Forward pass in which the CLS token receives nothing from attention at `layer`.
    pub fn forward_skip_only(&self, patches: &Patches, layer: usize) -> Result<ForwardTrace> {
        self.forward_with(
            patches,
            &ForwardOptions {
                skip_only_layer: Some(layer),
                ..ForwardOptions::default()
            },
        )
    }

    pub fn forward_with(&self, patches: &Patches, opts: &ForwardOptions) -> Result<ForwardTrace> {
        if let Some(m) = &opts.mask {
            if m.layer >= self.config.depth {
                return Err(VipError::invalid(format!(
                    "mask layer {} out of range for depth {}",
                    m.layer, self.config.depth
                )));
            }
            if m.keep == TokenGroup::Cls {
                return Err(VipError::invalid(
                    "mask must keep either patches or registers",
                ));
            }
        }
        if let Some(l) = opts.skip_only_layer {
            if l >= self.config.depth {
                return Err(VipError::invalid(format!(
                    "skip-only layer {l} out of range for depth {}",
                    self.config.depth
                )));
            }
        }
        let layout = self.layout(patches.grid());
        let mut x = self.embed(patches)?;
        let mut layers = Vec::with_capacity(self.blocks.len());
        let mut cls_per_layer = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let mask = opts.mask.filter(|m| m.layer == i);
            let skip_only = opts.skip_only_layer == Some(i);
            let rec = self.block_forward(block, &x, &layout, mask, skip_only)?;
            cls_per_layer.push(rec.block_out.row(0).to_vec());
            x = rec.block_out.clone();
            let keep = opts
                .record_layers
                .as_ref()
                .is_none_or(|ls| ls.contains(&i));
            layers.push(keep.then_some(rec));
        }
        let final_output = self.norm.apply(&x)?;
        Ok(ForwardTrace {
            layout,
            mask: opts.mask,
            layers,
            cls_per_layer,
            final_output,
        })
    }

    fn block_forward(
        &self,
        block: &Block,
        x: &Tensor,
        layout: &TokenLayout,
        mask: Option<AttentionMask>,
        skip_only: bool,
    ) -> Result<LayerTrace> {
        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let (t, d) = x.dims2()?;

        let hidden_in = block.norm1.apply(x)?;
        let q = split_heads(&block.attn.q.forward(&hidden_in)?, heads)?;
        let k = split_heads(&block.attn.k.forward(&hidden_in)?, heads)?;
        let v = split_heads(&block.attn.v.forward(&hidden_in)?, heads)?;

        let scale = 1.0 / (hd as f64).sqrt();
        let mut attn = vec![0.0f32; heads * t * t];
        for h in 0..heads {
            for i in 0..t {
                let qi = q.row(h * t + i);
                let row = &mut attn[(h * t + i) * t..(h * t + i + 1) * t];
                for (j, a) in row.iter_mut().enumerate() {
                    *a = (tensor::dot(qi, k.row(h * t + j)) * scale) as f32;
                }
                if !row.iter().all(|v| v.is_finite()) {
                    return Err(VipError::NonFinite("attention logits"));
                }
                tensor::softmax_slice(row);
            }
            if skip_only {
                let cls = layout.cls_index;
                attn[(h * t + cls) * t..(h * t + cls + 1) * t].fill(0.0);
            }
            if let Some(m) = mask {
                let cls = layout.cls_index;
                let row = &mut attn[(h * t + cls) * t..(h * t + cls + 1) * t];
                for (j, a) in row.iter_mut().enumerate() {
                    if layout.group_of(j) != Some(m.keep) {
                        *a = 0.0;
                    }
                }
                if m.renormalize {
                    let total: f64 = row.iter().map(|&a| a as f64).sum();
                    if total <= 0.0 {
                        return Err(VipError::UndefinedResult(format!(
                            "no attention mass left on {:?} to renormalize",
                            m.keep
                        )));
                    }
                    for a in row.iter_mut() {
                        *a = (*a as f64 / total) as f32;
                    }
                }
            }
        }

        let mut mixed = vec![0.0f32; t * d];
        let mut acc = vec![0.0f64; hd];
        for h in 0..heads {
            for i in 0..t {
                acc.iter_mut().for_each(|a| *a = 0.0);
                let row = &attn[(h * t + i) * t..(h * t + i + 1) * t];
                for (j, &a) in row.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (s, &vv) in acc.iter_mut().zip(v.row(h * t + j)) {
                        *s += a as f64 * vv as f64;
                    }
                }
                for (o, s) in mixed[i * d + h * hd..i * d + (h + 1) * hd].iter_mut().zip(&acc) {
                    *o = *s as f32;
                }
            }
        }
        let mixed = Tensor::new(vec![t, d], mixed)?;
        let mut attn_block_out = block.attn.proj.forward(&mixed)?;
        if let Some(g) = &block.ls1 {
            attn_block_out = tensor::scale_last(&attn_block_out, g)?;
        }
        if skip_only {
            let cls = layout.cls_index;
            attn_block_out.data_mut()[cls * d..(cls + 1) * d].fill(0.0);
        }
        let residual_mid = tensor::add(x, &attn_block_out)?;

        let m = block.norm2.apply(&residual_mid)?;
        let mut mlp_out = match &block.mlp {
            Mlp::Gelu { fc1, fc2 } => fc2.forward(&tensor::gelu(&fc1.forward(&m)?)?)?,
            Mlp::SwiGlu { w12, w3 } => w3.forward(&tensor::swiglu(&w12.forward(&m)?)?)?,
        };
        if let Some(g) = &block.ls2 {
            mlp_out = tensor::scale_last(&mlp_out, g)?;
        }
        let block_out = tensor::add(&residual_mid, &mlp_out)?;

        Ok(LayerTrace {
            attention: Tensor::new(vec![heads, t, t], attn)?,
            hidden_raw: x.clone(),
            hidden_in,
            attn_values: v,
            attn_block_out,
            skip_in: x.clone(),
            residual_mid,
            block_out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patches(cfg: &ModelConfig, grid: (usize, usize), seed: u64) -> Patches {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.0 * grid.1 * cfg.patch_dim();
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Patches::new(Tensor::new(vec![grid.0 * grid.1, cfg.patch_dim()], data).unwrap(), grid).unwrap()
    }

    #[test]
    fn attention_rows_are_distributions() {
        let cfg = ModelConfig::tiny(2, 8, 2, 2);
        let m = Model::random(cfg.clone(), 0).unwrap();
        let tr = m.forward(&patches(&cfg, (2, 2), 1)).unwrap();
        assert_eq!(tr.num_tokens(), 7);
        for l in 0..2 {
            for row in tr.layer(l).unwrap().attention.rows() {
                let s: f64 = row.iter().map(|&v| v as f64).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_query_key_projections_give_uniform_attention() {
        let cfg = ModelConfig::tiny(2, 8, 2, 1);
        let m = Model::random(cfg.clone(), 0).unwrap();
        let mut t = m.to_tensors();
        for (name, ten) in t.iter_mut() {
            if name.contains("attn.q.") || name.contains("attn.k.") {
                ten.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let m = Model::from_tensors(t, cfg.clone()).unwrap();
        let tr = m.forward(&patches(&cfg, (2, 2), 2)).unwrap();
        let u = 1.0 / 6.0;
        for l in 0..2 {
            assert!(tr.layer(l).unwrap().attention.data().iter().all(|&a| (a - u).abs() < 1e-7));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = ModelConfig::tiny(3, 16, 4, 2);
        let m = Model::random(cfg.clone(), 5).unwrap();
        let p = patches(&cfg, (3, 2), 6);
        let a = m.forward(&p).unwrap();
        let b = m.forward(&p).unwrap();
        assert_eq!(a.final_output, b.final_output);
        for l in 0..3 {
            assert_eq!(a.layer(l).unwrap().attention, b.layer(l).unwrap().attention);
            assert_eq!(a.layer(l).unwrap().block_out, b.layer(l).unwrap().block_out);
        }
    }

    #[test]
    fn masked_cls_row_only_touches_kept_group() {
        let cfg = ModelConfig::tiny(2, 8, 2, 2);
        let m = Model::random(cfg.clone(), 0).unwrap();
        let p = patches(&cfg, (2, 2), 1);
        let full = m.forward(&p).unwrap();
        let tr = m.forward_masked(&p, 1, TokenGroup::Registers, false).unwrap();
        let a = &tr.layer(1).unwrap().attention;
        let f = &full.layer(1).unwrap().attention;
        for h in 0..2 {
            let row = a.row(h * 7);
            assert_eq!(row[0], 0.0);
            assert_eq!(&row[1..3], &f.row(h * 7)[1..3]);
            assert!(row[3..].iter().all(|&v| v == 0.0));
            // other rows untouched
            assert_eq!(a.row(h * 7 + 4), f.row(h * 7 + 4));
        }
        // earlier layers unaffected
        assert_eq!(tr.layer(0).unwrap().block_out, full.layer(0).unwrap().block_out);
    }

    #[test]
    fn renormalized_mask_sums_to_one() {
        let cfg = ModelConfig::tiny(1, 8, 2, 2);
        let m = Model::random(cfg.clone(), 3).unwrap();
        let tr = m
            .forward_masked(&patches(&cfg, (2, 2), 1), 0, TokenGroup::Patches, true)
            .unwrap();
        for h in 0..2 {
            let s: f64 = tr.layer(0).unwrap().attention.row(h * 7).iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        let no_reg = Model::random(ModelConfig::tiny(1, 8, 2, 0), 3).unwrap();
        let err = no_reg
            .forward_masked(&patches(&cfg, (2, 2), 1), 0, TokenGroup::Registers, true)
            .unwrap_err();
        assert!(matches!(err, VipError::UndefinedResult(_)));
    }

    #[test]
    fn mask_argument_errors() {
        let cfg = ModelConfig::tiny(2, 8, 2, 0);
        let m = Model::random(cfg.clone(), 0).unwrap();
        let p = patches(&cfg, (2, 2), 1);
        assert!(m.forward_masked(&p, 2, TokenGroup::Patches, false).is_err());
        assert!(m.forward_masked(&p, 0, TokenGroup::Cls, false).is_err());
    }

    #[test]
    fn wrong_patch_width_is_rejected() {
        let cfg = ModelConfig::tiny(1, 8, 2, 0);
        let m = Model::random(cfg, 0).unwrap();
        let p = Patches::new(Tensor::zeros(vec![4, 5]).unwrap(), (2, 2)).unwrap();
        assert!(matches!(m.forward(&p), Err(VipError::InvalidArgument(_))));
        assert!(Patches::new(Tensor::zeros(vec![3, 12]).unwrap(), (2, 2)).is_err());
    }

    #[test]
    fn bicubic_identity_and_constant() {
        let g = Tensor::new(vec![4, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let same = bicubic_resize(&g, (2, 2), (2, 2)).unwrap();
        for (a, b) in same.data().iter().zip(g.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let c = Tensor::new(vec![9, 1], vec![2.5; 9]).unwrap();
        let up = bicubic_resize(&c, (3, 3), (5, 4)).unwrap();
        assert!(up.data().iter().all(|&v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn other_resolutions_interpolate_positions() {
        let cfg = ModelConfig::tiny(1, 8, 2, 1);
        let m = Model::random(cfg.clone(), 0).unwrap();
        let tr = m.forward(&patches(&cfg, (3, 4), 1)).unwrap();
        assert_eq!(tr.num_tokens(), 1 + 1 + 12);
    }

    #[test]
    fn record_subset() {
        let cfg = ModelConfig::tiny(3, 8, 2, 0);
        let m = Model::random(cfg.clone(), 0).unwrap();
        let opts = ForwardOptions {
            record_layers: Some(vec![2]),
            ..ForwardOptions::default()
        };
        let tr = m.forward_with(&patches(&cfg, (2, 2), 1), &opts).unwrap();
        assert!(tr.layer(0).is_err());
        assert!(tr.layer(2).is_ok());
        assert_eq!(tr.cls_per_layer.len(), 3);
    }

    #[test]
    fn skip_only_passes_the_residual_through() {
        let cfg = ModelConfig::tiny(2, 8, 2, 1);
        let m = Model::random(cfg.clone(), 3).unwrap();
        let p = patches(&cfg, (2, 2), 4);
        let tr = m.forward_skip_only(&p, 1).unwrap();
        let rec = tr.layer(1).unwrap();
        assert_eq!(rec.residual_mid.row(0), rec.skip_in.row(0));
        assert!(rec.attn_block_out.row(0).iter().all(|&v| v == 0.0));
        let full = m.forward(&p).unwrap();
        assert_eq!(full.layer(1).unwrap().residual_mid.row(1), rec.residual_mid.row(1));
        assert!(m.forward_skip_only(&p, 2).is_err());
    }
}
