//! Browser bindings for three small demos on randomly initialized models.
//! Every function returns a JSON string.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use vip_core::decomposition::{attention_partition, cls_patch_attention_map};
use vip_core::metrics::{activation_profile, linear_cka, pairwise_cosine_stats, FeatureMatrix};
use vip_core::model::{Model, ModelConfig, Patches, TokenGroup};
use vip_core::reporting::render_attention_svg;
use vip_core::tensor::{LayerNormParams, Tensor};
use vip_core::{Result, VipError};
use wasm_bindgen::prelude::*;

const DIM: usize = 32;
const HEADS: usize = 4;
const GRID: usize = 6;

fn js(e: VipError) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn model(depth: usize, registers: usize, seed: u64) -> Result<Model> {
    let mut cfg = ModelConfig::tiny(depth.clamp(1, 8), DIM, HEADS, registers.min(8));
    cfg.pos_grid = [GRID, GRID];
    Model::random(cfg, seed)
}

fn random_patches(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Patches> {
    let n = GRID * GRID * cfg.patch_dim();
    let data = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Patches::new(Tensor::new(vec![GRID * GRID, cfg.patch_dim()], data)?, (GRID, GRID))
}

fn partition_impl(depth: usize, registers: usize, seed: u64) -> Result<String> {
    let m = model(depth, registers, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let tr = m.forward(&random_patches(m.config(), &mut rng)?)?;
    let layers: Vec<Value> = (0..tr.depth())
        .map(|l| {
            let p = attention_partition(&tr, &tr.layout, l)?;
            Ok(json!({
                "patch": p.patch_share,
                "register": p.register_share,
                "cls_self": p.cls_self_share,
            }))
        })
        .collect::<Result<_>>()?;
    let map = cls_patch_attention_map(&tr, tr.depth() - 1)?;
    Ok(json!({ "layers": layers, "map_svg": render_attention_svg(&map)? }).to_string())
}

/// Per-layer CLS attention shares and the last layer's attention map.
#[wasm_bindgen]
pub fn partition_demo(depth: usize, registers: usize, seed: u64) -> std::result::Result<String, JsValue> {
    partition_impl(depth, registers, seed).map_err(js)
}

fn cka_impl(images: usize, registers: usize, layer: usize, seed: u64) -> Result<String> {
    let m = model(3, registers, seed)?;
    let layer = layer.min(m.config().depth - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let (mut full, mut patches, mut regs, mut skip) = (vec![], vec![], vec![], vec![]);
    for _ in 0..images.clamp(2, 64) {
        let p = random_patches(m.config(), &mut rng)?;
        full.push(m.forward(&p)?.cls_embedding().to_vec());
        patches.push(m.forward_masked(&p, layer, TokenGroup::Patches, false)?.cls_embedding().to_vec());
        if m.config().num_registers > 0 {
            regs.push(m.forward_masked(&p, layer, TokenGroup::Registers, false)?.cls_embedding().to_vec());
        }
        skip.push(m.forward_skip_only(&p, layer)?.cls_embedding().to_vec());
    }
    let full = FeatureMatrix::from_rows(&full, "full")?;
    let cka = |rows: &[Vec<f32>], label: &str| -> Result<Option<f64>> {
        if rows.is_empty() {
            return Ok(None);
        }
        Ok(Some(linear_cka(&full, &FeatureMatrix::from_rows(rows, label)?)?.value))
    };
    Ok(json!({
        "layer": layer,
        "full_vs_patches": cka(&patches, "patches")?,
        "full_vs_registers": cka(&regs, "registers")?,
        "full_vs_skip": cka(&skip, "skip")?,
    })
    .to_string())
}

/// CKA between the final CLS embedding and its masked / skip-only variants.
#[wasm_bindgen]
pub fn cka_demo(images: usize, registers: usize, layer: usize, seed: u64) -> std::result::Result<String, JsValue> {
    cka_impl(images, registers, layer, seed).map_err(js)
}

fn outlier_impl(tokens: usize, scale: f32, gain: f32, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f32>> = (0..tokens.clamp(2, 256))
        .map(|_| {
            let mut r: Vec<f32> = (0..DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            r[0] = scale * rng.gen_range(0.9f32..1.1);
            r
        })
        .collect();
    let pre = FeatureMatrix::from_rows(&rows, "pre")?;
    let mut norm = LayerNormParams::identity(DIM, 1e-6);
    norm.gain[0] = gain;
    let post = FeatureMatrix::new(norm.apply(pre.tensor())?, "post")?;
    let stats = |m: &FeatureMatrix| -> Result<Value> {
        let s = pairwise_cosine_stats(m)?;
        Ok(json!({ "mean": s.mean, "min": s.min, "max": s.max }))
    };
    let prof = activation_profile(&pre, 8, &norm)?;
    Ok(json!({
        "pre": stats(&pre)?,
        "post": stats(&post)?,
        "dims": prof.dims,
        "pre_mean": prof.pre_norm_mean,
        "post_mean": prof.post_norm_mean,
    })
    .to_string())
}

/// Pairwise cosine of tokens sharing one large dimension, before and after
/// a layer norm whose gain on that dimension is `gain`.
#[wasm_bindgen]
pub fn layernorm_outlier_demo(tokens: usize, scale: f32, gain: f32, seed: u64) -> std::result::Result<String, JsValue> {
    outlier_impl(tokens, scale, gain, seed).map_err(js)
}
