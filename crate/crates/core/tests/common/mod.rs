//! Shared test helpers: random configs and inputs, and a straight-line f64
//! reference forward pass that reads only the exported named tensors.

#![allow(dead_code)]

use rand::Rng;
use vip_core::model::{MlpKind, ModelConfig, NamedTensors, Patches};
use vip_core::tensor::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn random_config(rng: &mut impl Rng) -> ModelConfig {
    let heads = [1, 2, 4][rng.gen_range(0..3)];
    let dim = loop {
        let d = rng.gen_range(8..=32);
        if d % heads == 0 {
            break d;
        }
    };
    let mut cfg = ModelConfig::tiny(rng.gen_range(2..=4), dim, heads, rng.gen_range(0..=4));
    if rng.gen_bool(0.5) {
        cfg.mlp_kind = MlpKind::Swiglu;
    }
    cfg.mlp_hidden = rng.gen_range(dim..=3 * dim);
    cfg.layerscale = rng.gen_bool(0.5);
    cfg.patch_size = rng.gen_range(1..=3);
    cfg.pos_grid = [rng.gen_range(1..=4), rng.gen_range(1..=4)];
    cfg
}

pub fn random_patches(cfg: &ModelConfig, grid: (usize, usize), rng: &mut impl Rng) -> Patches {
    let n = grid.0 * grid.1;
    let data = (0..n * cfg.patch_dim()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Patches::new(Tensor::new(vec![n, cfg.patch_dim()], data).unwrap(), grid).unwrap()
}

pub struct RefLayer {
    /// `[head][query][key]`
    pub attention: Vec<Mat>,
    pub attn_out: Mat,
    pub residual_mid: Mat,
    pub block_out: Mat,
}

pub struct RefTrace {
    pub layers: Vec<RefLayer>,
    pub final_output: Mat,
}

pub struct RefMask {
    pub layer: usize,
    /// Token indices whose CLS attention survives.
    pub keep: Vec<usize>,
}

fn get<'a>(t: &'a NamedTensors, name: &str) -> &'a [f32] {
    t.get(name).unwrap_or_else(|| panic!("missing {name}")).data()
}

/// `x · Wᵀ + b` with `W` stored row-major `[out, in]`.
fn affine(x: &Mat, w: &[f32], b: &[f32]) -> Mat {
    let out = b.len();
    x.iter()
        .map(|row| {
            let inp = row.len();
            (0..out)
                .map(|o| {
                    let mut s = b[o] as f64;
                    for i in 0..inp {
                        s += w[o * inp + i] as f64 * row[i];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn norm(x: &Mat, g: &[f32], b: &[f32], eps: f64) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * g[i] as f64 + b[i] as f64)
                .collect()
        })
        .collect()
}

/// erf by composite Simpson quadrature of `2/sqrt(pi) * exp(-t^2)`.
fn erf(x: f64) -> f64 {
    if x.abs() > 8.0 {
        return x.signum();
    }
    let n = 1000;
    let h = x / n as f64;
    let f = |t: f64| (-t * t).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
}

fn keys_cubic(x: f64) -> f64 {
    let a = -0.75;
    let x = x.abs();
    if x < 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Separable bicubic resample with half-pixel centers and clamped edges.
fn resample(grid: &Mat, from: (usize, usize), to: (usize, usize)) -> Mat {
    let d = grid[0].len();
    let weights = |inp: usize, out: usize, o: usize| -> Vec<(usize, f64)> {
        let src = (o as f64 + 0.5) * inp as f64 / out as f64 - 0.5;
        let f = src.floor();
        (-1..=2)
            .map(|k| {
                let idx = (f as i64 + k).clamp(0, inp as i64 - 1) as usize;
                (idx, keys_cubic(src - (f + k as f64)))
            })
            .collect()
    };
    let mut out = Vec::new();
    for oy in 0..to.0 {
        for ox in 0..to.1 {
            let mut v = vec![0.0; d];
            for (sy, wy) in weights(from.0, to.0, oy) {
                for (sx, wx) in weights(from.1, to.1, ox) {
                    for c in 0..d {
                        v[c] += wy * wx * grid[sy * from.1 + sx][c];
                    }
                }
            }
            out.push(v);
        }
    }
    out
}

pub fn reference_forward(
    t: &NamedTensors,
    cfg: &ModelConfig,
    patches: &Patches,
    mask: Option<&RefMask>,
) -> RefTrace {
    let d = cfg.dim;
    let regs = cfg.num_registers;
    let grid = patches.grid();
    let eps = cfg.eps as f64;
    let input: Mat = patches
        .data()
        .rows()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let emb = affine(&input, get(t, "patch_embed.proj.weight"), get(t, "patch_embed.proj.bias"));
    let pos = get(t, "pos_embed");
    let pos_rows: Mat = (0..cfg.pos_grid[0] * cfg.pos_grid[1])
        .map(|i| pos[(1 + i) * d..(2 + i) * d].iter().map(|&v| v as f64).collect())
        .collect();
    let g0 = (cfg.pos_grid[0], cfg.pos_grid[1]);
    let pos_rows = if grid == g0 { pos_rows } else { resample(&pos_rows, g0, grid) };

    let mut x: Mat = Vec::new();
    let cls = get(t, "cls_token");
    x.push((0..d).map(|i| cls[i] as f64 + pos[i] as f64).collect());
    if regs > 0 {
        let r = get(t, "register_tokens");
        for k in 0..regs {
            x.push(r[k * d..(k + 1) * d].iter().map(|&v| v as f64).collect());
        }
    }
    for (e, p) in emb.iter().zip(&pos_rows) {
        x.push(e.iter().zip(p).map(|(a, b)| a + b).collect());
    }
    let tokens = x.len();
    let hd = d / cfg.heads;

    let mut layers = Vec::new();
    for l in 0..cfg.depth {
        let p = |s: &str| format!("blocks.{l}.{s}");
        let h = norm(&x, get(t, &p("norm1.weight")), get(t, &p("norm1.bias")), eps);
        let q = affine(&h, get(t, &p("attn.q.weight")), get(t, &p("attn.q.bias")));
        let k = affine(&h, get(t, &p("attn.k.weight")), get(t, &p("attn.k.bias")));
        let v = affine(&h, get(t, &p("attn.v.weight")), get(t, &p("attn.v.bias")));
        let mut attention = Vec::new();
        let mut mixed = vec![vec![0.0; d]; tokens];
        for head in 0..cfg.heads {
            let cols = head * hd..(head + 1) * hd;
            let mut a = vec![vec![0.0; tokens]; tokens];
            for i in 0..tokens {
                let logits: Vec<f64> = (0..tokens)
                    .map(|j| {
                        cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (hd as f64).sqrt()
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
                for j in 0..tokens {
                    a[i][j] = (logits[j] - m).exp() / z;
                }
            }
            if let Some(mask) = mask.filter(|m| m.layer == l) {
                for j in 0..tokens {
                    if !mask.keep.contains(&j) {
                        a[0][j] = 0.0;
                    }
                }
            }
            for i in 0..tokens {
                for c in cols.clone() {
                    mixed[i][c] = (0..tokens).map(|j| a[i][j] * v[j][c]).sum();
                }
            }
            attention.push(a);
        }
        let mut attn_out = affine(&mixed, get(t, &p("attn.proj.weight")), get(t, &p("attn.proj.bias")));
        if cfg.layerscale {
            let g = get(t, &p("ls1.gamma"));
            attn_out.iter_mut().for_each(|r| r.iter_mut().enumerate().for_each(|(i, v)| *v *= g[i] as f64));
        }
        let residual_mid: Mat = x
            .iter()
            .zip(&attn_out)
            .map(|(a, b)| a.iter().zip(b).map(|(u, w)| u + w).collect())
            .collect();
        let m = norm(&residual_mid, get(t, &p("norm2.weight")), get(t, &p("norm2.bias")), eps);
        let mut mlp = match cfg.mlp_kind {
            MlpKind::GeluMlp => {
                let mut hid = affine(&m, get(t, &p("mlp.fc1.weight")), get(t, &p("mlp.fc1.bias")));
                for r in hid.iter_mut() {
                    for v in r.iter_mut() {
                        *v = 0.5 * *v * (1.0 + erf(*v / std::f64::consts::SQRT_2));
                    }
                }
                affine(&hid, get(t, &p("mlp.fc2.weight")), get(t, &p("mlp.fc2.bias")))
            }
            MlpKind::Swiglu => {
                let both = affine(&m, get(t, &p("mlp.w12.weight")), get(t, &p("mlp.w12.bias")));
                let hidden = cfg.mlp_hidden;
                let gated: Mat = both
                    .iter()
                    .map(|r| {
                        (0..hidden)
                            .map(|i| {
                                let a = r[i];
                                a / (1.0 + (-a).exp()) * r[hidden + i]
                            })
                            .collect()
                    })
                    .collect();
                affine(&gated, get(t, &p("mlp.w3.weight")), get(t, &p("mlp.w3.bias")))
            }
        };
        if cfg.layerscale {
            let g = get(t, &p("ls2.gamma"));
            mlp.iter_mut().for_each(|r| r.iter_mut().enumerate().for_each(|(i, v)| *v *= g[i] as f64));
        }
        let block_out: Mat = residual_mid
            .iter()
            .zip(&mlp)
            .map(|(a, b)| a.iter().zip(b).map(|(u, w)| u + w).collect())
            .collect();
        x = block_out.clone();
        layers.push(RefLayer {
            attention,
            attn_out,
            residual_mid,
            block_out,
        });
    }
    let final_output = norm(&x, get(t, "norm.weight"), get(t, "norm.bias"), eps);
    RefTrace { layers, final_output }
}

/// Largest absolute difference divided by the largest reference magnitude.
pub fn rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    got.iter()
        .zip(want)
        .map(|(g, w)| (*g as f64 - w).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn flat(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}

/// Depth-1 model whose CLS attention lands entirely on patch tokens.
///
/// Dimension 0 carries a marker: +50 on every patch embedding, -50 on CLS and
/// registers. After the first layer norm its sign separates the groups, and
/// each head's CLS query reads only that marker through a large key weight,
/// so the softmax sends the non-patch mass below f32 range.
pub fn patch_focused_model(num_registers: usize, dim: usize, heads: usize, seed: u64) -> vip_core::model::Model {
    use vip_core::model::Model;
    let cfg = ModelConfig::tiny(1, dim, heads, num_registers);
    let mut t = Model::random(cfg.clone(), seed).unwrap().to_tensors();
    let hd = cfg.head_dim();
    let set = |t: &mut NamedTensors, name: &str, f: &dyn Fn(&mut [f32])| {
        f(t.get_mut(name).unwrap().data_mut());
    };
    let pd = cfg.patch_dim();
    set(&mut t, "patch_embed.proj.weight", &|w| w[..pd].fill(0.0));
    set(&mut t, "patch_embed.proj.bias", &|b| b[0] = 50.0);
    set(&mut t, "cls_token", &|c| c[0] = -50.0);
    set(&mut t, "pos_embed", &|p| p.iter_mut().step_by(dim).for_each(|v| *v = 0.0));
    if num_registers > 0 {
        set(&mut t, "register_tokens", &|r| r.iter_mut().step_by(dim).for_each(|v| *v = -50.0));
    }
    set(&mut t, "blocks.0.norm1.weight", &|g| g[0] = 1.0);
    set(&mut t, "blocks.0.norm1.bias", &|b| b[0] = 0.0);
    set(&mut t, "blocks.0.attn.q.weight", &|w| w.fill(0.0));
    set(&mut t, "blocks.0.attn.q.bias", &|b| {
        b.fill(0.0);
        (0..heads).for_each(|h| b[h * hd] = 20.0);
    });
    set(&mut t, "blocks.0.attn.k.weight", &|w| {
        for h in 0..heads {
            let row = &mut w[h * hd * dim..(h * hd + 1) * dim];
            row.fill(0.0);
            row[0] = 20.0;
        }
    });
    set(&mut t, "blocks.0.attn.k.bias", &|b| (0..heads).for_each(|h| b[h * hd] = 0.0));
    Model::from_tensors(t, cfg).unwrap()
}
