#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vip_core::model::{Model, ModelConfig, NamedTensors};
use vip_core::reporting::{read_report, AnalysisReport};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vip")
}

/// Deterministic noise PNG of the given size.
pub fn write_png(path: &Path, w: u32, h: u32, seed: u64) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let img = image::RgbImage::from_fn(w, h, |_, _| {
        let mut px = [0u8; 3];
        for c in &mut px {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *c = (s >> 56) as u8;
        }
        image::Rgb(px)
    });
    img.save(path).unwrap();
}

/// `classes` directories with `per_class` images each. With `duplicate`,
/// every image in a class is a byte copy of the first.
pub fn write_dataset(root: &Path, classes: usize, per_class: usize, duplicate: bool) {
    for c in 0..classes {
        for i in 0..per_class {
            let seed = if duplicate { c as u64 * 1000 } else { (c * 1000 + i) as u64 };
            write_png(&root.join(format!("class{c}")).join(format!("{i}.png")), 12, 10, seed);
        }
    }
}

pub fn write_model(path: &Path, depth: usize, dim: usize, heads: usize, registers: usize, seed: u64) {
    let mut cfg = ModelConfig::tiny(depth, dim, heads, registers);
    cfg.patch_size = 4;
    cfg.pos_grid = [2, 2];
    Model::random(cfg, seed).unwrap().save(path).unwrap();
}

/// Depth-1 model whose CLS token attends to patches only: a marker
/// dimension is +50 on patches and -50 elsewhere, and every query/key
/// pair reads that dimension alone.
pub fn patch_focused_model(path: &Path, dim: usize, heads: usize, seed: u64) {
    let cfg = ModelConfig::tiny(1, dim, heads, 0);
    let mut t: NamedTensors = Model::random(cfg.clone(), seed).unwrap().to_tensors();
    let hd = cfg.head_dim();
    let pd = cfg.patch_dim();
    let mut set = |name: &str, f: &dyn Fn(&mut [f32])| f(t.get_mut(name).unwrap().data_mut());
    set("patch_embed.proj.weight", &|w| w[..pd].fill(0.0));
    set("patch_embed.proj.bias", &|b| b[0] = 50.0);
    set("cls_token", &|c| c[0] = -50.0);
    set("pos_embed", &|p| p.iter_mut().step_by(dim).for_each(|v| *v = 0.0));
    set("blocks.0.norm1.weight", &|g| g[0] = 1.0);
    set("blocks.0.norm1.bias", &|b| b[0] = 0.0);
    set("blocks.0.attn.q.weight", &|w| w.fill(0.0));
    set("blocks.0.attn.q.bias", &|b| {
        b.fill(0.0);
        (0..heads).for_each(|h| b[h * hd] = 20.0);
    });
    set("blocks.0.attn.k.weight", &|w| {
        for h in 0..heads {
            let row = &mut w[h * hd * dim..(h * hd + 1) * dim];
            row.fill(0.0);
            row[0] = 20.0;
        }
    });
    set("blocks.0.attn.k.bias", &|b| (0..heads).for_each(|h| b[h * hd] = 0.0));
    Model::from_tensors(t, cfg).unwrap().save(path).unwrap();
}

pub struct Run {
    pub out: PathBuf,
    pub output: Output,
}

/// Runs `vip <args...> --out <dir>/out` with the cache under `<dir>/cache`.
pub fn run_in(dir: &Path, args: &[&str]) -> Run {
    let out = dir.join("out");
    let output = Command::new(bin())
        .args(args)
        .arg("--out")
        .arg(&out)
        .env("VIP_CACHE_DIR", dir.join("cache"))
        .output()
        .unwrap();
    Run { out, output }
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

pub fn success(r: &Run) -> &Run {
    assert!(
        r.output.status.success(),
        "vip failed: {}",
        String::from_utf8_lossy(&r.output.stderr)
    );
    r
}

pub fn report(r: &Run, command: &str) -> AnalysisReport {
    read_report(&r.out.join(format!("{command}.json"))).unwrap()
}

pub fn column(r: &AnalysisReport, key: &str) -> Vec<f64> {
    r.records.iter().map(|rec| rec.values[key].unwrap()).collect()
}

pub fn table_value(r: &AnalysisReport, table: &str, row: &str, key: &str) -> Option<f64> {
    r.tables[table].iter().find(|t| t.name == row).unwrap().values[key]
}
