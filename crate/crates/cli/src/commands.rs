//! One function per analysis subcommand. Each returns the report to write;
//! SVG side outputs go straight into the output directory.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use vip_core::decomposition::{attention_partition, cls_patch_attention_map, decompose_cls};
use vip_core::metrics::{
    activation_profile, gram_decompose, linear_cka, one_shot_probe, pairwise_cosine_stats,
    FeatureMatrix, LabeledFeatures,
};
use vip_core::model::{NamedTensors, TokenGroup};
use vip_core::reporting::{
    render_attention_svg, render_bar_chart, render_line_chart, summarize, AnalysisReport,
    ImageRecord, TableRow,
};
use vip_core::tensor::{self, Tensor};
use vip_core::{Result, VipError};

use crate::args::{NormsArgs, ProbeArgs};
use crate::pipeline::{Context, ImageResult};

fn get<'a>(t: &'a NamedTensors, key: &str) -> Result<&'a Tensor> {
    t.get(key)
        .ok_or_else(|| VipError::Format(format!("cached features lack `{key}`")))
}

fn record(r: &ImageResult) -> ImageRecord {
    ImageRecord::new(r.image.clone(), r.content_hash.clone(), r.label.clone())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| VipError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| VipError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn shares(ctx: &Context, patches: &vip_core::model::Patches) -> Result<Tensor> {
    let tr = ctx.forward(patches, Some(vec![ctx.layer]))?;
    let p = attention_partition(&tr, &tr.layout, ctx.layer)?;
    Tensor::from_vec(vec![
        p.patch_share as f32,
        p.register_share as f32,
        p.cls_self_share as f32,
    ])
}

fn set_shares(rec: &mut ImageRecord, s: &[f32]) {
    let (p, r, c) = (s[0] as f64, s[1] as f64, s[2] as f64);
    rec.set("patch_share", Some(p))
        .set("register_share", Some(r))
        .set("cls_self_share", Some(c))
        .set("register_with_cls_share", Some(r + c));
}

pub fn partition(ctx: &Context) -> Result<AnalysisReport> {
    let results = ctx.map_images(&ctx.analysis("partition"), |p| {
        Ok(NamedTensors::from([("shares".to_string(), shares(ctx, p)?)]))
    })?;
    let mut report = ctx.report("partition", json!({}))?;
    report.notes.push(
        "shares are head-averaged CLS attention weights; register_with_cls_share folds CLS-self into registers".into(),
    );
    for r in &results {
        let mut rec = record(r);
        set_shares(&mut rec, get(&r.tensors, "shares")?.data());
        report.records.push(rec);
    }
    Ok(report)
}

const BUCKETS: [&str; 7] = [
    "patch",
    "register",
    "cls_self",
    "bias",
    "skip",
    "attn_total",
    "full_out",
];

fn decomposition_tensors(ctx: &Context, patches: &vip_core::model::Patches) -> Result<NamedTensors> {
    let tr = ctx.forward(patches, Some(vec![ctx.layer]))?;
    let d = decompose_cls(&ctx.model, &tr, &tr.layout, ctx.layer)?;
    let vecs = [
        d.patch_contrib,
        d.register_contrib,
        d.cls_self_contrib,
        d.bias_contrib,
        d.skip_contrib,
        d.attn_total,
        d.full_out,
    ];
    BUCKETS
        .iter()
        .zip(vecs)
        .map(|(k, v)| Ok((k.to_string(), Tensor::from_vec(v)?)))
        .collect()
}

fn sum_vecs(vs: &[&[f32]]) -> Vec<f32> {
    (0..vs[0].len())
        .map(|i| vs.iter().map(|v| v[i] as f64).sum::<f64>() as f32)
        .collect()
}

pub fn decompose(ctx: &Context) -> Result<AnalysisReport> {
    let results = ctx.map_images(&ctx.analysis("decompose"), |p| decomposition_tensors(ctx, p))?;
    let mut report = ctx.report("decompose", json!({}))?;
    report.denominator = Some("attn_total".into());
    report.notes.push(
        "bias is the output-projection bias times layer scale; it belongs to no token group".into(),
    );
    report.notes.push("cosines against a zero vector are reported as missing".into());
    for r in &results {
        let mut rec = record(r);
        for k in BUCKETS {
            rec.set(format!("{k}_norm"), Some(tensor::norm(get(&r.tensors, k)?.data())));
        }
        let total = get(&r.tensors, "attn_total")?.data();
        let patch = get(&r.tensors, "patch")?.data();
        let reg_cls = sum_vecs(&[
            get(&r.tensors, "register")?.data(),
            get(&r.tensors, "cls_self")?.data(),
        ]);
        rec.set("patch_total_cosine", tensor::cosine(patch, total))
            .set("register_with_cls_total_cosine", tensor::cosine(&reg_cls, total));
        report.records.push(rec);
    }
    Ok(report)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    vip_core::reporting::quantile(&v, 0.5)
}

pub fn norms(ctx: &Context, args: &NormsArgs, out: &Path) -> Result<AnalysisReport> {
    let results = ctx.map_images(&ctx.analysis("norms"), |p| {
        let tr = ctx.forward(p, Some(vec![ctx.layer]))?;
        let d = decompose_cls(&ctx.model, &tr, &tr.layout, ctx.layer)?;
        let hidden = &tr.layer(ctx.layer)?.hidden_raw;
        let norms: Vec<f32> = hidden.rows().map(|r| tensor::norm(r) as f32).collect();
        let top = (0..norms.len())
            .filter(|&i| i != tr.layout.cls_index)
            .max_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(b.cmp(&a)))
            .ok_or_else(|| VipError::InvalidArgument("no non-CLS tokens".into()))?;
        Ok(NamedTensors::from([
            ("patch".to_string(), Tensor::from_vec(d.patch_contrib.clone())?),
            ("nonpatch".to_string(), Tensor::from_vec(d.nonpatch_contrib())?),
            ("skip".to_string(), Tensor::from_vec(d.skip_contrib.clone())?),
            ("full_out".to_string(), Tensor::from_vec(d.full_out.clone())?),
            ("token_norms".to_string(), Tensor::from_vec(norms)?),
            ("top_index".to_string(), Tensor::from_vec(vec![top as f32])?),
            ("top_token".to_string(), Tensor::from_vec(hidden.row(top).to_vec())?),
        ]))
    })?;
    let dim = ctx.model.config().dim;
    let top_dims = args.top_dims.min(dim);
    let mut report = ctx.report("norms", json!({ "top_dims_used": top_dims }))?;
    report.denominator = Some("full_out".into());
    report.notes.push(format!(
        "token statistics use the residual stream entering block {} (before its layer norm); the highest-norm token excludes CLS",
        ctx.layer
    ));
    if top_dims < args.top_dims {
        report
            .notes
            .push(format!("--top-dims {} clamped to model dim {dim}", args.top_dims));
    }
    let mut tops = Vec::with_capacity(results.len());
    for r in &results {
        let mut rec = record(r);
        for k in ["patch", "nonpatch", "skip", "full_out"] {
            rec.set(format!("{k}_norm"), Some(tensor::norm(get(&r.tensors, k)?.data())));
        }
        let token_norms = get(&r.tensors, "token_norms")?.data();
        let idx = get(&r.tensors, "top_index")?.data()[0] as usize;
        let others: Vec<f64> = token_norms
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 0)
            .map(|(_, &n)| n as f64)
            .collect();
        let med = median(others);
        let top_norm = token_norms[idx] as f64;
        rec.set("top_token_index", Some(idx as f64))
            .set("top_token_norm", Some(top_norm))
            .set("top_token_norm_ratio", (med > 0.0).then(|| top_norm / med));
        report.records.push(rec);
        tops.push(get(&r.tensors, "top_token")?.data().to_vec());
    }

    let pre = FeatureMatrix::from_rows(&tops, "top_token")?;
    let norm1 = &ctx.model.block(ctx.layer)?.norm1;
    let post = FeatureMatrix::new(norm1.apply(pre.tensor())?, "top_token_normed")?;
    let mut rows = Vec::new();
    for (name, m) in [("pre_norm", &pre), ("post_norm", &post)] {
        let mut row = TableRow::new(name);
        match pairwise_cosine_stats(m) {
            Ok(s) => {
                row.set("mean", Some(s.mean))
                    .set("min", Some(s.min))
                    .set("max", Some(s.max))
                    .set("pairs", Some(s.pairs as f64));
            }
            Err(VipError::InvalidArgument(_)) | Err(VipError::UndefinedResult(_)) => {
                row.set("mean", None).set("min", None).set("max", None).set("pairs", Some(0.0));
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    report.tables.insert("top_token_cosine".into(), rows);

    let prof = activation_profile(&pre, top_dims, norm1)?;
    let mut rows = Vec::new();
    for (rank, ((&d, &a), &b)) in prof
        .dims
        .iter()
        .zip(&prof.pre_norm_mean)
        .zip(&prof.post_norm_mean)
        .enumerate()
    {
        let mut row = TableRow::new(format!("rank_{rank}"));
        row.set("dim", Some(d as f64))
            .set("pre_norm_mean", Some(a))
            .set("post_norm_mean", Some(b));
        rows.push(row);
    }
    report.tables.insert("activation_profile".into(), rows);

    let shown = prof.dims.len().min(20);
    let svg = render_bar_chart(
        "Top-token activation by dimension",
        &prof.dims[..shown].iter().map(|d| format!("d{d}")).collect::<Vec<_>>(),
        &[
            ("pre-norm".into(), prof.pre_norm_mean[..shown].to_vec()),
            ("post-norm".into(), prof.post_norm_mean[..shown].to_vec()),
        ],
    );
    write_text(&out.join("norms_activation.svg"), &svg)?;
    Ok(report)
}

pub fn layers(ctx: &Context, out: &Path) -> Result<AnalysisReport> {
    let depth = ctx.model.config().depth;
    let results = ctx.map_images(&ctx.analysis("layers"), |p| {
        let tr = ctx.forward(p, None)?;
        let mut norms = Vec::with_capacity(depth * 3);
        for l in 0..depth {
            let d = decompose_cls(&ctx.model, &tr, &tr.layout, l)?;
            norms.extend([
                tensor::norm(&d.patch_contrib) as f32,
                tensor::norm(&d.nonpatch_contrib()) as f32,
                tensor::norm(&d.skip_contrib) as f32,
            ]);
        }
        Ok(NamedTensors::from([
            ("cls".to_string(), Tensor::from_rows(&tr.cls_per_layer)?),
            ("norms".to_string(), Tensor::new(vec![depth, 3], norms)?),
        ]))
    })?;
    let mut report = ctx.report("layers", json!({}))?;
    report.notes.push(
        "sim_layer_i is the cosine of block i's CLS output with the last block's; zero vectors give missing values".into(),
    );
    const NORM_COLS: [&str; 3] = ["patch_norm", "nonpatch_norm", "skip_norm"];
    for r in &results {
        let mut rec = record(r);
        let cls = get(&r.tensors, "cls")?;
        let per_layer: Vec<Vec<f32>> = cls.rows().map(|r| r.to_vec()).collect();
        let sims = vip_core::metrics::layerwise_cls_similarity(&per_layer)?;
        for (l, s) in sims.iter().enumerate() {
            rec.set(format!("sim_layer_{l}"), *s);
        }
        let norms = get(&r.tensors, "norms")?;
        for l in 0..depth {
            for (c, name) in NORM_COLS.iter().enumerate() {
                rec.set(format!("{name}_layer_{l}"), Some(norms.row(l)[c] as f64));
            }
        }
        report.records.push(rec);
    }

    let column = |report: &AnalysisReport, key: &str| -> Vec<Option<f64>> {
        report
            .records
            .iter()
            .map(|r| r.values.get(key).copied().flatten())
            .collect()
    };
    let mut curve = Vec::new();
    let mut norm_rows = Vec::new();
    let mut mean_curve = Vec::new();
    let mut norm_series: Vec<(String, Vec<f64>)> =
        NORM_COLS.iter().map(|c| (c.to_string(), Vec::new())).collect();
    for l in 0..depth {
        let s = summarize(&column(&report, &format!("sim_layer_{l}")));
        let mut row = TableRow::new(format!("layer_{l}"));
        row.set("mean", s.as_ref().map(|s| s.mean))
            .set("median", s.as_ref().map(|s| s.median))
            .set("min", s.as_ref().map(|s| s.min))
            .set("max", s.as_ref().map(|s| s.max));
        mean_curve.push(s.map(|s| s.mean));
        curve.push(row);

        let mut row = TableRow::new(format!("layer_{l}"));
        for (name, series) in NORM_COLS.iter().zip(norm_series.iter_mut()) {
            let m = summarize(&column(&report, &format!("{name}_layer_{l}"))).map(|s| s.mean);
            row.set(format!("{name}_mean"), m);
            series.1.push(m.unwrap_or(0.0));
        }
        norm_rows.push(row);
    }
    report.tables.insert("similarity_curve".into(), curve);
    report.tables.insert("norms_by_layer".into(), norm_rows);

    write_text(
        &out.join("layers_similarity.svg"),
        &render_line_chart(
            "CLS cosine to final layer",
            &[("mean over images".into(), mean_curve)],
        ),
    )?;
    write_text(
        &out.join("layers_norms.svg"),
        &render_bar_chart(
            "Mean contribution norm by layer",
            &(0..depth).map(|l| format!("L{l}")).collect::<Vec<_>>(),
            &norm_series,
        ),
    )?;
    Ok(report)
}

pub fn render(ctx: &Context, out: &Path) -> Result<AnalysisReport> {
    let results = ctx.map_images(&ctx.analysis("render"), |p| {
        let tr = ctx.forward(p, Some(vec![ctx.layer]))?;
        Ok(NamedTensors::from([
            ("map".to_string(), cls_patch_attention_map(&tr, ctx.layer)?),
            ("shares".to_string(), shares(ctx, p)?),
        ]))
    })?;
    let mut report = ctx.report("render", json!({}))?;
    report.notes.push(
        "maps/<first 16 hex digits of content_hash>.svg holds each image's head-averaged CLS-to-patch attention".into(),
    );
    for r in &results {
        let map = get(&r.tensors, "map")?;
        write_text(
            &out.join("maps").join(format!("{}.svg", &r.content_hash[..16])),
            &render_attention_svg(map)?,
        )?;
        let mut rec = record(r);
        rec.set("patch_share", Some(get(&r.tensors, "shares")?.data()[0] as f64));
        let (lo, hi) = map
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v as f64), hi.max(v as f64))
            });
        rec.set("map_min", Some(lo)).set("map_max", Some(hi));
        report.records.push(rec);
    }
    Ok(report)
}

/// CLS embeddings of the full model and of each ablation, plus the
/// patch/non-patch attention split at the analysed layer.
pub fn feature_analysis(ctx: &Context) -> String {
    format!(
        "features|layer={}|renormalize={}",
        ctx.layer, ctx.args.mask_renormalize
    )
}

fn features(ctx: &Context) -> Result<Vec<ImageResult>> {
    let layer = ctx.layer;
    let renorm = ctx.args.mask_renormalize;
    let registers = ctx.model.config().num_registers > 0;
    ctx.map_images(&feature_analysis(ctx), |p| {
        let m = &ctx.model;
        let full = m.forward_with(
            p,
            &vip_core::model::ForwardOptions {
                record_layers: Some(vec![layer]),
                ..Default::default()
            },
        )?;
        let d = decompose_cls(m, &full, &full.layout, layer)?;
        let mut t = NamedTensors::new();
        t.insert("full".into(), Tensor::from_vec(full.cls_embedding().to_vec())?);
        let patches = m.forward_masked(p, layer, TokenGroup::Patches, renorm)?;
        t.insert("patches".into(), Tensor::from_vec(patches.cls_embedding().to_vec())?);
        if registers {
            let regs = m.forward_masked(p, layer, TokenGroup::Registers, renorm)?;
            t.insert("registers".into(), Tensor::from_vec(regs.cls_embedding().to_vec())?);
        }
        let skip = m.forward_skip_only(p, layer)?;
        t.insert("skip".into(), Tensor::from_vec(skip.cls_embedding().to_vec())?);
        t.insert("patch_attn".into(), Tensor::from_vec(d.patch_contrib.clone())?);
        let nonpatch = sum_vecs(&[&d.register_contrib, &d.cls_self_contrib, &d.bias_contrib]);
        t.insert("nonpatch_attn".into(), Tensor::from_vec(nonpatch)?);
        Ok(t)
    })
}

fn matrix(results: &[ImageResult], key: &str) -> Result<FeatureMatrix> {
    let rows = results
        .iter()
        .map(|r| get(&r.tensors, key).map(|t| t.data().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(&rows, key)
}

const VARIANTS: [&str; 3] = ["patches", "registers", "skip"];

pub fn cka(ctx: &Context) -> Result<AnalysisReport> {
    if ctx.dataset.len() < 2 {
        return Err(VipError::InvalidDataset(format!(
            "cka needs at least 2 images, found {}",
            ctx.dataset.len()
        )));
    }
    let results = features(ctx)?;
    let registers = ctx.model.config().num_registers > 0;
    let mut report = ctx.report("cka", json!({}))?;
    report.notes.push(format!(
        "variants replace the CLS attention at layer {} by: patches only, registers only, or nothing (skip path only); CLS-self attention is removed in the masked variants",
        ctx.layer
    ));
    if !registers {
        report
            .notes
            .push("model has no registers; full_vs_registers is missing".into());
    }
    for r in &results {
        let mut rec = record(r);
        let full = get(&r.tensors, "full")?.data();
        for v in VARIANTS {
            let c = match r.tensors.get(v) {
                Some(t) => tensor::cosine(full, t.data()),
                None => None,
            };
            rec.set(format!("cosine_full_{v}"), c);
        }
        report.records.push(rec);
    }

    let full = matrix(&results, "full")?;
    let mut rows = Vec::new();
    for v in VARIANTS {
        let mut row = TableRow::new(format!("full_vs_{v}"));
        let value = if v == "registers" && !registers {
            None
        } else {
            match linear_cka(&full, &matrix(&results, v)?) {
                Ok(c) => Some(c.value),
                Err(VipError::UndefinedResult(msg)) => {
                    report.notes.push(msg);
                    None
                }
                Err(e) => return Err(e),
            }
        };
        row.set("cka", value).set("n", Some(results.len() as f64));
        rows.push(row);
    }
    report.tables.insert("cka".into(), rows);

    let g = gram_decompose(&matrix(&results, "patch_attn")?, &matrix(&results, "nonpatch_attn")?)?;
    let mut rows = Vec::new();
    for (name, t) in [("patch_patch", &g.pp), ("nonpatch_nonpatch", &g.rr), ("patch_nonpatch", &g.pr), ("nonpatch_patch", &g.rp)] {
        let n = t.shape()[0];
        let mut row = TableRow::new(name);
        row.set("frobenius", Some(tensor::norm(t.data())))
            .set("trace", Some((0..n).map(|i| t.data()[i * n + i] as f64).sum()));
        rows.push(row);
    }
    report.tables.insert("gram_terms".into(), rows);
    Ok(report)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn probe(ctx: &Context, args: &ProbeArgs) -> Result<AnalysisReport> {
    if args.repetitions == 0 || args.top_k == 0 {
        return Err(VipError::InvalidArgument(
            "--repetitions and --top-k must be at least 1".into(),
        ));
    }
    if let Some(e) = ctx.dataset.entries.iter().find(|e| e.label.is_none()) {
        return Err(VipError::InvalidDataset(format!(
            "{} has no label",
            e.path.display()
        )));
    }
    let mut by_class: BTreeMap<String, usize> = BTreeMap::new();
    for e in &ctx.dataset.entries {
        *by_class.entry(e.label.clone().unwrap_or_default()).or_default() += 1;
    }
    if let Some((c, n)) = by_class.iter().find(|(_, &n)| n < 2) {
        return Err(VipError::InvalidDataset(format!(
            "class `{c}` has {n} image; the probe needs at least 2 per class"
        )));
    }
    let class_index: IndexMap<String, usize> =
        by_class.keys().enumerate().map(|(i, c)| (c.clone(), i)).collect();

    let results = features(ctx)?;
    let registers = ctx.model.config().num_registers > 0;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_index.len()];
    let mut report = ctx.report("probe", json!({}))?;
    for (i, r) in results.iter().enumerate() {
        let c = class_index[r.label.as_deref().unwrap_or_default()];
        members[c].push(i);
        let mut rec = record(r);
        rec.set("class_index", Some(c as f64));
        report.records.push(rec);
    }
    let mut variants = vec!["full", "patches"];
    if registers {
        variants.push("registers");
    }
    variants.push("skip");
    let mats: IndexMap<&str, FeatureMatrix> = variants
        .iter()
        .map(|v| Ok((*v, matrix(&results, v)?)))
        .collect::<Result<_>>()?;

    // (name, train variant, test variant, permuted labels)
    let mut protocols: Vec<(String, &str, &str, bool)> = Vec::new();
    for v in &variants {
        protocols.push((format!("train=full,test={v}"), "full", v, false));
    }
    for v in variants.iter().filter(|v| **v != "full") {
        protocols.push((format!("train={v},test={v}"), v, v, false));
    }
    protocols.push(("train=full,test=full,labels=permuted".into(), "full", "full", true));

    let classes = members.len();
    let k = args.top_k;
    let mut top1: Vec<Vec<f64>> = vec![Vec::new(); protocols.len()];
    let mut topk: Vec<Vec<f64>> = vec![Vec::new(); protocols.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.args.seed);
    let pick = |m: &FeatureMatrix, rows: &[usize]| -> Result<FeatureMatrix> {
        FeatureMatrix::from_rows(&rows.iter().map(|&i| m.row(i)).collect::<Vec<_>>(), m.label.clone())
    };
    for _ in 0..args.repetitions {
        let mut train_rows = Vec::with_capacity(classes);
        let mut test_rows = Vec::with_capacity(classes);
        for m in &members {
            let two: Vec<usize> = m.choose_multiple(&mut rng, 2).copied().collect();
            train_rows.push(two[0]);
            test_rows.push(two[1]);
        }
        let labels: Vec<usize> = (0..classes).collect();
        let mut permuted = labels.clone();
        permuted.shuffle(&mut rng);
        for (p, (_, train_v, test_v, perm)) in protocols.iter().enumerate() {
            let train = LabeledFeatures::new(pick(&mats[train_v], &train_rows)?, labels.clone())?;
            let test_labels = if *perm { permuted.clone() } else { labels.clone() };
            let test = LabeledFeatures::new(pick(&mats[test_v], &test_rows)?, test_labels)?;
            top1[p].push(one_shot_probe(&train, &test, 1)?);
            topk[p].push(one_shot_probe(&train, &test, k)?);
        }
    }

    let mut rows = Vec::new();
    for (p, (name, ..)) in protocols.iter().enumerate() {
        let (m1, s1) = mean_std(&top1[p]);
        let (mk, sk) = mean_std(&topk[p]);
        let mut row = TableRow::new(name.clone());
        row.set("top1_mean", Some(m1))
            .set("top1_std", Some(s1))
            .set("topk_mean", Some(mk))
            .set("topk_std", Some(sk))
            .set("top1_chance", Some(1.0 / classes as f64))
            .set("topk_chance", Some(k.min(classes) as f64 / classes as f64));
        rows.push(row);
    }
    report.tables.insert("accuracy".into(), rows);
    report.notes.push(format!(
        "{} repetitions; each draws one training and one test image per class ({classes} classes); std is the sample standard deviation over repetitions; topk uses k = {k}",
        args.repetitions
    ));
    report.notes.push(
        "train=full rows classify ablated test features against full-feature prototypes; train=X rows use X for both".into(),
    );
    if !registers {
        report.notes.push("model has no registers; the registers variant is omitted".into());
    }
    Ok(report)
}
