//! Shared run setup and the per-image worker pool.

use std::path::Path;

use rayon::prelude::*;
use serde_json::json;
use vip_core::ingestion::{
    cache_key, decode_bytes, preprocess, CacheSidecar, Dataset, DatasetOptions, FeatureCache,
    PreprocessConfig,
};
use vip_core::model::{
    container, AttentionMask, ForwardOptions, ForwardTrace, Model, ModelConfig, NamedTensors,
    Patches,
};
use vip_core::reporting::AnalysisReport;
use vip_core::{Result, VipError};

use crate::args::{CommonArgs, Keep};
use crate::checkpoints;

/// Images decoded and analysed concurrently before results are merged.
const CHUNK: usize = 64;

pub const RESOLUTION_NOTE: &str =
    "preprocessing defaults are a convention, not a published setting; compare results only at matching preprocessing";

pub struct Context {
    pub args: CommonArgs,
    pub model: Model,
    pub preprocess: PreprocessConfig,
    pub dataset: Dataset,
    pub layer: usize,
    cache: Option<FeatureCache>,
}

/// Per-image analysis output.
pub struct ImageResult {
    pub image: String,
    pub content_hash: String,
    pub label: Option<String>,
    pub tensors: NamedTensors,
}

fn read_config(spec: &str) -> Result<ModelConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| VipError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return serde_json::from_str(&text)
            .map_err(|e| VipError::InvalidArgument(format!("config {spec}: {e}")));
    }
    checkpoints::preset(spec).unwrap_or_else(|| {
        Err(VipError::InvalidArgument(format!(
            "--config `{spec}` is neither a file nor a known preset"
        )))
    })
}

pub fn load_model(args: &CommonArgs) -> Result<Model> {
    let (path, manifest_config) = if args.with_checkpoints && !Path::new(&args.model).exists() {
        let ckpt = checkpoints::find(&args.model).ok_or_else(|| {
            VipError::InvalidArgument(format!("`{}` is not in the checkpoint manifest", args.model))
        })?;
        (ckpt.path()?, Some(ckpt.config()?))
    } else {
        (Path::new(&args.model).to_path_buf(), None)
    };
    let bytes = std::fs::read(&path).map_err(|e| VipError::Io {
        path: path.clone(),
        source: e,
    })?;
    let config = match (&args.config, manifest_config) {
        (Some(spec), _) => read_config(spec)?,
        (None, Some(c)) => c,
        (None, None) => {
            let meta = container::parse_metadata(&bytes)?;
            let text = meta.get("config").ok_or_else(|| {
                VipError::InvalidArgument(format!(
                    "{} has no embedded config; pass --config",
                    path.display()
                ))
            })?;
            serde_json::from_str(text)
                .map_err(|e| VipError::Format(format!("embedded config: {e}")))?
        }
    };
    Model::from_tensors(container::parse(&bytes)?, config)
}

impl Context {
    /// Resolves and validates everything before any image is processed.
    pub fn new(args: &CommonArgs) -> Result<Self> {
        let model = load_model(args)?;
        let depth = model.config().depth;
        let layer = args.layer.unwrap_or(depth - 1);
        if layer >= depth {
            return Err(VipError::InvalidArgument(format!(
                "--layer {layer} out of range for depth {depth}"
            )));
        }
        let p = model.config().patch_size;
        if args.crop == 0 || !args.crop.is_multiple_of(p) {
            return Err(VipError::InvalidArgument(format!(
                "--crop {} is not a positive multiple of patch size {p}",
                args.crop
            )));
        }
        if args.resize < args.crop {
            return Err(VipError::InvalidArgument(format!(
                "--resize {} is smaller than --crop {}",
                args.resize, args.crop
            )));
        }
        let preprocess = PreprocessConfig {
            resize: args.resize,
            crop: args.crop,
            ..PreprocessConfig::default()
        };
        let dataset = Dataset::scan(
            &args.data,
            &DatasetOptions {
                limit: args.limit,
                shuffle_seed: args.shuffle.then_some(args.seed),
            },
        )?;
        let cache = if args.no_cache {
            None
        } else {
            Some(FeatureCache::from_env()?)
        };
        Ok(Self {
            args: args.clone(),
            model,
            preprocess,
            dataset,
            layer,
            cache,
        })
    }

    pub fn config_hash(&self) -> String {
        self.model.config().config_hash()
    }

    /// A report with the model, preprocessing and run configuration filled in.
    pub fn report(&self, command: &str, extra: serde_json::Value) -> Result<AnalysisReport> {
        let mut r = AnalysisReport::new(command, self.config_hash());
        r.model_config = serde_json::to_value(self.model.config())?;
        r.preprocessing = serde_json::to_value(&self.preprocess)?;
        let mut run = serde_json::to_value(&self.args)?;
        if let (Some(run), Some(extra)) = (run.as_object_mut(), extra.as_object()) {
            run.insert("resolved_layer".into(), json!(self.layer));
            run.insert("images".into(), json!(self.dataset.len()));
            for (k, v) in extra {
                run.insert(k.clone(), v.clone());
            }
        }
        r.run_config = run;
        r.notes.push(RESOLUTION_NOTE.into());
        Ok(r)
    }

    /// Forward pass with the `--keep` ablation applied at the analysed layer.
    pub fn forward(&self, patches: &Patches, record_layers: Option<Vec<usize>>) -> Result<ForwardTrace> {
        let mask = self.args.keep.map(|k| AttentionMask {
            layer: self.layer,
            keep: k.group(),
            renormalize: self.args.mask_renormalize,
        });
        self.model.forward_with(
            patches,
            &ForwardOptions {
                mask,
                record_layers,
                ..ForwardOptions::default()
            },
        )
    }

    /// Cache namespace for an analysis at the resolved layer and ablation.
    pub fn analysis(&self, name: &str) -> String {
        let keep = match self.args.keep {
            Some(Keep::Patches) => "patches",
            Some(Keep::Registers) => "registers",
            None => "none",
        };
        format!(
            "{name}|layer={}|keep={keep}|renormalize={}",
            self.layer, self.args.mask_renormalize
        )
    }

    /// Runs `f` on every image's patches, in parallel, through the cache.
    /// Results come back sorted by content hash, then path.
    pub fn map_images<F>(&self, analysis: &str, f: F) -> Result<Vec<ImageResult>>
    where
        F: Fn(&Patches) -> Result<NamedTensors> + Sync,
    {
        let analysis = format!("{analysis}|{}", serde_json::to_string(&self.preprocess)?);
        let config_hash = self.config_hash();
        let mut out = Vec::with_capacity(self.dataset.len());
        for chunk in self.dataset.entries.chunks(CHUNK) {
            let results: Vec<Result<ImageResult>> = chunk
                .par_iter()
                .map(|entry| {
                    let bytes = std::fs::read(&entry.path).map_err(|e| VipError::Io {
                        path: entry.path.clone(),
                        source: e,
                    })?;
                    let mut img = decode_bytes(&bytes, &entry.path)?;
                    let key = cache_key(&img.content_hash, &config_hash, &analysis);
                    let cached = match &self.cache {
                        Some(c) => c.get(&key)?,
                        None => None,
                    };
                    let tensors = match cached {
                        Some(t) => t,
                        None => {
                            img.label = entry.label.clone();
                            let patches = preprocess(&img, self.model.config(), &self.preprocess)?;
                            let t = f(&patches)?;
                            if let Some(c) = &self.cache {
                                c.put(
                                    &t,
                                    &CacheSidecar {
                                        key,
                                        image_hash: img.content_hash.clone(),
                                        config_hash: config_hash.clone(),
                                        analysis_version: analysis.clone(),
                                        toolkit_version: vip_core::VERSION.into(),
                                    },
                                )?;
                            }
                            t
                        }
                    };
                    let rel = entry.path.strip_prefix(&self.dataset.root).unwrap_or(&entry.path);
                    let image = rel
                        .components()
                        .map(|c| c.as_os_str().to_string_lossy())
                        .collect::<Vec<_>>()
                        .join("/");
                    Ok(ImageResult {
                        image,
                        content_hash: img.content_hash,
                        label: entry.label.clone(),
                        tensors,
                    })
                })
                .collect();
            for r in results {
                out.push(r?);
            }
        }
        out.sort_by(|a, b| {
            a.content_hash
                .cmp(&b.content_hash)
                .then_with(|| a.image.cmp(&b.image))
        });
        Ok(out)
    }
}
