//! Resize, center-crop, normalize and patchify.
//!
//! Resizing is bilinear with half-pixel centers (`src = (dst + 0.5) · in/out − 0.5`),
//! clamped at the borders, no antialiasing. The shorter side becomes `resize`;
//! the longer side becomes `round(long · resize / short)` with halves rounded up.
//! The crop offset is `floor((extent − crop) / 2)`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::model::{ModelConfig, Patches};
use crate::tensor::Tensor;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub resize: usize,
    pub crop: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            resize: 256,
            crop: 224,
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }
}

/// A decoded RGB image with values in `[0, 1]`, stored `h × w × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSpec {
    pub path: PathBuf,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub label: Option<String>,
    /// Hex SHA-256 of the encoded file bytes (or of the pixels for synthetic images).
    pub content_hash: String,
}

impl ImageSpec {
    pub fn from_pixels(
        path: impl Into<PathBuf>,
        height: usize,
        width: usize,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(VipError::invalid(format!(
                "{} pixel values do not fill a {height}x{width}x3 image",
                pixels.len()
            )));
        }
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &pixels {
            h.update(p.to_le_bytes());
        }
        Ok(Self {
            path: path.into(),
            height,
            width,
            pixels,
            label: None,
            content_hash: hex::encode(h.finalize()),
        })
    }

    fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

fn taps(inp: usize, out: usize) -> Vec<(usize, usize, f32)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(inp - 1);
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// Output size after resizing the shorter side to `target`.
pub fn resized_dims(height: usize, width: usize, target: usize) -> (usize, usize) {
    let scale_long = |long: usize, short: usize| (2 * long * target + short) / (2 * short);
    if height <= width {
        (target, scale_long(width, height))
    } else {
        (scale_long(height, width), target)
    }
}

/// Bilinear resize to `(h, w)`.
pub fn resize_bilinear(img: &ImageSpec, h: usize, w: usize) -> Vec<f32> {
    let ys = taps(img.height, h);
    let xs = taps(img.width, w);
    let mut out = Vec::with_capacity(h * w * 3);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for c in 0..3 {
                let top = lerp(img.at(y0, x0, c), img.at(y0, x1, c), tx);
                let bot = lerp(img.at(y1, x0, c), img.at(y1, x1, c), tx);
                out.push(lerp(top, bot, ty));
            }
        }
    }
    out
}

/// Turns an image into the patch matrix a model consumes.
pub fn preprocess(image: &ImageSpec, model: &ModelConfig, pre: &PreprocessConfig) -> Result<Patches> {
    let p = model.patch_size;
    if model.in_chans != 3 {
        return Err(VipError::invalid("preprocessing produces 3-channel patches"));
    }
    if pre.crop == 0 || !pre.crop.is_multiple_of(p) {
        return Err(VipError::invalid(format!(
            "crop {} is not a positive multiple of patch size {p}",
            pre.crop
        )));
    }
    if pre.std.iter().any(|&s| s <= 0.0) {
        return Err(VipError::invalid("channel std must be positive"));
    }
    let (h, w) = resized_dims(image.height, image.width, pre.resize);
    if h < pre.crop || w < pre.crop {
        return Err(VipError::Preprocess(format!(
            "{}: resized to {h}x{w}, smaller than crop {}",
            image.path.display(),
            pre.crop
        )));
    }
    let resized = resize_bilinear(image, h, w);
    let top = (h - pre.crop) / 2;
    let left = (w - pre.crop) / 2;
    let g = pre.crop / p;
    let patch_dim = 3 * p * p;
    let mut data = Vec::with_capacity(g * g * patch_dim);
    for gy in 0..g {
        for gx in 0..g {
            for c in 0..3 {
                for py in 0..p {
                    for px in 0..p {
                        let y = top + gy * p + py;
                        let x = left + gx * p + px;
                        let v = resized[(y * w + x) * 3 + c];
                        data.push((v - pre.mean[c]) / pre.std[c]);
                    }
                }
            }
        }
    }
    Patches::new(Tensor::new(vec![g * g, patch_dim], data)?, (g, g))
}
