//! Image decoding, preprocessing, dataset listing and the feature cache.

#[cfg(feature = "io")]
pub mod cache;
#[cfg(feature = "io")]
mod dataset;
mod preprocess;

#[cfg(feature = "io")]
pub use cache::{cache_key, CacheSidecar, FeatureCache};
#[cfg(feature = "io")]
pub use dataset::{decode_bytes, decode_image, Dataset, DatasetEntry, DatasetOptions, LABELS_FILE};
pub use preprocess::{
    preprocess, resize_bilinear, resized_dims, ImageSpec, PreprocessConfig, IMAGENET_MEAN,
    IMAGENET_STD,
};
