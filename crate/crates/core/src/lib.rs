//! Vision Transformer inference with full attention instrumentation, and
//! diagnostics that attribute the CLS output to patch, register, CLS-self and
//! skip contributions.
//!
//! ```
//! use vip_core::model::{Model, ModelConfig, Patches};
//! use vip_core::tensor::Tensor;
//! use vip_core::decomposition::attention_partition;
//!
//! let cfg = ModelConfig::tiny(2, 8, 2, 1);
//! let model = Model::random(cfg.clone(), 0).unwrap();
//! let patches = Patches::new(Tensor::zeros(vec![4, cfg.patch_dim()]).unwrap(), (2, 2)).unwrap();
//! let trace = model.forward(&patches).unwrap();
//! let shares = attention_partition(&trace, &trace.layout, 1).unwrap();
//! let total = shares.patch_share + shares.register_share + shares.cls_self_share;
//! assert!((total - 1.0).abs() < 1e-6);
//! ```

pub mod decomposition;
pub mod error;
pub mod ingestion;
pub mod metrics;
pub mod model;
pub mod reporting;
pub mod tensor;

pub use error::{Result, VipError};

/// Toolkit version recorded in reports and cache sidecars.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
