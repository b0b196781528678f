//! Representation-similarity and probe metrics over per-image feature sets.

mod cka;
mod probe;
mod similarity;

pub use cka::{gram_decompose, linear_cka, CkaReport, GramTerms};
pub use probe::{one_shot_probe, LabeledFeatures};
pub use similarity::{
    activation_profile, layerwise_cls_similarity, pairwise_cosine_stats, ActivationProfile,
    CosineStats,
};

use crate::error::{Result, VipError};
use crate::tensor::Tensor;

/// `n × d` matrix of per-image features with a provenance label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Tensor,
    pub label: String,
}

impl FeatureMatrix {
    pub fn new(data: Tensor, label: impl Into<String>) -> Result<Self> {
        data.dims2()?;
        if !data.is_finite() {
            return Err(VipError::invalid("feature matrix has non-finite entries"));
        }
        Ok(Self {
            data,
            label: label.into(),
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], label: impl Into<String>) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?, label)
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.data.row(i)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    /// Column-centered copy in `f64`, row-major.
    pub(crate) fn centered(&self) -> Vec<f64> {
        let (n, d) = (self.rows(), self.cols());
        let mut means = vec![0.0f64; d];
        for r in self.data.rows() {
            for (m, &v) in means.iter_mut().zip(r) {
                *m += v as f64;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut out = Vec::with_capacity(n * d);
        for r in self.data.rows() {
            out.extend(r.iter().zip(&means).map(|(&v, m)| v as f64 - m));
        }
        out
    }
}
