use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Result, VipError};
use crate::tensor::{self, LayerNormParams};

/// Cosine of every layer's CLS vector against the last layer's.
///
/// Entries whose vector has zero norm come back as `None`.
pub fn layerwise_cls_similarity(per_layer: &[Vec<f32>]) -> Result<Vec<Option<f64>>> {
    let Some(last) = per_layer.last() else {
        return Err(VipError::invalid("need at least one layer"));
    };
    if per_layer.iter().any(|v| v.len() != last.len()) {
        return Err(VipError::invalid("CLS vectors differ in length"));
    }
    Ok(per_layer.iter().map(|v| tensor::cosine(v, last)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub pairs: usize,
}

/// Statistics of the cosine similarity over all unordered pairs of rows.
pub fn pairwise_cosine_stats(tokens: &FeatureMatrix) -> Result<CosineStats> {
    let n = tokens.rows();
    if n < 2 {
        return Err(VipError::invalid("pairwise cosine needs at least two rows"));
    }
    let mut unit: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let r = tokens.row(i);
        let nrm = tensor::norm(r);
        if nrm == 0.0 {
            return Err(VipError::UndefinedResult(format!(
                "row {i} of `{}` has zero norm",
                tokens.label
            )));
        }
        unit.push(r.iter().map(|&v| v as f64 / nrm).collect());
    }
    let (mut sum, mut min, mut max) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
            sum += c;
            min = min.min(c);
            max = max.max(c);
            pairs += 1;
        }
    }
    Ok(CosineStats {
        mean: sum / pairs as f64,
        min,
        max,
        pairs,
    })
}

/// Top dimensions by mean activation and their means before/after layer norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationProfile {
    pub dims: Vec<usize>,
    pub pre_norm_mean: Vec<f64>,
    pub post_norm_mean: Vec<f64>,
}

/// Ranks dimensions by mean pre-norm activation (ties to the lower index)
/// and pairs each with its mean after `norm` is applied row-wise.
pub fn activation_profile(
    tokens: &FeatureMatrix,
    top_k: usize,
    norm: &LayerNormParams,
) -> Result<ActivationProfile> {
    let (n, d) = (tokens.rows(), tokens.cols());
    if top_k > d {
        return Err(VipError::invalid(format!(
            "top_k = {top_k} exceeds feature dimension {d}"
        )));
    }
    let normed = norm.apply(tokens.tensor())?;
    let col_means = |t: &tensor::Tensor| {
        let mut m = vec![0.0f64; d];
        for r in t.rows() {
            for (a, &v) in m.iter_mut().zip(r) {
                *a += v as f64;
            }
        }
        m.iter_mut().for_each(|a| *a /= n as f64);
        m
    };
    let pre = col_means(tokens.tensor());
    let post = col_means(&normed);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    Ok(ActivationProfile {
        pre_norm_mean: order.iter().map(|&i| pre[i]).collect(),
        post_norm_mean: order.iter().map(|&i| post[i]).collect(),
        dims: order,
    })
}
