use std::collections::BTreeMap;

use super::FeatureMatrix;
use crate::error::{Result, VipError};
use crate::tensor;

/// Feature rows paired with integer class labels.
#[derive(Clone, Debug)]
pub struct LabeledFeatures {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn new(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(VipError::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        Ok(Self { features, labels })
    }
}

/// Top-k accuracy of a cosine nearest-prototype classifier built from one
/// training row per class. Ranking ties go to the lower class label.
pub fn one_shot_probe(train: &LabeledFeatures, test: &LabeledFeatures, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(VipError::invalid("k must be at least 1"));
    }
    if train.features.cols() != test.features.cols() {
        return Err(VipError::invalid("train and test feature widths differ"));
    }
    let mut protos: BTreeMap<usize, usize> = BTreeMap::new();
    for (row, &label) in train.labels.iter().enumerate() {
        if protos.insert(label, row).is_some() {
            return Err(VipError::invalid(format!(
                "class {label} has more than one training row"
            )));
        }
    }
    let unit = |m: &FeatureMatrix, i: usize| -> Result<Vec<f64>> {
        let r = m.row(i);
        let n = tensor::norm(r);
        if n == 0.0 {
            return Err(VipError::UndefinedResult(format!(
                "row {i} of `{}` has zero norm",
                m.label
            )));
        }
        Ok(r.iter().map(|&v| v as f64 / n).collect())
    };
    let classes: Vec<(usize, Vec<f64>)> = protos
        .iter()
        .map(|(&label, &row)| Ok((label, unit(&train.features, row)?)))
        .collect::<Result<_>>()?;

    if test.labels.is_empty() {
        return Err(VipError::invalid("test set is empty"));
    }
    let mut hits = 0usize;
    for (i, &truth) in test.labels.iter().enumerate() {
        if !protos.contains_key(&truth) {
            return Err(VipError::invalid(format!(
                "test label {truth} has no training row"
            )));
        }
        let q = unit(&test.features, i)?;
        let truth_score = classes
            .iter()
            .find(|(l, _)| *l == truth)
            .map(|(_, p)| dot(&q, p))
            .unwrap();
        // rank of the true class: strictly better scores, plus equal scores on lower labels
        let ahead = classes
            .iter()
            .filter(|(l, p)| {
                let s = dot(&q, p);
                s > truth_score || (s == truth_score && *l < truth)
            })
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.labels.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
