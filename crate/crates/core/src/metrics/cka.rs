use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Result, VipError};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaReport {
    pub value: f64,
    pub n: usize,
    pub labels: (String, String),
}

/// `Aᵀ B` for row-major `[n, da]` and `[n, db]` matrices.
fn cross(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; da * db];
    for r in 0..n {
        let ar = &a[r * da..(r + 1) * da];
        let br = &b[r * db..(r + 1) * db];
        for (i, &x) in ar.iter().enumerate() {
            let row = &mut out[i * db..(i + 1) * db];
            for (o, &y) in row.iter_mut().zip(br) {
                *o += x * y;
            }
        }
    }
    out
}

fn frob_sq(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Linear CKA between two feature sets over the same images.
///
/// Both inputs are column-mean centered. The value is computed through the
/// feature-space form `‖XᵀY‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F)`, which equals the
/// Gram-matrix form `tr(XXᵀYYᵀ) / sqrt(tr(XXᵀXXᵀ) tr(YYᵀYYᵀ))`.
pub fn linear_cka(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<CkaReport> {
    let n = x.rows();
    if y.rows() != n {
        return Err(VipError::invalid(format!(
            "CKA inputs have {} and {} rows",
            n,
            y.rows()
        )));
    }
    if n < 2 {
        return Err(VipError::invalid("CKA needs at least two samples"));
    }
    let (dx, dy) = (x.cols(), y.cols());
    let xc = x.centered();
    let yc = y.centered();
    let xy = frob_sq(&cross(&xc, dx, &yc, dy, n));
    let xx = frob_sq(&cross(&xc, dx, &xc, dx, n)).sqrt();
    let yy = frob_sq(&cross(&yc, dy, &yc, dy, n)).sqrt();
    if xx == 0.0 || yy == 0.0 {
        return Err(VipError::UndefinedResult(format!(
            "CKA of `{}` vs `{}`: a centered input is all zeros",
            x.label, y.label
        )));
    }
    Ok(CkaReport {
        value: xy / (xx * yy),
        n,
        labels: (x.label.clone(), y.label.clone()),
    })
}

/// The four `n × n` terms of `(Xp + Xr)(Xp + Xr)ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramTerms {
    pub pp: Tensor,
    pub rr: Tensor,
    pub pr: Tensor,
    pub rp: Tensor,
}

impl GramTerms {
    pub fn sum(&self) -> Tensor {
        let data = (0..self.pp.numel())
            .map(|i| {
                (self.pp.data()[i] as f64
                    + self.rr.data()[i] as f64
                    + self.pr.data()[i] as f64
                    + self.rp.data()[i] as f64) as f32
            })
            .collect();
        Tensor::new(self.pp.shape().to_vec(), data).expect("same shape")
    }
}

fn gram(a: &FeatureMatrix, b: &FeatureMatrix) -> Tensor {
    let n = a.rows();
    let mut out = vec![0.0f32; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = crate::tensor::dot(a.row(i), b.row(j)) as f32;
        }
    }
    Tensor::new(vec![n, n], out).expect("n >= 1")
}

pub fn gram_decompose(xp: &FeatureMatrix, xr: &FeatureMatrix) -> Result<GramTerms> {
    if xp.tensor().shape() != xr.tensor().shape() {
        return Err(VipError::invalid(format!(
            "Gram decomposition needs equal shapes, got {:?} and {:?}",
            xp.tensor().shape(),
            xr.tensor().shape()
        )));
    }
    Ok(GramTerms {
        pp: gram(xp, xp),
        rr: gram(xr, xr),
        pr: gram(xp, xr),
        rp: gram(xr, xp),
    })
}
