//! Dense f32 tensors and the handful of kernels a ViT forward pass needs.
//!
//! Storage is row-major `f32`. Every reduction (dot products, means,
//! variances, softmax normalizers) accumulates in `f64` with a fixed
//! summation order, so results are bit-identical across runs and across
//! thread counts.

use crate::error::{Result, VipError};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(VipError::invalid(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(VipError::invalid(format!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Builds a 2-D tensor from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(VipError::invalid(format!(
                    "row {i} has length {}, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![n, d], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extent of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(VipError::invalid(format!("expected 2-D tensor, got {s:?}"))),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[a, b, c] => Ok((a, b, c)),
            s => Err(VipError::invalid(format!("expected 3-D tensor, got {s:?}"))),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Row `i` of a tensor viewed as `[numel / last_dim, last_dim]`.
    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.last_dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.last_dim())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn checked(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(VipError::NonFinite(op))
        }
    }
}

/// Dot product with `f64` accumulation over eight fixed lanes.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x as f64 * *y as f64;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Writes `out[r] = f(r)` for each output row, in parallel when enabled.
fn fill_rows<F>(out: &mut [f32], width: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if out.len() >= 4096 {
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(r, row)| f(r, row));
            return;
        }
    }
    for (r, row) in out.chunks_mut(width).enumerate() {
        f(r, row);
    }
}

/// Standard matrix product of `[m, k]` and `[k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(VipError::invalid(format!(
            "matmul inner extents differ: [{m}, {k}] x [{k2}, {n}]"
        )));
    }
    let bt = transpose(b)?;
    let mut out = vec![0.0f32; m * n];
    fill_rows(&mut out, n, |r, row| {
        let lhs = a.row(r);
        for (c, o) in row.iter_mut().enumerate() {
            *o = dot(lhs, bt.row(c)) as f32;
        }
    });
    Tensor::new(vec![m, n], out)?.checked("matmul")
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    let mut out = vec![0.0f32; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out)
}

/// Affine map `x · weightᵀ + bias` over the last axis; `weight` is `[out, in]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&[f32]>) -> Result<Tensor> {
    let (out_dim, in_dim) = weight.dims2()?;
    if x.last_dim() != in_dim {
        return Err(VipError::invalid(format!(
            "linear expects last axis {in_dim}, got {:?}",
            x.shape()
        )));
    }
    if let Some(b) = bias {
        if b.len() != out_dim {
            return Err(VipError::invalid(format!(
                "linear bias has {} entries, expected {out_dim}",
                b.len()
            )));
        }
    }
    let rows = x.numel() / in_dim;
    let mut out = vec![0.0f32; rows * out_dim];
    fill_rows(&mut out, out_dim, |r, row| {
        let lhs = x.row(r);
        for (o, val) in row.iter_mut().enumerate() {
            let mut s = dot(lhs, weight.row(o));
            if let Some(b) = bias {
                s += b[o] as f64;
            }
            *val = s as f32;
        }
    });
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_dim;
    Tensor::new(shape, out)?.checked("linear")
}

/// In-place, max-subtracted softmax of one slice.
pub fn softmax_slice(xs: &mut [f32]) {
    let max = xs.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let mut exps: Vec<f64> = xs.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let total: f64 = exps.iter().sum();
    for e in exps.iter_mut() {
        *e /= total;
    }
    for (x, e) in xs.iter_mut().zip(exps) {
        *x = e as f32;
    }
}

/// Softmax over the last axis.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return Err(VipError::invalid("softmax requires finite logits"));
    }
    let mut out = logits.clone();
    let d = out.last_dim();
    for row in out.data.chunks_exact_mut(d) {
        softmax_slice(row);
    }
    out.checked("softmax")
}

/// Layer-norm gain, bias and epsilon for one normalized axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
    pub eps: f32,
}

impl LayerNormParams {
    /// Unit gain, zero bias.
    pub fn identity(dim: usize, eps: f32) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
            eps,
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gain, &self.bias, self.eps)
    }
}

/// Normalizes one slice into `out` using the population variance.
pub fn layer_norm_slice(x: &[f32], gain: &[f32], bias: &[f32], eps: f32, out: &mut [f32]) {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x
        .iter()
        .map(|&v| {
            let c = v as f64 - mean;
            c * c
        })
        .sum::<f64>()
        / n;
    let denom = (var + eps as f64).sqrt();
    for i in 0..x.len() {
        let z = if denom > 0.0 {
            (x[i] as f64 - mean) / denom
        } else {
            0.0
        };
        out[i] = (gain[i] as f64 * z + bias[i] as f64) as f32;
    }
}

pub fn layer_norm(x: &Tensor, gain: &[f32], bias: &[f32], eps: f32) -> Result<Tensor> {
    let d = x.last_dim();
    if gain.len() != d || bias.len() != d {
        return Err(VipError::invalid(format!(
            "layer_norm over {d} features got gain {} / bias {}",
            gain.len(),
            bias.len()
        )));
    }
    if eps < 0.0 {
        return Err(VipError::invalid("layer_norm eps must be nonnegative"));
    }
    let mut out = vec![0.0f32; x.numel()];
    for (src, dst) in x.data.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        layer_norm_slice(src, gain, bias, eps, dst);
    }
    Tensor::new(x.shape.clone(), out)?.checked("layer_norm")
}

/// Exact (erf-based) GELU.
pub fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}

pub fn gelu(x: &Tensor) -> Result<Tensor> {
    let data = x.data.iter().map(|&v| gelu_scalar(v)).collect();
    Tensor::new(x.shape.clone(), data)?.checked("gelu")
}

fn silu(x: f32) -> f64 {
    let x = x as f64;
    x / (1.0 + (-x).exp())
}

/// Gated SiLU: splits the last axis into halves `(a, b)` and returns `silu(a) * b`.
pub fn swiglu(x: &Tensor) -> Result<Tensor> {
    let d = x.last_dim();
    if !d.is_multiple_of(2) {
        return Err(VipError::invalid(format!(
            "swiglu needs an even last axis, got {d}"
        )));
    }
    let h = d / 2;
    let mut out = Vec::with_capacity(x.numel() / 2);
    for row in x.data.chunks_exact(d) {
        let (a, b) = row.split_at(h);
        out.extend(a.iter().zip(b).map(|(&a, &b)| (silu(a) * b as f64) as f32));
    }
    let mut shape = x.shape.clone();
    *shape.last_mut().unwrap() = h;
    Tensor::new(shape, out)?.checked("swiglu")
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(VipError::invalid(format!(
            "add shape mismatch {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape.clone(), data)?.checked("add")
}

/// Multiplies every last-axis slice elementwise by `scale`.
pub fn scale_last(x: &Tensor, scale: &[f32]) -> Result<Tensor> {
    let d = x.last_dim();
    if scale.len() != d {
        return Err(VipError::invalid(format!(
            "scale has {} entries, last axis is {d}",
            scale.len()
        )));
    }
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(d) {
        for (v, s) in row.iter_mut().zip(scale) {
            *v *= s;
        }
    }
    out.checked("scale_last")
}
