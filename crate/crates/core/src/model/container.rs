//! Reading and writing the named-tensor container (safetensors layout).
//!
//! F32, F16 and BF16 payloads are accepted on read and widened to f32.
//! Writes are always F32.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use crate::error::{Result, VipError};
use crate::tensor::Tensor;

pub type NamedTensors = BTreeMap<String, Tensor>;

fn format_err(e: impl std::fmt::Display) -> VipError {
    VipError::Format(e.to_string())
}

fn widen(view: &TensorView<'_>, name: &str) -> Result<Vec<f32>> {
    let bytes = view.data();
    let out = match view.dtype() {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        other => {
            return Err(VipError::Format(format!(
                "tensor `{name}` has unsupported dtype {other:?}"
            )))
        }
    };
    Ok(out)
}

/// Parses a container from bytes.
pub fn parse(bytes: &[u8]) -> Result<NamedTensors> {
    let st = SafeTensors::deserialize(bytes).map_err(format_err)?;
    let mut out = NamedTensors::new();
    for (name, view) in st.tensors() {
        let data = widen(&view, &name)?;
        let mut shape = view.shape().to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        if shape.contains(&0) {
            // empty tensors carry no parameters
            continue;
        }
        let t = Tensor::new(shape, data).map_err(|e| VipError::Format(format!("`{name}`: {e}")))?;
        out.insert(name, t);
    }
    Ok(out)
}

/// Reads the free-form string metadata stored in the header, if any.
pub fn parse_metadata(bytes: &[u8]) -> Result<HashMap<String, String>> {
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(format_err)?;
    Ok(meta.metadata().clone().unwrap_or_default())
}

pub fn read(path: &Path) -> Result<NamedTensors> {
    let bytes = std::fs::read(path).map_err(|e| VipError::io(path, e))?;
    parse(&bytes)
}

pub fn serialize(tensors: &NamedTensors, metadata: Option<HashMap<String, String>>) -> Result<Vec<u8>> {
    let raw: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(name, t)| {
            let bytes = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (name.clone(), t.shape().to_vec(), bytes)
        })
        .collect();
    let views = raw
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.as_str(), v))
                .map_err(format_err)
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize(views, &metadata).map_err(format_err)
}

pub fn write(path: &Path, tensors: &NamedTensors, metadata: Option<HashMap<String, String>>) -> Result<()> {
    let bytes = serialize(tensors, metadata)?;
    std::fs::write(path, bytes).map_err(|e| VipError::io(path, e))
}
