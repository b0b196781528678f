//! Content-addressed store for per-image features.
//!
//! Each entry is `<root>/<key[..2]>/<key>.safetensors` plus a `<key>.json`
//! sidecar. Files are written to a temporary name and renamed into place, so
//! concurrent readers never observe a partial entry.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, VipError};
use crate::model::container::{self, NamedTensors};

pub const CACHE_ENV: &str = "VIP_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".vip-cache";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub key: String,
    pub image_hash: String,
    pub config_hash: String,
    pub analysis_version: String,
    pub toolkit_version: String,
}

#[derive(Clone, Debug)]
pub struct FeatureCache {
    root: PathBuf,
}

/// Cache key over the image bytes hash, model config hash and analysis settings.
pub fn cache_key(image_hash: &str, config_hash: &str, analysis: &str) -> String {
    let mut h = Sha256::new();
    for part in [image_hash, config_hash, analysis, crate::VERSION] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

impl FeatureCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| VipError::io(&root, e))?;
        Ok(Self { root })
    }

    /// Opens the directory named by `VIP_CACHE_DIR`, or `./.vip-cache`.
    pub fn from_env() -> Result<Self> {
        let root = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf, PathBuf) {
        let dir = self.root.join(&key[..2.min(key.len())]);
        (
            dir.join(format!("{key}.safetensors")),
            dir.join(format!("{key}.json")),
            dir,
        )
    }

    pub fn get(&self, key: &str) -> Result<Option<NamedTensors>> {
        let (data, _, _) = self.paths(key);
        match std::fs::read(&data) {
            Ok(bytes) => Ok(Some(container::parse(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(VipError::io(data, e)),
        }
    }

    pub fn sidecar(&self, key: &str) -> Result<Option<CacheSidecar>> {
        let (_, side, _) = self.paths(key);
        match std::fs::read(&side) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(VipError::io(side, e)),
        }
    }

    pub fn put(&self, tensors: &NamedTensors, sidecar: &CacheSidecar) -> Result<()> {
        let (data, side, dir) = self.paths(&sidecar.key);
        std::fs::create_dir_all(&dir).map_err(|e| VipError::io(&dir, e))?;
        atomic_write(&dir, &side, &serde_json::to_vec_pretty(sidecar)?)?;
        atomic_write(&dir, &data, &container::serialize(tensors, None)?)
    }
}

fn atomic_write(dir: &Path, dest: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| VipError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| VipError::io(tmp.path(), e))?;
    tmp.persist(dest).map_err(|e| VipError::io(dest, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::open(dir.path()).unwrap();
        let key = cache_key("img", "cfg", "v1");
        assert!(cache.get(&key).unwrap().is_none());
        let mut t = NamedTensors::new();
        t.insert("full".into(), Tensor::from_vec(vec![0.1, -3.7e-9, f32::MAX]).unwrap());
        let side = CacheSidecar {
            key: key.clone(),
            image_hash: "img".into(),
            config_hash: "cfg".into(),
            analysis_version: "v1".into(),
            toolkit_version: crate::VERSION.into(),
        };
        cache.put(&t, &side).unwrap();
        assert_eq!(cache.get(&key).unwrap().unwrap(), t);
        assert_eq!(cache.sidecar(&key).unwrap().unwrap(), side);
    }

    #[test]
    fn keys_depend_on_every_part() {
        let k = cache_key("a", "b", "c");
        assert_ne!(k, cache_key("a", "b", "d"));
        assert_ne!(k, cache_key("a", "x", "c"));
        assert_ne!(cache_key("ab", "c", ""), cache_key("a", "bc", ""));
    }
}
