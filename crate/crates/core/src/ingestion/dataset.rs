use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ImageSpec;
use crate::error::{Result, VipError};

const EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub label: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct DatasetOptions {
    pub limit: Option<usize>,
    /// Shuffle the sorted listing with this seed.
    pub shuffle_seed: Option<u64>,
}

/// Image files under a root directory in a deterministic order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

fn read_labels(root: &Path) -> Result<HashMap<PathBuf, String>> {
    let file = root.join(LABELS_FILE);
    let mut out = HashMap::new();
    if !file.exists() {
        return Ok(out);
    }
    let mut rdr = csv::Reader::from_path(&file).map_err(|e| VipError::InvalidDataset(format!("{}: {e}", file.display())))?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| VipError::InvalidDataset(format!("{}: {e}", file.display())))?;
        let (Some(path), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(VipError::InvalidDataset(format!(
                "{}: rows need `path,label`",
                file.display()
            )));
        };
        out.insert(root.join(path.trim()), label.trim().to_string());
    }
    Ok(out)
}

impl Dataset {
    pub fn scan(root: &Path, opts: &DatasetOptions) -> Result<Self> {
        if !root.is_dir() {
            return Err(VipError::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ));
        }
        let labels = read_labels(root)?;
        let mut paths = Vec::new();
        for entry in walkdir::WalkDir::new(root).follow_links(true) {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(root).to_path_buf();
                VipError::io(path, e.into())
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let ok = entry
                .path()
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if ok {
                paths.push(entry.into_path());
            }
        }
        paths.sort();
        let mut entries: Vec<DatasetEntry> = paths
            .into_iter()
            .map(|path| {
                let label = labels.get(&path).cloned().or_else(|| {
                    let parent = path.parent()?;
                    if parent == root {
                        None
                    } else {
                        parent.file_name().map(|n| n.to_string_lossy().into_owned())
                    }
                });
                DatasetEntry { path, label }
            })
            .collect();
        if entries.is_empty() {
            return Err(VipError::EmptyDataset(root.to_path_buf()));
        }
        if let Some(seed) = opts.shuffle_seed {
            entries.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        if let Some(limit) = opts.limit {
            entries.truncate(limit);
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Decodes entries lazily, in order.
    pub fn iter(&self) -> impl Iterator<Item = Result<ImageSpec>> + '_ {
        self.entries.iter().map(|e| {
            let mut img = decode_image(&e.path)?;
            img.label = e.label.clone();
            Ok(img)
        })
    }
}

pub fn decode_image(path: &Path) -> Result<ImageSpec> {
    let bytes = std::fs::read(path).map_err(|e| VipError::io(path, e))?;
    decode_bytes(&bytes, path)
}

/// Decodes PNG or JPEG bytes into an RGB image in `[0, 1]`.
pub fn decode_bytes(bytes: &[u8], path: &Path) -> Result<ImageSpec> {
    let img = image::load_from_memory(bytes).map_err(|e| VipError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Ok(ImageSpec {
        path: path.to_path_buf(),
        height: h as usize,
        width: w as usize,
        pixels,
        label: None,
        content_hash: hex::encode(Sha256::digest(bytes)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(path: &Path, shade: u8) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        image::RgbImage::from_pixel(4, 3, image::Rgb([shade, 0, 255 - shade]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn sorted_order_labels_and_limit() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("b/x.png"), 1);
        write_png(&dir.path().join("a/y.png"), 2);
        write_png(&dir.path().join("c.png"), 3);
        std::fs::write(dir.path().join("notes.txt"), "skip").unwrap();
        let ds = Dataset::scan(dir.path(), &DatasetOptions::default()).unwrap();
        let names: Vec<_> = ds.entries.iter().map(|e| e.path.strip_prefix(dir.path()).unwrap().to_path_buf()).collect();
        assert_eq!(names, vec![PathBuf::from("a/y.png"), "b/x.png".into(), "c.png".into()]);
        assert_eq!(ds.entries[0].label.as_deref(), Some("a"));
        assert_eq!(ds.entries[2].label, None);

        let two = Dataset::scan(dir.path(), &DatasetOptions { limit: Some(2), shuffle_seed: None }).unwrap();
        assert_eq!(two.entries, ds.entries[..2]);

        let opts = DatasetOptions { limit: None, shuffle_seed: Some(9) };
        assert_eq!(Dataset::scan(dir.path(), &opts).unwrap().entries, Dataset::scan(dir.path(), &opts).unwrap().entries);

        let imgs: Vec<_> = ds.iter().collect::<Result<_>>().unwrap();
        assert_eq!((imgs[0].height, imgs[0].width), (3, 4));
        assert_eq!(imgs[0].label.as_deref(), Some("a"));
        assert_ne!(imgs[0].content_hash, imgs[1].content_hash);
    }

    #[test]
    fn labels_csv_overrides_directories() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a/y.png"), 2);
        write_png(&dir.path().join("z.png"), 5);
        std::fs::write(dir.path().join(LABELS_FILE), "path,label\nz.png,zebra\na/y.png,yak\n").unwrap();
        let ds = Dataset::scan(dir.path(), &DatasetOptions::default()).unwrap();
        let labels: Vec<_> = ds.entries.iter().map(|e| e.label.clone().unwrap()).collect();
        assert_eq!(labels, vec!["yak", "zebra"]);
    }

    #[test]
    fn empty_and_undecodable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Dataset::scan(dir.path(), &DatasetOptions::default()),
            Err(VipError::EmptyDataset(_))
        ));
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"not a png").unwrap();
        assert!(matches!(decode_image(&bad), Err(VipError::Decode { .. })));
    }
}
