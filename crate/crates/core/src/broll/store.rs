use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{AssetMeta, BRollAsset, BRollError};
use crate::Frame;

/// Directory of `<id>.png` stills with `<id>.json` sidecars.
#[derive(Debug, Clone)]
pub struct AssetStore {
    dir: PathBuf,
}

fn store_err(e: impl std::fmt::Display) -> BRollError {
    BRollError::Store(e.to_string())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl AssetStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn png_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.png"))
    }

    pub fn meta_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn contains(&self, id: &str) -> bool {
        is_valid_id(id) && self.png_path(id).is_file() && self.meta_path(id).is_file()
    }

    pub fn save(&self, asset: &BRollAsset) -> Result<(), BRollError> {
        let id = asset.id();
        write_atomic(&self.png_path(id), &asset.png).map_err(store_err)?;
        let mut meta = serde_json::to_vec_pretty(&crate::timeline::canonical_value(&asset.meta)).map_err(store_err)?;
        meta.push(b'\n');
        write_atomic(&self.meta_path(id), &meta).map_err(store_err)
    }

    pub fn load_meta(&self, id: &str) -> Result<AssetMeta, BRollError> {
        if !is_valid_id(id) {
            return Err(BRollError::MissingAsset(id.to_owned()));
        }
        let bytes = match fs::read(self.meta_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BRollError::MissingAsset(id.to_owned()))
            }
            Err(e) => return Err(store_err(e)),
        };
        serde_json::from_slice(&bytes).map_err(store_err)
    }

    pub fn load_png(&self, id: &str) -> Result<Vec<u8>, BRollError> {
        if !is_valid_id(id) {
            return Err(BRollError::MissingAsset(id.to_owned()));
        }
        fs::read(self.png_path(id)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BRollError::MissingAsset(id.to_owned()),
            _ => store_err(e),
        })
    }

    pub fn load(&self, id: &str) -> Result<BRollAsset, BRollError> {
        let meta = self.load_meta(id)?;
        let png = self.load_png(id)?;
        let image = Frame::from_png(&png, 0, 0.0).map_err(store_err)?;
        Ok(BRollAsset { meta, image, png })
    }
}

/// Ids are lowercase hex digests; anything else could escape the directory.
fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_hexdigit())
}
