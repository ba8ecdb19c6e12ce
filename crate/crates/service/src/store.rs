use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use mangaroll::media::{self, Decoder};
use mangaroll::pipeline::Workspace;
use mangaroll::timeline::{project_from_bytes, save_project, PipelineConfig, TimelineProject};

use crate::ApiError;

/// Projects on disk, one subdirectory per id, with a writer lock each.
pub struct ProjectStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<AsyncMutex<()>>>>,
}

/// Held while a project is being modified.
pub type WriterGuard = OwnedMutexGuard<()>;

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

/// Content revision used for `ETag` / `If-Match`.
pub fn revision(bytes: &[u8]) -> String {
    mangaroll::sha256_hex(bytes)[..16].to_owned()
}

impl ProjectStore {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root, locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Workspace of an existing project.
    pub fn workspace(&self, id: &str) -> Result<Workspace, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::not_found(format!("project {id}")));
        }
        let ws = Workspace::in_dir(&self.root.join(id));
        if !ws.project_path().is_file() {
            return Err(ApiError::not_found(format!("project {id}")));
        }
        Ok(ws)
    }

    /// Reads the stored project and its exact bytes.
    pub fn load(&self, id: &str) -> Result<(TimelineProject, Vec<u8>), ApiError> {
        let ws = self.workspace(id)?;
        let bytes = std::fs::read(ws.project_path()).map_err(ApiError::internal)?;
        let project = project_from_bytes(&bytes)?;
        Ok((project, bytes))
    }

    /// Fails with 409 when another writer holds the project.
    pub fn try_lock(&self, id: &str) -> Result<WriterGuard, ApiError> {
        let m = Arc::clone(self.locks.lock().expect("lock table").entry(id.to_owned()).or_default());
        m.try_lock_owned()
            .map_err(|_| ApiError::conflict(format!("project {id} is being modified")))
    }

    fn fresh_id(&self) -> String {
        loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !self.root.join(&id).exists() {
                return id;
            }
        }
    }

    /// Probes `source` and stores an unanalyzed project for it.
    pub fn create(&self, source: &Path, decoder: &dyn Decoder) -> Result<(String, TimelineProject), ApiError> {
        let info = media::probe(decoder, source).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let abs = std::path::absolute(source).map_err(ApiError::internal)?;
        let id = self.fresh_id();
        let project = TimelineProject::new(info, abs.to_string_lossy(), PipelineConfig::default());
        let ws = Workspace::in_dir(&self.root.join(&id));
        std::fs::create_dir_all(ws.dir()).map_err(ApiError::internal)?;
        save_project(&project, ws.project_path())?;
        Ok((id, project))
    }

    /// Stores uploaded bytes as the source file, then probes it.
    pub fn create_from_upload(
        &self,
        bytes: &[u8],
        extension: &str,
        decoder: &dyn Decoder,
    ) -> Result<(String, TimelineProject), ApiError> {
        if extension.is_empty() || !extension.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(ApiError::unprocessable(format!("bad file extension {extension:?}")));
        }
        let staging = tempfile::Builder::new()
            .prefix("upload-")
            .suffix(&format!(".{extension}"))
            .tempfile_in(&self.root)
            .map_err(ApiError::internal)?;
        std::fs::write(staging.path(), bytes).map_err(ApiError::internal)?;
        let info = media::probe(decoder, staging.path()).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let id = self.fresh_id();
        let dir = self.root.join(&id);
        std::fs::create_dir_all(&dir).map_err(ApiError::internal)?;
        let source = dir.join(format!("source.{extension}"));
        staging.persist(&source).map_err(ApiError::internal)?;
        let abs = std::path::absolute(&source).map_err(ApiError::internal)?;
        let project = TimelineProject::new(info, abs.to_string_lossy(), PipelineConfig::default());
        save_project(&project, Workspace::in_dir(&dir).project_path())?;
        Ok((id, project))
    }
}
