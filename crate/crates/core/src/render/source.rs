use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use super::RenderError;
use crate::broll::AssetStore;
use crate::media::{Decoder, FrameStream, IngestError, MediaInfo};
use crate::Frame;

/// Random access to decoded source frames by index.
pub trait SourceFrames: Send {
    fn frame(&mut self, index: u64) -> Result<Frame, RenderError>;
}

/// Still images by asset id, already fitted to the output size.
pub trait AssetSource: Send {
    fn still(&mut self, asset_id: &str, width: u32, height: u32) -> Result<Frame, RenderError>;
}

impl SourceFrames for Vec<Frame> {
    fn frame(&mut self, index: u64) -> Result<Frame, RenderError> {
        self.get(index as usize).cloned().ok_or(RenderError::Source(IngestError::RangeOutOfBounds {
            start: index,
            end: index + 1,
            frame_count: self.len() as u64,
        }))
    }
}

impl AssetSource for HashMap<String, Frame> {
    fn still(&mut self, asset_id: &str, width: u32, height: u32) -> Result<Frame, RenderError> {
        let f = self.get(asset_id).ok_or_else(|| RenderError::MissingAsset(asset_id.to_owned()))?;
        Ok(super::fit_still(f, width, height))
    }
}

/// Streams frames from a decoder. Forward requests continue the open
/// stream; a backward seek restarts it at the requested frame.
pub struct DecoderSource {
    decoder: Arc<dyn Decoder>,
    path: PathBuf,
    info: MediaInfo,
    stream: Option<(FrameStream, u64)>,
    last: Option<Frame>,
}

impl DecoderSource {
    pub fn new(decoder: Arc<dyn Decoder>, path: impl Into<PathBuf>, info: MediaInfo) -> Self {
        Self { decoder, path: path.into(), info, stream: None, last: None }
    }
}

impl SourceFrames for DecoderSource {
    fn frame(&mut self, index: u64) -> Result<Frame, RenderError> {
        if let Some(f) = self.last.as_ref().filter(|f| f.index() == index) {
            return Ok(f.clone());
        }
        if index >= self.info.frame_count {
            return Err(IngestError::RangeOutOfBounds { start: index, end: index + 1, frame_count: self.info.frame_count }.into());
        }
        let restart = !matches!(&self.stream, Some((_, next)) if *next <= index);
        if restart {
            tracing::debug!(index, "opening decoder stream");
            let s = self.decoder.extract(&self.path, &self.info, index..self.info.frame_count)?;
            self.stream = Some((s, index));
        }
        let (stream, next) = self.stream.as_mut().expect("stream opened above");
        loop {
            let f = match stream.next() {
                Some(r) => r?,
                None => {
                    self.stream = None;
                    return Err(IngestError::UndecodableStream {
                        path: self.path.display().to_string(),
                        reason: format!("stream ended before frame {index}"),
                    }
                    .into());
                }
            };
            let at = *next;
            *next += 1;
            if at == index {
                let f = f.with_position(index, self.info.timestamp_of(index));
                self.last = Some(f.clone());
                return Ok(f);
            }
        }
    }
}

/// Reads stills from an asset store, caching each fitted image.
pub struct StoreAssets {
    store: AssetStore,
    cache: HashMap<(String, u32, u32), Frame>,
}

impl StoreAssets {
    pub fn new(store: AssetStore) -> Self {
        Self { store, cache: HashMap::new() }
    }
}

impl AssetSource for StoreAssets {
    fn still(&mut self, asset_id: &str, width: u32, height: u32) -> Result<Frame, RenderError> {
        let key = (asset_id.to_owned(), width, height);
        if let Some(f) = self.cache.get(&key) {
            return Ok(f.clone());
        }
        let png = self.store.load_png(asset_id).map_err(|_| RenderError::MissingAsset(asset_id.to_owned()))?;
        let img = Frame::from_png(&png, 0, 0.0).map_err(|e| RenderError::MissingAsset(format!("{asset_id}: {e}")))?;
        let fitted = super::fit_still(&img, width, height);
        self.cache.insert(key, fitted.clone());
        Ok(fitted)
    }
}
