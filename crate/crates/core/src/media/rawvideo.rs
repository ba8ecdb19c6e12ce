//! Minimal uncompressed container (`.mrv`) and a pipe-protocol decoder for
//! it. Used for test fixtures and for environments without a transcoder.
//!
//! Layout: the line `MRAW1`, one JSON line
//! `{"width":..,"height":..,"frame_rate":{"num":..,"den":..},"frame_count":..}`,
//! then `frame_count` raw rgb24 frames back to back.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Decoder, FrameStream, IngestError, MediaInfo, Rational};
use crate::frame::Frame;

const MAGIC: &str = "MRAW1";

/// File extension of the container.
pub const EXTENSION: &str = "mrv";

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Header {
    width: u32,
    height: u32,
    frame_rate: Rational,
    frame_count: u64,
}

/// Writes `frames` as an `.mrv` file. All frames must share one geometry.
pub fn write_raw_video<'a>(
    path: &Path,
    frame_rate: Rational,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> io::Result<()> {
    let frames: Vec<&Frame> = frames.into_iter().collect();
    let first = frames
        .first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no frames"))?;
    if frames.iter().any(|f| !f.same_dimensions(first)) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "mixed frame sizes"));
    }
    let header = Header {
        width: first.width(),
        height: first.height(),
        frame_rate,
        frame_count: frames.len() as u64,
    };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for f in frames {
        w.write_all(f.pixels())?;
    }
    w.flush()
}

/// Random-access reader over an `.mrv` file.
pub struct RawVideoReader {
    file: BufReader<File>,
    header: Header,
    data_offset: u64,
}

impl RawVideoReader {
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = BufReader::new(File::open(path)?);
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_owned());
        let mut line = String::new();
        file.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(bad("not an MRAW1 file"));
        }
        let mut json = String::new();
        file.read_line(&mut json)?;
        let header: Header =
            serde_json::from_str(json.trim_end()).map_err(|e| bad(&format!("bad header: {e}")))?;
        let data_offset = (line.len() + json.len()) as u64;
        let frame_bytes = header.width as u64 * header.height as u64 * 3;
        let needed = data_offset + frame_bytes * header.frame_count;
        if file.get_ref().metadata()?.len() < needed {
            return Err(bad("truncated frame data"));
        }
        Ok(Self {
            file,
            header,
            data_offset,
        })
    }

    pub fn media_info(&self) -> Result<MediaInfo, String> {
        let h = self.header;
        MediaInfo::new(h.width, h.height, h.frame_rate, h.frame_count)
    }

    fn frame_bytes(&self) -> usize {
        self.header.width as usize * self.header.height as usize * 3
    }

    /// Copies frames `range` to `out` as raw rgb24.
    pub fn copy_range(&mut self, range: Range<u64>, out: &mut impl Write) -> io::Result<()> {
        if range.start > range.end || range.end > self.header.frame_count {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "range out of bounds"));
        }
        let fb = self.frame_bytes() as u64;
        self.file
            .seek(SeekFrom::Start(self.data_offset + range.start * fb))?;
        let mut limited = (&mut self.file).take((range.end - range.start) * fb);
        io::copy(&mut limited, out)?;
        Ok(())
    }

    pub fn read_frame(&mut self, index: u64) -> io::Result<Frame> {
        let mut buf = Vec::with_capacity(self.frame_bytes());
        self.copy_range(index..index + 1, &mut buf)?;
        let info = self
            .media_info()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Frame::new(index, info.timestamp_of(index), info.width, info.height, buf)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }
}

/// In-process reader for `.mrv` files, mainly for unit tests.
#[derive(Debug, Default, Clone, Copy)]
pub struct RawVideoDecoder;

impl Decoder for RawVideoDecoder {
    fn probe(&self, path: &Path) -> Result<MediaInfo, IngestError> {
        let undecodable = |reason: String| IngestError::UndecodableStream {
            path: path.display().to_string(),
            reason,
        };
        RawVideoReader::open(path)
            .map_err(|e| undecodable(e.to_string()))?
            .media_info()
            .map_err(undecodable)
    }

    fn extract(&self, path: &Path, _info: &MediaInfo, range: Range<u64>) -> Result<FrameStream, IngestError> {
        let mut reader = RawVideoReader::open(path).map_err(|e| IngestError::UndecodableStream {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(FrameStream::new(range.map(move |i| {
            reader.read_frame(i).map_err(|e| IngestError::DecoderCrash {
                status: "in-process".into(),
                stderr: e.to_string(),
            })
        })))
    }
}

/// Entry point for the pipe-protocol decoder process. `args` excludes the
/// program name. Returns the process exit code.
pub fn pipe_decoder_main(args: &[String], stdout: &mut impl Write, stderr: &mut impl Write) -> i32 {
    let result = match args {
        [cmd, path] if cmd == "probe" => RawVideoReader::open(Path::new(path)).and_then(|r| {
            let h = r.header;
            serde_json::to_writer(&mut *stdout, &h)?;
            writeln!(stdout)
        }),
        [cmd, path, start, end] if cmd == "decode" => {
            match (start.parse::<u64>(), end.parse::<u64>()) {
                (Ok(s), Ok(e)) => RawVideoReader::open(Path::new(path))
                    .and_then(|mut r| r.copy_range(s..e, stdout)),
                _ => Err(io::Error::new(io::ErrorKind::InvalidInput, "bad frame range")),
            }
        }
        _ => {
            let _ = writeln!(stderr, "usage: probe <file> | decode <file> <start> <end>");
            return 2;
        }
    };
    match result.and_then(|_| stdout.flush()) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            1
        }
    }
}
