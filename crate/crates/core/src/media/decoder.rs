use std::io::{BufReader, Read};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::thread::JoinHandle;

use serde::Deserialize;

use super::{IngestError, MediaInfo, Rational};
use crate::frame::Frame;

/// Overrides the decoder command line (whitespace separated).
pub const DECODER_ENV: &str = "MANGAROLL_DECODER";

/// Source of probe metadata and decoded frames.
pub trait Decoder: Send + Sync {
    fn probe(&self, path: &Path) -> Result<MediaInfo, IngestError>;
    fn extract(&self, path: &Path, info: &MediaInfo, range: Range<u64>) -> Result<FrameStream, IngestError>;
}

/// Ordered stream of decoded frames.
pub struct FrameStream {
    inner: Box<dyn Iterator<Item = Result<Frame, IngestError>> + Send>,
}

impl FrameStream {
    pub fn new(inner: impl Iterator<Item = Result<Frame, IngestError>> + Send + 'static) -> Self {
        Self {
            inner: Box::new(inner),
        }
    }
}

impl Iterator for FrameStream {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next()
    }
}

/// How the decoder command is invoked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderStyle {
    /// `ffmpeg`/`ffprobe` argument conventions.
    Ffmpeg,
    /// `<cmd> probe <path>` prints JSON metadata;
    /// `<cmd> decode <path> <start> <end>` writes raw rgb24 frames.
    Pipe,
}

#[derive(Debug, Clone)]
pub struct ProcessDecoder {
    program: PathBuf,
    base_args: Vec<String>,
    style: DecoderStyle,
}

impl ProcessDecoder {
    pub fn ffmpeg(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            base_args: Vec::new(),
            style: DecoderStyle::Ffmpeg,
        }
    }

    pub fn pipe(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            base_args: Vec::new(),
            style: DecoderStyle::Pipe,
        }
    }

    /// Parses a whitespace-separated command line. Programs named
    /// `ffmpeg*` use ffmpeg conventions, anything else the pipe protocol.
    pub fn from_command_line(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_owned);
        let program = PathBuf::from(parts.next()?);
        let is_ffmpeg = program
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("ffmpeg"));
        Some(Self {
            program,
            base_args: parts.collect(),
            style: if is_ffmpeg {
                DecoderStyle::Ffmpeg
            } else {
                DecoderStyle::Pipe
            },
        })
    }

    /// `$MANGAROLL_DECODER` if set, otherwise `ffmpeg` from `PATH`.
    pub fn from_env() -> Self {
        std::env::var(DECODER_ENV)
            .ok()
            .and_then(|c| Self::from_command_line(&c))
            .unwrap_or_else(|| Self::ffmpeg("ffmpeg"))
    }

    pub fn style(&self) -> DecoderStyle {
        self.style
    }

    fn command(&self, program: &Path) -> Command {
        let mut cmd = Command::new(program);
        cmd.args(&self.base_args);
        cmd
    }

    fn ffprobe_program(&self) -> PathBuf {
        let name = self
            .program
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("ffmpeg")
            .replacen("ffmpeg", "ffprobe", 1);
        self.program.with_file_name(name)
    }

    fn run_probe(&self, path: &Path) -> Result<Vec<u8>, IngestError> {
        let (program, mut cmd) = match self.style {
            DecoderStyle::Pipe => {
                let mut cmd = self.command(&self.program);
                cmd.arg("probe").arg(path);
                (self.program.clone(), cmd)
            }
            DecoderStyle::Ffmpeg => {
                let probe = self.ffprobe_program();
                let mut cmd = Command::new(&probe);
                cmd.args([
                    "-v",
                    "error",
                    "-select_streams",
                    "v:0",
                    "-count_packets",
                    "-show_entries",
                    "stream=width,height,r_frame_rate,nb_read_packets",
                    "-of",
                    "json",
                ])
                .arg(path);
                (probe, cmd)
            }
        };
        let out = cmd
            .stdin(Stdio::null())
            .output()
            .map_err(|e| IngestError::DecoderUnavailable {
                program: program.display().to_string(),
                reason: e.to_string(),
            })?;
        if !out.status.success() {
            return Err(IngestError::UndecodableStream {
                path: path.display().to_string(),
                reason: format!(
                    "probe exited with {}: {}",
                    out.status,
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            });
        }
        Ok(out.stdout)
    }
}

#[derive(Deserialize)]
struct PipeProbe {
    width: u32,
    height: u32,
    frame_rate: Rational,
    frame_count: u64,
}

#[derive(Deserialize)]
struct FfprobeOutput {
    streams: Vec<FfprobeStream>,
}

#[derive(Deserialize)]
struct FfprobeStream {
    width: u32,
    height: u32,
    r_frame_rate: String,
    nb_read_packets: String,
}

impl Decoder for ProcessDecoder {
    fn probe(&self, path: &Path) -> Result<MediaInfo, IngestError> {
        let stdout = self.run_probe(path)?;
        let undecodable = |reason: String| IngestError::UndecodableStream {
            path: path.display().to_string(),
            reason,
        };
        let (w, h, rate, count) = match self.style {
            DecoderStyle::Pipe => {
                let p: PipeProbe = serde_json::from_slice(&stdout)
                    .map_err(|e| undecodable(format!("bad probe output: {e}")))?;
                (p.width, p.height, p.frame_rate, p.frame_count)
            }
            DecoderStyle::Ffmpeg => {
                let p: FfprobeOutput = serde_json::from_slice(&stdout)
                    .map_err(|e| undecodable(format!("bad ffprobe output: {e}")))?;
                let s = p
                    .streams
                    .into_iter()
                    .next()
                    .ok_or_else(|| undecodable("no video stream".into()))?;
                let rate = Rational::parse(&s.r_frame_rate)
                    .ok_or_else(|| undecodable(format!("bad frame rate {}", s.r_frame_rate)))?;
                let count = s
                    .nb_read_packets
                    .parse()
                    .map_err(|_| undecodable("missing frame count".into()))?;
                (s.width, s.height, rate, count)
            }
        };
        MediaInfo::new(w, h, rate, count).map_err(undecodable)
    }

    fn extract(&self, path: &Path, info: &MediaInfo, range: Range<u64>) -> Result<FrameStream, IngestError> {
        let mut cmd = self.command(&self.program);
        match self.style {
            DecoderStyle::Pipe => {
                cmd.arg("decode")
                    .arg(path)
                    .arg(range.start.to_string())
                    .arg(range.end.to_string());
            }
            DecoderStyle::Ffmpeg => {
                cmd.args(["-v", "error", "-nostdin", "-i"])
                    .arg(path)
                    .arg("-vf")
                    .arg(format!(
                        "select=between(n\\,{}\\,{})",
                        range.start,
                        range.end - 1
                    ))
                    .args(["-vsync", "0", "-f", "rawvideo", "-pix_fmt", "rgb24", "pipe:1"]);
            }
        }
        let mut child = cmd
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| IngestError::DecoderUnavailable {
                program: self.program.display().to_string(),
                reason: e.to_string(),
            })?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let stderr_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        Ok(FrameStream::new(PipeFrames {
            child: Some(child),
            stdout: BufReader::with_capacity(info.frame_bytes().max(8192), stdout),
            stderr: Some(stderr_reader),
            next_index: range.start,
            end: range.end,
            info: info.clone(),
            failed: false,
        }))
    }
}

struct PipeFrames {
    child: Option<Child>,
    stdout: BufReader<ChildStdout>,
    stderr: Option<JoinHandle<String>>,
    next_index: u64,
    end: u64,
    info: MediaInfo,
    failed: bool,
}

impl PipeFrames {
    fn finish(&mut self, short: bool) -> Option<IngestError> {
        let mut child = self.child.take()?;
        if short {
            let _ = child.kill();
        }
        let status = child.wait().ok();
        let stderr = self
            .stderr
            .take()
            .and_then(|h| h.join().ok())
            .unwrap_or_default();
        let ok = status.is_some_and(|s| s.success());
        if short || !ok {
            let status = status.map_or_else(|| "unknown status".to_owned(), |s| s.to_string());
            let mut stderr = stderr.trim().to_owned();
            if short && stderr.is_empty() {
                stderr = format!("stream ended before frame {}", self.next_index);
            }
            return Some(IngestError::DecoderCrash { status, stderr });
        }
        None
    }
}

impl Iterator for PipeFrames {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.next_index >= self.end {
            return self.finish(false).map(|e| {
                self.failed = true;
                Err(e)
            });
        }
        let mut buf = vec![0u8; self.info.frame_bytes()];
        if self.stdout.read_exact(&mut buf).is_err() {
            self.failed = true;
            return Some(Err(self.finish(true).unwrap_or(IngestError::DecoderCrash {
                status: "unknown".into(),
                stderr: "short read".into(),
            })));
        }
        let index = self.next_index;
        self.next_index += 1;
        Some(
            Frame::new(
                index,
                self.info.timestamp_of(index),
                self.info.width,
                self.info.height,
                buf,
            )
            .map_err(IngestError::from),
        )
    }
}

impl Drop for PipeFrames {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Reads `.mrv` files in process and hands every other file to a
/// process decoder.
#[derive(Debug, Clone)]
pub struct AutoDecoder {
    fallback: ProcessDecoder,
}

impl AutoDecoder {
    pub fn new(fallback: ProcessDecoder) -> Self {
        Self { fallback }
    }

    pub fn from_env() -> Self {
        Self::new(ProcessDecoder::from_env())
    }

    fn is_raw(path: &Path) -> bool {
        path.extension().is_some_and(|e| e.eq_ignore_ascii_case(super::rawvideo::EXTENSION))
    }
}

impl Decoder for AutoDecoder {
    fn probe(&self, path: &Path) -> Result<MediaInfo, IngestError> {
        if Self::is_raw(path) {
            super::rawvideo::RawVideoDecoder.probe(path)
        } else {
            self.fallback.probe(path)
        }
    }

    fn extract(&self, path: &Path, info: &MediaInfo, range: Range<u64>) -> Result<FrameStream, IngestError> {
        if Self::is_raw(path) {
            super::rawvideo::RawVideoDecoder.extract(path, info, range)
        } else {
            self.fallback.extract(path, info, range)
        }
    }
}
