use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::media::Rational;
use crate::Frame;

/// Overrides the encoder command. The output width, height, frame rate
/// (`N/D`) and path are appended as arguments; rgb24 frames arrive on
/// stdin.
pub const ENCODER_ENV: &str = "MANGAROLL_ENCODER";

/// Where rendered frames go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SinkConfig {
    /// `frame_00000000.png`, `frame_00000001.png`, ... in `dir`.
    ImageSequence { dir: PathBuf },
    /// A video file written by an encoder process.
    Encoder { path: PathBuf },
    /// Frames are only hashed.
    Discard,
}

impl SinkConfig {
    pub fn open(&self, width: u32, height: u32, rate: Rational) -> Result<Box<dyn FrameSink>, RenderError> {
        Ok(match self {
            SinkConfig::ImageSequence { dir } => Box::new(ImageSequenceSink::new(dir)?),
            SinkConfig::Encoder { path } => Box::new(EncoderSink::spawn(width, height, rate, path)?),
            SinkConfig::Discard => Box::new(Discard),
        })
    }
}

pub trait FrameSink: Send {
    fn write(&mut self, frame: &Frame) -> Result<(), RenderError>;
    fn finish(self: Box<Self>) -> Result<(), RenderError>;
}

fn sink_err(e: impl std::fmt::Display) -> RenderError {
    RenderError::SinkWriteError(e.to_string())
}

struct Discard;

impl FrameSink for Discard {
    fn write(&mut self, _: &Frame) -> Result<(), RenderError> {
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<(), RenderError> {
        Ok(())
    }
}

pub struct ImageSequenceSink {
    dir: PathBuf,
    next: u64,
}

impl ImageSequenceSink {
    pub fn new(dir: &Path) -> Result<Self, RenderError> {
        std::fs::create_dir_all(dir).map_err(sink_err)?;
        Ok(Self { dir: dir.to_owned(), next: 0 })
    }

    pub fn frame_path(dir: &Path, n: u64) -> PathBuf {
        dir.join(format!("frame_{n:08}.png"))
    }
}

impl FrameSink for ImageSequenceSink {
    fn write(&mut self, frame: &Frame) -> Result<(), RenderError> {
        std::fs::write(Self::frame_path(&self.dir, self.next), frame.to_png()).map_err(sink_err)?;
        self.next += 1;
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<(), RenderError> {
        Ok(())
    }
}

pub struct EncoderSink {
    child: Child,
    stdin: Option<ChildStdin>,
}

impl EncoderSink {
    /// Uses the command from the environment, or ffmpeg.
    pub fn spawn(width: u32, height: u32, rate: Rational, out: &Path) -> Result<Self, RenderError> {
        let line = std::env::var(ENCODER_ENV).ok();
        Self::spawn_with(line.as_deref(), width, height, rate, out)
    }

    pub fn spawn_with(
        command_line: Option<&str>,
        width: u32,
        height: u32,
        rate: Rational,
        out: &Path,
    ) -> Result<Self, RenderError> {
        let rate_s = format!("{}/{}", rate.num, rate.den);
        let mut cmd = match command_line.filter(|s| !s.trim().is_empty()) {
            Some(line) => {
                let mut parts = line.split_whitespace();
                let mut c = Command::new(parts.next().expect("non-empty"));
                c.args(parts).arg(width.to_string()).arg(height.to_string()).arg(&rate_s).arg(out);
                c
            }
            None => {
                let mut c = Command::new("ffmpeg");
                c.args(["-loglevel", "error", "-y", "-f", "rawvideo", "-pix_fmt", "rgb24"])
                    .arg("-s")
                    .arg(format!("{width}x{height}"))
                    .arg("-r")
                    .arg(&rate_s)
                    .args(["-i", "-", "-c:v", "libx264", "-pix_fmt", "yuv420p"])
                    .arg(out);
                c
            }
        };
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| sink_err(format!("cannot start encoder: {e}")))?;
        let stdin = child.stdin.take();
        Ok(Self { child, stdin })
    }
}

impl FrameSink for EncoderSink {
    fn write(&mut self, frame: &Frame) -> Result<(), RenderError> {
        let stdin = self.stdin.as_mut().expect("open until finish");
        stdin.write_all(frame.pixels()).map_err(sink_err)
    }

    fn finish(mut self: Box<Self>) -> Result<(), RenderError> {
        drop(self.stdin.take());
        let mut stderr = String::new();
        if let Some(mut e) = self.child.stderr.take() {
            let _ = e.read_to_string(&mut stderr);
        }
        let status = self.child.wait().map_err(sink_err)?;
        if !status.success() {
            return Err(sink_err(format!("encoder exited with {status}: {}", stderr.trim())));
        }
        Ok(())
    }
}

impl Drop for EncoderSink {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    #[test]
    fn encoder_receives_raw_frames() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("enc.sh");
        std::fs::write(&script, "#!/bin/sh\necho \"$1 $2 $3\" > \"$4.args\"\ncat > \"$4\"\n").unwrap();
        let out = dir.path().join("o.raw");
        let line = format!("sh {}", script.display());
        let mut sink: Box<dyn FrameSink> =
            Box::new(EncoderSink::spawn_with(Some(&line), 2, 1, Rational::new(30000, 1001).unwrap(), &out).unwrap());
        sink.write(&Frame::filled(0, 0.0, 2, 1, [1, 2, 3])).unwrap();
        sink.finish().unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), vec![1, 2, 3, 1, 2, 3]);
        let args = std::fs::read_to_string(dir.path().join("o.raw.args")).unwrap();
        assert_eq!(args.trim(), "2 1 30000/1001");
    }

    #[test]
    fn failing_encoder_reported() {
        let dir = tempfile::tempdir().unwrap();
        let sink = Box::new(EncoderSink::spawn_with(Some("false"), 2, 1, Rational::integer(1), &dir.path().join("x")).unwrap());
        assert!(matches!(sink.finish(), Err(RenderError::SinkWriteError(_))));
    }
}
