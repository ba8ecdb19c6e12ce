//! Keypoint similarity between consecutive frames.
//!
//! The built-in [`CornerDetector`] is a Harris corner detector with binary
//! intensity-comparison descriptors and greedy one-to-one Hamming matching.
//! [`SubprocessDetector`] delegates to an external process (e.g. a SURF
//! implementation) over a line-delimited JSON protocol.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::frame::Frame;

pub trait KeypointDetector: Send + Sync {
    /// Fraction of keypoints matched between the frames, in `[0, 1]`.
    fn similarity(&self, a: &Frame, b: &Frame) -> f64;
}

/// Convenience wrapper mirroring the detector call.
pub fn keypoint_similarity(detector: &dyn KeypointDetector, a: &Frame, b: &Frame) -> f64 {
    detector.similarity(a, b).clamp(0.0, 1.0)
}

/// Always reports zero similarity, which disables the keypoint veto and
/// leaves segmentation to the histogram signal alone.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullDetector;

impl KeypointDetector for NullDetector {
    fn similarity(&self, _a: &Frame, _b: &Frame) -> f64 {
        0.0
    }
}

const PATCH_RADIUS: i32 = 12;
const DESCRIPTOR_BITS: usize = 256;

#[derive(Debug, Clone)]
pub struct CornerDetector {
    /// Frames are downscaled so the longer side is at most this many pixels.
    pub working_size: u32,
    pub max_keypoints: usize,
    /// Harris response threshold relative to the strongest response.
    pub relative_threshold: f64,
    /// Absolute Harris floor; flat frames produce no keypoints.
    pub absolute_threshold: f64,
    /// Largest Hamming distance accepted as a match.
    pub max_hamming: u32,
    /// Largest keypoint displacement between matched frames, as a fraction
    /// of the working size.
    pub max_displacement: f64,
    pairs: Vec<[(i32, i32); 2]>,
}

impl Default for CornerDetector {
    fn default() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b41f);
        let r = PATCH_RADIUS - 1;
        let pairs = (0..DESCRIPTOR_BITS)
            .map(|_| {
                [
                    (rng.random_range(-r..=r), rng.random_range(-r..=r)),
                    (rng.random_range(-r..=r), rng.random_range(-r..=r)),
                ]
            })
            .collect();
        Self {
            working_size: 320,
            max_keypoints: 200,
            relative_threshold: 0.01,
            absolute_threshold: 1e4,
            max_hamming: 48,
            max_displacement: 0.1,
            pairs,
        }
    }
}

struct Gray {
    w: i32,
    h: i32,
    px: Vec<f64>,
}

impl Gray {
    fn from_frame(f: &Frame, working: u32) -> Self {
        let longest = f.width().max(f.height());
        let f = if longest > working {
            let scale = working as f64 / longest as f64;
            let w = ((f.width() as f64 * scale).round() as u32).max(1);
            let h = ((f.height() as f64 * scale).round() as u32).max(1);
            f.resize_bilinear(w, h)
        } else {
            f.clone()
        };
        Self {
            w: f.width() as i32,
            h: f.height() as i32,
            px: f.luma().collect(),
        }
    }

    fn at(&self, x: i32, y: i32) -> f64 {
        let x = x.clamp(0, self.w - 1);
        let y = y.clamp(0, self.h - 1);
        self.px[(y * self.w + x) as usize]
    }

    /// 3x3 box blur, for descriptor stability.
    fn smoothed(&self) -> Gray {
        let mut px = Vec::with_capacity(self.px.len());
        for y in 0..self.h {
            for x in 0..self.w {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += self.at(x + dx, y + dy);
                    }
                }
                px.push(s / 9.0);
            }
        }
        Gray {
            w: self.w,
            h: self.h,
            px,
        }
    }
}

type Descriptor = [u64; DESCRIPTOR_BITS / 64];

struct Keypoint {
    x: i32,
    y: i32,
    descriptor: Descriptor,
}

impl CornerDetector {
    fn describe(&self, frame: &Frame) -> Vec<Keypoint> {
        let gray = Gray::from_frame(frame, self.working_size);
        let (w, h) = (gray.w, gray.h);
        if w <= 2 * PATCH_RADIUS || h <= 2 * PATCH_RADIUS {
            return Vec::new();
        }
        // Sobel gradients, then Harris response over a 5x5 window.
        let mut ix = vec![0.0; (w * h) as usize];
        let mut iy = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let g = |dx, dy| gray.at(x + dx, y + dy);
                ix[(y * w + x) as usize] = (g(1, -1) + 2.0 * g(1, 0) + g(1, 1))
                    - (g(-1, -1) + 2.0 * g(-1, 0) + g(-1, 1));
                iy[(y * w + x) as usize] = (g(-1, 1) + 2.0 * g(0, 1) + g(1, 1))
                    - (g(-1, -1) + 2.0 * g(0, -1) + g(1, -1));
            }
        }
        let mut response = vec![0.0; (w * h) as usize];
        for y in PATCH_RADIUS..h - PATCH_RADIUS {
            for x in PATCH_RADIUS..w - PATCH_RADIUS {
                let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        let i = ((y + dy) * w + x + dx) as usize;
                        a += ix[i] * ix[i];
                        b += iy[i] * iy[i];
                        c += ix[i] * iy[i];
                    }
                }
                response[(y * w + x) as usize] = a * b - c * c - 0.04 * (a + b) * (a + b);
            }
        }
        let peak = response.iter().copied().fold(0.0, f64::max);
        let threshold = (peak * self.relative_threshold).max(self.absolute_threshold);
        let mut corners = Vec::new();
        for y in PATCH_RADIUS..h - PATCH_RADIUS {
            for x in PATCH_RADIUS..w - PATCH_RADIUS {
                let r = response[(y * w + x) as usize];
                if r <= threshold {
                    continue;
                }
                let is_max = (-1..=1).all(|dy| {
                    (-1..=1).all(|dx| {
                        (dx == 0 && dy == 0) || response[((y + dy) * w + x + dx) as usize] < r
                    })
                });
                if is_max {
                    corners.push((r, x, y));
                }
            }
        }
        corners.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.2, p.1).cmp(&(q.2, q.1))));
        corners.truncate(self.max_keypoints);
        let smooth = gray.smoothed();
        corners
            .into_iter()
            .map(|(_, x, y)| {
                let mut d = [0u64; DESCRIPTOR_BITS / 64];
                for (k, [(ax, ay), (bx, by)]) in self.pairs.iter().enumerate() {
                    if smooth.at(x + ax, y + ay) < smooth.at(x + bx, y + by) {
                        d[k / 64] |= 1 << (k % 64);
                    }
                }
                Keypoint { x, y, descriptor: d }
            })
            .collect()
    }
}

fn hamming(a: &Descriptor, b: &Descriptor) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

impl KeypointDetector for CornerDetector {
    fn similarity(&self, a: &Frame, b: &Frame) -> f64 {
        let da = self.describe(a);
        let db = self.describe(b);
        match (da.len(), db.len()) {
            (0, 0) => return 1.0,
            (0, _) | (_, 0) => return 0.0,
            _ => {}
        }
        let reach = (self.max_displacement * self.working_size as f64).ceil() as i32;
        let mut candidates: Vec<(u32, usize, usize)> = Vec::new();
        for (i, p) in da.iter().enumerate() {
            for (j, q) in db.iter().enumerate() {
                if (p.x - q.x).abs() > reach || (p.y - q.y).abs() > reach {
                    continue;
                }
                let d = hamming(&p.descriptor, &q.descriptor);
                if d <= self.max_hamming {
                    candidates.push((d, i, j));
                }
            }
        }
        candidates.sort_unstable();
        let mut used_a = vec![false; da.len()];
        let mut used_b = vec![false; db.len()];
        let mut matches = 0usize;
        for (_, i, j) in candidates {
            if !used_a[i] && !used_b[j] {
                used_a[i] = true;
                used_b[j] = true;
                matches += 1;
            }
        }
        matches as f64 / da.len().max(db.len()) as f64
    }
}

/// External detector speaking one JSON request per line on stdin
/// (`{"op":"similarity","a":<png>,"b":<png>}`) and one
/// `{"similarity":<float>}` per line on stdout. Frames are passed as PNG
/// files in a private temporary directory.
///
/// Failures are logged and reported as similarity 0.0, i.e. the veto is
/// dropped for that pair.
pub struct SubprocessDetector {
    command: Vec<String>,
    state: Mutex<Option<PluginProcess>>,
    scratch: tempfile::TempDir,
}

struct PluginProcess {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    counter: u64,
}

#[derive(Deserialize)]
struct SimilarityResponse {
    similarity: f64,
}

impl SubprocessDetector {
    pub fn new(command: Vec<String>) -> std::io::Result<Self> {
        if command.is_empty() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "empty plugin command",
            ));
        }
        Ok(Self {
            command,
            state: Mutex::new(None),
            scratch: tempfile::tempdir()?,
        })
    }

    fn spawn(&self) -> std::io::Result<PluginProcess> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        Ok(PluginProcess {
            stdin: child.stdin.take().expect("piped"),
            stdout: BufReader::new(child.stdout.take().expect("piped")),
            child,
            counter: 0,
        })
    }

    fn query(&self, a: &Frame, b: &Frame) -> Result<f64, String> {
        let mut guard = self.state.lock().map_err(|_| "plugin lock poisoned")?;
        if guard.is_none() {
            *guard = Some(self.spawn().map_err(|e| e.to_string())?);
        }
        let proc = guard.as_mut().expect("spawned above");
        proc.counter += 1;
        let pa: PathBuf = self.scratch.path().join(format!("{}_a.png", proc.counter));
        let pb: PathBuf = self.scratch.path().join(format!("{}_b.png", proc.counter));
        std::fs::write(&pa, a.to_png()).map_err(|e| e.to_string())?;
        std::fs::write(&pb, b.to_png()).map_err(|e| e.to_string())?;
        let req = serde_json::json!({"op": "similarity", "a": pa, "b": pb});
        let result = (|| {
            writeln!(proc.stdin, "{req}").map_err(|e| e.to_string())?;
            proc.stdin.flush().map_err(|e| e.to_string())?;
            let mut line = String::new();
            if proc.stdout.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                return Err("plugin closed its output".to_owned());
            }
            let resp: SimilarityResponse =
                serde_json::from_str(line.trim()).map_err(|e| format!("bad response: {e}"))?;
            if !resp.similarity.is_finite() {
                return Err("non-finite similarity".to_owned());
            }
            Ok(resp.similarity.clamp(0.0, 1.0))
        })();
        let _ = std::fs::remove_file(&pa);
        let _ = std::fs::remove_file(&pb);
        if result.is_err() {
            if let Some(mut p) = guard.take() {
                let _ = p.child.kill();
                let _ = p.child.wait();
            }
        }
        result
    }
}

impl KeypointDetector for SubprocessDetector {
    fn similarity(&self, a: &Frame, b: &Frame) -> f64 {
        self.query(a, b).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "keypoint plugin failed; dropping veto for this pair");
            0.0
        })
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        if let Ok(mut g) = self.state.lock() {
            if let Some(mut p) = g.take() {
                let _ = p.child.kill();
                let _ = p.child.wait();
            }
        }
    }
}
