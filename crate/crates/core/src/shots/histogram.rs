use serde::{Deserialize, Serialize};

use super::ShotError;
use crate::frame::Frame;

/// Bin counts along hue, saturation and value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinLayout {
    pub hue: usize,
    pub saturation: usize,
    pub value: usize,
}

impl Default for BinLayout {
    fn default() -> Self {
        Self {
            hue: 16,
            saturation: 4,
            value: 4,
        }
    }
}

impl BinLayout {
    pub fn len(&self) -> usize {
        self.hue * self.saturation * self.value
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat bin for an HSV triple (`h` in degrees, `s`/`v` in `[0, 1]`).
    pub fn bin_of(&self, h: f64, s: f64, v: f64) -> usize {
        let q = |x: f64, n: usize| ((x * n as f64).floor() as usize).min(n - 1);
        let hb = q(h / 360.0, self.hue);
        let sb = q(s, self.saturation);
        let vb = q(v, self.value);
        (hb * self.saturation + sb) * self.value + vb
    }
}

/// Normalized HSV colour histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvHistogram {
    layout: BinLayout,
    bins: Vec<f64>,
}

impl HsvHistogram {
    /// Wraps an arbitrary mass vector, normalizing it to sum 1. Returns
    /// `None` for wrong length, negative entries, or zero mass.
    pub fn from_mass(layout: BinLayout, mass: Vec<f64>) -> Option<Self> {
        if mass.len() != layout.len() || mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return None;
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(Self {
            layout,
            bins: mass.into_iter().map(|m| m / total).collect(),
        })
    }

    pub fn layout(&self) -> BinLayout {
        self.layout
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }
}

/// Standard hexcone RGB to HSV: `h` in `[0, 360)`, `s` and `v` in `[0, 1]`.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|c| f64::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

/// One pixel, one bin; mass normalized by pixel count.
pub fn hsv_histogram(frame: &Frame, layout: BinLayout) -> HsvHistogram {
    assert!(
        layout.hue >= 1 && layout.saturation >= 1 && layout.value >= 1,
        "bin layout dimensions must be at least 1"
    );
    let mut counts = vec![0u64; layout.len()];
    for p in frame.pixels().chunks_exact(3) {
        let (h, s, v) = rgb_to_hsv([p[0], p[1], p[2]]);
        counts[layout.bin_of(h, s, v)] += 1;
    }
    let n = frame.pixel_count() as f64;
    HsvHistogram {
        layout,
        bins: counts.into_iter().map(|c| c as f64 / n).collect(),
    }
}

/// Half L1 distance between normalized histograms, in `[0, 1]`.
pub fn hist_distance(a: &HsvHistogram, b: &HsvHistogram) -> Result<f64, ShotError> {
    if a.layout != b.layout {
        return Err(ShotError::BinLayoutMismatch(a.layout, b.layout));
    }
    let l1: f64 = a.bins.iter().zip(&b.bins).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}
