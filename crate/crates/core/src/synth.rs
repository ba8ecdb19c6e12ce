//! Deterministic synthetic footage: scenes of moving two-colour stripes
//! whose colours never share a histogram bin with the neighbouring scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::media::Rational;
use crate::Frame;

/// Stripe period in pixels. Frame widths must be a multiple of it so the
/// colour proportions stay constant while the stripes move.
pub const STRIPE_PERIOD: u32 = 8;

const HUE_BINS: u32 = 16;

/// Frame size, rate and scene seed of the bundled demo clip.
pub const CORPUS_WIDTH: u32 = 48;
pub const CORPUS_HEIGHT: u32 = 32;
pub const CORPUS_RATE: u64 = 25;
pub const CORPUS_SEED: u64 = 2024;
pub const CORPUS_SCENES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub base: [u8; 3],
    pub accent: [u8; 3],
    pub len: u64,
    /// Accent pixels per stripe period, `0..STRIPE_PERIOD`.
    pub accent_width: u32,
    /// Horizontal stripe motion in pixels per frame.
    pub speed: u32,
}

impl Scene {
    pub fn solid(rgb: [u8; 3], len: u64) -> Self {
        Self { base: rgb, accent: rgb, len, accent_width: 0, speed: 0 }
    }
}

/// Fully saturated, full-value colour at the centre of hue bin `bin`
/// (`0..16`).
pub fn hue_bin_color(bin: u32) -> [u8; 3] {
    let h = (f64::from(bin % HUE_BINS) + 0.5) * 360.0 / f64::from(HUE_BINS);
    let x = 1.0 - ((h / 60.0) % 2.0 - 1.0).abs();
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f64| crate::round_half_up(c * 255.0) as u8)
}

pub fn render_scenes(scenes: &[Scene], width: u32, height: u32) -> Vec<Frame> {
    assert!(width % STRIPE_PERIOD == 0, "width must be a multiple of {STRIPE_PERIOD}");
    let mut out = Vec::new();
    for s in scenes {
        for t in 0..s.len {
            let shift = (u64::from(s.speed) * t % u64::from(STRIPE_PERIOD)) as u32;
            let row: Vec<u8> = (0..width)
                .flat_map(|x| if (x + shift) % STRIPE_PERIOD < s.accent_width { s.accent } else { s.base })
                .collect();
            let pixels = row.repeat(height as usize);
            let i = out.len() as u64;
            out.push(Frame::new(i, 0.0, width, height, pixels).expect("geometry is consistent"));
        }
    }
    out
}

/// First frame of every scene after the first.
pub fn scene_boundaries(scenes: &[Scene]) -> Vec<u64> {
    scenes
        .iter()
        .scan(0u64, |at, s| {
            *at += s.len;
            Some(*at)
        })
        .take(scenes.len().saturating_sub(1))
        .collect()
}

/// `count` scenes with lengths in `min_len..=max_len`. Consecutive scenes
/// use disjoint hue bins.
pub fn random_scenes(seed: u64, count: usize, min_len: u64, max_len: u64) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let allowed: Vec<u32> = (0..HUE_BINS).filter(|b| !prev.contains(b)).collect();
        let pick = rand::seq::index::sample(&mut rng, allowed.len(), 2);
        let bins = [allowed[pick.index(0)], allowed[pick.index(1)]];
        out.push(Scene {
            base: hue_bin_color(bins[0]),
            accent: hue_bin_color(bins[1]),
            len: rng.random_range(min_len..=max_len),
            accent_width: rng.random_range(1..STRIPE_PERIOD),
            speed: rng.random_range(0..4),
        });
        prev = bins.to_vec();
    }
    out
}

pub fn corpus_scenes() -> Vec<Scene> {
    random_scenes(CORPUS_SEED, CORPUS_SCENES, 30, 60)
}

pub fn corpus_frames() -> Vec<Frame> {
    render_scenes(&corpus_scenes(), CORPUS_WIDTH, CORPUS_HEIGHT)
}

pub fn corpus_rate() -> Rational {
    Rational::integer(CORPUS_RATE)
}
