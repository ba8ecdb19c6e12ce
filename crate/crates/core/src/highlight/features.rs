use ndarray::Array2;

use super::HighlightError;
use crate::media::SampledClip;
use crate::shots::{hist_distance, hsv_histogram, BinLayout};

pub const FEATURE_DIM: usize = 4;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] =
    ["motion_energy", "luma_mean", "luma_variance", "hist_change"];

/// `n x d` matrix of per-position features (one row per sampled frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(x: Array2<f64>) -> Result<Self, HighlightError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(HighlightError::EmptyInput);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HighlightError::NonFiniteInput("feature matrix"));
        }
        Ok(Self(x))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, HighlightError> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(HighlightError::ShapeMismatch("ragged rows".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| HighlightError::ShapeMismatch(e.to_string()))?;
        Self::new(x)
    }

    pub fn positions(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).to_vec()
    }
}

/// Per sample: mean absolute byte difference to the previous sample,
/// luma mean, luma (population) variance, and HSV histogram distance to
/// the previous sample. The first sample has zero motion and change.
pub fn frame_features(clip: &SampledClip) -> Result<FeatureMatrix, HighlightError> {
    if clip.frames.is_empty() {
        return Err(HighlightError::EmptyInput);
    }
    let layout = BinLayout::default();
    let hists: Vec<_> = clip.frames.iter().map(|f| hsv_histogram(f, layout)).collect();
    let mut rows = Vec::with_capacity(clip.frames.len());
    for (i, f) in clip.frames.iter().enumerate() {
        let (motion, change) = if i == 0 {
            (0.0, 0.0)
        } else {
            let prev = &clip.frames[i - 1];
            if !prev.same_dimensions(f) {
                return Err(HighlightError::ShapeMismatch("sampled frames differ in size".into()));
            }
            let total: u64 = prev
                .pixels()
                .iter()
                .zip(f.pixels())
                .map(|(a, b)| u64::from(a.abs_diff(*b)))
                .sum();
            let change = hist_distance(&hists[i - 1], &hists[i])
                .expect("histograms share the default layout");
            (total as f64 / f.pixels().len() as f64, change)
        };
        let n = f.pixel_count() as f64;
        let (sum, sum_sq) = f.luma().fold((0.0, 0.0), |(s, q), l| (s + l, q + l * l));
        let mean = sum / n;
        let variance = (sum_sq / n - mean * mean).max(0.0);
        rows.push(vec![motion, mean, variance, change]);
    }
    FeatureMatrix::from_rows(&rows)
}
