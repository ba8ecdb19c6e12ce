//! Non-local aggregation in the embedded-Gaussian form:
//!
//! ```text
//! theta_i = x_i W_theta,  phi_j = x_j W_phi,  g_j = x_j W_g
//! f(x_i, x_j) = exp(theta_i . phi_j),  C_i = sum_j f(x_i, x_j)
//! y_i = (1 / C_i) sum_j f(x_i, x_j) g_j          (+ x_i when residual)
//! ```
//!
//! Each row is a softmax over all positions, evaluated with the row
//! maximum subtracted from the logits.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, HighlightError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonLocalParams {
    /// `d x d'` query embedding.
    pub w_theta: Array2<f64>,
    /// `d x d'` key embedding.
    pub w_phi: Array2<f64>,
    /// `d x d` value transform.
    pub w_g: Array2<f64>,
    #[serde(default)]
    pub residual: bool,
}

impl NonLocalParams {
    /// Identity embeddings and value transform.
    pub fn identity(d: usize) -> Self {
        Self {
            w_theta: Array2::eye(d),
            w_phi: Array2::eye(d),
            w_g: Array2::eye(d),
            residual: false,
        }
    }

    /// Zero embeddings: every position attends uniformly.
    pub fn uniform(d: usize) -> Self {
        Self {
            w_theta: Array2::zeros((d, d)),
            w_phi: Array2::zeros((d, d)),
            w_g: Array2::eye(d),
            residual: false,
        }
    }

    /// Defaults for the four handcrafted features: every transform is the
    /// diagonal that maps each feature's nominal range onto `[0, 1]`
    /// (motion 255, luma 255, luma variance 255^2/4, histogram change 1).
    pub fn default_for_features() -> Self {
        let scale = Array2::from_diag(&Array1::from(vec![
            1.0 / 255.0,
            1.0 / 255.0,
            4.0 / (255.0 * 255.0),
            1.0,
        ]));
        Self {
            w_theta: scale.clone(),
            w_phi: scale.clone(),
            w_g: scale,
            residual: false,
        }
    }

    fn validate(&self, d: usize) -> Result<(), HighlightError> {
        let mismatch = |what: &str, got: (usize, usize)| {
            Err(HighlightError::ShapeMismatch(format!(
                "{what} is {}x{}, features have d = {d}",
                got.0, got.1
            )))
        };
        if self.w_theta.nrows() != d {
            return mismatch("w_theta", self.w_theta.dim());
        }
        if self.w_phi.nrows() != d || self.w_phi.ncols() != self.w_theta.ncols() {
            return mismatch("w_phi", self.w_phi.dim());
        }
        if self.w_g.nrows() != d || (self.residual && self.w_g.ncols() != d) {
            return mismatch("w_g", self.w_g.dim());
        }
        for (name, m) in [("w_theta", &self.w_theta), ("w_phi", &self.w_phi), ("w_g", &self.w_g)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(HighlightError::NonFiniteInput(name));
            }
        }
        Ok(())
    }
}

fn logits(x: &FeatureMatrix, p: &NonLocalParams) -> Result<Array2<f64>, HighlightError> {
    p.validate(x.dim())?;
    let theta = x.view().dot(&p.w_theta);
    let phi = x.view().dot(&p.w_phi);
    let l = theta.dot(&phi.t());
    if l.iter().any(|v| !v.is_finite()) {
        return Err(HighlightError::NonFiniteInput("pairwise logits"));
    }
    Ok(l)
}

fn row_softmax(mut l: Array2<f64>) -> Array2<f64> {
    for mut row in l.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let c = row.sum();
        row.mapv_inplace(|v| v / c);
    }
    l
}

/// The `n x n` matrix of normalized pairwise weights `f(x_i, x_j) / C_i`.
pub fn attention_weights(x: &FeatureMatrix, p: &NonLocalParams) -> Result<Array2<f64>, HighlightError> {
    Ok(row_softmax(logits(x, p)?))
}

/// Aggregates value rows `g` with softmax weights over precomputed logits.
pub fn aggregate_logits(logits: Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    row_softmax(logits).dot(g)
}

pub fn nonlocal_aggregate(x: &FeatureMatrix, p: &NonLocalParams) -> Result<FeatureMatrix, HighlightError> {
    let l = logits(x, p)?;
    let g = x.view().dot(&p.w_g);
    let mut y = aggregate_logits(l, &g);
    if p.residual {
        y += x.view();
    }
    FeatureMatrix::new(y)
}
