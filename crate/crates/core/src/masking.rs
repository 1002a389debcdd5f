//! Trainable binary masks over coefficient grids.
//!
//! The forward value is `H(M) * W` with `H` the unit step. Gradients use the
//! straight-through estimator `binary = sigmoid(M) + sg(H(M) - sigmoid(M))`, so
//! `dL/dW = H(M) dL/dW_hat` and `dL/dM = sigmoid'(M) W dL/dW_hat`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Initial logit; `sigmoid(2) ~ 0.88`, so training starts fully unmasked.
pub const INIT_LOGIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Hard step forward, straight-through backward.
    #[default]
    Hard,
    /// Smooth surrogate `sigmoid(M) * W` in both directions. Used for
    /// finite-difference checks, where the hard step has zero slope.
    Relaxed,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn heaviside(m: f64) -> f64 {
    if m > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn gate(m: f64, mode: MaskMode) -> f64 {
    match mode {
        MaskMode::Hard => heaviside(m),
        MaskMode::Relaxed => sigmoid(m),
    }
}

fn check(w: &Grid, m: &Grid) -> Result<()> {
    if w.shape() != m.shape() {
        return Err(Error::Shape(format!("mask {:?} vs coefficients {:?}", m.shape(), w.shape())));
    }
    Ok(())
}

/// `H(M) * W`.
pub fn apply_mask(w: &Grid, m: &Grid) -> Result<Grid> {
    apply_mask_with(w, m, MaskMode::Hard)
}

pub fn apply_mask_with(w: &Grid, m: &Grid, mode: MaskMode) -> Result<Grid> {
    check(w, m)?;
    let data = w.as_slice().iter().zip(m.as_slice()).map(|(w, m)| gate(*m, mode) * w).collect();
    Grid::from_vec(w.rows(), w.cols(), data)
}

/// Accumulates the gradients of the masked grid into `grad_w` and `grad_m`.
pub fn apply_mask_backward(
    w: &Grid,
    m: &Grid,
    grad_hat: &Grid,
    mode: MaskMode,
    grad_w: &mut Grid,
    grad_m: &mut Grid,
) -> Result<()> {
    check(w, m)?;
    check(w, grad_hat)?;
    let it = w.as_slice().iter().zip(m.as_slice()).zip(grad_hat.as_slice());
    for (((w, m), g), (gw, gm)) in it.zip(grad_w.as_mut_slice().iter_mut().zip(grad_m.as_mut_slice())) {
        let s = sigmoid(*m);
        *gw += gate(*m, mode) * g;
        *gm += s * (1.0 - s) * w * g;
    }
    Ok(())
}

/// Mean of `sigmoid(M)` over every logit entry.
pub fn mask_loss<'a>(logits: impl IntoIterator<Item = &'a Grid>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for g in logits {
        sum += g.as_slice().iter().map(|m| sigmoid(*m)).sum::<f64>();
        count += g.len();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Adds `scale * d(mask_loss)/dM` to each gradient grid. `count` is the total
/// number of entries the loss is averaged over.
pub fn mask_loss_backward(logits: &Grid, grad: &mut Grid, scale: f64, count: usize) {
    let k = scale / count.max(1) as f64;
    for (m, g) in logits.as_slice().iter().zip(grad.as_mut_slice()) {
        let s = sigmoid(*m);
        *g += k * s * (1.0 - s);
    }
}

/// Fraction of entries whose hard gate is 0.
pub fn sparsity<'a>(logits: impl IntoIterator<Item = &'a Grid>) -> f64 {
    let (mut off, mut count) = (0usize, 0usize);
    for g in logits {
        off += g.as_slice().iter().filter(|m| heaviside(**m) == 0.0).count();
        count += g.len();
    }
    if count == 0 {
        0.0
    } else {
        off as f64 / count as f64
    }
}

/// One logit grid per coefficient grid, indexed like the owning field:
/// `[pairing][rank][grid]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskSet {
    pub spatial: [Vec<Vec<Grid>>; 3],
    pub temporal: [Vec<Vec<Grid>>; 3],
}

impl MaskSet {
    /// Masks congruent with the given coefficient grids, filled with `value`.
    pub fn congruent(spatial: &[Vec<Vec<Grid>>; 3], temporal: &[Vec<Vec<Grid>>; 3], value: f64) -> Self {
        let like = |s: &Vec<Vec<Grid>>| -> Vec<Vec<Grid>> {
            s.iter().map(|r| r.iter().map(|g| Grid::filled(g.rows(), g.cols(), value)).collect()).collect()
        };
        Self {
            spatial: std::array::from_fn(|p| like(&spatial[p])),
            temporal: std::array::from_fn(|p| like(&temporal[p])),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.grids().next().is_none()
    }

    pub fn grids(&self) -> impl Iterator<Item = &Grid> {
        self.spatial.iter().chain(&self.temporal).flatten().flatten()
    }

    pub fn grids_mut(&mut self) -> impl Iterator<Item = &mut Grid> {
        self.spatial.iter_mut().chain(&mut self.temporal).flatten().flatten()
    }

    pub fn entries(&self) -> usize {
        self.grids().map(Grid::len).sum()
    }

    /// Checks that every logit grid matches its coefficient grid.
    pub fn check_congruent(&self, spatial: &[Vec<Vec<Grid>>; 3], temporal: &[Vec<Vec<Grid>>; 3]) -> Result<()> {
        let same = |a: &Vec<Vec<Grid>>, b: &Vec<Vec<Grid>>| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.len() == y.len() && x.iter().zip(y).all(|(g, h)| g.shape() == h.shape())
                })
        };
        for p in 0..3 {
            if !same(&self.spatial[p], &spatial[p]) || !same(&self.temporal[p], &temporal[p]) {
                return Err(Error::Shape(format!("mask set is not congruent with pairing {p}")));
            }
        }
        Ok(())
    }
}
