//! Bias-corrected Adam with per-grid step counters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Grid>,
    pub v: Vec<Grid>,
    /// Updates applied to each grid since its moments were last reset.
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Grid>) -> Self {
        let m: Vec<Grid> = params.into_iter().map(|g| g.map(|_| 0.0)).collect();
        Self { beta1: 0.9, beta2: 0.99, eps: 1e-8, v: m.clone(), steps: vec![0; m.len()], m }
    }

    /// Zeroes the moments of grid `i` and reshapes them like `like`.
    pub fn reset(&mut self, i: usize, like: &Grid) {
        self.m[i] = like.map(|_| 0.0);
        self.v[i] = like.map(|_| 0.0);
        self.steps[i] = 0;
    }
}

/// Label of a parameter grid, used in error messages.
pub type Label = String;

/// One Adam update of every grid with its own learning rate. All gradients
/// are checked before anything is modified; a non-finite entry aborts the
/// step.
pub fn adam_step(
    params: &mut [&mut Grid],
    grads: &[&Grid],
    lrs: &[f64],
    labels: &dyn Fn(usize) -> Label,
    state: &mut AdamState,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || lrs.len() != n || state.m.len() != n {
        return Err(Error::Shape(format!(
            "adam: {n} params, {} grads, {} rates, {} moment grids",
            grads.len(),
            lrs.len(),
            state.m.len()
        )));
    }
    for i in 0..n {
        if params[i].shape() != grads[i].shape() || state.m[i].shape() != grads[i].shape() {
            return Err(Error::Shape(format!("adam: grid {} shape mismatch", labels(i))));
        }
        if let Some(j) = grads[i].as_slice().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { group: labels(i), index: j });
        }
    }
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for i in 0..n {
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = lrs[i];
        let (m, v) = (state.m[i].as_mut_slice(), state.v[i].as_mut_slice());
        for (((p, g), m), v) in params[i].as_mut_slice().iter_mut().zip(grads[i].as_slice()).zip(m).zip(v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}
