//! Total-variation smoothing of grids.

use crate::grid::Grid;

/// Mean squared difference over all horizontal and vertical neighbor pairs.
pub fn tv(grid: &Grid) -> f64 {
    let (r, c) = grid.shape();
    let pairs = r * c.saturating_sub(1) + r.saturating_sub(1) * c;
    if pairs == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..r {
        for j in 0..c {
            let v = grid.get(i, j);
            if j + 1 < c {
                s += (grid.get(i, j + 1) - v).powi(2);
            }
            if i + 1 < r {
                s += (grid.get(i + 1, j) - v).powi(2);
            }
        }
    }
    s / pairs as f64
}

/// Adds `scale * d tv / d grid` to `grad`.
pub fn tv_backward(grid: &Grid, scale: f64, grad: &mut Grid) {
    let (r, c) = grid.shape();
    let pairs = r * c.saturating_sub(1) + r.saturating_sub(1) * c;
    if pairs == 0 {
        return;
    }
    let k = 2.0 * scale / pairs as f64;
    let g = grad.as_mut_slice();
    for i in 0..r {
        for j in 0..c {
            let v = grid.get(i, j);
            if j + 1 < c {
                let d = k * (grid.get(i, j + 1) - v);
                g[i * c + j + 1] += d;
                g[i * c + j] -= d;
            }
            if i + 1 < r {
                let d = k * (grid.get(i + 1, j) - v);
                g[(i + 1) * c + j] += d;
                g[i * c + j] -= d;
            }
        }
    }
}

/// `lambda_spatial * sum tv(spatial) + lambda_temporal * sum tv(temporal)`.
pub fn tv_loss<'a>(
    spatial: impl IntoIterator<Item = &'a Grid>,
    temporal: impl IntoIterator<Item = &'a Grid>,
    lambda_spatial: f64,
    lambda_temporal: f64,
) -> f64 {
    lambda_spatial * spatial.into_iter().map(tv).sum::<f64>() + lambda_temporal * temporal.into_iter().map(tv).sum::<f64>()
}
