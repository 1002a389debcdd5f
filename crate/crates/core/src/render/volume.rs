//! Emission-absorption compositing along a ray.

use serde::{Deserialize, Serialize};

use super::camera::{Ray, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Samples over the part of the ray inside the domain box.
    pub n_samples: usize,
    pub background: [f64; 3],
    /// Samples whose compositing weight is at most this skip the color
    /// network and contribute no color.
    pub weight_eps: f64,
    /// Marching stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Offsets the sample comb by a per-ray random fraction of a step.
    pub jitter: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { n_samples: 64, background: [1.0; 3], weight_eps: 1e-4, min_transmittance: 1e-4, jitter: false }
    }
}

impl RenderConfig {
    /// No weight skipping or early termination, so the rendered color is a
    /// smooth function of every input.
    pub fn exact(n_samples: usize, background: [f64; 3]) -> Self {
        Self { n_samples, background, weight_eps: -1.0, min_transmittance: 0.0, jitter: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOutput {
    pub color: [f64; 3],
    /// Transmittance left after the last sample.
    pub transmittance: f64,
    /// `sum_i T_i alpha_i`.
    pub opacity: f64,
}

/// Midpoint sample positions over the clipped interval and the step length.
/// `offset` in `[0, 1)` shifts the comb; `0.5` gives midpoints.
pub fn sample_comb(a: f64, b: f64, n: usize, offset: f64) -> (f64, impl Iterator<Item = f64>) {
    let delta = (b - a) / n as f64;
    (delta, (0..n).map(move |i| a + (i as f64 + offset) * delta))
}

#[inline]
pub fn alpha(sigma: f64, delta: f64) -> f64 {
    -(-sigma * delta).exp_m1()
}

/// Renders one ray through a field given as two closures: `density(p, t)`
/// and `color(p, t, dir)`. `color` is only evaluated where the compositing
/// weight exceeds `cfg.weight_eps`. `offset` positions samples within steps
/// (`0.5` for midpoints).
pub fn render_ray_with(
    ray: &Ray,
    bounds: (Vec3, Vec3),
    cfg: &RenderConfig,
    offset: f64,
    mut density: impl FnMut(Vec3, f64) -> f64,
    mut color: impl FnMut(Vec3, f64, Vec3) -> [f64; 3],
) -> Result<RayOutput> {
    cfg.validate()?;
    let mut c = [0.0; 3];
    let mut trans = 1.0;
    if let Some((a, b)) = ray.clip(bounds.0, bounds.1) {
        let (delta, samples) = sample_comb(a, b, cfg.n_samples, offset);
        for s in samples {
            let p = ray.at(s);
            let sigma = density(p, ray.t);
            if sigma <= 0.0 {
                continue;
            }
            let al = alpha(sigma, delta);
            let w = trans * al;
            if w > cfg.weight_eps {
                let rgb = color(p, ray.t, ray.dir);
                for k in 0..3 {
                    c[k] += w * rgb[k];
                }
            }
            trans *= 1.0 - al;
            if trans < cfg.min_transmittance {
                break;
            }
        }
    }
    for k in 0..3 {
        c[k] += trans * cfg.background[k];
    }
    Ok(RayOutput { color: c, transmittance: trans, opacity: 1.0 - trans })
}
