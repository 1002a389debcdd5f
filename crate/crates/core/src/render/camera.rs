//! Pinhole cameras and ray generation.
//!
//! Cameras look down their local `-Z` axis with `+X` right and `+Y` up.
//! Pixel `(col, row)` is sampled at its center `(col + 0.5, row + 0.5)`, with
//! rows growing downward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
    pub near: f64,
    pub far: f64,
    pub t: f64,
}

impl Ray {
    #[inline]
    pub fn at(&self, s: f64) -> Vec3 {
        [self.origin[0] + s * self.dir[0], self.origin[1] + s * self.dir[1], self.origin[2] + s * self.dir[2]]
    }

    /// Parametric interval inside the box, intersected with `[near, far]`.
    pub fn clip(&self, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
        let (mut a, mut b) = (self.near, self.far);
        for i in 0..3 {
            let d = self.dir[i];
            if d.abs() < 1e-15 {
                if self.origin[i] < lo[i] || self.origin[i] > hi[i] {
                    return None;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo[i] - self.origin[i]) / d, (hi[i] - self.origin[i]) / d);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            a = a.max(t0);
            b = b.min(t1);
        }
        (a < b).then_some((a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Row-major `[[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
    pub intrinsics: [[f64; 3]; 3],
    /// Row-major camera-to-world `[R | t]`.
    pub c2w: [[f64; 4]; 3],
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Camera at `eye` looking at `target`, vertical field of view `fov_y` in
    /// radians, principal point at the image center.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        width: usize,
        height: usize,
        fov_y: f64,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let f = normalize(sub(target, eye));
        let x = cross(f, up);
        if dot(x, x) < 1e-24 {
            return Err(Error::Config("camera up vector is parallel to the view direction".into()));
        }
        let x = normalize(x);
        let y = cross(x, f);
        let z = [-f[0], -f[1], -f[2]];
        let focal = 0.5 * height as f64 / (0.5 * fov_y).tan();
        let cam = Self {
            intrinsics: [[focal, 0.0, 0.5 * width as f64], [0.0, focal, 0.5 * height as f64], [0.0, 0.0, 1.0]],
            c2w: std::array::from_fn(|r| [x[r], y[r], z[r], eye[r]]),
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera image is empty".into()));
        }
        if !(self.near < self.far) || self.near < 0.0 {
            return Err(Error::Config(format!("invalid depth range [{}, {}]", self.near, self.far)));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|r| self.c2w[r][i] * self.c2w[r][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-9 {
                    return Err(Error::Config("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eye(&self) -> Vec3 {
        [self.c2w[0][3], self.c2w[1][3], self.c2w[2][3]]
    }

    /// Ray through the center of pixel `(col, row)` at time `t`.
    pub fn ray(&self, col: usize, row: usize, t: f64) -> Result<Ray> {
        if col >= self.width || row >= self.height {
            return Err(Error::Config(format!(
                "pixel ({col}, {row}) outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(self.ray_unchecked(col, row, t))
    }

    #[inline]
    pub fn ray_unchecked(&self, col: usize, row: usize, t: f64) -> Ray {
        let k = &self.intrinsics;
        let u = (col as f64 + 0.5 - k[0][2]) / k[0][0];
        let v = (row as f64 + 0.5 - k[1][2]) / k[1][1];
        let d = [u, -v, -1.0];
        let r = &self.c2w;
        let world = std::array::from_fn(|i| r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2]);
        Ray { origin: self.eye(), dir: normalize(world), near: self.near, far: self.far, t }
    }
}

/// Rays for the listed `(col, row)` pixels.
pub fn generate_rays(camera: &Camera, pixels: &[(usize, usize)], t: f64) -> Result<Vec<Ray>> {
    pixels.iter().map(|&(c, r)| camera.ray(c, r, t)).collect()
}

/// `count` cameras evenly spaced on a circle of `radius` around the `z`
/// axis, raised by `elevation` radians, all looking at the origin.
pub fn camera_ring(
    count: usize,
    radius: f64,
    elevation: f64,
    width: usize,
    height: usize,
    fov_y: f64,
) -> Result<Vec<Camera>> {
    (0..count)
        .map(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            let eye = [radius * elevation.cos() * phi.cos(), radius * elevation.cos() * phi.sin(), radius * elevation.sin()];
            let reach = 3f64.sqrt() + 0.05;
            Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], width, height, fov_y, (radius - reach).max(0.0), radius + reach)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::look_at([0.0, -4.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 8, 8, 0.6, 1.0, 7.0).unwrap()
    }

    #[test]
    fn principal_ray_points_along_view_axis() {
        let c = Camera { width: 9, height: 9, ..cam() };
        let c = Camera { intrinsics: [[10.0, 0.0, 4.5], [0.0, 10.0, 4.5], [0.0, 0.0, 1.0]], ..c };
        let r = c.ray(4, 4, 0.0).unwrap();
        assert!((r.dir[1] - 1.0).abs() < 1e-12 && r.dir[0].abs() < 1e-12 && r.dir[2].abs() < 1e-12);
        let local: Vec3 = std::array::from_fn(|i| (0..3).map(|k| c.c2w[k][i] * r.dir[k]).sum());
        assert!((local[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_rays_are_symmetric() {
        let c = cam();
        let a = c.ray(0, 0, 0.0).unwrap();
        let b = c.ray(7, 7, 0.0).unwrap();
        let d = c.ray(7, 0, 0.0).unwrap();
        assert!((a.dir[0] + b.dir[0]).abs() < 1e-12 && (a.dir[2] + b.dir[2]).abs() < 1e-12);
        assert!((a.dir[0] + d.dir[0]).abs() < 1e-12 && (a.dir[2] - d.dir[2]).abs() < 1e-12);
        // Top row looks up.
        assert!(a.dir[2] > 0.0);
        for r in [a, b, d] {
            assert!((dot(r.dir, r.dir) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pixel_bounds_and_empty_sets() {
        let c = cam();
        assert!(c.ray(8, 0, 0.0).is_err());
        assert!(generate_rays(&c, &[], 0.0).unwrap().is_empty());
        assert_eq!(generate_rays(&c, &[(1, 2), (3, 4)], 0.5).unwrap().len(), 2);
    }

    #[test]
    fn validation() {
        let mut c = cam();
        c.c2w[0][0] *= 1.1;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.near = 8.0;
        assert!(c.validate().is_err());
        let ring = camera_ring(6, 3.5, 0.3, 16, 16, 0.7).unwrap();
        assert_eq!(ring.len(), 6);
        for c in &ring {
            let r = c.ray(8, 8, 0.0).unwrap();
            // Central ray passes near the origin.
            let closest = r.at(-dot(r.origin, r.dir));
            assert!(dot(closest, closest).sqrt() < 0.2);
        }
    }

    #[test]
    fn clipping() {
        let r = Ray { origin: [0.0, -4.0, 0.0], dir: [0.0, 1.0, 0.0], near: 0.0, far: 10.0, t: 0.0 };
        let (a, b) = r.clip([-1.0; 3], [1.0; 3]).unwrap();
        assert!((a - 3.0).abs() < 1e-12 && (b - 5.0).abs() < 1e-12);
        let miss = Ray { origin: [2.0, -4.0, 0.0], ..r };
        assert!(miss.clip([-1.0; 3], [1.0; 3]).is_none());
        let short = Ray { far: 2.0, ..r };
        assert!(short.clip([-1.0; 3], [1.0; 3]).is_none());
    }
}
