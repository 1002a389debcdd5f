//! Synthetic ground-truth scenes and dataset generation.
//!
//! Scenes are sums of smooth blobs and an optional translating, striped box
//! with steep edges. Images are rendered from the analytic field with the
//! same compositing code the learned model uses, at a high sample count.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{camera_ring, read_ppm, render_ray_with, write_ppm, Camera, Image, RenderConfig, Vec3};

/// Cubic polynomial per axis: `c(t) = a0 + a1 t + a2 t^2 + a3 t^3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub coeffs: [[f64; 4]; 3],
}

impl Trajectory {
    pub fn fixed(p: Vec3) -> Self {
        Self { coeffs: std::array::from_fn(|i| [p[i], 0.0, 0.0, 0.0]) }
    }

    /// Cubic through `points` at `t = 0, 1/3, 2/3, 1`.
    pub fn through(points: [Vec3; 4]) -> Self {
        // Inverse of the Vandermonde matrix at 0, 1/3, 2/3, 1.
        const INV: [[f64; 4]; 4] = [
            [1.0, 0.0, 0.0, 0.0],
            [-5.5, 9.0, -4.5, 1.0],
            [9.0, -22.5, 18.0, -4.5],
            [-4.5, 13.5, -13.5, 4.5],
        ];
        Self { coeffs: std::array::from_fn(|ax| std::array::from_fn(|k| (0..4).map(|j| INV[k][j] * points[j][ax]).sum())) }
    }

    /// Cubic approximation of a horizontal circular arc around the `z` axis.
    pub fn arc(radius: f64, height: f64, phase: f64, sweep: f64) -> Self {
        Self::through(std::array::from_fn(|j| {
            let a = phase + sweep * j as f64 / 3.0;
            [radius * a.cos(), radius * a.sin(), height]
        }))
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        std::array::from_fn(|i| {
            let a = &self.coeffs[i];
            a[0] + t * (a[1] + t * (a[2] + t * a[3]))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: Trajectory,
    pub radius: f64,
    pub peak: f64,
    pub color: [f64; 3],
}

/// Gaussian falloff cut to exactly zero at three radii, rescaled so the peak
/// is reached at the center. Continuous everywhere.
const CUT: f64 = 9.0;

impl Blob {
    #[inline]
    pub fn density(&self, p: Vec3, t: f64) -> f64 {
        let c = self.center.at(t);
        let d2 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>() / (self.radius * self.radius);
        if d2 >= CUT {
            return 0.0;
        }
        let floor = (-CUT).exp();
        self.peak * ((-d2).exp() - floor) / (1.0 - floor)
    }
}

/// A box translating along `x` with steep but continuous walls, colored by
/// oblique stripes that move with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    /// `x` extent at `t = 0`.
    pub x_range: [f64; 2],
    pub y_half: f64,
    pub z_half: f64,
    /// `x` displacement per unit time.
    pub speed: f64,
    /// Width of the density ramp at each wall.
    pub softness: f64,
    pub peak: f64,
    pub stripe_period: f64,
    /// Stripe normal angle in the `xy` plane, radians from `+x`.
    pub stripe_angle: f64,
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
}

#[inline]
fn ramp(d: f64, width: f64) -> f64 {
    let s = (d / width + 0.5).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

impl EdgeSpec {
    pub fn shift(&self, t: f64) -> f64 {
        self.speed * t
    }

    #[inline]
    pub fn density(&self, p: Vec3, t: f64) -> f64 {
        let x = p[0] - self.shift(t);
        let w = self.softness;
        let f = ramp(x - self.x_range[0], w) * ramp(self.x_range[1] - x, w);
        if f == 0.0 {
            return 0.0;
        }
        self.peak * f * ramp(self.y_half - p[1].abs(), w) * ramp(self.z_half - p[2].abs(), w)
    }

    #[inline]
    pub fn color(&self, p: Vec3, t: f64) -> [f64; 3] {
        let x = p[0] - self.shift(t);
        let phase = (x * self.stripe_angle.cos() + p[1] * self.stripe_angle.sin()) / self.stripe_period;
        let s = 0.5 + 0.5 * (4.0 * (std::f64::consts::TAU * phase).sin()).clamp(-1.0, 1.0);
        std::array::from_fn(|k| self.color_a[k] + s * (self.color_b[k] - self.color_a[k]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRingSpec {
    pub count: usize,
    pub radius: f64,
    /// Radians above the `xy` plane.
    pub elevation: f64,
    /// Vertical field of view, radians.
    pub fov_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub blobs: Vec<Blob>,
    pub edge: Option<EdgeSpec>,
    pub bounds_min: Vec3,
    pub bounds_max: Vec3,
    pub time_range: [f64; 2],
    pub ring: CameraRingSpec,
    pub width: usize,
    pub height: usize,
    /// Frames, evenly spaced over `time_range` including both ends.
    pub n_times: usize,
    pub gt_samples: usize,
    pub background: [f64; 3],
    /// Camera indices held out from training.
    pub test_cameras: Vec<usize>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene `{}`: {m}", self.name)));
        if self.blobs.iter().any(|b| !(b.radius > 0.0)) {
            return bad("blob radii must be positive");
        }
        if self.blobs.iter().any(|b| !(b.peak >= 0.0)) {
            return bad("blob densities must be non-negative");
        }
        let unit = |c: &[f64; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !self.blobs.iter().all(|b| unit(&b.color)) || !unit(&self.background) {
            return bad("colors must lie in [0, 1]");
        }
        if let Some(e) = &self.edge {
            if !(e.peak >= 0.0 && e.softness > 0.0 && e.stripe_period > 0.0) || !unit(&e.color_a) || !unit(&e.color_b) {
                return bad("invalid edge parameters");
            }
        }
        if (0..3).any(|i| self.bounds_max[i] <= self.bounds_min[i]) || self.time_range[1] < self.time_range[0] {
            return bad("empty domain");
        }
        if self.width == 0 || self.height == 0 || self.n_times == 0 || self.ring.count == 0 || self.gt_samples == 0 {
            return bad("image size, frame count, camera count and samples must be positive");
        }
        if self.test_cameras.iter().any(|c| *c >= self.ring.count) {
            return bad("test camera index out of range");
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let [a, b] = self.time_range;
        if self.n_times == 1 {
            return vec![a];
        }
        (0..self.n_times).map(|i| a + (b - a) * i as f64 / (self.n_times - 1) as f64).collect()
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let r = &self.ring;
        camera_ring(r.count, r.radius, r.elevation, self.width, self.height, r.fov_y)
    }

    /// Same scene rendered at a different resolution and frame count.
    pub fn resized(mut self, width: usize, height: usize, n_times: usize) -> Self {
        self.width = width;
        self.height = height;
        self.n_times = n_times;
        self
    }
}

/// Density and color of the analytic field at `p`, time `t`.
pub fn gt_field(spec: &SceneSpec, p: Vec3, t: f64) -> (f64, [f64; 3]) {
    let mut sigma = 0.0;
    let mut rgb = [0.0; 3];
    let mut add = |s: f64, c: [f64; 3]| {
        sigma += s;
        for k in 0..3 {
            rgb[k] += s * c[k];
        }
    };
    for b in &spec.blobs {
        let s = b.density(p, t);
        if s > 0.0 {
            add(s, b.color);
        }
    }
    if let Some(e) = &spec.edge {
        let s = e.density(p, t);
        if s > 0.0 {
            add(s, e.color(p, t));
        }
    }
    if sigma > 0.0 {
        (sigma, rgb.map(|v| v / sigma))
    } else {
        (0.0, [1.0; 3])
    }
}

fn gt_density(spec: &SceneSpec, p: Vec3, t: f64) -> f64 {
    spec.blobs.iter().map(|b| b.density(p, t)).sum::<f64>() + spec.edge.as_ref().map_or(0.0, |e| e.density(p, t))
}

pub const SCENE_NAMES: [&str; 3] = ["orbiting-blobs", "moving-edge", "static-blobs"];

fn base(name: &str) -> SceneSpec {
    SceneSpec {
        name: name.into(),
        blobs: vec![],
        edge: None,
        bounds_min: [-1.0; 3],
        bounds_max: [1.0; 3],
        time_range: [0.0, 1.0],
        ring: CameraRingSpec { count: 8, radius: 3.2, elevation: 0.35, fov_y: 0.75 },
        width: 64,
        height: 64,
        n_times: 8,
        gt_samples: 512,
        background: [1.0; 3],
        test_cameras: vec![3, 7],
    }
}

/// The named scenes.
pub fn default_scenes() -> Vec<SceneSpec> {
    use std::f64::consts::PI;
    let orbiting = SceneSpec {
        blobs: vec![
            Blob { center: Trajectory::arc(0.45, 0.15, 0.0, 0.5 * PI), radius: 0.28, peak: 20.0, color: [0.9, 0.2, 0.15] },
            Blob { center: Trajectory::arc(0.5, -0.2, 2.1, 0.4 * PI), radius: 0.25, peak: 25.0, color: [0.15, 0.8, 0.25] },
            Blob { center: Trajectory::arc(0.35, 0.0, 4.2, -0.6 * PI), radius: 0.3, peak: 15.0, color: [0.2, 0.3, 0.9] },
        ],
        ..base("orbiting-blobs")
    };
    let edge = SceneSpec {
        edge: Some(EdgeSpec {
            x_range: [-0.6, 0.2],
            y_half: 0.45,
            z_half: 0.45,
            speed: 0.4,
            softness: 0.04,
            peak: 30.0,
            stripe_period: 0.3,
            stripe_angle: 0.25 * PI,
            color_a: [0.95, 0.75, 0.1],
            color_b: [0.1, 0.2, 0.6],
        }),
        ..base("moving-edge")
    };
    let fixed = |p: Vec3, r: f64, peak: f64, color: [f64; 3]| Blob { center: Trajectory::fixed(p), radius: r, peak, color };
    let statics = SceneSpec {
        blobs: vec![
            fixed([0.35, 0.2, 0.1], 0.3, 20.0, [0.9, 0.3, 0.2]),
            fixed([-0.3, 0.35, -0.15], 0.25, 25.0, [0.2, 0.8, 0.3]),
            fixed([0.0, -0.4, 0.2], 0.28, 18.0, [0.25, 0.35, 0.9]),
            fixed([-0.2, -0.1, -0.4], 0.22, 30.0, [0.9, 0.85, 0.2]),
        ],
        n_times: 1,
        ..base("static-blobs")
    };
    vec![orbiting, edge, statics]
}

pub fn scene_by_name(name: &str) -> Result<SceneSpec> {
    default_scenes()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scene `{name}` (known: {})", SCENE_NAMES.join(", "))))
}

/// Posed, timestamped images of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scene: SceneSpec,
    pub seed: u64,
    pub cameras: Vec<Camera>,
    pub times: Vec<f64>,
    /// `images[time][camera]`, quantized to 8-bit levels.
    pub images: Vec<Vec<Image>>,
    pub train_cameras: Vec<usize>,
    pub test_cameras: Vec<usize>,
}

pub fn render_gt_image(spec: &SceneSpec, cam: &Camera, t: f64, rng_seed: u64) -> Result<Image> {
    let cfg = RenderConfig::exact(spec.gt_samples, spec.background);
    let bounds = (spec.bounds_min, spec.bounds_max);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut img = Image::filled(cam.width, cam.height, spec.background);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let ray = cam.ray_unchecked(col, row, t);
            let offset = rng.gen::<f64>();
            let out = render_ray_with(
                &ray,
                bounds,
                &cfg,
                offset,
                |p, t| gt_density(spec, p, t),
                |p, t, _| gt_field(spec, p, t).1,
            )?;
            img.set_pixel(col, row, out.color);
        }
    }
    Ok(img.quantized())
}

/// Renders every camera at every frame time. Deterministic per seed and
/// independent of the thread count.
pub fn generate_dataset(spec: &SceneSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let cameras = spec.cameras()?;
    let times = spec.times();
    let jobs: Vec<(usize, usize)> = (0..times.len()).flat_map(|ti| (0..cameras.len()).map(move |ci| (ti, ci))).collect();
    let flat: Vec<Image> = jobs
        .par_iter()
        .map(|&(ti, ci)| {
            let s = seed ^ (((ti as u64) << 32) | ci as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            render_gt_image(spec, &cameras[ci], times[ti], s)
        })
        .collect::<Result<_>>()?;
    let mut it = flat.into_iter();
    let images = times.iter().map(|_| (0..cameras.len()).map(|_| it.next().unwrap()).collect()).collect();
    let test_cameras = spec.test_cameras.clone();
    let train_cameras = (0..cameras.len()).filter(|c| !test_cameras.contains(c)).collect();
    Ok(Dataset { scene: spec.clone(), seed, cameras, times, images, train_cameras, test_cameras })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Frame {
    time_index: usize,
    camera: usize,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    scene: SceneSpec,
    seed: u64,
    cameras: Vec<Camera>,
    times: Vec<f64>,
    train_cameras: Vec<usize>,
    test_cameras: Vec<usize>,
    frames: Vec<Frame>,
}

pub const MANIFEST: &str = "manifest.json";

impl Dataset {
    pub fn image(&self, time_index: usize, camera: usize) -> &Image {
        &self.images[time_index][camera]
    }

    /// Writes `manifest.json` and one PPM per frame into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut frames = Vec::new();
        for (ti, row) in self.images.iter().enumerate() {
            for (ci, img) in row.iter().enumerate() {
                let file = format!("t{ti:03}_c{ci:03}.ppm");
                std::fs::write(dir.join(&file), write_ppm(img))?;
                frames.push(Frame { time_index: ti, camera: ci, file });
            }
        }
        let m = Manifest {
            version: 1,
            scene: self.scene.clone(),
            seed: self.seed,
            cameras: self.cameras.clone(),
            times: self.times.clone(),
            train_cameras: self.train_cameras.clone(),
            test_cameras: self.test_cameras.clone(),
            frames,
        };
        std::fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::Config(format!("cannot read dataset manifest {}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_slice(&bytes)?;
        if m.version != 1 {
            return Err(Error::Config(format!("unsupported manifest version {}", m.version)));
        }
        for c in &m.cameras {
            c.validate()?;
        }
        let mut images: Vec<Vec<Option<Image>>> = vec![vec![None; m.cameras.len()]; m.times.len()];
        for f in &m.frames {
            let slot = images
                .get_mut(f.time_index)
                .and_then(|r| r.get_mut(f.camera))
                .ok_or_else(|| Error::Config(format!("frame {} indexes outside the manifest", f.file)))?;
            let img = read_ppm(&std::fs::read(dir.join(&f.file))?)?;
            let cam = &m.cameras[f.camera];
            if (img.width, img.height) != (cam.width, cam.height) {
                return Err(Error::Shape(format!("frame {} size differs from its camera", f.file)));
            }
            *slot = Some(img);
        }
        let images = images
            .into_iter()
            .map(|r| r.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Config("manifest is missing frames".into()))?;
        Ok(Dataset {
            scene: m.scene,
            seed: m.seed,
            cameras: m.cameras,
            times: m.times,
            images,
            train_cameras: m.train_cameras,
            test_cameras: m.test_cameras,
        })
    }
}
