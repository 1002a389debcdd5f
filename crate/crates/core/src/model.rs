//! The renderable model: a density field, an appearance field, the color
//! network and an optional emptiness voxel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, FieldConfig, FieldParams, FieldPlanes, FieldScratch, Mode, ParamKind, PointStencils};
use crate::grid::Grid;
use crate::linalg::gemm;
use crate::masking::{sigmoid, MaskMode};
use crate::render::{alpha, sample_comb, Camera, Image, Mlp, MlpBatch, Ray, RayOutput, RenderConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub field: FieldConfig,
    pub render: RenderConfig,
    pub mlp_hidden: usize,
    /// Standard deviation of the random initial planes.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { field: FieldConfig::default(), render: RenderConfig::default(), mlp_hidden: 32, init_scale: 0.1 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.render.validate()?;
        if self.mlp_hidden == 0 {
            return Err(Error::Config("mlp_hidden must be >= 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Coarse occupancy over the domain box, `res^3` cells indexed `(x, y, z)`
/// with `z` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emptiness {
    pub res: usize,
    pub occupied: Vec<bool>,
}

impl Emptiness {
    pub fn full(res: usize) -> Self {
        Self { res, occupied: vec![true; res * res * res] }
    }

    /// `q` is a normalized point.
    #[inline]
    pub fn is_empty(&self, q: &[f64; 4]) -> bool {
        let n = self.res;
        let cell = |v: f64| ((v * n as f64).floor().max(0.0) as usize).min(n - 1);
        !self.occupied[(cell(q[0]) * n + cell(q[1])) * n + cell(q[2])]
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied.iter().filter(|o| **o).count() as f64 / self.occupied.len().max(1) as f64
    }
}

/// Which part of the model a learnable grid belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Density,
    Appearance,
    Mlp,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Density => "density",
            Group::Appearance => "appearance",
            Group::Mlp => "mlp",
        }
    }
}

/// Gradients (or any other per-parameter quantity) shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub density: FieldParams,
    pub appearance: FieldParams,
    pub mlp: Mlp,
}

fn collect<'a>(d: &'a FieldParams, a: &'a FieldParams, m: &'a Mlp) -> Vec<(Group, ParamKind, &'a Grid)> {
    let mut v: Vec<_> = d.grids().into_iter().map(|(k, g)| (Group::Density, k, g)).collect();
    v.extend(a.grids().into_iter().map(|(k, g)| (Group::Appearance, k, g)));
    v.extend(m.grids().into_iter().map(|g| (Group::Mlp, ParamKind::Mlp, g)));
    v
}

fn collect_mut<'a>(
    d: &'a mut FieldParams,
    a: &'a mut FieldParams,
    m: &'a mut Mlp,
) -> Vec<(Group, ParamKind, &'a mut Grid)> {
    let mut v: Vec<_> = d.grids_mut().into_iter().map(|(k, g)| (Group::Density, k, g)).collect();
    v.extend(a.grids_mut().into_iter().map(|(k, g)| (Group::Appearance, k, g)));
    v.extend(m.grids_mut().into_iter().map(|g| (Group::Mlp, ParamKind::Mlp, g)));
    v
}

impl ModelGrads {
    /// Same order as [`Model::grids`].
    pub fn grids(&self) -> Vec<(Group, ParamKind, &Grid)> {
        collect(&self.density, &self.appearance, &self.mlp)
    }

    pub fn grids_mut(&mut self) -> Vec<(Group, ParamKind, &mut Grid)> {
        collect_mut(&mut self.density, &mut self.appearance, &mut self.mlp)
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for ((_, _, a), (_, _, b)) in self.grids_mut().into_iter().zip(other.grids()) {
            a.add_assign(b);
        }
    }
}

/// Serializable snapshot of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub density: FieldParams,
    pub appearance: FieldParams,
    pub mlp: Mlp,
    pub emptiness: Option<Emptiness>,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub density: Field,
    pub appearance: Field,
    pub mlp: Mlp,
    pub emptiness: Option<Emptiness>,
}

/// Per-chunk gradient accumulators in plane space.
struct Accum {
    dplanes: FieldPlanes,
    aplanes: FieldPlanes,
    dhead: Grid,
    ahead: Grid,
    mlp: Mlp,
    loss: f64,
}

impl Accum {
    fn add(&mut self, o: &Accum) {
        self.dplanes.add_assign(&o.dplanes);
        self.aplanes.add_assign(&o.aplanes);
        self.dhead.add_assign(&o.dhead);
        self.ahead.add_assign(&o.ahead);
        for (a, b) in self.mlp.grids_mut().into_iter().zip(o.mlp.grids()) {
            a.add_assign(b);
        }
        self.loss += o.loss;
    }
}

struct Sample {
    st: PointStencils,
    /// Density feature plus shift.
    x: f64,
    alpha: f64,
    trans: f64,
    /// Row in the color batch, if the color network ran.
    row: Option<usize>,
    dprod: usize,
}

/// Working memory for one chunk of rays.
#[derive(Default)]
struct ChunkScratch {
    dfs: FieldScratch,
    afs: FieldScratch,
    dfeat: [f64; 1],
    samples: Vec<Sample>,
    /// Sample range of each ray.
    spans: Vec<(usize, usize)>,
    /// Sample index of each color row.
    row_sample: Vec<usize>,
    dprod: Vec<f64>,
    aprod: Vec<f64>,
    feats: Vec<f64>,
    batch: MlpBatch,
    grad_rgb: Vec<f64>,
    grad_x: Vec<f64>,
    grad_feat: Vec<f64>,
    grad_aprod: Vec<f64>,
}

/// Rays per independently accumulated chunk. Fixed, so gradient sums do not
/// depend on the thread count.
pub const RAY_CHUNK: usize = 256;

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = &cfg.field;
        let density = FieldParams::init(f, f.den_ranks, 1, cfg.init_scale, &mut rng)?;
        let appearance = FieldParams::init(f, f.app_ranks, f.feature_dim, cfg.init_scale, &mut rng)?;
        let mlp = Mlp::new(f.feature_dim + 3, cfg.mlp_hidden, &mut rng);
        Self::from_parts(cfg, density, appearance, mlp, None)
    }

    pub fn from_parts(
        cfg: ModelConfig,
        density: FieldParams,
        appearance: FieldParams,
        mlp: Mlp,
        emptiness: Option<Emptiness>,
    ) -> Result<Self> {
        cfg.validate()?;
        mlp.validate()?;
        if density.out_dim() != 1 {
            return Err(Error::Shape("density head must have one column".into()));
        }
        if appearance.out_dim() + 3 != mlp.input_dim() {
            return Err(Error::Shape("appearance features do not match the color network".into()));
        }
        let mut m = Self {
            density: Field::new(cfg.field.clone(), density)?,
            appearance: Field::new(cfg.field.clone(), appearance)?,
            cfg,
            mlp,
            emptiness,
        };
        m.refresh()?;
        Ok(m)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: 1,
            config: self.cfg.clone(),
            density: self.density.params.clone(),
            appearance: self.appearance.params.clone(),
            mlp: self.mlp.clone(),
            emptiness: self.emptiness.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.version != 1 {
            return Err(Error::Config(format!("unsupported checkpoint version {}", c.version)));
        }
        Self::from_parts(c.config, c.density, c.appearance, c.mlp, c.emptiness)
    }

    /// Rebuilds the plane caches of both fields where stale.
    pub fn refresh(&mut self) -> Result<()> {
        self.density.reconstruct_planes()?;
        self.appearance.reconstruct_planes()?;
        Ok(())
    }

    pub fn set_mask_mode(&mut self, mode: MaskMode) {
        self.density.set_mask_mode(mode);
        self.appearance.set_mask_mode(mode);
    }

    /// Every learnable grid in a fixed order.
    pub fn grids(&self) -> Vec<(Group, ParamKind, &Grid)> {
        collect(&self.density.params, &self.appearance.params, &self.mlp)
    }

    /// Mutable access to every learnable grid; invalidates the plane caches.
    pub fn grids_mut(&mut self) -> Vec<(Group, ParamKind, &mut Grid)> {
        let (d, a, m) = (&mut self.density, &mut self.appearance, &mut self.mlp);
        collect_mut(d.params_mut(), a.params_mut(), m)
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            density: self.density.params.zeros_like(),
            appearance: self.appearance.params.zeros_like(),
            mlp: self.mlp.zeros_like(),
        }
    }

    /// Learnable scalars excluding mask logits.
    pub fn parameter_count(&self) -> usize {
        self.density.params.coefficient_count()
            + self.appearance.params.coefficient_count()
            + self.mlp.grids().iter().map(|g| g.len()).sum::<usize>()
    }

    #[inline]
    fn normalized(&self, p: [f64; 3], t: f64) -> [f64; 4] {
        let t = match self.cfg.field.mode {
            Mode::Dynamic4d => t,
            Mode::Static3d => self.cfg.field.time_range[0],
        };
        self.cfg.field.normalize([p[0], p[1], p[2], t])
    }

    /// Density at a world point.
    pub fn sigma(&self, p: [f64; 3], t: f64) -> Result<f64> {
        let planes = self.density.planes()?;
        let st = PointStencils::new(&self.cfg.field, self.normalized(p, t));
        let mut fs = FieldScratch::default();
        let mut f = [0.0];
        planes.query(&st, &self.density.params.head, &mut fs, &mut f);
        Ok(softplus(f[0] + self.cfg.field.density_shift))
    }

    /// Forward pass over a chunk of rays. Density is marched per ray, then
    /// appearance features and colors are computed for all contributing
    /// samples at once. With `record`, density products are kept for the
    /// backward pass.
    fn march_chunk(
        &self,
        rays: &[Ray],
        dplanes: &FieldPlanes,
        aplanes: &FieldPlanes,
        s: &mut ChunkScratch,
        record: bool,
    ) -> Vec<RayOutput> {
        let rc = &self.cfg.render;
        let fc = &self.cfg.field;
        let ra = aplanes.total_rank();
        let rd = dplanes.total_rank();
        s.samples.clear();
        s.spans.clear();
        s.row_sample.clear();
        s.dprod.clear();
        s.aprod.clear();
        let mut trans_out = Vec::with_capacity(rays.len());
        for ray in rays {
            let start = s.samples.len();
            let mut trans = 1.0;
            if let Some((a, b)) = ray.clip(fc.bounds_min, fc.bounds_max) {
                let (delta, comb) = sample_comb(a, b, rc.n_samples, 0.5);
                for pos in comb {
                    let q = self.normalized(ray.at(pos), ray.t);
                    if self.emptiness.as_ref().is_some_and(|e| e.is_empty(&q)) {
                        continue;
                    }
                    let st = PointStencils::new(fc, q);
                    dplanes.query(&st, &self.density.params.head, &mut s.dfs, &mut s.dfeat);
                    let x = s.dfeat[0] + fc.density_shift;
                    let al = alpha(softplus(x), delta);
                    let w = trans * al;
                    let mut row = None;
                    if w > rc.weight_eps {
                        row = Some(s.row_sample.len());
                        s.row_sample.push(s.samples.len());
                        let off = s.aprod.len();
                        s.aprod.resize(off + ra, 0.0);
                        aplanes.products(&st, &mut s.afs, &mut s.aprod[off..]);
                    }
                    let dp = s.dprod.len();
                    if record {
                        s.dprod.extend_from_slice(&s.dfs.products[..rd]);
                    }
                    s.samples.push(Sample { st, x, alpha: al, trans, row, dprod: dp });
                    trans *= 1.0 - al;
                    if trans < rc.min_transmittance {
                        break;
                    }
                }
            }
            s.spans.push((start, s.samples.len()));
            trans_out.push(trans);
        }

        // Colors for every contributing sample.
        let rows = s.row_sample.len();
        let fdim = fc.feature_dim;
        s.feats.clear();
        s.feats.resize(rows * fdim, 0.0);
        gemm(rows, ra, fdim, &s.aprod, false, self.appearance.params.head.as_slice(), false, 0.0, &mut s.feats);
        let width = fdim + 3;
        let x = s.batch.input(rows, width);
        let mut ri = 0;
        for (ray, &(a, b)) in rays.iter().zip(&s.spans) {
            for smp in &s.samples[a..b] {
                if smp.row.is_some() {
                    let xr = &mut x[ri * width..(ri + 1) * width];
                    xr[..fdim].copy_from_slice(&s.feats[ri * fdim..(ri + 1) * fdim]);
                    xr[fdim..].copy_from_slice(&ray.dir);
                    ri += 1;
                }
            }
        }
        self.mlp.forward_batch(&mut s.batch);

        rays.iter()
            .zip(&s.spans)
            .zip(trans_out)
            .map(|((_, &(a, b)), trans)| {
                let mut color = [0.0; 3];
                for smp in &s.samples[a..b] {
                    if let Some(r) = smp.row {
                        let w = smp.trans * smp.alpha;
                        let c = s.batch.color(r);
                        for k in 0..3 {
                            color[k] += w * c[k];
                        }
                    }
                }
                for k in 0..3 {
                    color[k] += trans * rc.background[k];
                }
                RayOutput { color, transmittance: trans, opacity: 1.0 - trans }
            })
            .collect()
    }

    /// Renders one ray. Requires fresh plane caches.
    pub fn render_ray(&self, ray: &Ray) -> Result<RayOutput> {
        let (d, a) = (self.density.planes()?, self.appearance.planes()?);
        Ok(self.march_chunk(std::slice::from_ref(ray), d, a, &mut ChunkScratch::default(), false)[0])
    }

    pub fn render_rays(&self, rays: &[Ray]) -> Result<Vec<RayOutput>> {
        let (d, a) = (self.density.planes()?, self.appearance.planes()?);
        Ok(rays
            .par_chunks(RAY_CHUNK)
            .flat_map_iter(|chunk| self.march_chunk(chunk, d, a, &mut ChunkScratch::default(), false))
            .collect())
    }

    pub fn render_image(&self, cam: &Camera, t: f64) -> Result<Image> {
        let rays: Vec<Ray> =
            (0..cam.height).flat_map(|r| (0..cam.width).map(move |c| cam.ray_unchecked(c, r, t))).collect();
        let out = self.render_rays(&rays)?;
        Ok(Image { width: cam.width, height: cam.height, data: out.iter().flat_map(|o| o.color).collect() })
    }

    fn chunk_backward(
        &self,
        rays: &[Ray],
        targets: &[[f64; 3]],
        scale: f64,
        planes: (&FieldPlanes, &FieldPlanes),
        s: &mut ChunkScratch,
        acc: &mut Accum,
    ) {
        let outs = self.march_chunk(rays, planes.0, planes.1, s, true);
        let fc = &self.cfg.field;
        let rd = planes.0.total_rank();
        let ra = planes.1.total_rank();
        let fdim = fc.feature_dim;
        let rows = s.row_sample.len();
        s.grad_rgb.clear();
        s.grad_rgb.resize(rows * 3, 0.0);
        let samples = std::mem::take(&mut s.samples);
        for (((ray, target), out), &(a, b)) in rays.iter().zip(targets).zip(&outs).zip(&s.spans) {
            let mut g = [0.0; 3];
            for k in 0..3 {
                let e = out.color[k] - target[k];
                acc.loss += scale * e * e;
                g[k] = 2.0 * scale * e;
            }
            let delta =
                ray.clip(fc.bounds_min, fc.bounds_max).map_or(0.0, |(a, b)| (b - a) / self.cfg.render.n_samples as f64);
            // u holds the color seen just behind the current sample, normalized
            // by the transmittance there.
            let mut u = self.cfg.render.background;
            for smp in samples[a..b].iter().rev() {
                let (al, tr) = (smp.alpha, smp.trans);
                let c = smp.row.map_or([0.0; 3], |r| s.batch.color(r));
                let dalpha: f64 = (0..3).map(|k| tr * (c[k] - u[k]) * g[k]).sum();
                if let Some(r) = smp.row {
                    let w = tr * al;
                    for k in 0..3 {
                        s.grad_rgb[3 * r + k] = w * g[k];
                    }
                }
                let dx = dalpha * delta * (1.0 - al) * sigmoid(smp.x);
                if dx != 0.0 {
                    s.dfs.products.clear();
                    s.dfs.products.extend_from_slice(&s.dprod[smp.dprod..smp.dprod + rd]);
                    planes.0.query_backward(
                        &smp.st,
                        &self.density.params.head,
                        &[dx],
                        &mut s.dfs,
                        &mut acc.dplanes,
                        &mut acc.dhead,
                    );
                }
                for k in 0..3 {
                    u[k] = al * c[k] + (1.0 - al) * u[k];
                }
            }
        }

        // Color network, appearance head, then appearance planes.
        self.mlp.backward_batch(&mut s.batch, &s.grad_rgb, &mut acc.mlp, &mut s.grad_x);
        let width = fdim + 3;
        s.grad_feat.clear();
        s.grad_feat.extend(s.grad_x.chunks_exact(width).flat_map(|r| r[..fdim].iter().copied()));
        gemm(ra, rows, fdim, &s.aprod, true, &s.grad_feat, false, 1.0, acc.ahead.as_mut_slice());
        s.grad_aprod.clear();
        s.grad_aprod.resize(rows * ra, 0.0);
        let head = self.appearance.params.head.as_slice();
        gemm(rows, fdim, ra, &s.grad_feat, false, head, true, 0.0, &mut s.grad_aprod);
        for (r, &si) in s.row_sample.iter().enumerate() {
            let gp = &s.grad_aprod[r * ra..(r + 1) * ra];
            planes.1.products_backward(&samples[si].st, gp, &mut s.afs, &mut acc.aplanes);
        }
        s.samples = samples;
    }

    /// Mean over rays of the squared color error summed over channels, and
    /// its gradient with respect to every learnable grid.
    pub fn photometric_grad(&self, rays: &[Ray], targets: &[[f64; 3]]) -> Result<(f64, ModelGrads)> {
        if rays.is_empty() {
            return Err(Error::Empty("ray batch".into()));
        }
        if rays.len() != targets.len() {
            return Err(Error::Shape(format!("{} rays vs {} target colors", rays.len(), targets.len())));
        }
        let planes = (self.density.planes()?, self.appearance.planes()?);
        let scale = 1.0 / rays.len() as f64;
        let fc = &self.cfg.field;
        let zero = || Accum {
            dplanes: FieldPlanes::zeros(fc, self.density.params.ranks()),
            aplanes: FieldPlanes::zeros(fc, self.appearance.params.ranks()),
            dhead: self.density.params.head.map(|_| 0.0),
            ahead: self.appearance.params.head.map(|_| 0.0),
            mlp: self.mlp.zeros_like(),
            loss: 0.0,
        };
        let parts: Vec<Accum> = rays
            .par_chunks(RAY_CHUNK)
            .zip(targets.par_chunks(RAY_CHUNK))
            .map(|(rs, ts)| {
                let mut acc = zero();
                self.chunk_backward(rs, ts, scale, planes, &mut ChunkScratch::default(), &mut acc);
                acc
            })
            .collect();
        let mut it = parts.into_iter();
        let mut total = it.next().unwrap();
        for p in it {
            total.add(&p);
        }
        let mut grads = self.zero_grads();
        grads.density.head = total.dhead;
        grads.appearance.head = total.ahead;
        grads.mlp = total.mlp;
        self.density.transforms().backward(&self.density.params, &total.dplanes, self.density.mask_mode(), &mut grads.density)?;
        self.appearance.transforms().backward(
            &self.appearance.params,
            &total.aplanes,
            self.appearance.mask_mode(),
            &mut grads.appearance,
        )?;
        Ok((total.loss, grads))
    }

    /// Occupancy from the maximum density over `n_times` evenly spaced times
    /// at each cell; cells below `tau` are empty, then occupancy is dilated
    /// by one cell.
    pub fn compute_emptiness(&self, res: usize, tau: f64, n_times: usize) -> Result<Emptiness> {
        if res == 0 {
            return Err(Error::Config("emptiness resolution must be >= 1".into()));
        }
        let planes = self.density.planes()?;
        let fc = &self.cfg.field;
        let nt = if fc.mode == Mode::Static3d { 1 } else { n_times.max(1) };
        let raw: Vec<bool> = (0..res * res * res)
            .into_par_iter()
            .map_init(FieldScratch::default, |fs, idx| {
                let (ix, iy, iz) = (idx / (res * res), (idx / res) % res, idx % res);
                let c = |i: usize| (i as f64 + 0.5) / res as f64;
                let mut f = [0.0];
                (0..nt).any(|k| {
                    let t = if nt == 1 { 0.0 } else { k as f64 / (nt - 1) as f64 };
                    let st = PointStencils::new(fc, [c(ix), c(iy), c(iz), t]);
                    planes.query(&st, &self.density.params.head, fs, &mut f);
                    softplus(f[0] + fc.density_shift) >= tau
                })
            })
            .collect();
        let mut occupied = vec![false; raw.len()];
        let r = res as isize;
        for ix in 0..r {
            for iy in 0..r {
                for iz in 0..r {
                    let hit = (-1..=1).any(|dx| {
                        (-1..=1).any(|dy| {
                            (-1..=1).any(|dz| {
                                let (x, y, z) = (ix + dx, iy + dy, iz + dz);
                                (0..r).contains(&x)
                                    && (0..r).contains(&y)
                                    && (0..r).contains(&z)
                                    && raw[((x * r + y) * r + z) as usize]
                            })
                        })
                    });
                    occupied[((ix * r + iy) * r + iz) as usize] = hit;
                }
            }
        }
        Ok(Emptiness { res, occupied })
    }

    /// Copy with every parameter rounded to `f32` and masked-off
    /// coefficients zeroed: exactly what survives compression.
    pub fn compressed_equivalent(&self) -> Result<Model> {
        let mut ck = self.checkpoint();
        for p in [&mut ck.density, &mut ck.appearance] {
            if p.has_masks() {
                for pr in 0..3 {
                    for (ws, ms) in p.spatial[pr].iter_mut().zip(&p.masks.spatial[pr]) {
                        zero_masked(ws, ms);
                    }
                    for (ws, ms) in p.temporal[pr].iter_mut().zip(&p.masks.temporal[pr]) {
                        zero_masked(ws, ms);
                    }
                }
                for m in p.masks.grids_mut() {
                    for v in m.as_mut_slice() {
                        *v = if *v > 0.0 { crate::masking::INIT_LOGIT } else { -crate::masking::INIT_LOGIT };
                    }
                }
            }
        }
        let mut all: Vec<&mut Grid> = Vec::new();
        for p in [&mut ck.density, &mut ck.appearance] {
            all.extend(p.grids_mut().into_iter().filter(|(k, _)| *k != ParamKind::Mask).map(|(_, g)| g));
        }
        all.extend(ck.mlp.grids_mut());
        for g in all {
            for v in g.as_mut_slice() {
                *v = *v as f32 as f64;
            }
        }
        Model::from_checkpoint(ck)
    }
}

fn zero_masked(ws: &mut [Grid], ms: &[Grid]) {
    for (w, m) in ws.iter_mut().zip(ms) {
        for (v, l) in w.as_mut_slice().iter_mut().zip(m.as_slice()) {
            if *l <= 0.0 {
                *v = 0.0;
            }
        }
    }
}
