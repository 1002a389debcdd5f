//! The fitting loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::tv::{tv, tv_backward};
use crate::error::{Error, Result};
use crate::field::{Field, FieldConfig, FieldParams, FieldPlanes, Mode, ParamKind, RepKind};
use crate::grid::{resize_linear, Grid};
use crate::masking;
use crate::model::{Emptiness, Model, ModelConfig, ModelGrads};
use crate::render::{psnr, psnr_from_mse, Ray};
use crate::scenes::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsampleStep {
    pub iter: usize,
    pub res: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub lr_planes: f64,
    pub lr_network: f64,
    /// Learning rates reach `lr * lr_decay` at the final iteration.
    pub lr_decay: f64,
    pub lambda_tv_spatial: f64,
    pub lambda_tv_temporal: f64,
    pub lambda_mask: f64,
    /// Apply TV to reconstructed planes instead of coefficient grids.
    pub tv_on_planes: bool,
    /// Spatial resolution changes; the model config holds the starting one.
    pub upsample: Vec<UpsampleStep>,
    /// Iterations at which the emptiness voxel is recomputed.
    pub emptiness_iters: Vec<usize>,
    pub emptiness_res: usize,
    pub emptiness_tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch_rays: 1024,
            lr_planes: 0.02,
            lr_network: 0.001,
            lr_decay: 0.1,
            lambda_tv_spatial: 1e-5,
            lambda_tv_temporal: 2e-5,
            lambda_mask: 0.0,
            tv_on_planes: false,
            upsample: vec![UpsampleStep { iter: 500, res: 32 }, UpsampleStep { iter: 1500, res: 64 }],
            emptiness_iters: vec![1000, 2500],
            emptiness_res: 32,
            emptiness_tau: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, start_res: usize) -> Result<()> {
        if self.batch_rays == 0 {
            return Err(Error::Config("batch_rays must be >= 1".into()));
        }
        let mut res = start_res;
        let mut last = 0;
        for s in &self.upsample {
            if s.res < res || s.res % 2 != 0 {
                return Err(Error::Config(format!("upsample schedule must be even and non-decreasing, got {}", s.res)));
            }
            if s.iter < last {
                return Err(Error::Config("upsample iterations must be non-decreasing".into()));
            }
            res = s.res;
            last = s.iter;
        }
        if self.emptiness_res == 0 {
            return Err(Error::Config("emptiness_res must be >= 1".into()));
        }
        Ok(())
    }

    pub fn lr_scale(&self, iter: usize) -> f64 {
        if self.iterations == 0 {
            return 1.0;
        }
        self.lr_decay.powf(iter as f64 / self.iterations as f64)
    }

    fn lr_for(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::Head | ParamKind::Mlp => self.lr_network,
            _ => self.lr_planes,
        }
    }
}

/// Every term of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub photometric: f64,
    /// Already weighted by the TV lambdas.
    pub tv: f64,
    /// Unweighted mean mask probability.
    pub mask: f64,
}

fn tv_weight(kind: ParamKind, cfg: &TrainConfig) -> Option<f64> {
    match kind {
        ParamKind::SpatialCoeff | ParamKind::Vector => Some(cfg.lambda_tv_spatial),
        ParamKind::TemporalCoeff => Some(cfg.lambda_tv_temporal),
        _ => None,
    }
}

fn field_params_tv(p: &FieldParams, g: &mut FieldParams, cfg: &TrainConfig) -> f64 {
    let mut total = 0.0;
    for ((kind, w), (_, gw)) in p.grids().into_iter().zip(g.grids_mut()) {
        if let Some(l) = tv_weight(kind, cfg) {
            if l != 0.0 {
                total += l * tv(w);
                tv_backward(w, l, gw);
            }
        }
    }
    total
}

fn field_planes_tv(field: &Field, g: &mut FieldParams, cfg: &TrainConfig) -> Result<f64> {
    let planes = field.planes()?;
    let mut pg = FieldPlanes::zeros(&field.cfg, field.params.ranks());
    let mut total = 0.0;
    let lt = match field.cfg.mode {
        Mode::Dynamic4d => cfg.lambda_tv_temporal,
        Mode::Static3d => cfg.lambda_tv_spatial,
    };
    for p in 0..3 {
        for (stack, gstack, l) in [
            (&planes.first[p], &mut pg.first[p], cfg.lambda_tv_spatial),
            (&planes.second[p], &mut pg.second[p], lt),
        ] {
            for r in 0..stack.ranks {
                let plane = stack.rank_plane(r);
                let mut gp = plane.map(|_| 0.0);
                total += l * tv(&plane);
                tv_backward(&plane, l, &mut gp);
                gstack.set_rank(r, &gp);
            }
        }
    }
    field.transforms().backward(&field.params, &pg, field.mask_mode(), g)?;
    Ok(total)
}

/// Photometric loss plus weighted TV and mask losses, and the gradient of
/// the total with respect to every learnable grid.
pub fn total_loss(model: &Model, rays: &[Ray], targets: &[[f64; 3]], cfg: &TrainConfig) -> Result<(LossBreakdown, ModelGrads)> {
    let (photometric, mut grads) = model.photometric_grad(rays, targets)?;
    let mut tv_total = 0.0;
    if cfg.tv_on_planes {
        tv_total += field_planes_tv(&model.density, &mut grads.density, cfg)?;
        tv_total += field_planes_tv(&model.appearance, &mut grads.appearance, cfg)?;
    } else {
        tv_total += field_params_tv(&model.density.params, &mut grads.density, cfg);
        tv_total += field_params_tv(&model.appearance.params, &mut grads.appearance, cfg);
    }
    let masks = [&model.density.params.masks, &model.appearance.params.masks];
    let mask = masking::mask_loss(masks.iter().flat_map(|m| m.grids()));
    if cfg.lambda_mask != 0.0 {
        let count: usize = masks.iter().map(|m| m.entries()).sum();
        for (p, g) in [(&model.density.params, &mut grads.density), (&model.appearance.params, &mut grads.appearance)] {
            for (l, gl) in p.masks.grids().zip(g.masks.grids_mut()) {
                masking::mask_loss_backward(l, gl, cfg.lambda_mask, count);
            }
        }
    }
    let total = photometric + tv_total + cfg.lambda_mask * mask;
    Ok((LossBreakdown { total, photometric, tv: tv_total, mask }, grads))
}

/// Resizes every coefficient and logit grid of `params` to resolution `res`.
pub fn upsample_field_params(params: &FieldParams, cfg: &FieldConfig, res: usize) -> Result<FieldParams> {
    if res < cfg.spatial_res {
        return Err(Error::Config(format!("cannot shrink grids from {} to {res}", cfg.spatial_res)));
    }
    if res % 2 != 0 && cfg.rep != RepKind::Dense {
        return Err(Error::Config(format!("resolution {res} must be even")));
    }
    if res == cfg.spatial_res {
        return Ok(params.clone());
    }
    let shapes_s = cfg.rep.grid_shapes(res, res);
    let (_, tcols) = cfg.second_shape();
    let shapes_t = cfg.rep.grid_shapes(res, tcols);
    let resize = |sets: &[Vec<Vec<Grid>>; 3], shapes: &[(usize, usize)]| -> [Vec<Vec<Grid>>; 3] {
        std::array::from_fn(|p| {
            sets[p]
                .iter()
                .map(|r| r.iter().zip(shapes).map(|(g, &(m, n))| g.resize_bilinear(m, n)).collect())
                .collect()
        })
    };
    let mut out = params.clone();
    out.spatial = resize(&params.spatial, &shapes_s);
    out.temporal = resize(&params.temporal, &shapes_t);
    out.masks.spatial = resize(&params.masks.spatial, &shapes_s);
    out.masks.temporal = resize(&params.masks.temporal, &shapes_t);
    out.vectors = std::array::from_fn(|p| {
        params.vectors[p].iter().map(|v| Grid::from_vec(1, res, resize_linear(v.as_slice(), res)).unwrap()).collect()
    });
    Ok(out)
}

/// Rebuilds `model` at spatial resolution `res`, interpolating every grid.
pub fn upsample_coeffs(model: &Model, res: usize) -> Result<Model> {
    let f = &model.cfg.field;
    let density = upsample_field_params(&model.density.params, f, res)?;
    let appearance = upsample_field_params(&model.appearance.params, f, res)?;
    let mut cfg = model.cfg.clone();
    cfg.field.spatial_res = res;
    let mut m = Model::from_parts(cfg, density, appearance, model.mlp.clone(), model.emptiness.clone())?;
    m.set_mask_mode(model.density.mask_mode());
    m.refresh()?;
    Ok(m)
}

pub fn update_emptiness_voxel(model: &Model, res: usize, tau: f64) -> Result<Emptiness> {
    model.compute_emptiness(res, tau, model.cfg.field.temporal_res)
}

/// One row of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub iter: usize,
    pub loss: f64,
    pub photometric: f64,
    pub tv: f64,
    pub mask: f64,
    /// Of the training batch.
    pub psnr: f64,
    pub sparsity: f64,
    pub lr: f64,
}

pub const CSV_HEADER: &str = "iter,loss,photometric,tv,mask,psnr,sparsity,lr";

impl MetricRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter, self.loss, self.photometric, self.tv, self.mask, self.psnr, self.sparsity, self.lr
        )
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Model plus optimizer state and schedule position.
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    pub iteration: usize,
    pub cfg: TrainConfig,
    rng: ChaCha8Rng,
}

/// Fraction of hard-off gates over both fields.
pub fn model_sparsity(model: &Model) -> f64 {
    masking::sparsity(model.density.params.masks.grids().chain(model.appearance.params.masks.grids()))
}

impl TrainState {
    pub fn new(model_cfg: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate(model_cfg.field.spatial_res)?;
        let model = Model::new(model_cfg, cfg.seed)?;
        let adam = AdamState::new(model.grids().into_iter().map(|(_, _, g)| g));
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD1CE_5EED);
        Ok(Self { model, adam, iteration: 0, cfg, rng })
    }

    fn sample_batch(&mut self, data: &Dataset) -> (Vec<Ray>, Vec<[f64; 3]>) {
        let n = self.cfg.batch_rays;
        let mut rays = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let ti = self.rng.gen_range(0..data.times.len());
            let ci = data.train_cameras[self.rng.gen_range(0..data.train_cameras.len())];
            let cam = &data.cameras[ci];
            let (col, row) = (self.rng.gen_range(0..cam.width), self.rng.gen_range(0..cam.height));
            rays.push(cam.ray_unchecked(col, row, data.times[ti]));
            targets.push(data.image(ti, ci).pixel(col, row));
        }
        (rays, targets)
    }

    fn apply_schedule(&mut self) -> Result<()> {
        let it = self.iteration;
        if let Some(step) = self.cfg.upsample.iter().rev().find(|s| s.iter == it).copied() {
            if step.res != self.model.cfg.field.spatial_res {
                let old: Vec<(usize, usize)> = self.model.grids().iter().map(|(_, _, g)| g.shape()).collect();
                self.model = upsample_coeffs(&self.model, step.res)?;
                for (i, (_, _, g)) in self.model.grids().into_iter().enumerate() {
                    if g.shape() != old[i] {
                        self.adam.reset(i, g);
                    }
                }
            }
        }
        if self.cfg.emptiness_iters.contains(&it) {
            let e = update_emptiness_voxel(&self.model, self.cfg.emptiness_res, self.cfg.emptiness_tau)?;
            self.model.emptiness = Some(e);
        }
        Ok(())
    }

    /// One optimizer step on a fresh batch.
    pub fn step(&mut self, data: &Dataset) -> Result<MetricRow> {
        self.model.refresh()?;
        self.apply_schedule()?;
        let (rays, targets) = self.sample_batch(data);
        let (loss, grads) = total_loss(&self.model, &rays, &targets, &self.cfg)?;
        let scale = self.cfg.lr_scale(self.iteration);
        let lrs: Vec<f64> = self.model.grids().iter().map(|(_, k, _)| scale * self.cfg.lr_for(*k)).collect();
        let labels: Vec<String> = self.model.grids().iter().map(|(g, k, _)| format!("{}/{:?}", g.name(), k)).collect();
        let gs = grads.grids();
        let grad_refs: Vec<&Grid> = gs.iter().map(|(_, _, g)| *g).collect();
        let mut params: Vec<&mut Grid> = self.model.grids_mut().into_iter().map(|(_, _, g)| g).collect();
        adam_step(&mut params, &grad_refs, &lrs, &|i| labels[i].clone(), &mut self.adam)?;
        let row = MetricRow {
            iter: self.iteration,
            loss: loss.total,
            photometric: loss.photometric,
            tv: loss.tv,
            mask: loss.mask,
            psnr: psnr_from_mse(loss.photometric / 3.0),
            sparsity: model_sparsity(&self.model),
            lr: scale * self.cfg.lr_planes,
        };
        self.iteration += 1;
        Ok(row)
    }

    /// Finishes the model for rendering: fresh caches.
    pub fn into_model(mut self) -> Result<Model> {
        self.model.refresh()?;
        Ok(self.model)
    }
}

/// Runs the full schedule. `progress` is called after every iteration.
pub fn fit(
    data: &Dataset,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    mut progress: impl FnMut(&MetricRow),
) -> Result<(TrainState, Vec<MetricRow>)> {
    if data.images.is_empty() || data.train_cameras.is_empty() {
        return Err(Error::Empty("dataset has no training frames".into()));
    }
    let iters = cfg.iterations;
    let mut state = TrainState::new(model_cfg, cfg)?;
    let mut rows = Vec::with_capacity(iters);
    while state.iteration < iters {
        let row = state.step(data)?;
        progress(&row);
        rows.push(row);
    }
    state.model.refresh()?;
    Ok((state, rows))
}

/// Mean PSNR over every frame of the listed cameras.
pub fn evaluate(model: &Model, data: &Dataset, cameras: &[usize]) -> Result<f64> {
    if cameras.is_empty() {
        return Err(Error::Empty("no cameras to evaluate".into()));
    }
    let mut total = 0.0;
    let mut n = 0;
    for (ti, t) in data.times.iter().enumerate() {
        for &ci in cameras {
            let img = model.render_image(&data.cameras[ci], *t)?;
            total += psnr(&img, data.image(ti, ci))?;
            n += 1;
        }
    }
    Ok(total / n as f64)
}
