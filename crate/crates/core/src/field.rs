//! Plane-pair factorized fields.
//!
//! A 4D field is a sum over three pairings `(XY, ZT)`, `(XZ, YT)`, `(YZ, XT)`
//! of rank components, each the product of a spatial plane and a
//! spatio-temporal plane sampled at the query point. The concatenated
//! products are mixed into features by the fusion matrix `V^RF`. Static
//! fields replace each spatio-temporal plane with a vector over the
//! remaining spatial axis.
//!
//! Planes are not learned directly. Depending on [`RepKind`] each plane is
//! the inverse DTCWT of 13 coefficient grids, the inverse DWT of 4, or a
//! dense grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dtcwt2d::{DareCoeffs, DtcwtPlan, DwtCoeffs, DwtPlan};
use crate::error::{Error, Result};
use crate::filters::{DualTreeFilterSet, DualTreeId, DwtFilterSet, DwtId, Wavelet};
use crate::grid::Grid;
use crate::masking::{self, MaskMode, MaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "dynamic4d")]
    Dynamic4d,
    #[serde(rename = "static3d")]
    Static3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepKind {
    Dare,
    Dwt,
    Dense,
}

impl std::str::FromStr for RepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dare" | "dtcwt" => Ok(RepKind::Dare),
            "dwt" => Ok(RepKind::Dwt),
            "dense" => Ok(RepKind::Dense),
            _ => Err(Error::Config(format!("unknown representation `{s}`"))),
        }
    }
}

impl RepKind {
    pub fn name(self) -> &'static str {
        match self {
            RepKind::Dare => "dare",
            RepKind::Dwt => "dwt",
            RepKind::Dense => "dense",
        }
    }

    pub fn default_wavelet(self) -> Wavelet {
        match self {
            RepKind::Dwt => Wavelet::Dwt(DwtId::Bior44),
            _ => Wavelet::DualTree(DualTreeId::NearSymA),
        }
    }

    /// Coefficient grids per plane.
    pub fn grids_per_plane(self) -> usize {
        match self {
            RepKind::Dare => DareCoeffs::GRIDS,
            RepKind::Dwt => DwtCoeffs::GRIDS,
            RepKind::Dense => 1,
        }
    }

    /// Coefficient grid shapes for an `m x n` plane.
    pub fn grid_shapes(self, m: usize, n: usize) -> Vec<(usize, usize)> {
        match self {
            RepKind::Dare => {
                let mut v = vec![(m, n)];
                v.extend(std::iter::repeat((m / 2, n / 2)).take(12));
                v
            }
            RepKind::Dwt => vec![(m / 2, n / 2); 4],
            RepKind::Dense => vec![(m, n)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Grid resolution `N` along each spatial axis.
    pub spatial_res: usize,
    /// Grid resolution `T` along time.
    pub temporal_res: usize,
    pub app_ranks: [usize; 3],
    pub den_ranks: [usize; 3],
    pub feature_dim: usize,
    pub mode: Mode,
    pub rep: RepKind,
    /// Defaults to [`RepKind::default_wavelet`].
    pub wavelet: Option<Wavelet>,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    pub time_range: [f64; 2],
    /// Added to the density feature before the softplus.
    pub density_shift: f64,
    /// Train masks over coefficient grids.
    pub masks: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            spatial_res: 64,
            temporal_res: 16,
            app_ranks: [8, 8, 8],
            den_ranks: [4, 4, 4],
            feature_dim: 16,
            mode: Mode::Dynamic4d,
            rep: RepKind::Dare,
            wavelet: None,
            bounds_min: [-1.0; 3],
            bounds_max: [1.0; 3],
            time_range: [0.0, 1.0],
            density_shift: -4.0,
            masks: true,
        }
    }
}

impl FieldConfig {
    pub fn wavelet(&self) -> Wavelet {
        self.wavelet.unwrap_or_else(|| self.rep.default_wavelet())
    }

    pub fn validate(&self) -> Result<()> {
        let even = |v: usize| v >= 2 && v % 2 == 0;
        if self.rep != RepKind::Dense && !even(self.spatial_res) {
            return Err(Error::Config(format!("spatial_res {} must be even and >= 2", self.spatial_res)));
        }
        if self.mode == Mode::Dynamic4d && self.rep != RepKind::Dense && !even(self.temporal_res) {
            return Err(Error::Config(format!("temporal_res {} must be even and >= 2", self.temporal_res)));
        }
        if self.spatial_res < 2 || (self.mode == Mode::Dynamic4d && self.temporal_res < 2) {
            return Err(Error::Config("resolutions must be at least 2".into()));
        }
        if self.app_ranks.iter().chain(&self.den_ranks).any(|r| *r == 0) {
            return Err(Error::Config("ranks must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be >= 1".into()));
        }
        if (0..3).any(|i| self.bounds_max[i] <= self.bounds_min[i]) || self.time_range[1] <= self.time_range[0] {
            return Err(Error::Config("empty domain box or time interval".into()));
        }
        match (self.rep, self.wavelet()) {
            (RepKind::Dare, Wavelet::Dwt(_)) => {
                Err(Error::Config(format!("rep dare needs a dual-tree wavelet, got {}", self.wavelet())))
            }
            (RepKind::Dwt, Wavelet::DualTree(_)) => {
                Err(Error::Config(format!("rep dwt needs a dwt wavelet, got {}", self.wavelet())))
            }
            _ => Ok(()),
        }
    }

    /// Shape of the second plane of each pairing: `N x T`, or `N x 1` for the
    /// static axis vectors.
    pub fn second_shape(&self) -> (usize, usize) {
        match self.mode {
            Mode::Dynamic4d => (self.spatial_res, self.temporal_res),
            Mode::Static3d => (self.spatial_res, 1),
        }
    }

    pub fn spatial_shape(&self) -> (usize, usize) {
        (self.spatial_res, self.spatial_res)
    }

    /// Maps a world point (and time) into `[0,1]` per axis.
    #[inline]
    pub fn normalize(&self, p: [f64; 4]) -> [f64; 4] {
        let mut q = [0.0; 4];
        for i in 0..3 {
            q[i] = (p[i] - self.bounds_min[i]) / (self.bounds_max[i] - self.bounds_min[i]);
        }
        q[3] = (p[3] - self.time_range[0]) / (self.time_range[1] - self.time_range[0]);
        q
    }
}

/// Spatial axes `(u, v)` of each pairing's first plane, and the axis of its
/// second plane (paired with time in dynamic mode).
pub const PAIRINGS: [((usize, usize), usize); 3] = [((0, 1), 2), ((0, 2), 1), ((1, 2), 0)];

/// Inverse transform for planes of one shape.
pub enum PlaneTransform {
    Dare(Box<DtcwtPlan>),
    Dwt(Box<DwtPlan>),
    Dense,
}

impl PlaneTransform {
    pub fn new(rep: RepKind, wavelet: Wavelet, m: usize, n: usize) -> Result<Self> {
        Ok(match (rep, wavelet) {
            (RepKind::Dense, _) => PlaneTransform::Dense,
            (RepKind::Dare, Wavelet::DualTree(id)) => {
                PlaneTransform::Dare(Box::new(DtcwtPlan::new(&DualTreeFilterSet::new(id), m, n)?))
            }
            (RepKind::Dwt, Wavelet::Dwt(id)) => PlaneTransform::Dwt(Box::new(DwtPlan::new(&DwtFilterSet::new(id), m, n)?)),
            _ => return Err(Error::Config(format!("wavelet {wavelet} does not fit rep {}", rep.name()))),
        })
    }

    pub fn inverse(&self, grids: Vec<Grid>) -> Result<Grid> {
        match self {
            PlaneTransform::Dare(p) => p.inverse(&DareCoeffs::from_grids(grids)?),
            PlaneTransform::Dwt(p) => p.inverse(&DwtCoeffs::from_grids(grids)?),
            PlaneTransform::Dense => single(grids),
        }
    }

    pub fn inverse_adjoint(&self, g: &Grid) -> Result<Vec<Grid>> {
        match self {
            PlaneTransform::Dare(p) => Ok(p.inverse_adjoint(g)?.into_grids()),
            PlaneTransform::Dwt(p) => Ok(p.inverse_adjoint(g)?.into_grids()),
            PlaneTransform::Dense => Ok(vec![g.clone()]),
        }
    }

    pub fn forward(&self, plane: &Grid) -> Result<Vec<Grid>> {
        match self {
            PlaneTransform::Dare(p) => Ok(p.forward(plane)?.into_grids()),
            PlaneTransform::Dwt(p) => Ok(p.forward(plane)?.into_grids()),
            PlaneTransform::Dense => Ok(vec![plane.clone()]),
        }
    }
}

fn single(mut grids: Vec<Grid>) -> Result<Grid> {
    if grids.len() != 1 {
        return Err(Error::Shape(format!("dense plane expects one grid, got {}", grids.len())));
    }
    Ok(grids.pop().unwrap())
}

/// Learnable tensors of one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    /// Coefficient grids of the spatial planes, `[pairing][rank][grid]`.
    pub spatial: [Vec<Vec<Grid>>; 3],
    /// Coefficient grids of the spatio-temporal planes (dynamic mode only).
    pub temporal: [Vec<Vec<Grid>>; 3],
    /// Axis vectors `1 x N` (static mode only), `[pairing][rank]`.
    pub vectors: [Vec<Grid>; 3],
    /// Fusion matrix `V^RF`, `(R1 + R2 + R3) x F`.
    pub head: Grid,
    /// Empty when masking is disabled.
    pub masks: MaskSet,
}

/// What a learnable grid is, for learning rates and regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    SpatialCoeff,
    TemporalCoeff,
    Vector,
    Head,
    Mask,
    Mlp,
}

impl FieldParams {
    /// Random initialization: every plane is `scale * N(0,1)` and its
    /// coefficients are the forward transform of that plane, so all
    /// representation kinds start from identical planes.
    pub fn init(cfg: &FieldConfig, ranks: [usize; 3], out_dim: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (n, _) = cfg.spatial_shape();
        let (sm, sn) = cfg.second_shape();
        let tf_s = PlaneTransform::new(cfg.rep, cfg.wavelet(), n, n)?;
        let tf_t = match cfg.mode {
            Mode::Dynamic4d => Some(PlaneTransform::new(cfg.rep, cfg.wavelet(), sm, sn)?),
            Mode::Static3d => None,
        };
        let mut noise = |m: usize, k: usize| Grid::from_fn(m, k, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let mut spatial: [Vec<Vec<Grid>>; 3] = Default::default();
        let mut temporal: [Vec<Vec<Grid>>; 3] = Default::default();
        let mut vectors: [Vec<Grid>; 3] = Default::default();
        for p in 0..3 {
            for _ in 0..ranks[p] {
                spatial[p].push(tf_s.forward(&noise(n, n))?);
                match &tf_t {
                    Some(tf) => temporal[p].push(tf.forward(&noise(sm, sn))?),
                    None => vectors[p].push(noise(1, sm)),
                }
            }
        }
        let rt: usize = ranks.iter().sum();
        let head = if out_dim == 1 {
            Grid::filled(rt, 1, 1.0)
        } else {
            let a = (3.0 / rt as f64).sqrt();
            Grid::from_fn(rt, out_dim, |_, _| rng.gen_range(-a..a))
        };
        let masks = if cfg.masks {
            MaskSet::congruent(&spatial, &temporal, masking::INIT_LOGIT)
        } else {
            MaskSet::default()
        };
        Ok(Self { spatial, temporal, vectors, head, masks })
    }

    pub fn ranks(&self) -> [usize; 3] {
        std::array::from_fn(|p| self.spatial[p].len())
    }

    pub fn out_dim(&self) -> usize {
        self.head.cols()
    }

    pub fn has_masks(&self) -> bool {
        !self.masks.is_empty()
    }

    /// Every learnable grid with its kind, in a fixed order.
    pub fn grids(&self) -> Vec<(ParamKind, &Grid)> {
        let mut v = Vec::new();
        for p in 0..3 {
            v.extend(self.spatial[p].iter().flatten().map(|g| (ParamKind::SpatialCoeff, g)));
            v.extend(self.temporal[p].iter().flatten().map(|g| (ParamKind::TemporalCoeff, g)));
            v.extend(self.vectors[p].iter().map(|g| (ParamKind::Vector, g)));
        }
        v.push((ParamKind::Head, &self.head));
        v.extend(self.masks.grids().map(|g| (ParamKind::Mask, g)));
        v
    }

    pub fn grids_mut(&mut self) -> Vec<(ParamKind, &mut Grid)> {
        let mut v = Vec::new();
        let (spatial, temporal, vectors) = (&mut self.spatial, &mut self.temporal, &mut self.vectors);
        for ((s, t), vec) in spatial.iter_mut().zip(temporal.iter_mut()).zip(vectors.iter_mut()) {
            v.extend(s.iter_mut().flatten().map(|g| (ParamKind::SpatialCoeff, g)));
            v.extend(t.iter_mut().flatten().map(|g| (ParamKind::TemporalCoeff, g)));
            v.extend(vec.iter_mut().map(|g| (ParamKind::Vector, g)));
        }
        v.push((ParamKind::Head, &mut self.head));
        v.extend(self.masks.grids_mut().map(|g| (ParamKind::Mask, g)));
        v
    }

    /// Same structure, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, g) in z.grids_mut() {
            g.fill(0.0);
        }
        z
    }

    /// Learnable scalars excluding masks.
    pub fn coefficient_count(&self) -> usize {
        self.grids().iter().filter(|(k, _)| *k != ParamKind::Mask).map(|(_, g)| g.len()).sum()
    }
}

/// Reconstructed planes for every rank, interleaved `[row][col][rank]` so one
/// bilinear corner reads all ranks contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack {
    pub rows: usize,
    pub cols: usize,
    pub ranks: usize,
    pub data: Vec<f64>,
}

impl PlaneStack {
    pub fn zeros(rows: usize, cols: usize, ranks: usize) -> Self {
        Self { rows, cols, ranks, data: vec![0.0; rows * cols * ranks] }
    }

    pub fn set_rank(&mut self, r: usize, plane: &Grid) {
        debug_assert_eq!(plane.shape(), (self.rows, self.cols));
        for (cell, v) in plane.as_slice().iter().enumerate() {
            self.data[cell * self.ranks + r] = *v;
        }
    }

    pub fn rank_plane(&self, r: usize) -> Grid {
        Grid::from_fn(self.rows, self.cols, |i, j| self.data[(i * self.cols + j) * self.ranks + r])
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &PlaneStack) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// All reconstructed planes of one field, `first[p]` spatial and `second[p]`
/// spatio-temporal (or axis vectors stored as `N x 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPlanes {
    pub first: [PlaneStack; 3],
    pub second: [PlaneStack; 3],
}

impl FieldPlanes {
    pub fn zeros(cfg: &FieldConfig, ranks: [usize; 3]) -> Self {
        let (n, _) = cfg.spatial_shape();
        let (sm, sn) = cfg.second_shape();
        Self {
            first: std::array::from_fn(|p| PlaneStack::zeros(n, n, ranks[p])),
            second: std::array::from_fn(|p| PlaneStack::zeros(sm, sn, ranks[p])),
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.first.iter_mut().chain(self.second.iter_mut()).for_each(|s| s.fill(v));
    }

    pub fn add_assign(&mut self, other: &FieldPlanes) {
        for (a, b) in self.first.iter_mut().chain(self.second.iter_mut()).zip(other.first.iter().chain(&other.second)) {
            a.add_assign(b);
        }
    }
}

/// Bilinear corners of one plane lookup: cell indices and weights.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stencil {
    pub idx: [u32; 4],
    pub w: [f64; 4],
}

impl Stencil {
    /// Align-corners bilinear stencil for normalized `(u, v)`, clamped to `[0,1]`.
    #[inline]
    pub fn new(rows: usize, cols: usize, u: f64, v: f64) -> Self {
        let axis = |x: f64, n: usize| -> (usize, usize, f64) {
            if n <= 1 {
                return (0, 0, 0.0);
            }
            let s = x.clamp(0.0, 1.0) * (n - 1) as f64;
            let i0 = (s.floor() as usize).min(n - 2);
            (i0, i0 + 1, s - i0 as f64)
        };
        let (r0, r1, fr) = axis(u, rows);
        let (c0, c1, fc) = axis(v, cols);
        let at = |r: usize, c: usize| (r * cols + c) as u32;
        Stencil {
            idx: [at(r0, c0), at(r0, c1), at(r1, c0), at(r1, c1)],
            w: [(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc, fr * (1.0 - fc), fr * fc],
        }
    }

    #[inline]
    fn gather(&self, s: &PlaneStack, out: &mut [f64]) {
        let k = s.ranks;
        out[..k].iter_mut().for_each(|v| *v = 0.0);
        for c in 0..4 {
            let w = self.w[c];
            if w == 0.0 {
                continue;
            }
            let base = self.idx[c] as usize * k;
            for (o, v) in out[..k].iter_mut().zip(&s.data[base..base + k]) {
                *o += w * v;
            }
        }
    }

    #[inline]
    fn scatter(&self, s: &mut PlaneStack, g: &[f64]) {
        let k = s.ranks;
        for c in 0..4 {
            let w = self.w[c];
            if w == 0.0 {
                continue;
            }
            let base = self.idx[c] as usize * k;
            for (o, v) in s.data[base..base + k].iter_mut().zip(&g[..k]) {
                *o += w * v;
            }
        }
    }
}

/// Bilinear value of `plane` at normalized `(u, v)`: `u` indexes rows, `v`
/// columns, `0` maps to the first node and `1` to the last. Inputs outside
/// `[0,1]` are clamped.
pub fn sample_plane(plane: &Grid, u: f64, v: f64) -> f64 {
    let s = Stencil::new(plane.rows(), plane.cols(), u, v);
    (0..4).map(|c| s.w[c] * plane.as_slice()[s.idx[c] as usize]).sum()
}

/// Stencils for one query point, shared by every field with the same grids.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointStencils {
    pub first: [Stencil; 3],
    pub second: [Stencil; 3],
}

impl PointStencils {
    /// `q` is the normalized point `(x, y, z, t)`.
    #[inline]
    pub fn new(cfg: &FieldConfig, q: [f64; 4]) -> Self {
        let n = cfg.spatial_res;
        let (sm, sn) = cfg.second_shape();
        let first = std::array::from_fn(|p| {
            let ((a, b), _) = PAIRINGS[p];
            Stencil::new(n, n, q[a], q[b])
        });
        let second = std::array::from_fn(|p| {
            let (_, c) = PAIRINGS[p];
            Stencil::new(sm, sn, q[c], q[3])
        });
        Self { first, second }
    }
}

/// Scratch space for one field evaluation.
#[derive(Debug, Clone, Default)]
pub struct FieldScratch {
    a: Vec<f64>,
    b: Vec<f64>,
    /// Concatenated per-rank products.
    pub products: Vec<f64>,
    grad_p: Vec<f64>,
    grad_a: Vec<f64>,
}

impl FieldPlanes {
    pub fn total_rank(&self) -> usize {
        self.first.iter().map(|s| s.ranks).sum()
    }

    /// Writes the per-rank products `a_r * b_r` of one point into `out`.
    pub fn products(&self, st: &PointStencils, scratch: &mut FieldScratch, out: &mut [f64]) {
        let kmax = self.first.iter().map(|s| s.ranks).max().unwrap_or(0);
        scratch.a.resize(kmax, 0.0);
        scratch.b.resize(kmax, 0.0);
        let mut off = 0;
        for p in 0..3 {
            let k = self.first[p].ranks;
            st.first[p].gather(&self.first[p], &mut scratch.a);
            st.second[p].gather(&self.second[p], &mut scratch.b);
            for r in 0..k {
                out[off + r] = scratch.a[r] * scratch.b[r];
            }
            off += k;
        }
    }

    /// Scatters product gradients `grad_p` of one point into plane gradients.
    pub fn products_backward(
        &self,
        st: &PointStencils,
        grad_p: &[f64],
        scratch: &mut FieldScratch,
        grads: &mut FieldPlanes,
    ) {
        let kmax = self.first.iter().map(|s| s.ranks).max().unwrap_or(0);
        scratch.a.resize(kmax, 0.0);
        scratch.b.resize(kmax, 0.0);
        scratch.grad_a.resize(kmax, 0.0);
        let mut off = 0;
        for p in 0..3 {
            let k = self.first[p].ranks;
            st.first[p].gather(&self.first[p], &mut scratch.a);
            st.second[p].gather(&self.second[p], &mut scratch.b);
            for r in 0..k {
                let g = grad_p[off + r];
                scratch.grad_a[r] = g * scratch.b[r];
                scratch.b[r] = g * scratch.a[r];
            }
            st.first[p].scatter(&mut grads.first[p], &scratch.grad_a);
            st.second[p].scatter(&mut grads.second[p], &scratch.b);
            off += k;
        }
    }

    /// Fills `scratch.products` and writes `features = products^T V`.
    pub fn query(&self, st: &PointStencils, head: &Grid, scratch: &mut FieldScratch, features: &mut [f64]) {
        let mut products = std::mem::take(&mut scratch.products);
        products.resize(self.total_rank(), 0.0);
        self.products(st, scratch, &mut products);
        let f = head.cols();
        features[..f].iter_mut().for_each(|v| *v = 0.0);
        for (r, p) in products.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (o, v) in features[..f].iter_mut().zip(head.row(r)) {
                *o += p * v;
            }
        }
        scratch.products = products;
    }

    /// Backward of [`FieldPlanes::query`]. `scratch.products` must hold the
    /// products of the same point. Accumulates plane and head gradients.
    pub fn query_backward(
        &self,
        st: &PointStencils,
        head: &Grid,
        grad_features: &[f64],
        scratch: &mut FieldScratch,
        grads: &mut FieldPlanes,
        grad_head: &mut Grid,
    ) {
        let rt = self.total_rank();
        let mut grad_p = std::mem::take(&mut scratch.grad_p);
        grad_p.resize(rt, 0.0);
        for r in 0..rt {
            let p = scratch.products[r];
            let hrow = head.row(r);
            let mut s = 0.0;
            for (g, (v, gh)) in grad_features.iter().zip(hrow.iter().zip(grad_head.row_mut(r))) {
                s += v * g;
                *gh += p * g;
            }
            grad_p[r] = s;
        }
        self.products_backward(st, &grad_p, scratch, grads);
        scratch.grad_p = grad_p;
    }
}

/// Inverse transforms for a field configuration.
pub struct FieldTransforms {
    spatial: PlaneTransform,
    temporal: Option<PlaneTransform>,
}

impl FieldTransforms {
    pub fn new(cfg: &FieldConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.spatial_res;
        let temporal = match cfg.mode {
            Mode::Dynamic4d => Some(PlaneTransform::new(cfg.rep, cfg.wavelet(), n, cfg.temporal_res)?),
            Mode::Static3d => None,
        };
        Ok(Self { spatial: PlaneTransform::new(cfg.rep, cfg.wavelet(), n, n)?, temporal })
    }

    /// Forward transform of a spatial plane into its coefficient grids.
    pub fn spatial(&self) -> &PlaneTransform {
        &self.spatial
    }

    pub fn temporal(&self) -> Option<&PlaneTransform> {
        self.temporal.as_ref()
    }

    fn masked(grids: &[Grid], masks: Option<&Vec<Grid>>, mode: MaskMode) -> Result<Vec<Grid>> {
        match masks {
            None => Ok(grids.to_vec()),
            Some(m) => grids.iter().zip(m).map(|(w, m)| masking::apply_mask_with(w, m, mode)).collect(),
        }
    }

    /// Inverse-transforms every (masked) coefficient set into plane stacks.
    pub fn reconstruct(&self, cfg: &FieldConfig, params: &FieldParams, mode: MaskMode) -> Result<FieldPlanes> {
        let ranks = params.ranks();
        let mut planes = FieldPlanes::zeros(cfg, ranks);
        let use_masks = params.has_masks();
        if use_masks {
            params.masks.check_congruent(&params.spatial, &params.temporal)?;
        }
        for p in 0..3 {
            for r in 0..ranks[p] {
                let m = use_masks.then(|| &params.masks.spatial[p][r]);
                let plane = self.spatial.inverse(Self::masked(&params.spatial[p][r], m, mode)?)?;
                if plane.shape() != (planes.first[p].rows, planes.first[p].cols) {
                    return Err(Error::Shape(format!("spatial plane {:?} vs config", plane.shape())));
                }
                planes.first[p].set_rank(r, &plane);
                let second = match &self.temporal {
                    Some(tf) => {
                        let m = use_masks.then(|| &params.masks.temporal[p][r]);
                        tf.inverse(Self::masked(&params.temporal[p][r], m, mode)?)?
                    }
                    None => params.vectors[p][r].transpose(),
                };
                if second.shape() != (planes.second[p].rows, planes.second[p].cols) {
                    return Err(Error::Shape(format!("second plane {:?} vs config", second.shape())));
                }
                planes.second[p].set_rank(r, &second);
            }
        }
        Ok(planes)
    }

    /// Pulls plane gradients back to coefficient, mask and vector gradients.
    pub fn backward(
        &self,
        params: &FieldParams,
        plane_grads: &FieldPlanes,
        mode: MaskMode,
        grads: &mut FieldParams,
    ) -> Result<()> {
        let use_masks = params.has_masks();
        let pull = |tf: &PlaneTransform,
                    g: &Grid,
                    w: &[Grid],
                    m: Option<&Vec<Grid>>,
                    gw: &mut Vec<Grid>,
                    gm: Option<&mut Vec<Grid>>|
         -> Result<()> {
            let gc = tf.inverse_adjoint(g)?;
            match (m, gm) {
                (Some(m), Some(gm)) => {
                    for i in 0..gc.len() {
                        masking::apply_mask_backward(&w[i], &m[i], &gc[i], mode, &mut gw[i], &mut gm[i])?;
                    }
                }
                _ => {
                    for (a, b) in gw.iter_mut().zip(&gc) {
                        a.add_assign(b);
                    }
                }
            }
            Ok(())
        };
        for p in 0..3 {
            for r in 0..params.spatial[p].len() {
                let g = plane_grads.first[p].rank_plane(r);
                let (m, gm) = if use_masks {
                    (Some(&params.masks.spatial[p][r]), Some(&mut grads.masks.spatial[p][r]))
                } else {
                    (None, None)
                };
                pull(&self.spatial, &g, &params.spatial[p][r], m, &mut grads.spatial[p][r], gm)?;
                let g2 = plane_grads.second[p].rank_plane(r);
                match &self.temporal {
                    Some(tf) => {
                        let (m, gm) = if use_masks {
                            (Some(&params.masks.temporal[p][r]), Some(&mut grads.masks.temporal[p][r]))
                        } else {
                            (None, None)
                        };
                        pull(tf, &g2, &params.temporal[p][r], m, &mut grads.temporal[p][r], gm)?;
                    }
                    None => grads.vectors[p][r].add_assign(&g2.transpose()),
                }
            }
        }
        Ok(())
    }
}

/// A field together with its configuration, transforms and plane cache.
pub struct Field {
    pub cfg: FieldConfig,
    pub params: FieldParams,
    transforms: FieldTransforms,
    cache: Option<(u64, FieldPlanes)>,
    version: u64,
    mask_mode: MaskMode,
}

impl Field {
    pub fn new(cfg: FieldConfig, params: FieldParams) -> Result<Self> {
        let transforms = FieldTransforms::new(&cfg)?;
        Ok(Self { cfg, params, transforms, cache: None, version: 0, mask_mode: MaskMode::Hard })
    }

    pub fn set_mask_mode(&mut self, mode: MaskMode) {
        self.mask_mode = mode;
        self.version += 1;
    }

    /// Mutable parameters; invalidates the plane cache.
    pub fn params_mut(&mut self) -> &mut FieldParams {
        self.version += 1;
        &mut self.params
    }

    /// Rebuilds the plane cache if parameters changed since the last call.
    pub fn reconstruct_planes(&mut self) -> Result<&FieldPlanes> {
        let stale = self.cache.as_ref().map_or(true, |(v, _)| *v != self.version);
        if stale {
            let planes = self.transforms.reconstruct(&self.cfg, &self.params, self.mask_mode)?;
            self.cache = Some((self.version, planes));
        }
        Ok(&self.cache.as_ref().unwrap().1)
    }

    /// The cached planes; fails if parameters changed since reconstruction.
    pub fn planes(&self) -> Result<&FieldPlanes> {
        match &self.cache {
            Some((v, p)) if *v == self.version => Ok(p),
            _ => Err(Error::StaleCache),
        }
    }

    /// Features for a batch of `(x, y, z, t)` points.
    pub fn query_dynamic(&self, points: &[[f64; 4]]) -> Result<Vec<Vec<f64>>> {
        if self.cfg.mode != Mode::Dynamic4d {
            return Err(Error::Config("query_dynamic on a static field".into()));
        }
        self.query_points(points.iter().copied())
    }

    /// Features for a batch of `(x, y, z)` points.
    pub fn query_static(&self, points: &[[f64; 3]]) -> Result<Vec<Vec<f64>>> {
        if self.cfg.mode != Mode::Static3d {
            return Err(Error::Config("query_static on a dynamic field".into()));
        }
        self.query_points(points.iter().map(|p| [p[0], p[1], p[2], self.cfg.time_range[0]]))
    }

    fn query_points(&self, points: impl Iterator<Item = [f64; 4]>) -> Result<Vec<Vec<f64>>> {
        let planes = self.planes()?;
        let mut scratch = FieldScratch::default();
        let f = self.params.out_dim();
        Ok(points
            .map(|p| {
                let st = PointStencils::new(&self.cfg, self.cfg.normalize(p));
                let mut out = vec![0.0; f];
                planes.query(&st, &self.params.head, &mut scratch, &mut out);
                out
            })
            .collect())
    }

    /// Gradients of `sum_i <grad_features[i], features(points[i])>` for every
    /// learnable tensor of the field.
    pub fn query_backward(&self, points: &[[f64; 4]], grad_features: &[Vec<f64>]) -> Result<FieldParams> {
        let planes = self.planes()?;
        if points.len() != grad_features.len() {
            return Err(Error::Shape("one feature gradient per point".into()));
        }
        let mut plane_grads = FieldPlanes::zeros(&self.cfg, self.params.ranks());
        let mut grads = self.params.zeros_like();
        let mut scratch = FieldScratch::default();
        let mut tmp = vec![0.0; self.params.out_dim()];
        for (p, g) in points.iter().zip(grad_features) {
            let st = PointStencils::new(&self.cfg, self.cfg.normalize(*p));
            planes.query(&st, &self.params.head, &mut scratch, &mut tmp);
            planes.query_backward(&st, &self.params.head, g, &mut scratch, &mut plane_grads, &mut grads.head);
        }
        self.transforms.backward(&self.params, &plane_grads, self.mask_mode, &mut grads)?;
        Ok(grads)
    }

    pub fn transforms(&self) -> &FieldTransforms {
        &self.transforms
    }

    pub fn mask_mode(&self) -> MaskMode {
        self.mask_mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(rep: RepKind, mode: Mode) -> FieldConfig {
        FieldConfig {
            spatial_res: 8,
            temporal_res: 4,
            app_ranks: [2, 1, 2],
            den_ranks: [1, 1, 1],
            feature_dim: 3,
            mode,
            rep,
            ..FieldConfig::default()
        }
    }

    fn field(rep: RepKind, mode: Mode, seed: u64) -> Field {
        let cfg = small_cfg(rep, mode);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = FieldParams::init(&cfg, cfg.app_ranks, cfg.feature_dim, 0.5, &mut rng).unwrap();
        Field::new(cfg, params).unwrap()
    }

    #[test]
    fn sample_plane_examples() {
        let c = Grid::filled(5, 3, 2.5);
        assert_eq!(sample_plane(&c, 0.37, 0.81), 2.5);
        let g = Grid::from_vec(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(sample_plane(&g, 0.5, 0.5), 0.5);
        let h = Grid::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(sample_plane(&h, 1.2, -0.1), sample_plane(&h, 1.0, 0.0));
        assert_eq!(sample_plane(&h, 1.0, 0.0), 12.0);
        assert_eq!(sample_plane(&h, 1.0, 1.0), 15.0);
    }

    #[test]
    fn all_kinds_start_from_the_same_planes() {
        let planes: Vec<FieldPlanes> = [RepKind::Dense, RepKind::Dare, RepKind::Dwt]
            .into_iter()
            .map(|rep| {
                let mut f = field(rep, Mode::Dynamic4d, 3);
                f.reconstruct_planes().unwrap().clone()
            })
            .collect();
        for p in &planes[1..] {
            for (a, b) in p.first.iter().chain(&p.second).zip(planes[0].first.iter().chain(&planes[0].second)) {
                let err = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9);
            }
        }
    }

    #[test]
    fn zero_coefficients_give_zero_planes() {
        let mut f = field(RepKind::Dare, Mode::Dynamic4d, 1);
        for (_, g) in f.params_mut().grids_mut() {
            g.fill(0.0);
        }
        let planes = f.reconstruct_planes().unwrap();
        assert!(planes.first.iter().chain(&planes.second).all(|s| s.data.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn ones_planes_with_identity_head_give_ones() {
        for mode in [Mode::Dynamic4d, Mode::Static3d] {
            let mut f = field(RepKind::Dense, mode, 2);
            let params = f.params_mut();
            for p in 0..3 {
                params.spatial[p].iter_mut().flatten().for_each(|g| g.fill(1.0));
                params.temporal[p].iter_mut().flatten().for_each(|g| g.fill(1.0));
                params.vectors[p].iter_mut().for_each(|g| g.fill(1.0));
            }
            params.masks = MaskSet::default();
            params.head = Grid::from_fn(5, 3, |r, c| if r == c { 1.0 } else { 0.0 });
            f.reconstruct_planes().unwrap();
            let out = match mode {
                Mode::Dynamic4d => f.query_dynamic(&[[0.1, -0.4, 0.9, 0.3]]).unwrap(),
                Mode::Static3d => f.query_static(&[[0.1, -0.4, 5.0]]).unwrap(),
            };
            assert_eq!(out[0], vec![1.0, 1.0, 1.0]);
            assert!(f.query_dynamic(&[]).map(|v| v.is_empty()).unwrap_or(mode == Mode::Static3d));
        }
    }

    #[test]
    fn mode_mismatch_and_stale_cache_are_errors() {
        let mut f = field(RepKind::Dense, Mode::Dynamic4d, 4);
        assert!(matches!(f.query_dynamic(&[[0.0; 4]]), Err(Error::StaleCache)));
        f.reconstruct_planes().unwrap();
        assert!(f.query_dynamic(&[[0.0; 4]]).is_ok());
        assert!(matches!(f.query_static(&[[0.0; 3]]), Err(Error::Config(_))));
        f.params_mut();
        assert!(matches!(f.query_backward(&[[0.0; 4]], &[vec![1.0; 3]]), Err(Error::StaleCache)));
    }

    /// Rank-1 separable target f(x,y) g(z,t) recovered exactly at grid nodes.
    #[test]
    fn separable_recovery_at_nodes() {
        let fxy = |i: usize, j: usize| (i as f64 * 0.7).sin() + 0.1 * j as f64;
        let gzt = |k: usize, l: usize| 1.0 + (k as f64 - l as f64 * 0.5).cos();
        for rep in [RepKind::Dense, RepKind::Dare, RepKind::Dwt] {
            let cfg = FieldConfig {
                spatial_res: 8,
                temporal_res: 4,
                app_ranks: [1, 1, 1],
                feature_dim: 1,
                rep,
                masks: false,
                ..FieldConfig::default()
            };
            let tf = FieldTransforms::new(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut params = FieldParams::init(&cfg, [1, 1, 1], 1, 0.0, &mut rng).unwrap();
            params.spatial[0][0] = tf.spatial().forward(&Grid::from_fn(8, 8, fxy)).unwrap();
            params.temporal[0][0] = tf.temporal().unwrap().forward(&Grid::from_fn(8, 4, gzt)).unwrap();
            params.head = Grid::from_vec(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
            let mut f = Field::new(cfg, params).unwrap();
            f.reconstruct_planes().unwrap();
            let node = |i: usize, n: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            for i in 0..8 {
                for k in 0..8 {
                    for l in 0..4 {
                        let j = (i + k) % 8;
                        let p = [node(i, 8), node(j, 8), node(k, 8), l as f64 / 3.0];
                        let v = f.query_dynamic(&[p]).unwrap()[0][0];
                        assert!((v - fxy(i, j) * gzt(k, l)).abs() < 1e-9, "{rep:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn features_are_linear_in_the_head() {
        let mut f = field(RepKind::Dare, Mode::Dynamic4d, 5);
        f.reconstruct_planes().unwrap();
        let pts = [[0.2, 0.3, -0.5, 0.7], [-0.9, 0.1, 0.4, 0.2]];
        let base = f.query_dynamic(&pts).unwrap();
        f.params_mut().head.scale(-2.5);
        f.reconstruct_planes().unwrap();
        let scaled = f.query_dynamic(&pts).unwrap();
        for (a, b) in base.iter().flatten().zip(scaled.iter().flatten()) {
            assert!((b + 2.5 * a).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    fn objective(f: &mut Field, pts: &[[f64; 4]], w: &[Vec<f64>]) -> f64 {
        f.reconstruct_planes().unwrap();
        let feats = match f.cfg.mode {
            Mode::Dynamic4d => f.query_dynamic(pts).unwrap(),
            Mode::Static3d => f.query_static(&pts.iter().map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>()).unwrap(),
        };
        feats.iter().flatten().zip(w.iter().flatten()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (rep, mode) in [(RepKind::Dare, Mode::Dynamic4d), (RepKind::Dwt, Mode::Dynamic4d), (RepKind::Dense, Mode::Static3d)] {
            let mut f = field(rep, mode, 6);
            f.set_mask_mode(MaskMode::Relaxed);
            // Spread some logits so mask gradients are non-trivial.
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for g in f.params_mut().masks.grids_mut() {
                for v in g.as_mut_slice() {
                    *v = rng.gen_range(-2.0..2.0);
                }
            }
            let pts: Vec<[f64; 4]> = (0..12)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)])
                .collect();
            let w: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            f.reconstruct_planes().unwrap();
            let grads = f.query_backward(&pts, &w).unwrap();
            let n_grids = f.params.grids().len();
            let mut checked = 0;
            for _ in 0..40 {
                let gi = rng.gen_range(0..n_grids);
                let len = f.params.grids()[gi].1.len();
                let ei = rng.gen_range(0..len);
                let analytic = grads.grids()[gi].1.as_slice()[ei];
                let h = 1e-4;
                let orig = f.params.grids()[gi].1.as_slice()[ei];
                f.params_mut().grids_mut()[gi].1.as_mut_slice()[ei] = orig + h;
                let up = objective(&mut f, &pts, &w);
                f.params_mut().grids_mut()[gi].1.as_mut_slice()[ei] = orig - h;
                let dn = objective(&mut f, &pts, &w);
                f.params_mut().grids_mut()[gi].1.as_mut_slice()[ei] = orig;
                let fd = (up - dn) / (2.0 * h);
                let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
                assert!(rel <= 1e-3 || (fd - analytic).abs() < 1e-9, "{rep:?} grid {gi} entry {ei}: fd {fd} vs {analytic}");
                checked += 1;
            }
            assert_eq!(checked, 40);
        }
    }

    #[test]
    fn hard_masked_coefficients_receive_no_gradient() {
        let mut f = field(RepKind::Dare, Mode::Dynamic4d, 8);
        f.params_mut().masks.spatial[0][0][1].fill(-3.0);
        f.reconstruct_planes().unwrap();
        let grads = f.query_backward(&[[0.1, 0.2, 0.3, 0.4]], &[vec![1.0, -1.0, 0.5]]).unwrap();
        assert!(grads.spatial[0][0][1].as_slice().iter().all(|v| *v == 0.0));
        let zero = f.query_backward(&[[0.1, 0.2, 0.3, 0.4]], &[vec![0.0; 3]]).unwrap();
        assert!(zero.grids().iter().all(|(_, g)| g.as_slice().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn config_validation() {
        let mut c = FieldConfig { spatial_res: 7, ..FieldConfig::default() };
        assert!(c.validate().is_err());
        c.rep = RepKind::Dense;
        assert!(c.validate().is_ok());
        let c = FieldConfig { rep: RepKind::Dwt, wavelet: Some(Wavelet::DualTree(DualTreeId::LeGall)), ..FieldConfig::default() };
        assert!(c.validate().is_err());
        let c = FieldConfig { app_ranks: [0, 1, 1], ..FieldConfig::default() };
        assert!(c.validate().is_err());
    }
}
