//! Level-1 2D dual-tree complex wavelet transform and the plain separable DWT.
//!
//! A plane is analysed by four separable real transforms, one for each
//! choice of tree on each axis. Axis 0 runs down the rows, axis 1 along the
//! columns. The three detail subbands of each separable transform are indexed
//! `0 = LH` (lowpass on axis 0, highpass on axis 1), `1 = HL`, `2 = HH`.
//! Detail subbands of the four trees are combined pairwise by orthonormal
//! butterflies into six real and six imaginary oriented grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{DualTreeFilterSet, DwtFilterSet, FilterPair};
use crate::grid::Grid;
use crate::transform1d::Plan1d;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Orientation angles, in degrees, of the six oriented subbands. Angles are
/// measured from the column axis toward the row axis.
pub const ORIENTATIONS: [f64; 6] = [15.0, 45.0, 75.0, -75.0, -45.0, -15.0];

/// For orientation `i`, the orientation it becomes when the plane is transposed.
pub const TRANSPOSE_PARTNER: [usize; 6] = [2, 1, 0, 5, 4, 3];

/// Butterfly output feeding each orientation. Outputs `0..3` are the
/// difference combinations of subband `s`, outputs `3..6` the sums.
const RAW_INDEX: [usize; 6] = [3, 2, 4, 1, 5, 0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DareCoeffs {
    /// Full-resolution lowpass: the four per-tree lowpass subbands, 2x2 interleaved.
    pub approx: Grid,
    pub real_details: [Grid; 6],
    pub imag_details: [Grid; 6],
}

impl DareCoeffs {
    pub const GRIDS: usize = 13;

    pub fn zeros(m: usize, n: usize) -> Result<Self> {
        check_dims(m, n)?;
        let d = || Grid::zeros(m / 2, n / 2);
        Ok(Self {
            approx: Grid::zeros(m, n),
            real_details: std::array::from_fn(|_| d()),
            imag_details: std::array::from_fn(|_| d()),
        })
    }

    pub fn plane_dims(&self) -> (usize, usize) {
        self.approx.shape()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.plane_dims();
        check_dims(m, n)?;
        for g in self.real_details.iter().chain(&self.imag_details) {
            if g.shape() != (m / 2, n / 2) {
                return Err(Error::Shape(format!(
                    "detail grid {:?} does not match plane {m}x{n}",
                    g.shape()
                )));
            }
        }
        Ok(())
    }

    /// Grids in storage order: approx, 6 real, 6 imaginary.
    pub fn grids(&self) -> impl Iterator<Item = &Grid> {
        std::iter::once(&self.approx).chain(&self.real_details).chain(&self.imag_details)
    }

    pub fn into_grids(self) -> Vec<Grid> {
        let mut v = vec![self.approx];
        v.extend(self.real_details);
        v.extend(self.imag_details);
        v
    }

    pub fn from_grids(grids: Vec<Grid>) -> Result<Self> {
        if grids.len() != Self::GRIDS {
            return Err(Error::Shape(format!("expected 13 grids, got {}", grids.len())));
        }
        let mut it = grids.into_iter();
        let approx = it.next().unwrap();
        let real_details = std::array::from_fn(|_| it.next().unwrap());
        let imag_details = std::array::from_fn(|_| it.next().unwrap());
        let c = Self { approx, real_details, imag_details };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwtCoeffs {
    pub approx: Grid,
    /// LH, HL, HH.
    pub details: [Grid; 3],
}

impl DwtCoeffs {
    pub const GRIDS: usize = 4;

    pub fn zeros(m: usize, n: usize) -> Result<Self> {
        check_dims(m, n)?;
        Ok(Self {
            approx: Grid::zeros(m / 2, n / 2),
            details: std::array::from_fn(|_| Grid::zeros(m / 2, n / 2)),
        })
    }

    pub fn plane_dims(&self) -> (usize, usize) {
        (2 * self.approx.rows(), 2 * self.approx.cols())
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.approx.shape();
        if s.0 == 0 || s.1 == 0 || self.details.iter().any(|g| g.shape() != s) {
            return Err(Error::Shape("dwt subbands must share one non-empty shape".into()));
        }
        Ok(())
    }

    pub fn into_grids(self) -> Vec<Grid> {
        let mut v = vec![self.approx];
        v.extend(self.details);
        v
    }

    pub fn from_grids(grids: Vec<Grid>) -> Result<Self> {
        if grids.len() != Self::GRIDS {
            return Err(Error::Shape(format!("expected 4 grids, got {}", grids.len())));
        }
        let mut it = grids.into_iter();
        let approx = it.next().unwrap();
        let details = std::array::from_fn(|_| it.next().unwrap());
        let c = Self { approx, details };
        c.validate()?;
        Ok(c)
    }
}

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 || m % 2 != 0 {
        return Err(Error::OddLength(m));
    }
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddLength(n));
    }
    Ok(())
}

/// Separable single-level transform with one 1D plan per axis.
struct Separable {
    p0: Plan1d,
    p1: Plan1d,
    m: usize,
    n: usize,
}

/// `[LL, LH, HL, HH]`, each `m/2 x n/2`.
type Bands = [Grid; 4];

impl Separable {
    fn new(pair0: &FilterPair, pair1: &FilterPair, m: usize, n: usize) -> Result<Self> {
        Ok(Self { p0: Plan1d::new(pair0, m)?, p1: Plan1d::new(pair1, n)?, m, n })
    }

    fn analyze(&self, x: &Grid) -> Bands {
        let (m, hm, hn) = (self.m, self.m / 2, self.n / 2);
        let mut ext = Vec::new();
        // Axis 1: split every row into low/high halves.
        let mut lo1 = Grid::zeros(m, hn);
        let mut hi1 = Grid::zeros(m, hn);
        for r in 0..m {
            self.p1.analyze(x.row(r), lo1.row_mut(r), hi1.row_mut(r), &mut ext);
        }
        // Axis 0: columns of each half.
        let mut out: Bands = std::array::from_fn(|_| Grid::zeros(hm, hn));
        let mut col = vec![0.0; m];
        let mut a = vec![0.0; hm];
        let mut d = vec![0.0; hm];
        for (half, (lo_band, hi_band)) in [(&lo1, (0, 2)), (&hi1, (1, 3))] {
            for c in 0..hn {
                for r in 0..m {
                    col[r] = half.get(r, c);
                }
                self.p0.analyze(&col, &mut a, &mut d, &mut ext);
                for k in 0..hm {
                    out[lo_band].set(k, c, a[k]);
                    out[hi_band].set(k, c, d[k]);
                }
            }
        }
        out
    }

    fn analyze_adjoint(&self, g: &Bands) -> Grid {
        let (m, n, hm, hn) = (self.m, self.n, self.m / 2, self.n / 2);
        let mut ext = Vec::new();
        let mut lo1 = Grid::zeros(m, hn);
        let mut hi1 = Grid::zeros(m, hn);
        let mut col = vec![0.0; m];
        let mut a = vec![0.0; hm];
        let mut d = vec![0.0; hm];
        for (half, (lo_band, hi_band)) in [(&mut lo1, (0, 2)), (&mut hi1, (1, 3))] {
            for c in 0..hn {
                for k in 0..hm {
                    a[k] = g[lo_band].get(k, c);
                    d[k] = g[hi_band].get(k, c);
                }
                col.iter_mut().for_each(|v| *v = 0.0);
                self.p0.analyze_adjoint(&a, &d, &mut col, &mut ext);
                for r in 0..m {
                    half.set(r, c, col[r]);
                }
            }
        }
        let mut x = Grid::zeros(m, n);
        for r in 0..m {
            self.p1.analyze_adjoint(lo1.row(r), hi1.row(r), x.row_mut(r), &mut ext);
        }
        x
    }

    fn synthesize(&self, b: [&Grid; 4]) -> Grid {
        let (m, n, hm, hn) = (self.m, self.n, self.m / 2, self.n / 2);
        let mut ext = Vec::new();
        let mut lo1 = Grid::zeros(m, hn);
        let mut hi1 = Grid::zeros(m, hn);
        let mut col = vec![0.0; m];
        let mut a = vec![0.0; hm];
        let mut d = vec![0.0; hm];
        for (half, (lo_band, hi_band)) in [(&mut lo1, (0, 2)), (&mut hi1, (1, 3))] {
            for c in 0..hn {
                for k in 0..hm {
                    a[k] = b[lo_band].get(k, c);
                    d[k] = b[hi_band].get(k, c);
                }
                self.p0.synthesize(&a, &d, &mut col, &mut ext);
                for r in 0..m {
                    half.set(r, c, col[r]);
                }
            }
        }
        let mut x = Grid::zeros(m, n);
        for r in 0..m {
            self.p1.synthesize(lo1.row(r), hi1.row(r), x.row_mut(r), &mut ext);
        }
        x
    }

    fn synthesize_adjoint(&self, g: &Grid) -> Bands {
        let (m, hm, hn) = (self.m, self.m / 2, self.n / 2);
        let mut ext = Vec::new();
        let mut lo1 = Grid::zeros(m, hn);
        let mut hi1 = Grid::zeros(m, hn);
        for r in 0..m {
            self.p1.synthesize_adjoint(g.row(r), lo1.row_mut(r), hi1.row_mut(r), &mut ext);
        }
        let mut out: Bands = std::array::from_fn(|_| Grid::zeros(hm, hn));
        let mut col = vec![0.0; m];
        let mut a = vec![0.0; hm];
        let mut d = vec![0.0; hm];
        for (half, (lo_band, hi_band)) in [(&lo1, (0, 2)), (&hi1, (1, 3))] {
            for c in 0..hn {
                for r in 0..m {
                    col[r] = half.get(r, c);
                }
                a.iter_mut().chain(d.iter_mut()).for_each(|v| *v = 0.0);
                self.p0.synthesize_adjoint(&col, &mut a, &mut d, &mut ext);
                for k in 0..hm {
                    out[lo_band].set(k, c, a[k]);
                    out[hi_band].set(k, c, d[k]);
                }
            }
        }
        out
    }
}

/// Per-tree separable transforms, keyed by `(tree on axis 0, tree on axis 1)`.
/// Tree index 0 is the real tree `h`, 1 the imaginary tree `g`.
pub struct DtcwtPlan {
    analysis: [Separable; 4],
    synthesis: [Separable; 4],
    m: usize,
    n: usize,
}

const TREES: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

impl DtcwtPlan {
    pub fn new(set: &DualTreeFilterSet, m: usize, n: usize) -> Result<Self> {
        check_dims(m, n)?;
        let build = |syn: bool| -> Result<[Separable; 4]> {
            let mk = |(t0, t1): (usize, usize)| {
                let pick = |t: usize| if syn { set.tree(t).1 } else { set.tree(t).0 };
                Separable::new(pick(t0), pick(t1), m, n)
            };
            Ok([mk(TREES[0])?, mk(TREES[1])?, mk(TREES[2])?, mk(TREES[3])?])
        };
        Ok(Self { analysis: build(false)?, synthesis: build(true)?, m, n })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn check_plane(&self, x: &Grid) -> Result<()> {
        if x.shape() != (self.m, self.n) {
            return Err(Error::Shape(format!("plane {:?} but plan is {}x{}", x.shape(), self.m, self.n)));
        }
        Ok(())
    }

    fn check_coeffs(&self, c: &DareCoeffs) -> Result<()> {
        c.validate()?;
        if c.plane_dims() != (self.m, self.n) {
            return Err(Error::Shape(format!("coefficients for {:?} but plan is {}x{}", c.plane_dims(), self.m, self.n)));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Grid) -> Result<DareCoeffs> {
        self.check_plane(x)?;
        let mut bands: [Bands; 4] = std::array::from_fn(|i| self.analysis[i].analyze(x));
        for b in bands.iter_mut().flatten() {
            b.scale(0.5);
        }
        Ok(pack(bands, self.m, self.n))
    }

    pub fn inverse(&self, c: &DareCoeffs) -> Result<Grid> {
        self.check_coeffs(c)?;
        let bands = unpack(c);
        let mut x = Grid::zeros(self.m, self.n);
        for (sep, b) in self.synthesis.iter().zip(&bands) {
            x.axpy(0.5, &sep.synthesize([&b[0], &b[1], &b[2], &b[3]]));
        }
        Ok(x)
    }

    /// Transpose of [`DtcwtPlan::inverse`].
    pub fn inverse_adjoint(&self, g: &Grid) -> Result<DareCoeffs> {
        self.check_plane(g)?;
        let mut bands: [Bands; 4] = std::array::from_fn(|i| self.synthesis[i].synthesize_adjoint(g));
        for b in bands.iter_mut().flatten() {
            b.scale(0.5);
        }
        // Unpacking is orthonormal, so its transpose is packing.
        Ok(pack(bands, self.m, self.n))
    }

    /// Transpose of [`DtcwtPlan::forward`].
    pub fn forward_adjoint(&self, c: &DareCoeffs) -> Result<Grid> {
        self.check_coeffs(c)?;
        let bands = unpack(c);
        let mut x = Grid::zeros(self.m, self.n);
        for (sep, b) in self.analysis.iter().zip(&bands) {
            x.axpy(0.5, &sep.analyze_adjoint(b));
        }
        Ok(x)
    }
}

/// Per-tree bands (in [`TREES`] order) to packed coefficients.
fn pack(bands: [Bands; 4], m: usize, n: usize) -> DareCoeffs {
    let mut approx = Grid::zeros(m, n);
    for (b, (p, q)) in bands.iter().zip(TREES) {
        approx.interleave_into(&b[0], p, q);
    }
    let [t00, t01, t10, t11] = &bands;
    let mut raw_re: [Option<Grid>; 6] = Default::default();
    let mut raw_im: [Option<Grid>; 6] = Default::default();
    for s in 0..3 {
        raw_re[s] = Some(combine(&t00[s + 1], &t11[s + 1], -1.0));
        raw_re[s + 3] = Some(combine(&t00[s + 1], &t11[s + 1], 1.0));
        raw_im[s] = Some(combine(&t01[s + 1], &t10[s + 1], 1.0));
        raw_im[s + 3] = Some(combine(&t01[s + 1], &t10[s + 1], -1.0));
    }
    DareCoeffs {
        approx,
        real_details: std::array::from_fn(|o| raw_re[RAW_INDEX[o]].take().unwrap()),
        imag_details: std::array::from_fn(|o| raw_im[RAW_INDEX[o]].take().unwrap()),
    }
}

/// Packed coefficients to per-tree bands (`[LL, LH, HL, HH]` for each tree).
fn unpack(c: &DareCoeffs) -> [Bands; 4] {
    let mut re: [&Grid; 6] = [&c.approx; 6];
    let mut im: [&Grid; 6] = [&c.approx; 6];
    for o in 0..6 {
        re[RAW_INDEX[o]] = &c.real_details[o];
        im[RAW_INDEX[o]] = &c.imag_details[o];
    }
    let mut trees: [Vec<Grid>; 4] = std::array::from_fn(|i| vec![c.approx.decimate(TREES[i].0, TREES[i].1)]);
    for s in 0..3 {
        let (r1, r2, i1, i2) = (re[s], re[s + 3], im[s], im[s + 3]);
        trees[0].push(combine(r2, r1, 1.0));
        trees[1].push(combine(i1, i2, 1.0));
        trees[2].push(combine(i1, i2, -1.0));
        trees[3].push(combine(r2, r1, -1.0));
    }
    trees.map(|v| v.try_into().unwrap())
}

/// `(p + sign * q) / sqrt(2)`
fn combine(p: &Grid, q: &Grid, sign: f64) -> Grid {
    let mut out = p.clone();
    out.axpy(sign, q);
    out.scale(FRAC_1_SQRT_2);
    out
}

pub fn dtcwt(plane: &Grid, set: &DualTreeFilterSet) -> Result<DareCoeffs> {
    DtcwtPlan::new(set, plane.rows(), plane.cols())?.forward(plane)
}

pub fn idtcwt(coeffs: &DareCoeffs, set: &DualTreeFilterSet) -> Result<Grid> {
    coeffs.validate()?;
    let (m, n) = coeffs.plane_dims();
    DtcwtPlan::new(set, m, n)?.inverse(coeffs)
}

pub fn idtcwt_adjoint(grad_plane: &Grid, set: &DualTreeFilterSet) -> Result<DareCoeffs> {
    DtcwtPlan::new(set, grad_plane.rows(), grad_plane.cols())?.inverse_adjoint(grad_plane)
}

/// Energy of each oriented subband, in [`ORIENTATIONS`] order.
pub fn orientation_energies(coeffs: &DareCoeffs) -> [f64; 6] {
    std::array::from_fn(|o| coeffs.real_details[o].sum_sq() + coeffs.imag_details[o].sum_sq())
}

pub struct DwtPlan {
    analysis: Separable,
    synthesis: Separable,
    m: usize,
    n: usize,
}

impl DwtPlan {
    pub fn new(set: &DwtFilterSet, m: usize, n: usize) -> Result<Self> {
        check_dims(m, n)?;
        Ok(Self {
            analysis: Separable::new(&set.analysis, &set.analysis, m, n)?,
            synthesis: Separable::new(&set.synthesis, &set.synthesis, m, n)?,
            m,
            n,
        })
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        if shape != (self.m, self.n) {
            return Err(Error::Shape(format!("{shape:?} does not match plan {}x{}", self.m, self.n)));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Grid) -> Result<DwtCoeffs> {
        self.check(x.shape())?;
        let [ll, lh, hl, hh] = self.analysis.analyze(x);
        Ok(DwtCoeffs { approx: ll, details: [lh, hl, hh] })
    }

    pub fn inverse(&self, c: &DwtCoeffs) -> Result<Grid> {
        c.validate()?;
        self.check(c.plane_dims())?;
        let [lh, hl, hh] = &c.details;
        Ok(self.synthesis.synthesize([&c.approx, lh, hl, hh]))
    }

    pub fn inverse_adjoint(&self, g: &Grid) -> Result<DwtCoeffs> {
        self.check(g.shape())?;
        let [ll, lh, hl, hh] = self.synthesis.synthesize_adjoint(g);
        Ok(DwtCoeffs { approx: ll, details: [lh, hl, hh] })
    }
}

pub fn dwt2d(plane: &Grid, set: &DwtFilterSet) -> Result<DwtCoeffs> {
    DwtPlan::new(set, plane.rows(), plane.cols())?.forward(plane)
}

pub fn idwt2d(coeffs: &DwtCoeffs, set: &DwtFilterSet) -> Result<Grid> {
    coeffs.validate()?;
    let (m, n) = coeffs.plane_dims();
    DwtPlan::new(set, m, n)?.inverse(coeffs)
}

pub fn idwt2d_adjoint(grad_plane: &Grid, set: &DwtFilterSet) -> Result<DwtCoeffs> {
    DwtPlan::new(set, grad_plane.rows(), grad_plane.cols())?.inverse_adjoint(grad_plane)
}
