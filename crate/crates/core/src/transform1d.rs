//! Single-level 1D analysis and synthesis, plus their exact adjoints.
//!
//! Each operation is expressed through precomputed index maps (a [`Plan1d`]),
//! so the adjoints are literal transposes: gather becomes scatter, and the
//! boundary extension becomes a fold of the extended buffer.

use crate::error::{Error, Result};
use crate::filters::{Extension, FilterPair};

/// Whole-sample symmetric reflection of `i` into `0..n`.
#[inline]
fn reflect(i: i64, n: i64) -> i64 {
    if n == 1 {
        return 0;
    }
    let p = 2 * (n - 1);
    let m = i.rem_euclid(p);
    if m < n {
        m
    } else {
        p - m
    }
}

/// Index maps for one filter pair at one signal length.
#[derive(Debug, Clone)]
pub struct Plan1d {
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
    n: usize,
    /// Analysis: extended position `q` reads `x[sig_map[q]]`, with `q = 2k + j`.
    sig_map: Vec<usize>,
    /// Synthesis: subband index `k - k_min` reads `a[lo_map[..]]` / `d[hi_map[..]]`.
    lo_map: Vec<usize>,
    hi_map: Vec<usize>,
    k_min: i64,
    origin: i64,
}

impl Plan1d {
    pub fn new(pair: &FilterPair, n: usize) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::OddLength(n));
        }
        let len = pair.len() as i64;
        let origin = pair.origin as i64;
        let ni = n as i64;
        let half = ni / 2;
        let sig = |p: i64| -> usize {
            match pair.extension {
                Extension::Symmetric => reflect(p, ni) as usize,
                Extension::Periodic => p.rem_euclid(ni) as usize,
            }
        };
        let sub = |k: i64, phase: i64| -> usize {
            match pair.extension {
                Extension::Symmetric => ((reflect(2 * k + phase, ni) - phase) / 2) as usize,
                Extension::Periodic => k.rem_euclid(half) as usize,
            }
        };
        // Analysis reads positions 2k + j - origin for k < n/2, j < len.
        let sig_map = (0..(ni - 2 + len)).map(|q| sig(q - origin)).collect();
        // Synthesis reads subband index (n - j + origin) / 2.
        let k_min = (origin - len + 1).div_euclid(2);
        let k_max = (ni - 1 + origin).div_euclid(2);
        let lp = pair.low_phase as i64;
        let hp = pair.high_phase() as i64;
        let lo_map = (k_min..=k_max).map(|k| sub(k, lp)).collect();
        let hi_map = (k_min..=k_max).map(|k| sub(k, hp)).collect();
        Ok(Self {
            lowpass: pair.lowpass.clone(),
            highpass: pair.highpass.clone(),
            n,
            sig_map,
            lo_map,
            hi_map,
            k_min,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Writes the approximation and detail halves of `x`.
    pub fn analyze(&self, x: &[f64], a: &mut [f64], d: &mut [f64], ext: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.n);
        ext.clear();
        ext.extend(self.sig_map.iter().map(|&i| x[i]));
        for k in 0..self.n / 2 {
            let w = &ext[2 * k..2 * k + self.lowpass.len()];
            let mut sa = 0.0;
            let mut sd = 0.0;
            for ((v, l), h) in w.iter().zip(&self.lowpass).zip(&self.highpass) {
                sa += l * v;
                sd += h * v;
            }
            a[k] = sa;
            d[k] = sd;
        }
    }

    /// Accumulates the transpose of [`Plan1d::analyze`] into `gx`.
    pub fn analyze_adjoint(&self, ga: &[f64], gd: &[f64], gx: &mut [f64], ext: &mut Vec<f64>) {
        ext.clear();
        ext.resize(self.sig_map.len(), 0.0);
        let flen = self.lowpass.len();
        for k in 0..self.n / 2 {
            let (a, d) = (ga[k], gd[k]);
            let w = &mut ext[2 * k..2 * k + flen];
            for ((e, l), h) in w.iter_mut().zip(&self.lowpass).zip(&self.highpass) {
                *e += l * a + h * d;
            }
        }
        for (q, &i) in self.sig_map.iter().enumerate() {
            gx[i] += ext[q];
        }
    }

    /// Writes the signal reconstructed from `a` and `d` into `x`.
    pub fn synthesize(&self, a: &[f64], d: &[f64], x: &mut [f64], ext: &mut Vec<f64>) {
        let m = self.lo_map.len();
        ext.clear();
        ext.extend(self.lo_map.iter().map(|&i| a[i]));
        ext.extend(self.hi_map.iter().map(|&i| d[i]));
        let (ea, ed) = ext.split_at(m);
        for (n, out) in x.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            // j such that n - j + origin is even.
            let first = ((n as i64 + self.origin) % 2) as usize;
            let mut j = first;
            while j < self.lowpass.len() {
                let k = ((n as i64 - j as i64 + self.origin) / 2 - self.k_min) as usize;
                s += self.lowpass[j] * ea[k] + self.highpass[j] * ed[k];
                j += 2;
            }
            *out = s;
        }
    }

    /// Accumulates the transpose of [`Plan1d::synthesize`] into `ga`, `gd`.
    pub fn synthesize_adjoint(&self, gx: &[f64], ga: &mut [f64], gd: &mut [f64], ext: &mut Vec<f64>) {
        let m = self.lo_map.len();
        ext.clear();
        ext.resize(2 * m, 0.0);
        let (ea, ed) = ext.split_at_mut(m);
        for (n, &g) in gx.iter().enumerate().take(self.n) {
            let first = ((n as i64 + self.origin) % 2) as usize;
            let mut j = first;
            while j < self.lowpass.len() {
                let k = ((n as i64 - j as i64 + self.origin) / 2 - self.k_min) as usize;
                ea[k] += self.lowpass[j] * g;
                ed[k] += self.highpass[j] * g;
                j += 2;
            }
        }
        for (q, &i) in self.lo_map.iter().enumerate() {
            ga[i] += ea[q];
        }
        for (q, &i) in self.hi_map.iter().enumerate() {
            gd[i] += ed[q];
        }
    }
}

pub fn analyze1d(signal: &[f64], pair: &FilterPair) -> Result<(Vec<f64>, Vec<f64>)> {
    let plan = Plan1d::new(pair, signal.len())?;
    let h = signal.len() / 2;
    let (mut a, mut d) = (vec![0.0; h], vec![0.0; h]);
    plan.analyze(signal, &mut a, &mut d, &mut Vec::new());
    Ok((a, d))
}

pub fn synthesize1d(approx: &[f64], detail: &[f64], pair: &FilterPair) -> Result<Vec<f64>> {
    check_halves(approx, detail)?;
    let plan = Plan1d::new(pair, 2 * approx.len())?;
    let mut x = vec![0.0; 2 * approx.len()];
    plan.synthesize(approx, detail, &mut x, &mut Vec::new());
    Ok(x)
}

/// Transpose of [`analyze1d`]: maps subband gradients to a signal gradient.
pub fn analyze1d_adjoint(grad_approx: &[f64], grad_detail: &[f64], pair: &FilterPair) -> Result<Vec<f64>> {
    check_halves(grad_approx, grad_detail)?;
    let plan = Plan1d::new(pair, 2 * grad_approx.len())?;
    let mut gx = vec![0.0; 2 * grad_approx.len()];
    plan.analyze_adjoint(grad_approx, grad_detail, &mut gx, &mut Vec::new());
    Ok(gx)
}

/// Transpose of [`synthesize1d`].
pub fn synthesize1d_adjoint(grad_signal: &[f64], pair: &FilterPair) -> Result<(Vec<f64>, Vec<f64>)> {
    let plan = Plan1d::new(pair, grad_signal.len())?;
    let h = grad_signal.len() / 2;
    let (mut ga, mut gd) = (vec![0.0; h], vec![0.0; h]);
    plan.synthesize_adjoint(grad_signal, &mut ga, &mut gd, &mut Vec::new());
    Ok((ga, gd))
}

fn check_halves(a: &[f64], d: &[f64]) -> Result<()> {
    if a.len() != d.len() {
        return Err(Error::Shape(format!("approx has {} samples but detail has {}", a.len(), d.len())));
    }
    if a.is_empty() {
        return Err(Error::OddLength(0));
    }
    Ok(())
}
