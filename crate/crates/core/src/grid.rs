//! Dense row-major 2D grids of `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Grid {
        Grid::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Grid) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Grid) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Extract every other sample starting at `(row_phase, col_phase)`.
    pub fn decimate(&self, row_phase: usize, col_phase: usize) -> Grid {
        Grid::from_fn(self.rows / 2, self.cols / 2, |r, c| {
            self.get(2 * r + row_phase, 2 * c + col_phase)
        })
    }

    /// Inverse of [`Grid::decimate`]: write `part` into the given polyphase component.
    pub fn interleave_into(&mut self, part: &Grid, row_phase: usize, col_phase: usize) {
        for r in 0..part.rows {
            for c in 0..part.cols {
                self.set(2 * r + row_phase, 2 * c + col_phase, part.get(r, c));
            }
        }
    }

    /// Align-corners bilinear resampling to a new shape.
    pub fn resize_bilinear(&self, rows: usize, cols: usize) -> Grid {
        if (rows, cols) == self.shape() {
            return self.clone();
        }
        let map = |i: usize, new: usize, old: usize| -> (usize, usize, f64) {
            if new <= 1 || old <= 1 {
                return (0, 0, 0.0);
            }
            let x = i as f64 * (old - 1) as f64 / (new - 1) as f64;
            let lo = (x.floor() as usize).min(old - 1);
            let hi = (lo + 1).min(old - 1);
            (lo, hi, x - lo as f64)
        };
        Grid::from_fn(rows, cols, |r, c| {
            let (r0, r1, fr) = map(r, rows, self.rows);
            let (c0, c1, fc) = map(c, cols, self.cols);
            let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
            let bot = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
            top * (1.0 - fr) + bot * fr
        })
    }
}

/// Align-corners linear resampling of a vector.
pub fn resize_linear(v: &[f64], len: usize) -> Vec<f64> {
    if len == v.len() {
        return v.to_vec();
    }
    let g = Grid { rows: 1, cols: v.len(), data: v.to_vec() };
    g.resize_bilinear(1, len).into_vec()
}
