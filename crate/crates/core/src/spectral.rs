//! Two-dimensional grids and the DFT machinery behind every circulant product.
//!
//! Conventions used throughout the crate:
//!
//! * the forward transform is unnormalized and the inverse carries the
//!   `1 / (rows * cols)` factor;
//! * [`cross_correlate`] returns, at index `(u, v)`, the inner product of `a`
//!   with `b` read at offset `(u, v)`. Equivalently it is the response of
//!   filter `b` to the sample obtained by translating `a` by `+(u, v)` with
//!   wrap-around (see [`RealGrid::translated`]).

use std::ops::{Index, IndexMut};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative size of the imaginary residual tolerated by [`Fft2::inverse`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Default floor applied to spectral denominators.
pub const DIVISION_FLOOR: f64 = 1e-12;

/// Real-valued 2D array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at index {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Unit impulse at `(0, 0)`.
    pub fn delta(rows: usize, cols: usize) -> Self {
        let mut g = Self::zeros(rows, cols);
        g.data[0] = 1.0;
        g
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &RealGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealGrid {
        RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> RealGrid {
        self.map(|v| v * k)
    }

    pub fn zip_map(&self, other: &RealGrid, f: impl Fn(f64, f64) -> f64) -> Result<RealGrid> {
        check_shape(self.shape(), other.shape())?;
        Ok(RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Copy of the grid translated by `+(dr, dc)` with wrap-around:
    /// `out(i, j) = self(i - dr, j - dc)`.
    pub fn translated(&self, dr: isize, dc: isize) -> RealGrid {
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        RealGrid::from_fn(self.rows, self.cols, |r, c| {
            let sr = (r as isize - dr).rem_euclid(rows) as usize;
            let sc = (c as isize - dc).rem_euclid(cols) as usize;
            self[(sr, sc)]
        })
    }

    /// Index of the largest value, row-major first on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

impl Index<(usize, usize)> for RealGrid {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RealGrid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Complex-valued 2D array in row-major order; the home of every spectral quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at index {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_real(g: &RealGrid) -> Self {
        Self {
            rows: g.rows,
            cols: g.cols,
            data: g.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.data.iter()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexGrid {
        ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> ComplexGrid {
        self.map(|v| v * k)
    }

    pub fn zip_map(
        &self,
        other: &ComplexGrid,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexGrid> {
        check_shape(self.shape(), other.shape())?;
        Ok(ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn conj(&self) -> ComplexGrid {
        self.map(|v| v.conj())
    }

    pub fn mul(&self, other: &ComplexGrid) -> Result<ComplexGrid> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Elementwise `self / den`, with denominators smaller than `floor` in
    /// magnitude pushed out to `|den| + floor` along their own direction.
    pub fn div_guarded(&self, den: &ComplexGrid, floor: f64) -> Result<ComplexGrid> {
        if !(floor > 0.0) {
            return Err(Error::param(format!("division floor must be positive, got {floor}")));
        }
        self.zip_map(den, |n, d| n / guard(d, floor))
    }

    /// Largest deviation from conjugate symmetry, `|G(i,j) - conj(G(-i,-j))|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let mr = (self.rows - r) % self.rows;
                let mc = (self.cols - c) % self.cols;
                worst = worst.max((self[(r, c)] - self[(mr, mc)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

impl Index<(usize, usize)> for ComplexGrid {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexGrid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub(crate) fn guard(d: Complex64, floor: f64) -> Complex64 {
    let mag = d.norm();
    if mag >= floor {
        d
    } else if mag == 0.0 {
        Complex64::new(floor, 0.0)
    } else {
        d * ((mag + floor) / mag)
    }
}

pub(crate) fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(expected, actual))
    }
}

thread_local! {
    // scratch and transpose buffers, reused across calls on the same thread
    static WORK: std::cell::RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
}

/// Planned 2D transform for one grid shape.
///
/// Plans are immutable after construction and may be shared between threads.
/// Every forward or inverse call bumps a counter, which the solver tests use
/// to pin the number of transforms spent per iteration.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    calls: AtomicU64,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("calls", &self.transform_count())
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(cols);
        let row_inv = planner.plan_fft_inverse(cols);
        let col_fwd = planner.plan_fft_forward(rows);
        let col_inv = planner.plan_fft_inverse(rows);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            rows,
            cols,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scratch_len,
            calls: AtomicU64::new(0),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of 2D transforms executed through this plan so far.
    pub fn transform_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn forward(&self, g: &RealGrid) -> Result<ComplexGrid> {
        check_shape(self.shape(), g.shape())?;
        let mut data: Vec<Complex64> = g.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut data, false);
        Ok(ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn forward_complex(&self, g: &ComplexGrid) -> Result<ComplexGrid> {
        check_shape(self.shape(), g.shape())?;
        let mut data = g.data.clone();
        self.run(&mut data, false);
        Ok(ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Normalized inverse transform, returning the full complex result.
    pub fn inverse_complex(&self, g: &ComplexGrid) -> Result<ComplexGrid> {
        check_shape(self.shape(), g.shape())?;
        let mut data = g.data.clone();
        self.run(&mut data, true);
        let k = 1.0 / (self.rows * self.cols) as f64;
        data.iter_mut().for_each(|v| *v *= k);
        Ok(ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Normalized inverse transform of a conjugate-symmetric spectrum.
    ///
    /// Fails with [`Error::SymmetryBroken`] when the discarded imaginary part
    /// exceeds [`SYMMETRY_TOLERANCE`] of the grid norm.
    pub fn inverse(&self, g: &ComplexGrid) -> Result<RealGrid> {
        let out = self.inverse_complex(g)?;
        let mut imag_sq = 0.0;
        let mut total_sq = 0.0;
        for v in &out.data {
            imag_sq += v.im * v.im;
            total_sq += v.norm_sqr();
        }
        let (residual, norm) = (imag_sq.sqrt(), total_sq.sqrt());
        if residual > SYMMETRY_TOLERANCE * norm {
            return Err(Error::SymmetryBroken { residual, norm });
        }
        Ok(RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: out.data.into_iter().map(|v| v.re).collect(),
        })
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let (row_plan, col_plan) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        WORK.with(|work| {
            let (scratch, t) = &mut *work.borrow_mut();
            scratch.resize(self.scratch_len, Complex64::new(0.0, 0.0));
            if self.cols > 1 {
                row_plan.process_with_scratch(data, scratch);
            }
            if self.rows > 1 {
                t.resize(data.len(), Complex64::new(0.0, 0.0));
                transpose::transpose(data, t, self.cols, self.rows);
                col_plan.process_with_scratch(t, scratch);
                transpose::transpose(t, data, self.rows, self.cols);
            }
        });
    }
}

/// Unnormalized forward 2D DFT.
pub fn dft2(g: &RealGrid) -> ComplexGrid {
    Fft2::new(g.rows, g.cols)
        .forward(g)
        .expect("plan built for this shape")
}

/// Inverse 2D DFT with `1 / (rows * cols)` normalization.
pub fn idft2(g: &ComplexGrid) -> Result<RealGrid> {
    Fft2::new(g.rows, g.cols).inverse(g)
}

/// Cyclic cross-correlation `out(u, v) = sum_ij a(i, j) * b(i + u, j + v)`,
/// evaluated as `idft2(conj(dft2(a)) * dft2(b))`.
pub fn cross_correlate(a: &RealGrid, b: &RealGrid) -> Result<RealGrid> {
    check_shape(a.shape(), b.shape())?;
    let fft = Fft2::new(a.rows, a.cols);
    let prod = fft.forward(a)?.conj().mul(&fft.forward(b)?)?;
    fft.inverse(&prod)
}
