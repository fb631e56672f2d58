//! Dense brute-force references for tiny instances.
//!
//! Nothing in here uses the FFT: sample matrices are built by explicit
//! translation, spectra are converted with a direct DFT, and the quadratic
//! programs are solved densely. Every entry point refuses instances with more
//! than [`MAX_DENSE_ROWS`] samples.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::kscf::KernelSpec;
use crate::labeling::LabelGrid;
use crate::solver::Trace;
use crate::spectral::{check_shape, guard, ComplexGrid, RealGrid, DIVISION_FLOOR};

pub const MAX_DENSE_ROWS: usize = 4096;

/// Stopping threshold on the infinity norm of the QP gradient.
pub const QP_GRADIENT_TOLERANCE: f64 = 1e-8;

/// Cap on objective/gradient evaluations per QP solve.
pub const QP_EVALUATION_CAP: usize = 1_000_000;

fn size_guard(n: usize) -> Result<()> {
    if n > MAX_DENSE_ROWS {
        return Err(Error::SizeGuard {
            size: n,
            limit: MAX_DENSE_ROWS,
        });
    }
    Ok(())
}

fn direct_dft(data: &[Complex64], rows: usize, cols: usize, sign: f64) -> Vec<Complex64> {
    let tau = std::f64::consts::TAU;
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for k in 0..rows {
        for l in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..rows {
                for n in 0..cols {
                    let phase = sign * tau * ((k * m) as f64 / rows as f64 + (l * n) as f64 / cols as f64);
                    acc += data[m * cols + n] * Complex64::from_polar(1.0, phase);
                }
            }
            out[k * cols + l] = acc;
        }
    }
    out
}

/// Direct (quadratic-time) forward DFT.
pub fn naive_dft2(g: &RealGrid) -> Result<ComplexGrid> {
    size_guard(g.len())?;
    let data: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ComplexGrid::new(g.rows(), g.cols(), direct_dft(&data, g.rows(), g.cols(), -1.0))
}

/// Direct inverse DFT, keeping the real part.
pub fn naive_idft2(g: &ComplexGrid) -> Result<RealGrid> {
    size_guard(g.len())?;
    let n = g.len() as f64;
    let out = direct_dft(g.as_slice(), g.rows(), g.cols(), 1.0);
    RealGrid::new(g.rows(), g.cols(), out.iter().map(|v| v.re / n).collect())
}

/// Row `u * cols + v` is `x` translated by `(u, v)` with wrap-around, flattened
/// row-major, so `X w` lists the decision values of every translation.
pub fn build_circulant(x: &RealGrid) -> Result<DMatrix<f64>> {
    build_circulant_stack(&FeatureStack::single(x.clone())?)
}

/// As [`build_circulant`], with the channels of each translated sample concatenated.
pub fn build_circulant_stack(x: &FeatureStack) -> Result<DMatrix<f64>> {
    let (rows, cols) = x.shape();
    let n = rows * cols;
    size_guard(n)?;
    let mut out = DMatrix::zeros(n, x.total_len());
    for u in 0..rows {
        for v in 0..cols {
            let shifted = x.translated(u as isize, v as isize);
            let row: Vec<f64> = shifted.channels().iter().flat_map(|c| c.iter().copied()).collect();
            for (j, val) in row.into_iter().enumerate() {
                out[(u * cols + v, j)] = val;
            }
        }
    }
    Ok(out)
}

/// Dense squared-hinge SVM instance: one row per sample, labels in `{-1, 0, +1}`
/// where `0` marks a sample that takes no part in the loss.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    samples: DMatrix<f64>,
    labels: Vec<f64>,
    c: f64,
}

impl DenseProblem {
    pub fn new(samples: DMatrix<f64>, labels: Vec<f64>, c: f64) -> Result<Self> {
        size_guard(samples.nrows())?;
        if labels.len() != samples.nrows() {
            return Err(Error::Oracle(format!("{} labels for {} samples", labels.len(), samples.nrows())));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0 && y != 0.0) {
            return Err(Error::Oracle("labels must lie in {-1, 0, +1}".into()));
        }
        if !labels.contains(&1.0) {
            return Err(Error::EmptyLabelSet("positive"));
        }
        if !labels.contains(&-1.0) {
            return Err(Error::EmptyLabelSet("negative"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param(format!("C must be positive, got {c}")));
        }
        Ok(Self { samples, labels, c })
    }

    /// All translations of a single-channel sample.
    pub fn from_grid(x: &RealGrid, labels: &LabelGrid, c: f64) -> Result<Self> {
        check_shape(x.shape(), labels.shape())?;
        Self::new(build_circulant(x)?, labels.as_slice().to_vec(), c)
    }

    /// All translations of a feature stack, channels concatenated.
    pub fn from_stack(x: &FeatureStack, labels: &LabelGrid, c: f64) -> Result<Self> {
        check_shape(x.shape(), labels.shape())?;
        Self::new(build_circulant_stack(x)?, labels.as_slice().to_vec(), c)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// `|w|^2 + C * sum over labeled samples of max(0, 1 - y (x.w + b))^2`.
    pub fn objective(&self, w: &DVector<f64>, b: f64) -> f64 {
        let f = &self.samples * w;
        hinge_objective(w.norm_squared(), f.as_slice(), b, &self.labels, self.c)
    }
}

fn hinge_objective(reg: f64, f: &[f64], b: f64, labels: &[f64], c: f64) -> f64 {
    let loss: f64 = f
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&fi, &y)| (1.0 - y * (fi + b)).max(0.0).powi(2))
        .sum();
    reg + c * loss
}

#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub w: DVector<f64>,
    pub bias: f64,
    pub objective: f64,
    pub gradient_norm: f64,
    pub evaluations: usize,
}

impl DenseSolution {
    /// `[w; b]`.
    pub fn augmented(&self) -> DVector<f64> {
        let mut v = self.w.clone().resize_vertically(self.w.len() + 1, 0.0);
        v[self.w.len()] = self.bias;
        v
    }
}

/// Minimizes the squared-hinge objective by Newton steps on the current active
/// set with Armijo backtracking, stopping once the gradient's largest entry is
/// at most [`QP_GRADIENT_TOLERANCE`] (scaled by `C` when `C < 1`, where the
/// loss curvature is that small) or the objective stops decreasing at the
/// rounding floor.
pub fn solve_dense_qp(p: &DenseProblem) -> Result<DenseSolution> {
    let (x, labels, c) = (&p.samples, &p.labels, p.c);
    let d = x.ncols();
    let mut w = DVector::zeros(d);
    let mut b = 0.0;
    let mut evaluations = 0usize;

    let evaluate = |w: &DVector<f64>, b: f64| -> (f64, DVector<f64>) {
        let f = x * w;
        (hinge_objective(w.norm_squared(), f.as_slice(), b, labels, c), f)
    };

    loop {
        let (obj, f) = evaluate(&w, b);
        evaluations += 1;
        let mut grad = DVector::zeros(d + 1);
        grad.rows_mut(0, d).copy_from(&(&w * 2.0));
        let mut hess = DMatrix::zeros(d + 1, d + 1);
        for i in 0..d {
            hess[(i, i)] = 2.0;
        }
        for (i, &y) in labels.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let margin = 1.0 - y * (f[i] + b);
            if margin <= 0.0 {
                continue;
            }
            let row = x.row(i);
            for j in 0..d {
                grad[j] -= 2.0 * c * y * margin * row[j];
            }
            grad[d] -= 2.0 * c * y * margin;
            for j in 0..d {
                for k in j..d {
                    hess[(j, k)] += 2.0 * c * row[j] * row[k];
                }
                hess[(j, d)] += 2.0 * c * row[j];
            }
            hess[(d, d)] += 2.0 * c;
        }
        hess.fill_lower_triangle_with_upper_triangle();

        let gradient_norm = grad.amax();
        if gradient_norm <= QP_GRADIENT_TOLERANCE * c.min(1.0) {
            return Ok(DenseSolution {
                w,
                bias: b,
                objective: obj,
                gradient_norm,
                evaluations,
            });
        }
        if evaluations >= QP_EVALUATION_CAP {
            return Err(Error::Oracle(format!(
                "dense QP exceeded {QP_EVALUATION_CAP} evaluations (gradient {gradient_norm:.3e})"
            )));
        }

        // with no active sample the bias direction is flat and Cholesky fails
        let step = match hess.clone().cholesky() {
            Some(chol) => chol.solve(&(-&grad)),
            None => -&grad,
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-20 {
            let w_try = &w + step.rows(0, d) * t;
            let b_try = b + step[d] * t;
            let (obj_try, _) = evaluate(&w_try, b_try);
            evaluations += 1;
            if obj_try < obj && obj_try <= obj + 1e-4 * t * slope {
                w = w_try;
                b = b_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no representable decrease left; the gradient is at the rounding floor
            return Ok(DenseSolution {
                w,
                bias: b,
                objective: obj,
                gradient_norm,
                evaluations,
            });
        }
    }
}

/// `K_ij = K(x translated by shift i, x translated by shift j)` by direct evaluation.
pub fn explicit_kernel_matrix(x: &FeatureStack, spec: KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let samples = build_circulant_stack(x)?;
    let n = samples.nrows();
    let norms: Vec<f64> = (0..n).map(|i| samples.row(i).norm_squared()).collect();
    let dim = x.total_len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let dot = samples.row(i).dot(&samples.row(j));
            k[(i, j)] = spec.evaluate(dot, norms[i], norms[j], dim);
        }
    }
    Ok(k)
}

/// Largest deviation of any row of `k` from the matching rotation of row 0,
/// with rows and columns indexed by 2-D translations of a `rows x cols` grid.
pub fn circulant_defect(k: &DMatrix<f64>, rows: usize, cols: usize) -> f64 {
    let mut worst = 0.0f64;
    for u in 0..rows {
        for v in 0..cols {
            let i = u * cols + v;
            for a in 0..rows {
                for b in 0..cols {
                    let j = a * cols + b;
                    let rel = ((a + rows - u) % rows) * cols + (b + cols - v) % cols;
                    worst = worst.max((k[(i, j)] - k[(0, rel)]).abs());
                }
            }
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct DenseKernelSolution {
    /// Dual coefficients over the labeled samples, in label order.
    pub alpha: DVector<f64>,
    pub bias: f64,
    /// Decision values of every sample.
    pub outputs: DVector<f64>,
    pub objective: f64,
}

/// Minimizes `a^T K a + C * sum_labeled max(0, 1 - y (K a + b))^2` over
/// coefficients on the labeled samples, through an eigen-factorization of the
/// labeled kernel block that turns it into a linear problem.
pub fn solve_dense_kernel_qp(kernel: &DMatrix<f64>, labels: &[f64], c: f64) -> Result<DenseKernelSolution> {
    let n = kernel.nrows();
    size_guard(n)?;
    if kernel.ncols() != n || labels.len() != n {
        return Err(Error::Oracle("kernel matrix and labels disagree in size".into()));
    }
    let labeled: Vec<usize> = (0..n).filter(|&i| labels[i] != 0.0).collect();
    let k_ll = DMatrix::from_fn(labeled.len(), labeled.len(), |a, b| kernel[(labeled[a], labeled[b])]);
    let eig = k_ll.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..labeled.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-13 * top.max(1e-300))
        .collect();
    let features = DMatrix::from_fn(labeled.len(), keep.len(), |a, j| {
        eig.eigenvectors[(a, keep[j])] * eig.eigenvalues[keep[j]].sqrt()
    });
    let y_l: Vec<f64> = labeled.iter().map(|&i| labels[i]).collect();
    let sol = solve_dense_qp(&DenseProblem::new(features, y_l, c)?)?;

    // features = V sqrt(L) on the kept spectrum, so w = features^T a gives
    // a = V L^{-1/2} w
    let mut alpha = DVector::zeros(labeled.len());
    for (j, &e) in keep.iter().enumerate() {
        let coef = sol.w[j] / eig.eigenvalues[e].sqrt();
        for a in 0..labeled.len() {
            alpha[a] += eig.eigenvectors[(a, e)] * coef;
        }
    }
    let outputs = DVector::from_fn(n, |i, _| {
        labeled.iter().enumerate().map(|(a, &l)| kernel[(i, l)] * alpha[a]).sum::<f64>() + sol.bias
    });
    Ok(DenseKernelSolution {
        alpha,
        bias: sol.bias,
        outputs,
        objective: sol.objective,
    })
}

/// Closed-form ridge correlation filter `w_hat = x_hat * m_hat / (conj(x_hat) * x_hat + lambda)`,
/// in the response convention `f = idft2(conj(x_hat) * w_hat)`.
pub fn mosse_baseline(x_hat: &ComplexGrid, m_hat: &ComplexGrid, lambda: f64) -> Result<ComplexGrid> {
    x_hat.zip_map(m_hat, |x, m| x * m / guard(Complex64::new(x.norm_sqr() + lambda, 0.0), DIVISION_FLOOR))
}

/// Dense ridge solution `(X^T X + lambda I)^{-1} X^T m` over the sample rows of `x`.
pub fn dense_ridge(samples: &DMatrix<f64>, targets: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let mut gram = samples.transpose() * samples;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    gram.lu()
        .solve(&(samples.transpose() * targets))
        .ok_or_else(|| Error::Oracle("singular ridge system".into()))
}

/// Dense quantities of the fixed-point analysis of the alternating solver.
///
/// Samples are augmented with a constant 1 for the bias. Discarded samples are
/// part of the state with sign +1: their target follows the decision value,
/// which makes the state update the identity there instead of a projection.
#[derive(Debug, Clone)]
pub struct AppendixQuantities {
    /// Augmented samples, one per row.
    pub x_tilde: DMatrix<f64>,
    /// Labels with discarded samples mapped to +1.
    pub signs: DVector<f64>,
    pub labeled: Vec<bool>,
    /// `X~^T Diag(signs)`.
    pub u: DMatrix<f64>,
    /// `I~ + C X~^T X~`, with `I~` the identity minus the bias entry.
    pub m: DMatrix<f64>,
    /// `C U^T M^{-1} U`.
    pub t: DMatrix<f64>,
    /// Largest eigenvalue magnitude of `t`.
    pub spectral_radius: f64,
    /// Largest eigenvalue magnitude of `t` on the orthogonal complement of `signs`.
    pub deflated_radius: f64,
    pub c: f64,
}

pub fn appendix_quantities(p: &DenseProblem) -> Result<AppendixQuantities> {
    let (n, d) = (p.samples.nrows(), p.samples.ncols());
    let mut x_tilde = p.samples.clone().resize_horizontally(d + 1, 1.0);
    x_tilde.column_mut(d).fill(1.0);
    let signs = DVector::from_iterator(n, p.labels.iter().map(|&y| if y == 0.0 { 1.0 } else { y }));
    let labeled = p.labels.iter().map(|&y| y != 0.0).collect();
    let u = x_tilde.transpose() * DMatrix::from_diagonal(&signs);
    let mut m = x_tilde.transpose() * &x_tilde * p.c;
    for i in 0..d {
        m[(i, i)] += 1.0;
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Oracle("M is not positive definite".into()))?;
    let t = chol.solve(&u);
    let mut t = u.transpose() * t * p.c;
    t = (&t + t.transpose()) * 0.5;
    let spectral_radius = t.clone().symmetric_eigen().eigenvalues.amax();
    let unit = &signs / signs.norm();
    let projector = &unit * unit.transpose();
    let deflated = &t - &projector * &t * &projector;
    let deflated_radius = deflated.symmetric_eigen().eigenvalues.amax();
    Ok(AppendixQuantities {
        x_tilde,
        signs,
        labeled,
        u,
        m,
        t,
        spectral_radius,
        deflated_radius,
        c: p.c,
    })
}

/// A solver iterate in the coordinates of the fixed-point analysis.
#[derive(Debug, Clone)]
pub struct ConvergencePoint {
    /// `signs * q - 1`: the slack at labeled samples, the shifted target elsewhere.
    pub state: DVector<f64>,
    /// `[w; b]`.
    pub weights: DVector<f64>,
}

impl AppendixQuantities {
    /// `G(T (1 + s) - 1)` where `G` clamps labeled entries at zero.
    pub fn fixed_point_map(&self, state: &DVector<f64>) -> DVector<f64> {
        let shifted = state.map(|v| v + 1.0);
        let mut out = &self.t * shifted;
        for (i, v) in out.iter_mut().enumerate() {
            *v -= 1.0;
            if self.labeled[i] {
                *v = v.max(0.0);
            }
        }
        out
    }

    /// `sqrt(v^T M v)`.
    pub fn m_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.m * v)).max(0.0).sqrt()
    }

    /// The optimum of a dense solve expressed as a fixed-point iterate.
    pub fn optimal_point(&self, sol: &DenseSolution) -> ConvergencePoint {
        let weights = sol.augmented();
        let f = &self.x_tilde * &weights;
        let state = DVector::from_fn(f.len(), |i, _| {
            let v = self.signs[i] * f[i] - 1.0;
            if self.labeled[i] {
                v.max(0.0)
            } else {
                v
            }
        });
        ConvergencePoint { state, weights }
    }

    /// Converts the trace of a single-channel solve; weights go through the
    /// direct inverse DFT.
    pub fn trace_points(&self, trace: &Trace<ComplexGrid>) -> Result<Vec<ConvergencePoint>> {
        trace
            .iter()
            .map(|step| {
                if step.targets.len() != self.signs.len() {
                    return Err(Error::Oracle("trace does not match the instance".into()));
                }
                let state = DVector::from_fn(self.signs.len(), |i, _| self.signs[i] * step.targets.as_slice()[i] - 1.0);
                let w = naive_idft2(&step.weights)?;
                let mut weights = DVector::from_row_slice(w.as_slice()).resize_vertically(w.len() + 1, 0.0);
                weights[w.len()] = step.bias;
                if weights.len() != self.x_tilde.ncols() {
                    return Err(Error::Oracle("trace weights do not match the instance".into()));
                }
                Ok(ConvergencePoint { state, weights })
            })
            .collect()
    }
}

/// Additive slack allowed in both contraction checks.
pub const QLINEAR_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QLinearReport {
    /// `sqrt(rho(T^2))`.
    pub state_bound: f64,
    /// `sqrt(rho(T))`.
    pub weight_bound: f64,
    /// `|s_{k+1} - s*| / |s_k - s*|` (NaN when the denominator vanishes).
    pub state_ratios: Vec<f64>,
    /// Same in the `M` norm for `[w; b]`.
    pub weight_ratios: Vec<f64>,
    /// Largest `|s_{k+1} - s*| - bound |s_k - s*|`.
    pub worst_state_excess: f64,
    pub worst_weight_excess: f64,
}

impl QLinearReport {
    pub fn state_condition_holds(&self) -> bool {
        self.worst_state_excess <= QLINEAR_SLACK
    }

    pub fn weight_condition_holds(&self) -> bool {
        self.worst_weight_excess <= QLINEAR_SLACK
    }
}

/// Checks the state and weight contraction conditions between consecutive
/// iterates of a trace.
pub fn verify_qlinear(trace: &[ConvergencePoint], optimum: &ConvergencePoint, q: &AppendixQuantities) -> Result<QLinearReport> {
    for p in trace {
        if p.state.len() != optimum.state.len() || p.weights.len() != optimum.weights.len() {
            return Err(Error::Oracle("trace does not match the instance".into()));
        }
    }
    let rho = q.spectral_radius;
    let state_bound = (rho * rho).sqrt();
    let weight_bound = rho.sqrt();
    let mut report = QLinearReport {
        state_bound,
        weight_bound,
        state_ratios: Vec::new(),
        weight_ratios: Vec::new(),
        worst_state_excess: f64::NEG_INFINITY,
        worst_weight_excess: f64::NEG_INFINITY,
    };
    for pair in trace.windows(2) {
        let s0 = (&pair[0].state - &optimum.state).norm();
        let s1 = (&pair[1].state - &optimum.state).norm();
        let w0 = q.m_norm(&(&pair[0].weights - &optimum.weights));
        let w1 = q.m_norm(&(&pair[1].weights - &optimum.weights));
        report.state_ratios.push(s1 / s0);
        report.weight_ratios.push(w1 / w0);
        report.worst_state_excess = report.worst_state_excess.max(s1 - state_bound * s0);
        report.worst_weight_excess = report.worst_weight_excess.max(w1 - weight_bound * w0);
    }
    Ok(report)
}
