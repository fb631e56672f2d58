//! Kernelized support correlation filter.
//!
//! The filter lives in the span of the implicit feature maps of all cyclic
//! translations of the training stack, `w = sum_i alpha_i psi(x_i)`. Because
//! the kernels below only depend on inner products and norms, the kernel
//! matrix over translations is circulant and everything reduces to
//! elementwise operations on its first row, the kernel correlation.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::labeling::LabelGrid;
use crate::mscf::transform_stack;
use crate::solver::{self, AlternatingModel, Residuals, SolveOptions, Solution, SolverConfig, Trace};
use crate::spectral::{check_shape, guard, ComplexGrid, Fft2, RealGrid};

/// Kernels normalized by the total feature count `D` of the stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `<x, z> / D`
    Linear,
    /// `(<x, z> / D + 1)^degree`
    Polynomial { degree: u32 },
    /// `exp(-|x - z|^2 / (sigma^2 D))`
    Gaussian { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree } if degree >= 1 => Ok(()),
            KernelSpec::Polynomial { degree } => Err(Error::param(format!("polynomial degree must be >= 1, got {degree}"))),
            KernelSpec::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            KernelSpec::Gaussian { sigma } => Err(Error::param(format!("gaussian sigma must be positive, got {sigma}"))),
        }
    }

    /// Kernel value from the inner product and squared norms of its arguments.
    pub fn evaluate(&self, dot: f64, x_norm_sq: f64, z_norm_sq: f64, dim: usize) -> f64 {
        let d = dim as f64;
        match *self {
            KernelSpec::Linear => dot / d,
            KernelSpec::Polynomial { degree } => (dot / d + 1.0).powi(degree as i32),
            KernelSpec::Gaussian { sigma } => {
                let dist = (x_norm_sq + z_norm_sq - 2.0 * dot).max(0.0);
                (-dist / (sigma * sigma * d)).exp()
            }
        }
    }
}

fn check_stacks(x: &FeatureStack, z: &FeatureStack) -> Result<()> {
    if x.num_channels() != z.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: x.num_channels(),
            actual: z.num_channels(),
        });
    }
    check_shape(x.shape(), z.shape())
}

/// `k(u, v) = K(x, z translated by (u, v))` for every translation.
pub fn kernel_correlation(x: &FeatureStack, z: &FeatureStack, spec: KernelSpec) -> Result<RealGrid> {
    let fft = Fft2::new(x.rows(), x.cols());
    kernel_correlation_in(&fft, x, z, spec)
}

/// As [`kernel_correlation`], with a caller-owned transform plan.
pub fn kernel_correlation_in(fft: &Fft2, x: &FeatureStack, z: &FeatureStack, spec: KernelSpec) -> Result<RealGrid> {
    check_stacks(x, z)?;
    spec.validate()?;
    let x_hat = transform_stack(fft, x)?;
    let z_hat = if std::ptr::eq(x, z) { x_hat.clone() } else { transform_stack(fft, z)? };
    let (rows, cols) = x.shape();
    let mut acc = ComplexGrid::zeros(rows, cols);
    for (xh, zh) in x_hat.iter().zip(&z_hat) {
        for ((a, xv), zv) in acc.as_mut_slice().iter_mut().zip(xh.iter()).zip(zh.iter()) {
            *a += zv.conj() * xv;
        }
    }
    let dots = fft.inverse(&acc)?;
    let (xn, zn, dim) = (x.norm_sq(), z.norm_sq(), x.total_len());
    Ok(dots.map(|d| spec.evaluate(d, xn, zn, dim)))
}

/// Spectral dual coefficients, bias and the training stack they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFilter {
    pub alpha_hat: ComplexGrid,
    pub bias: f64,
    pub template: FeatureStack,
}

impl DualFilter {
    pub fn zeros(template: FeatureStack) -> Self {
        let (rows, cols) = template.shape();
        Self {
            alpha_hat: ComplexGrid::zeros(rows, cols),
            bias: 0.0,
            template,
        }
    }

    /// Dual coefficients in the spatial domain.
    pub fn alpha(&self, fft: &Fft2) -> Result<RealGrid> {
        fft.inverse(&self.alpha_hat)
    }
}

/// `idft2(k_hat * alpha_hat) + b` where `k` is the kernel correlation of the
/// template with `z`.
pub fn kernel_response(filter: &DualFilter, z: &FeatureStack, spec: KernelSpec) -> Result<RealGrid> {
    let fft = Fft2::new(z.rows(), z.cols());
    kernel_response_in(&fft, filter, z, spec)
}

pub fn kernel_response_in(fft: &Fft2, filter: &DualFilter, z: &FeatureStack, spec: KernelSpec) -> Result<RealGrid> {
    check_stacks(&filter.template, z)?;
    let k = kernel_correlation_in(fft, &filter.template, z, spec)?;
    let k_hat = fft.forward(&k)?;
    let f = fft.inverse(&k_hat.mul(&filter.alpha_hat)?)?;
    Ok(f.map(|v| v + filter.bias))
}

/// `alpha_hat = p_hat / (k_hat + 1/C)` with a floor on the denominator.
pub fn update_dual(k_hat: &ComplexGrid, p_hat: &ComplexGrid, c: f64, floor: f64) -> Result<ComplexGrid> {
    let lambda = 1.0 / c;
    k_hat.zip_map(p_hat, |k, p| p / guard(k + lambda, floor))
}

/// Optimality residuals of a dual iterate: `r1` is the largest defect of
/// `alpha_i = C (q_i - f_i)` (with `q_i = f_i` at discarded samples) and of the
/// bias condition.
pub fn dual_residuals(
    fft: &Fft2,
    k_hat: &ComplexGrid,
    filter: &DualFilter,
    labels: &LabelGrid,
    slack: &RealGrid,
    c: f64,
) -> Result<Residuals> {
    check_shape(k_hat.shape(), labels.shape())?;
    check_shape(slack.shape(), labels.shape())?;
    let f = fft.inverse(&k_hat.mul(&filter.alpha_hat)?)?.map(|v| v + filter.bias);
    let alpha = filter.alpha(fft)?;
    let mut r1 = 0.0f64;
    let mut bias_defect = 0.0;
    for i in 0..f.len() {
        let y = labels.as_slice()[i];
        let v = if y == 0.0 {
            0.0
        } else {
            f.as_slice()[i] - (y + y * slack.as_slice()[i])
        };
        bias_defect += v;
        r1 = r1.max((alpha.as_slice()[i] + c * v).abs());
    }
    let (r2_max, r3_max) = solver::slack_residuals(&f, slack, labels);
    Ok(Residuals {
        r1_inf: r1.max((c * bias_defect).abs()),
        r2_max,
        r3_max,
    })
}

struct KscfModel<'a> {
    fft: &'a Fft2,
    k_hat: ComplexGrid,
    alpha_hat: ComplexGrid,
    c: f64,
    floor: f64,
}

impl AlternatingModel for KscfModel<'_> {
    type Snapshot = ComplexGrid;

    fn outputs(&self) -> Result<RealGrid> {
        self.fft.inverse(&self.k_hat.mul(&self.alpha_hat)?)
    }

    fn refit(&mut self, p: &RealGrid) -> Result<()> {
        let p_hat = self.fft.forward(p)?;
        self.alpha_hat = update_dual(&self.k_hat, &p_hat, self.c, self.floor)?;
        Ok(())
    }

    fn regularizer(&self) -> f64 {
        let n = self.alpha_hat.len() as f64;
        self.k_hat
            .iter()
            .zip(self.alpha_hat.iter())
            .map(|(k, a)| k.re * a.norm_sqr())
            .sum::<f64>()
            / n
    }

    fn drift_residual(&self, delta: &RealGrid) -> f64 {
        delta.max_abs().max(delta.sum().abs())
    }

    fn snapshot(&self) -> ComplexGrid {
        self.alpha_hat.clone()
    }
}

/// Trains a kernelized filter from a cold start.
pub fn solve_kscf(x: &FeatureStack, labels: &LabelGrid, spec: KernelSpec, cfg: &SolverConfig) -> Result<Solution<DualFilter>> {
    let fft = Fft2::new(x.rows(), x.cols());
    Ok(solve_kscf_in(&fft, x, labels, spec, cfg, &SolveOptions::default())?.0)
}

/// Full-control variant. A warm start contributes its coefficients and bias;
/// the template is always replaced by `x`.
pub fn solve_kscf_in(
    fft: &Fft2,
    x: &FeatureStack,
    labels: &LabelGrid,
    spec: KernelSpec,
    cfg: &SolverConfig,
    opts: &SolveOptions<'_, DualFilter>,
) -> Result<(Solution<DualFilter>, Option<Trace<ComplexGrid>>)> {
    check_shape(x.shape(), labels.shape())?;
    check_shape(fft.shape(), x.shape())?;
    let k = kernel_correlation_in(fft, x, x, spec)?;
    let k_hat = fft.forward(&k)?.map(|v| Complex64::new(v.re, 0.0));
    let (alpha_hat, mut bias) = match opts.warm_start {
        Some(f) => {
            check_shape(x.shape(), f.alpha_hat.shape())?;
            (f.alpha_hat.clone(), f.bias)
        }
        None => (ComplexGrid::zeros(x.rows(), x.cols()), 0.0),
    };
    let mut model = KscfModel {
        fft,
        k_hat,
        alpha_hat,
        c: cfg.c,
        floor: cfg.division_floor,
    };
    let (report, slack, trace) = solver::run(&mut model, &mut bias, labels, cfg, opts.record_trace)?;
    let filter = DualFilter {
        alpha_hat: model.alpha_hat,
        bias,
        template: x.clone(),
    };
    Ok((Solution { filter, slack, report }, trace))
}
