//! Alternating minimization shared by the single-channel, multi-channel and
//! kernelized solvers.
//!
//! Each pass evaluates the current decision values `f` (one inverse
//! transform), refreshes the non-negative slack `e = max(y*f - 1, 0)`, forms
//! the regression targets `q = y + y*e`, sets the bias to the mean of `q` and
//! refits the filter to `q - b` (one forward transform).
//!
//! Discarded samples (label 0) carry a free target that is reset to the
//! current decision value every pass. Their squared residual is then zero at
//! the start of every filter update, so the fixed point is the optimum of the
//! problem that omits them entirely, while the filter update stays a single
//! elementwise spectral solve over the whole circulant sample set. With those
//! targets in place the joint filter/bias update has the exact solution
//! `b = mean(q)` over all samples.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelGrid;
use crate::spectral::{RealGrid, DIVISION_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Loss/regularizer trade-off.
    pub c: f64,
    /// Stopping threshold on the largest optimality residual.
    pub epsilon: f64,
    pub max_iter: usize,
    pub division_floor: f64,
    /// Anderson mixing depth over the target vector; 0 runs the plain
    /// alternating updates.
    #[serde(default)]
    pub anderson_memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c: 1e4,
            epsilon: 1e-3,
            max_iter: 100,
            division_floor: DIVISION_FLOOR,
            anderson_memory: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(c: f64, epsilon: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self {
            c,
            epsilon,
            max_iter,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tracking defaults: `C = 1e4`, `epsilon = 1e-3 * sqrt(labeled)`, 100 passes.
    pub fn for_tracking(labeled: usize) -> Self {
        Self {
            epsilon: 1e-3 * (labeled as f64).sqrt(),
            ..Self::default()
        }
    }

    /// Tight settings used when comparing against the dense references.
    pub fn for_oracle(c: f64) -> Self {
        Self {
            c,
            epsilon: 1e-7,
            max_iter: 20_000,
            division_floor: DIVISION_FLOOR,
            anderson_memory: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if !(self.division_floor > 0.0) {
            return Err(Error::param("division floor must be positive"));
        }
        Ok(())
    }
}

/// Optimality residuals of an iterate `(w, b, e)`.
///
/// `r1_inf` is the stationarity residual of the filter and bias, `r2_max` the
/// largest `|e + 1 - y*f|` over samples with positive slack and `r3_max` the
/// largest signed `y*f - 1` over samples with zero slack. Discarded samples
/// are excluded from all three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub r1_inf: f64,
    pub r2_max: f64,
    pub r3_max: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.r1_inf.max(self.r2_max).max(self.r3_max)
    }

    pub fn converged(&self, epsilon: f64) -> bool {
        self.max() <= epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
    /// Squared-hinge objective `|w|^2 + C * sum_labeled max(0, 1 - y*f)^2`.
    pub objective: f64,
}

/// A learned model together with how the solve went.
#[derive(Debug, Clone)]
pub struct Solution<F> {
    pub filter: F,
    /// Slack the reported residuals were measured against.
    pub slack: RealGrid,
    pub report: SolveReport,
}

/// State after one pass: the slack and targets that produced the weights.
#[derive(Debug, Clone)]
pub struct TraceStep<S> {
    /// `e`, zero at discarded samples.
    pub slack: RealGrid,
    /// `q`, holding the free targets at discarded samples.
    pub targets: RealGrid,
    pub bias: f64,
    pub weights: S,
}

pub type Trace<S> = Vec<TraceStep<S>>;

/// Starting point and bookkeeping switches for a solve.
#[derive(Debug, Clone)]
pub struct SolveOptions<'a, F> {
    pub warm_start: Option<&'a F>,
    pub record_trace: bool,
}

impl<F> Default for SolveOptions<'_, F> {
    fn default() -> Self {
        Self {
            warm_start: None,
            record_trace: false,
        }
    }
}

/// What a concrete solver contributes to the shared loop.
pub(crate) trait AlternatingModel {
    type Snapshot: Clone;

    /// Decision values without bias for every circulant sample.
    fn outputs(&self) -> Result<RealGrid>;

    /// Solves the regularized least-squares fit to `p` over all samples.
    fn refit(&mut self, p: &RealGrid) -> Result<()>;

    /// `|w|^2` in whatever space the model lives in.
    fn regularizer(&self) -> f64;

    /// Upper bound on `|r1|_inf / C` when the only stationarity defect comes
    /// from the discarded samples' targets lagging the outputs by `delta`.
    fn drift_residual(&self, delta: &RealGrid) -> f64;

    fn snapshot(&self) -> Self::Snapshot;
}

/// `|w|^2 + C * sum over labeled samples of max(0, 1 - y*f)^2`.
pub fn squared_hinge_objective(regularizer: f64, outputs: &RealGrid, labels: &LabelGrid, c: f64) -> f64 {
    let loss: f64 = outputs
        .iter()
        .zip(labels.as_slice())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&f, &y)| {
            let slack = (1.0 - y * f).max(0.0);
            slack * slack
        })
        .sum();
    regularizer + c * loss
}

/// Residuals `r2`, `r3` of slack `e` against decision values `f`.
pub(crate) fn slack_residuals(outputs: &RealGrid, slack: &RealGrid, labels: &LabelGrid) -> (f64, f64) {
    let mut r2 = 0.0f64;
    let mut r3 = f64::NEG_INFINITY;
    for ((&f, &e), &y) in outputs.iter().zip(slack.iter()).zip(labels.as_slice()) {
        if y == 0.0 {
            continue;
        }
        if e > 0.0 {
            r2 = r2.max((e + 1.0 - y * f).abs());
        } else {
            r3 = r3.max(y * f - 1.0);
        }
    }
    if r3 == f64::NEG_INFINITY {
        r3 = 0.0;
    }
    (r2, r3)
}

pub(crate) fn run<M: AlternatingModel>(
    model: &mut M,
    bias: &mut f64,
    labels: &LabelGrid,
    cfg: &SolverConfig,
    record_trace: bool,
) -> Result<(SolveReport, RealGrid, Option<Trace<M::Snapshot>>)> {
    cfg.validate()?;
    let mut f = model.outputs()?;
    f.as_mut_slice().iter_mut().for_each(|v| *v += *bias);
    let (mut slack, mut targets) = slack_and_targets(&f, labels);
    let mut mixer = (cfg.anderson_memory > 0).then(|| Anderson::new(cfg.anderson_memory));
    let mut last_objective = f64::INFINITY;
    // lowest objective seen while mixing and the plain image of that point
    let mut best_image: Option<(f64, RealGrid)> = None;
    let mut trace = record_trace.then(Vec::new);
    let mut updates = 0usize;

    loop {
        *bias = targets.mean();
        let p = targets.map(|q| q - *bias);
        model.refit(&p)?;
        updates += 1;
        if let Some(trace) = trace.as_mut() {
            trace.push(TraceStep {
                slack: slack.clone(),
                targets: targets.clone(),
                bias: *bias,
                weights: model.snapshot(),
            });
        }

        f = model.outputs()?;
        f.as_mut_slice().iter_mut().for_each(|v| *v += *bias);
        let (next_slack, next_targets) = slack_and_targets(&f, labels);
        let objective = squared_hinge_objective(model.regularizer(), &f, labels, cfg.c);

        let anderson = mixer.is_some();
        let residuals = if anderson {
            // (w, b) fits `targets` exactly, so against the slack implied by
            // `f` the whole stationarity defect is the target mismatch.
            let delta = targets.zip_map(&next_targets, |a, b| a - b)?;
            let (r2_max, r3_max) = slack_residuals(&f, &next_slack, labels);
            Residuals {
                r1_inf: cfg.c * model.drift_residual(&delta),
                r2_max,
                r3_max,
            }
        } else {
            loop_residuals(model, &f, &slack, &targets, labels, cfg.c)
        };
        let converged = residuals.converged(cfg.epsilon);
        if converged || updates >= cfg.max_iter {
            if !converged {
                log::debug!(
                    "alternating solve stopped after {updates} passes with residual {:.3e} > {:.3e}",
                    residuals.max(),
                    cfg.epsilon
                );
            }
            let report = SolveReport {
                iterations: updates,
                converged,
                residuals,
                objective,
            };
            let slack = if anderson { next_slack } else { slack };
            return Ok((report, slack, trace));
        }

        if mixer.is_some() && best_image.as_ref().is_none_or(|(best, _)| objective < *best) {
            best_image = Some((objective, next_targets.clone()));
        }
        match mixer.as_mut() {
            Some(mixer) => {
                if mixer.cooldown > 0 {
                    mixer.cooldown -= 1;
                    targets = next_targets;
                } else if mixer.stalled(&targets, &next_targets) {
                    // resume from the best point seen, so a mixing phase that
                    // went nowhere cannot undo the plain progress before it
                    mixer.restart();
                    targets = best_image.take().map_or(next_targets, |(_, image)| image);
                } else if objective <= last_objective * (1.0 + 1e-12) {
                    targets = mixer.mix(&targets, &next_targets);
                } else {
                    // extrapolation overshot; fall back to a plain step
                    mixer.reject();
                    targets = next_targets;
                }
            }
            None => targets = next_targets,
        }
        last_objective = objective;
        slack = next_slack;
    }
}

/// `e = max(y*f - 1, 0)` and `q = y + y*e` at labeled samples; `e = 0`, `q = f`
/// at discarded ones.
fn slack_and_targets(f: &RealGrid, labels: &LabelGrid) -> (RealGrid, RealGrid) {
    let (rows, cols) = f.shape();
    let mut slack = RealGrid::zeros(rows, cols);
    let mut targets = RealGrid::zeros(rows, cols);
    for (i, (&y, &fi)) in labels.as_slice().iter().zip(f.iter()).enumerate() {
        if y == 0.0 {
            targets.as_mut_slice()[i] = fi;
        } else {
            let e = (y * fi - 1.0).max(0.0);
            slack.as_mut_slice()[i] = e;
            targets.as_mut_slice()[i] = y + y * e;
        }
    }
    (slack, targets)
}

/// Steps without a new low in `|g - q|` before mixing is restarted.
const STALL_WINDOW: usize = 50;
/// Longest run of plain steps a restart schedules.
const MAX_PLAIN_RUN: usize = 1024;
/// Smallest fraction of the extrapolation an overshoot can shrink it to.
const MIN_STEP: f64 = 1.0 / 64.0;

/// Type-II Anderson mixing for the fixed-point map on the target vector.
struct Anderson {
    memory: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    d_residual: VecDeque<Vec<f64>>,
    d_image: VecDeque<Vec<f64>>,
    /// Smallest fixed-point residual `|g - q|` since the last restart.
    best: f64,
    /// Mixed steps since `best` last improved.
    stall: usize,
    /// Fraction of the extrapolation applied. Halved on every overshoot and
    /// doubled back on every mixed step.
    step: f64,
    /// Plain steps left before mixing resumes.
    cooldown: usize,
    /// Length of the next cooldown; doubles with every restart up to
    /// `MAX_PLAIN_RUN`.
    plain_run: usize,
}

impl Anderson {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            last: None,
            d_residual: VecDeque::new(),
            d_image: VecDeque::new(),
            best: f64::INFINITY,
            stall: 0,
            step: 1.0,
            cooldown: 0,
            plain_run: memory,
        }
    }

    fn reset(&mut self) {
        self.last = None;
        self.d_residual.clear();
        self.d_image.clear();
    }

    /// Whether `|g - q|` has gone `STALL_WINDOW` mixed steps without a new low.
    ///
    /// The overshoot check alone lets mixing fall into a cycle: a mixed step
    /// overshoots, the plain step that follows restores the objective, and
    /// the rebuilt history extrapolates into the same overshoot again.
    fn stalled(&mut self, q: &RealGrid, g: &RealGrid) -> bool {
        let norm = g.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if norm < self.best {
            self.best = norm;
            self.stall = 0;
            return false;
        }
        self.stall += 1;
        self.stall >= STALL_WINDOW
    }

    fn reject(&mut self) {
        self.reset();
        self.step = (self.step * 0.5).max(MIN_STEP);
    }

    /// Clears the history and runs plain steps for a while, longer each time.
    fn restart(&mut self) {
        self.reset();
        self.best = f64::INFINITY;
        self.stall = 0;
        self.cooldown = self.plain_run;
        self.plain_run = (self.plain_run * 2).min(MAX_PLAIN_RUN);
    }

    /// Next iterate given the current point `q` and its image `g`.
    fn mix(&mut self, q: &RealGrid, g: &RealGrid) -> RealGrid {
        let residual: Vec<f64> = g.iter().zip(q.iter()).map(|(a, b)| a - b).collect();
        let image = g.as_slice().to_vec();
        if let Some((r0, g0)) = self.last.take() {
            self.d_residual.push_back(residual.iter().zip(&r0).map(|(a, b)| a - b).collect());
            self.d_image.push_back(image.iter().zip(&g0).map(|(a, b)| a - b).collect());
            if self.d_residual.len() > self.memory {
                self.d_residual.pop_front();
                self.d_image.pop_front();
            }
        }
        let m = self.d_residual.len();
        let mut out = g.clone();
        if m > 0 {
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let mut gram = DMatrix::from_fn(m, m, |i, j| dot(&self.d_residual[i], &self.d_residual[j]));
            let rhs = DVector::from_fn(m, |i, _| dot(&self.d_residual[i], &residual));
            let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
            for i in 0..m {
                gram[(i, i)] += 1e-12 * scale + f64::MIN_POSITIVE;
            }
            match gram.cholesky() {
                Some(chol) => {
                    let gamma = chol.solve(&rhs) * self.step;
                    self.step = (self.step * 2.0).min(1.0);
                    for (k, dg) in self.d_image.iter().enumerate() {
                        for (o, d) in out.as_mut_slice().iter_mut().zip(dg) {
                            *o -= gamma[k] * d;
                        }
                    }
                }
                None => self.reset(),
            }
        }
        self.last = Some((residual, image));
        out
    }
}

fn loop_residuals<M: AlternatingModel>(
    model: &M,
    f: &RealGrid,
    slack: &RealGrid,
    targets: &RealGrid,
    labels: &LabelGrid,
    c: f64,
) -> Residuals {
    let (r2_max, r3_max) = slack_residuals(f, slack, labels);
    // The last refit solved the stationarity equations exactly for the full
    // target vector, so the only defect left is at discarded samples.
    let r1_inf = if labels.masked() == 0 {
        0.0
    } else {
        let delta = RealGrid::from_fn(f.rows(), f.cols(), |r, col| {
            if labels.values()[(r, col)] == 0.0 {
                f[(r, col)] - targets[(r, col)]
            } else {
                0.0
            }
        });
        c * model.drift_residual(&delta)
    };
    Residuals {
        r1_inf,
        r2_max,
        r3_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 1e-3, 10).is_err());
        assert!(SolverConfig::new(1.0, 0.0, 10).is_err());
        assert!(SolverConfig::new(1.0, 1e-3, 0).is_err());
        assert!(SolverConfig::new(1.0, f64::INFINITY, 1).is_ok());
    }

    #[test]
    fn tracking_tolerance_scales_with_labels() {
        let cfg = SolverConfig::for_tracking(400);
        assert!((cfg.epsilon - 0.02).abs() < 1e-15);
        assert_eq!(cfg.c, 1e4);
        assert_eq!(cfg.max_iter, 100);
    }

    #[test]
    fn objective_ignores_discarded_samples() {
        let labels = LabelGrid::from_values(RealGrid::new(1, 3, vec![1.0, 0.0, -1.0]).unwrap()).unwrap();
        let f = RealGrid::new(1, 3, vec![0.5, 100.0, -2.0]).unwrap();
        assert!((squared_hinge_objective(2.0, &f, &labels, 3.0) - (2.0 + 3.0 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn slack_residual_signs() {
        let labels = LabelGrid::from_values(RealGrid::new(1, 3, vec![1.0, -1.0, 1.0]).unwrap()).unwrap();
        let f = RealGrid::new(1, 3, vec![0.0, 0.0, 3.0]).unwrap();
        let e = RealGrid::new(1, 3, vec![0.0, 0.0, 1.5]).unwrap();
        let (r2, r3) = slack_residuals(&f, &e, &labels);
        assert_eq!(r2, 0.5);
        assert_eq!(r3, -1.0);
    }

    #[test]
    fn mixing_escapes_overshoot_cycles() {
        // Without the stall restart this instance settles into a
        // mix/overshoot cycle and never converges.
        use crate::labeling::Thresholds;
        use crate::synthetic::{instance_labels, random_grid, rng};
        let labels = instance_labels(6, 6, Thresholds::SCF).unwrap();
        let x = random_grid(&mut rng(11470569871279385567), 6, 6);
        let cfg = SolverConfig::for_oracle(10f64.powf(2.0552341968409467));
        let sol = crate::scf::solve_scf(&x, &labels, &cfg).unwrap();
        assert!(sol.report.converged, "{:?}", sol.report);
        assert!(sol.report.iterations < 5_000, "{} iterations", sol.report.iterations);
    }
}
