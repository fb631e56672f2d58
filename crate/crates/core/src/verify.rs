//! Seeded verification suites comparing the spectral solvers with the dense
//! references and checking tracking and metric behaviour on fixtures.
//!
//! Every check reports a deterministic one-line detail. Wall time is kept
//! apart in [`Check::elapsed`] so reports can be compared across runs.

use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{aggregate, center_error, iou, precision_curve, success_curve, OpeResult, Sequence};
use crate::features::FeatureStack;
use crate::kscf::{kernel_correlation, solve_kscf, KernelSpec};
use crate::labeling::{LabelGrid, Thresholds};
use crate::mscf::{sherman_morrison_residual, solve_mscf, transform_stack, update_filter_mc};
use crate::oracle::{
    appendix_quantities, circulant_defect, explicit_kernel_matrix, naive_idft2, solve_dense_kernel_qp,
    solve_dense_qp, verify_qlinear, DenseProblem,
};
use crate::scf::{self, solve_scf, solve_scf_in};
use crate::solver::{SolveOptions, SolverConfig};
use crate::spectral::{Fft2, RealGrid};
use crate::synthetic::{cyclic_shift_case, instance_labels, random_grid, random_stack, rng, zoom_sequence};
use crate::tracker::{BBox, Tracker, TrackerConfig, Variant, DEFAULT_SCALE_POOL};

/// Weight tolerance, relative to `1 + |w|_inf`.
pub const WEIGHT_TOLERANCE: f64 = 1e-4;
pub const OBJECTIVE_TOLERANCE: f64 = 1e-6;
pub const SOLVER_TIME_LIMIT_S: f64 = 30.0;
pub const SHERMAN_MORRISON_TOLERANCE: f64 = 1e-10;
pub const KERNEL_MATRIX_TOLERANCE: f64 = 1e-10;
pub const ZOOM_HIT_RATE: f64 = 0.9;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<f64>,
    /// First failing instance, enough to rebuild it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<serde_json::Value>,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
            elapsed: None,
            replay: None,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Solver,
    Kernel,
    Convergence,
    Metrics,
    Tracking,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "solver" => Suite::Solver,
            "kernel" => Suite::Kernel,
            "convergence" => Suite::Convergence,
            "metrics" => Suite::Metrics,
            "tracking" => Suite::Tracking,
            "all" => Suite::All,
            _ => return Err(Error::param(format!("unknown suite '{s}'"))),
        })
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Solver | Suite::All) {
        checks.push(solver_equivalence(seed, 50)?);
        checks.push(multichannel_equivalence(seed, 20)?);
    }
    if matches!(suite, Suite::Kernel | Suite::All) {
        checks.push(kernel_correctness(seed, 20)?);
    }
    if matches!(suite, Suite::Convergence | Suite::All) {
        checks.extend(convergence_rate(seed, 20)?);
    }
    if matches!(suite, Suite::Metrics | Suite::All) {
        checks.push(metrics_fixtures()?);
    }
    if matches!(suite, Suite::Tracking | Suite::All) {
        checks.extend(tracking_sanity(seed)?);
    }
    Ok(checks)
}

fn grid_json(g: &RealGrid) -> serde_json::Value {
    json!({ "rows": g.rows(), "cols": g.cols(), "values": g.as_slice() })
}

fn stack_json(x: &FeatureStack) -> serde_json::Value {
    serde_json::Value::Array(x.channels().iter().map(grid_json).collect())
}

struct Worst {
    dw: f64,
    gap: f64,
    replay: Option<serde_json::Value>,
}

impl Worst {
    fn new() -> Self {
        Self {
            dw: 0.0,
            gap: 0.0,
            replay: None,
        }
    }

    fn record(&mut self, dw: f64, gap: f64, replay: impl FnOnce() -> serde_json::Value) {
        self.dw = self.dw.max(dw);
        self.gap = self.gap.max(gap);
        if (dw > WEIGHT_TOLERANCE || gap > OBJECTIVE_TOLERANCE) && self.replay.is_none() {
            self.replay = Some(replay());
        }
    }
}

fn weight_gap(spectral: &[f64], dense: &[f64]) -> f64 {
    let scale = 1.0 + dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    spectral.iter().zip(dense).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Single-channel solver against the dense QP on 8x8 instances, C in {1, 1e4}.
pub fn solver_equivalence(seed: u64, instances: usize) -> Result<Check> {
    let start = Instant::now();
    let labels = instance_labels(8, 8, Thresholds::SCF)?;
    let mut rng = rng(seed);
    let mut worst = Worst::new();
    let mut unconverged = 0;
    for index in 0..instances {
        let x = random_grid(&mut rng, 8, 8);
        for c in [1.0, 1e4] {
            let sol = solve_scf(&x, &labels, &SolverConfig::for_oracle(c))?;
            let dense = solve_dense_qp(&DenseProblem::from_grid(&x, &labels, c)?)?;
            let w = naive_idft2(&sol.filter.w_hat)?;
            let mut spectral = w.into_vec();
            spectral.push(sol.filter.bias);
            let mut reference: Vec<f64> = dense.w.iter().copied().collect();
            reference.push(dense.bias);
            unconverged += usize::from(!sol.report.converged);
            worst.record(weight_gap(&spectral, &reference), relative_gap(sol.report.objective, dense.objective), || {
                json!({ "seed": seed, "index": index, "c": c, "x": grid_json(&x) })
            });
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut check = Check::new(
        "solver-oracle equivalence",
        worst.replay.is_none() && elapsed < SOLVER_TIME_LIMIT_S,
        format!(
            "{instances} instances x C in {{1, 1e4}}: max |dw|/(1+|w|) = {:.2e} (<= {WEIGHT_TOLERANCE:.0e}), max objective gap = {:.2e} (<= {OBJECTIVE_TOLERANCE:.0e}), {unconverged} solves hit the iteration cap",
            worst.dw, worst.gap
        ),
    );
    check.elapsed = Some(elapsed);
    check.replay = worst.replay;
    Ok(check)
}

/// Multi-channel solver against the channel-concatenated dense QP on 6x6
/// instances with two or three channels, plus the per-frequency solve residual.
pub fn multichannel_equivalence(seed: u64, instances: usize) -> Result<Check> {
    let start = Instant::now();
    let labels = instance_labels(6, 6, Thresholds::SCF)?;
    let fft = Fft2::new(6, 6);
    let mut rng = rng(seed.wrapping_add(1));
    let mut worst = Worst::new();
    let mut worst_sm = 0.0f64;
    for index in 0..instances {
        let channels = 2 + index % 2;
        let x = random_stack(&mut rng, channels, 6, 6);
        let x_hat = transform_stack(&fft, &x)?;
        for c in [1.0, 1e4] {
            let sol = solve_mscf(&x, &labels, &SolverConfig::for_oracle(c))?;
            let dense = solve_dense_qp(&DenseProblem::from_stack(&x, &labels, c)?)?;
            let mut spectral = Vec::new();
            for w_hat in &sol.filter.w_hat {
                spectral.extend(naive_idft2(w_hat)?.into_vec());
            }
            spectral.push(sol.filter.bias);
            let mut reference: Vec<f64> = dense.w.iter().copied().collect();
            reference.push(dense.bias);
            worst.record(weight_gap(&spectral, &reference), relative_gap(sol.report.objective, dense.objective), || {
                json!({ "seed": seed, "index": index, "c": c, "x": stack_json(&x) })
            });
            let r_hat = fft.forward(&random_grid(&mut rng, 6, 6))?;
            let w_hat = update_filter_mc(&x_hat, &r_hat, c, crate::spectral::DIVISION_FLOOR)?;
            worst_sm = worst_sm.max(sherman_morrison_residual(&x_hat, &w_hat, &r_hat, c)?);
        }
    }
    let passed = worst.replay.is_none() && worst_sm <= SHERMAN_MORRISON_TOLERANCE;
    let mut check = Check::new(
        "multi-channel equivalence",
        passed,
        format!(
            "{instances} instances, L in {{2, 3}}, C in {{1, 1e4}}: max |dw|/(1+|w|) = {:.2e}, max objective gap = {:.2e}, max per-frequency solve residual = {worst_sm:.2e} (<= {SHERMAN_MORRISON_TOLERANCE:.0e})",
            worst.dw, worst.gap
        ),
    );
    check.elapsed = Some(start.elapsed().as_secs_f64());
    check.replay = worst.replay;
    Ok(check)
}

/// Kernel matrix structure and kernel solver against the dense dual QP on
/// 5x5 two-channel instances.
pub fn kernel_correctness(seed: u64, instances: usize) -> Result<Check> {
    let start = Instant::now();
    let labels = instance_labels(5, 5, Thresholds::SCF)?;
    let mut rng = rng(seed.wrapping_add(2));
    let (mut defect, mut row_gap, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut replay = None;
    for index in 0..instances {
        let x = random_stack(&mut rng, 2, 5, 5);
        for spec in [KernelSpec::Gaussian { sigma: 0.2 }, KernelSpec::Polynomial { degree: 2 }] {
            let k = explicit_kernel_matrix(&x, spec)?;
            let d = circulant_defect(&k, 5, 5);
            let row = kernel_correlation(&x, &x, spec)?;
            let rg = row.iter().enumerate().fold(0.0f64, |m, (j, v)| m.max((k[(0, j)] - v).abs()));
            let mut g = 0.0f64;
            for c in [1.0, 1e4] {
                let sol = solve_kscf(&x, &labels, spec, &SolverConfig::for_oracle(c))?;
                let dense = solve_dense_kernel_qp(&k, labels.as_slice(), c)?;
                g = g.max(relative_gap(sol.report.objective, dense.objective));
            }
            if (d > KERNEL_MATRIX_TOLERANCE || rg > KERNEL_MATRIX_TOLERANCE || g > OBJECTIVE_TOLERANCE) && replay.is_none() {
                replay = Some(json!({ "seed": seed, "index": index, "kernel": spec, "x": stack_json(&x) }));
            }
            defect = defect.max(d);
            row_gap = row_gap.max(rg);
            gap = gap.max(g);
        }
    }
    let mut check = Check::new(
        "kernel correctness",
        replay.is_none(),
        format!(
            "{instances} instances x {{gaussian 0.2, polynomial 2}} x C in {{1, 1e4}}: circulant defect = {defect:.2e}, first-row gap = {row_gap:.2e} (<= {KERNEL_MATRIX_TOLERANCE:.0e}), max objective gap = {gap:.2e} (<= {OBJECTIVE_TOLERANCE:.0e})"
        ),
    );
    check.elapsed = Some(start.elapsed().as_secs_f64());
    check.replay = replay;
    Ok(check)
}

/// Fixed-point analysis on 6x6 instances with the plain alternating solver:
/// spectral radius of the iteration matrix, the two contraction conditions
/// along the iterates, and the residual at termination.
pub fn convergence_rate(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let start = Instant::now();
    let labels: LabelGrid = instance_labels(6, 6, Thresholds::SCF)?;
    let fft = Fft2::new(6, 6);
    let mut rng = rng(seed.wrapping_add(3));
    let (mut worst_rho, mut worst_deflated) = (0.0f64, 0.0f64);
    let (mut state_excess, mut weight_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut worst_residual, mut iterations) = (0.0f64, 0usize);
    let mut replay = None;
    let mut residual_ok = true;
    let epsilon = 1e-6;
    for index in 0..instances {
        let x = random_grid(&mut rng, 6, 6);
        let c = if index % 2 == 0 { 1.0 } else { 10.0 };
        let problem = DenseProblem::from_grid(&x, &labels, c)?;
        let q = appendix_quantities(&problem)?;
        let optimum = q.optimal_point(&solve_dense_qp(&problem)?);
        let cfg = SolverConfig {
            anderson_memory: 0,
            ..SolverConfig::new(c, epsilon, 100_000)?
        };
        let opts = SolveOptions {
            warm_start: None,
            record_trace: true,
        };
        let (sol, trace) = solve_scf_in(&fft, &x, &labels, &cfg, &opts)?;
        let points = q.trace_points(&trace.expect("trace was requested"))?;
        let report = verify_qlinear(&points, &optimum, &q)?;
        let exact = scf::residuals(&fft, &fft.forward(&x)?, &sol.filter, &labels, &sol.slack, c)?;
        let ok = sol.report.converged && exact.max() <= epsilon;
        residual_ok &= ok;
        if (!ok || !report.state_condition_holds() || !report.weight_condition_holds()) && replay.is_none() {
            replay = Some(json!({ "seed": seed, "index": index, "c": c, "x": grid_json(&x) }));
        }
        worst_rho = worst_rho.max(q.spectral_radius);
        worst_deflated = worst_deflated.max(q.deflated_radius);
        state_excess = state_excess.max(report.worst_state_excess);
        weight_excess = weight_excess.max(report.worst_weight_excess);
        worst_residual = worst_residual.max(exact.max());
        iterations = iterations.max(sol.report.iterations);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let radius_ok = worst_rho < 1.0 - 1e-9;
    let slack = crate::oracle::QLINEAR_SLACK;
    let mut checks = vec![
        Check::new(
            "spectral radius below one",
            radius_ok,
            format!("{instances} instances, C in {{1, 10}}: max rho(T) = {worst_rho:.12}, max rho(T) off the sign direction = {worst_deflated:.6}"),
        ),
        Check::new(
            "contraction conditions",
            state_excess <= slack && weight_excess <= slack,
            format!("max state excess = {state_excess:.2e}, max weight excess = {weight_excess:.2e} (<= {slack:.0e})"),
        ),
        Check::new(
            "residual at termination",
            residual_ok,
            format!("max exact residual = {worst_residual:.2e} (<= {epsilon:.0e}), up to {iterations} iterations"),
        ),
    ];
    checks[0].elapsed = Some(elapsed);
    checks[1].replay = replay;
    Ok(checks)
}

/// Hand-computed values for the box metrics, curves and aggregation.
pub fn metrics_fixtures() -> Result<Check> {
    let b = |x, y, w, h| BBox::new(x, y, w, h);
    let mut failures: Vec<&str> = Vec::new();
    let unit = b(0.0, 0.0, 1.0, 1.0)?;
    if center_error(&unit, &unit) != 0.0 || iou(&unit, &unit) != 1.0 {
        failures.push("identical boxes");
    }
    if iou(&unit, &b(3.0, 3.0, 1.0, 1.0)?) != 0.0 {
        failures.push("disjoint boxes");
    }
    if iou(&b(0.0, 0.0, 2.0, 1.0)?, &b(1.0, 0.0, 2.0, 1.0)?) != 1.0 / 3.0 {
        failures.push("half-overlap IoU");
    }
    if center_error(&unit, &b(3.0, 4.0, 1.0, 1.0)?) != 5.0 {
        failures.push("3-4-5 center error");
    }
    let gt = vec![b(10.0, 10.0, 20.0, 20.0)?; 4];
    let shifted = vec![b(35.0, 10.0, 20.0, 20.0)?; 4];
    let p = precision_curve(&shifted, &gt);
    if p.iter().any(|&(t, v)| v != if t >= 25.0 { 1.0 } else { 0.0 }) {
        failures.push("precision step at 25 px");
    }
    let frames = gt.iter().map(|_| crate::features::Frame::from_fn(4, 4, 1, |_, _, _| 0.0)).collect::<Result<Vec<_>>>()?;
    let seq = Sequence::new("fixture", crate::evaluation::FrameSource::Memory(frames), gt.clone())?;
    let perfect = OpeResult::from_boxes(&seq, gt.clone())?;
    if perfect.dp20 != 1.0 || perfect.auc != 1.0 {
        failures.push("perfect prediction");
    }
    let half = vec![gt[0], gt[1], shifted[2], shifted[3]];
    let s = success_curve(&half, &gt);
    if s[0].1 != 1.0 || s[1..].iter().any(|v| v.1 != 0.5) {
        failures.push("success curve");
    }
    let mixed = OpeResult::from_boxes(&seq, half)?;
    let summary = aggregate(&[perfect.clone(), OpeResult::from_boxes(&seq, shifted)?])?;
    if mixed.dp20 != 0.5 || summary.mean_dp != 0.5 || aggregate(std::slice::from_ref(&perfect))?.mean_auc != 1.0 {
        failures.push("aggregation");
    }
    Ok(Check::new(
        "metrics fixtures",
        failures.is_empty(),
        if failures.is_empty() {
            "center error, IoU, curves and aggregation match hand-computed values".to_string()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    ))
}

/// Windowless raw single-channel tracker preset used by the sanity checks.
pub fn sanity_config(variant: Variant) -> TrackerConfig {
    TrackerConfig {
        window: false,
        ..TrackerConfig::preset(variant)
    }
}

/// Fraction of zoom frames on which the scale-adaptive tracker picks a pool
/// factor within one step of the true per-frame zoom.
pub fn zoom_hit_rate(cfg: &TrackerConfig, seeds: std::ops::Range<u64>, frames: usize, rate: f64) -> Result<(usize, usize)> {
    let truth = DEFAULT_SCALE_POOL
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - rate).abs().total_cmp(&(b.1 - rate).abs()))
        .map(|(i, _)| i)
        .expect("pool is non-empty");
    let (mut hits, mut total) = (0, 0);
    for seed in seeds {
        let seq = zoom_sequence(seed, 200, frames, rate, 50.0)?;
        let mut tracker = Tracker::init(&seq.frames[0], seq.groundtruth[0], cfg.clone())?;
        for frame in &seq.frames[1..] {
            let step = tracker.step(frame)?;
            let picked = DEFAULT_SCALE_POOL.iter().position(|&s| s == step.scale_factor).expect("factor comes from the pool");
            hits += usize::from(picked.abs_diff(truth) <= 1);
            total += 1;
        }
    }
    Ok((hits, total))
}

/// Cyclic-shift recovery, zoom selection and perfect-prediction scoring.
pub fn tracking_sanity(seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let (mut exact, mut total) = (0, 0);
    let mut replay = None;
    for case_index in 0..10 {
        let case = cyclic_shift_case(seed.wrapping_add(case_index), 64, 5)?;
        for (frame, d) in &case.shifted {
            let mut tracker = Tracker::init(&case.base, case.bbox, sanity_config(Variant::Scf))?;
            let step = tracker.step(frame)?;
            total += 1;
            if step.cell_shift == *d && step.displacement == (d.0 as f64, d.1 as f64) {
                exact += 1;
            } else if replay.is_none() {
                replay = Some(json!({ "seed": seed.wrapping_add(case_index), "shift": [d.0, d.1], "decoded": [step.cell_shift.0, step.cell_shift.1] }));
            }
        }
    }
    let mut shift = Check::new(
        "cyclic-shift recovery",
        exact == total,
        format!("{exact}/{total} displacements recovered exactly (64x64 raw, no window, |d| < 16)"),
    );
    shift.replay = replay;
    shift.elapsed = Some(start.elapsed().as_secs_f64());

    let start = Instant::now();
    let (hits, frames) = zoom_hit_rate(&sanity_config(Variant::Skscf), seed..seed + 3, 30, 1.015)?;
    let rate = hits as f64 / frames as f64;
    let mut zoom = Check::new(
        "zoom scale selection",
        rate >= ZOOM_HIT_RATE,
        format!("{hits}/{frames} frames within one pool step of 1.015 (need >= {:.0}%, no window)", 100.0 * ZOOM_HIT_RATE),
    );
    zoom.elapsed = Some(start.elapsed().as_secs_f64());

    let gt: Vec<BBox> = (0..5).map(|i| BBox::new(3.0 * i as f64, 2.0, 30.0, 20.0)).collect::<Result<_>>()?;
    let frames = gt.iter().map(|_| crate::features::Frame::from_fn(8, 8, 1, |_, _, _| 0.0)).collect::<Result<Vec<_>>>()?;
    let seq = Sequence::new("perfect", crate::evaluation::FrameSource::Memory(frames), gt.clone())?;
    let r = OpeResult::from_boxes(&seq, gt)?;
    let perfect = Check::new(
        "perfect-prediction scores",
        r.dp20 == 1.0 && r.auc == 1.0,
        format!("DP@20 = {}, AUC = {}", r.dp20, r.auc),
    );
    Ok(vec![shift, zoom, perfect])
}
