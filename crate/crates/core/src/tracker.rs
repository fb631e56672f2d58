//! Online tracking: detect on the response map, re-train at the new location
//! and interpolate the model.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_window, extract_patch, ColorTable, FeatureKind, FeatureStack, Frame, PatchSpec};
use crate::kscf::{self, DualFilter, KernelSpec};
use crate::labeling::{adaptive_alpha, assign_labels, confidence_map_with_spacing, LabelGrid, Thresholds};
use crate::mscf::{self, MultiFilter};
use crate::scf::{self, SupportFilter};
use crate::solver::{SolveOptions, SolveReport, SolverConfig};
use crate::spectral::{Fft2, RealGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Scf,
    Mscf,
    Kscf,
    Skscf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Scf, Variant::Mscf, Variant::Kscf, Variant::Skscf];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Scf => "scf",
            Variant::Mscf => "mscf",
            Variant::Kscf => "kscf",
            Variant::Skscf => "skscf",
        }
    }

    pub fn is_kernel(self) -> bool {
        matches!(self, Variant::Kscf | Variant::Skscf)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown variant '{s}' (expected scf, mscf, kscf or skscf)")))
    }
}

/// Axis-aligned box, top-left corner plus size, in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::param(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    /// `(row, col)` of the center.
    pub fn center(&self) -> (f64, f64) {
        (self.y + self.h / 2.0, self.x + self.w / 2.0)
    }

    pub fn from_center(center: (f64, f64), h: f64, w: f64) -> Self {
        Self {
            x: center.1 - w / 2.0,
            y: center.0 - h / 2.0,
            w,
            h,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub variant: Variant,
    pub features: FeatureKind,
    /// Interpolation weight of the newly trained model.
    pub adaption_rate: f64,
    /// Search region size relative to the target.
    pub padding: f64,
    /// Scale factors searched each frame (only used by the scale-adaptive variant).
    pub scale_pool: Vec<f64>,
    pub thresholds: Thresholds,
    pub c: f64,
    /// Stopping threshold; `None` means `1e-3 * sqrt(labeled samples)`.
    pub epsilon: Option<f64>,
    pub init_max_iter: usize,
    pub online_max_iter: usize,
    #[serde(default)]
    pub anderson_memory: usize,
    pub kernel: KernelSpec,
    /// Confidence decay; `None` means `50 / (target height * target width)`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub window: bool,
    /// Bounds on the search region area after resampling, in patch pixels.
    pub min_patch_area: f64,
    pub max_patch_area: f64,
    /// Color-name table; `None` uses the shipped one.
    #[serde(default)]
    pub color_table: Option<PathBuf>,
}

pub const DEFAULT_SCALE_POOL: [f64; 7] = [0.985, 0.990, 0.995, 1.0, 1.005, 1.010, 1.015];

impl TrackerConfig {
    pub fn preset(variant: Variant) -> Self {
        let features = match variant {
            Variant::Scf => FeatureKind::Raw,
            _ => FeatureKind::HogCn,
        };
        let thresholds = match variant {
            Variant::Scf => Thresholds::SCF,
            Variant::Mscf => Thresholds::MSCF,
            Variant::Kscf | Variant::Skscf => Thresholds::KSCF,
        };
        let scale_pool = match variant {
            Variant::Skscf => DEFAULT_SCALE_POOL.to_vec(),
            _ => vec![1.0],
        };
        Self {
            variant,
            features,
            adaption_rate: default_adaption_rate(features),
            padding: 2.0,
            scale_pool,
            thresholds,
            c: 1e4,
            epsilon: None,
            init_max_iter: 100,
            online_max_iter: 10,
            anderson_memory: 0,
            kernel: KernelSpec::Gaussian { sigma: 0.2 },
            alpha: None,
            beta: 2.0,
            window: true,
            min_patch_area: 1600.0,
            max_patch_area: 10000.0,
            color_table: None,
        }
    }

    /// Switches the feature set and resets the adaption rate to its preset for it.
    pub fn with_features(mut self, features: FeatureKind) -> Self {
        self.features = features;
        self.adaption_rate = default_adaption_rate(features);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.adaption_rate > 0.0 && self.adaption_rate <= 1.0) {
            return Err(Error::param(format!("adaption rate must lie in (0, 1], got {}", self.adaption_rate)));
        }
        if !(self.padding >= 1.0 && self.padding.is_finite()) {
            return Err(Error::param(format!("padding must be at least 1, got {}", self.padding)));
        }
        if self.scale_pool.is_empty() || !self.scale_pool.contains(&1.0) {
            return Err(Error::param("scale pool must contain 1.0"));
        }
        if self.scale_pool.windows(2).any(|w| w[0] >= w[1]) || self.scale_pool.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::param("scale pool must be positive and strictly ascending"));
        }
        if self.variant != Variant::Skscf && self.scale_pool != [1.0] {
            return Err(Error::param(format!("variant {} does not search scales", self.variant)));
        }
        if self.variant == Variant::Scf && self.features.channels() != 1 {
            return Err(Error::VariantMismatch(format!(
                "scf is single-channel; feature set {:?} has {} channels",
                self.features,
                self.features.channels()
            )));
        }
        self.thresholds.validate()?;
        self.kernel.validate()?;
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::param(format!("alpha must be positive, got {a}")));
            }
        }
        if !(self.beta > 0.0) {
            return Err(Error::param(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.min_patch_area > 0.0 && self.min_patch_area <= self.max_patch_area) {
            return Err(Error::param("patch area bounds must satisfy 0 < min <= max"));
        }
        self.solver_config(1, self.init_max_iter)?;
        self.solver_config(1, self.online_max_iter)?;
        Ok(())
    }

    fn solver_config(&self, labeled: usize, max_iter: usize) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.c, self.epsilon.unwrap_or(SolverConfig::for_tracking(labeled).epsilon), max_iter)?;
        cfg.anderson_memory = self.anderson_memory;
        Ok(cfg)
    }
}

fn default_adaption_rate(features: FeatureKind) -> f64 {
    match features {
        FeatureKind::Raw => 0.075,
        _ => 0.02,
    }
}

/// A trained model of one of the three filter families.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(SupportFilter),
    Multi(MultiFilter),
    Dual(DualFilter),
}

impl Model {
    fn kind(&self) -> &'static str {
        match self {
            Model::Linear(_) => "single-channel",
            Model::Multi(_) => "multi-channel",
            Model::Dual(_) => "kernel",
        }
    }
}

/// `(1 - rho) * old + rho * new` on spectral coefficients, bias and (for
/// kernel models) the template.
pub fn blend(old: &Model, new: &Model, rho: f64) -> Result<Model> {
    let mix = |a: f64, b: f64| (1.0 - rho) * a + rho * b;
    match (old, new) {
        (Model::Linear(a), Model::Linear(b)) => Ok(Model::Linear(SupportFilter {
            w_hat: a.w_hat.zip_map(&b.w_hat, |x, y| x * (1.0 - rho) + y * rho)?,
            bias: mix(a.bias, b.bias),
        })),
        (Model::Multi(a), Model::Multi(b)) => {
            if a.num_channels() != b.num_channels() {
                return Err(Error::ChannelMismatch {
                    expected: a.num_channels(),
                    actual: b.num_channels(),
                });
            }
            let w_hat = a
                .w_hat
                .iter()
                .zip(&b.w_hat)
                .map(|(x, y)| x.zip_map(y, |p, q| p * (1.0 - rho) + q * rho))
                .collect::<Result<_>>()?;
            Ok(Model::Multi(MultiFilter {
                w_hat,
                bias: mix(a.bias, b.bias),
            }))
        }
        (Model::Dual(a), Model::Dual(b)) => {
            if a.template.num_channels() != b.template.num_channels() {
                return Err(Error::ChannelMismatch {
                    expected: a.template.num_channels(),
                    actual: b.template.num_channels(),
                });
            }
            let channels = a
                .template
                .channels()
                .iter()
                .zip(b.template.channels())
                .map(|(x, y)| x.zip_map(y, mix))
                .collect::<Result<_>>()?;
            Ok(Model::Dual(DualFilter {
                alpha_hat: a.alpha_hat.zip_map(&b.alpha_hat, |x, y| x * (1.0 - rho) + y * rho)?,
                bias: mix(a.bias, b.bias),
                template: FeatureStack::new(channels)?,
            }))
        }
        _ => Err(Error::VariantMismatch(format!("cannot blend a {} model with a {} model", old.kind(), new.kind()))),
    }
}

/// Object displacement in grid cells for a response peak at `peak`.
///
/// A peak at shift `u` means the content moved by `-u`; shifts are read
/// modulo the grid so the returned displacement lies in `(-n/2, n/2]` per axis.
pub fn decode_peak(peak: (usize, usize), shape: (usize, usize)) -> (isize, isize) {
    let axis = |p: usize, n: usize| {
        let d = ((n - p % n) % n) as isize;
        if 2 * d > n as isize {
            d - n as isize
        } else {
            d
        }
    };
    (axis(peak.0, shape.0), axis(peak.1, shape.1))
}

/// Response peak produced by a displacement; inverse of [`decode_peak`] on its range.
pub fn encode_displacement(d: (isize, isize), shape: (usize, usize)) -> (usize, usize) {
    let axis = |d: isize, n: usize| (-d).rem_euclid(n as isize) as usize;
    (axis(d.0, shape.0), axis(d.1, shape.1))
}

/// Largest entry; ties go to the smaller displacement, then row-major order.
pub fn response_peak(response: &RealGrid) -> (usize, usize, f64) {
    let shape = response.shape();
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    let mut best_mag = isize::MAX;
    for r in 0..shape.0 {
        for c in 0..shape.1 {
            let v = response[(r, c)];
            let (dy, dx) = decode_peak((r, c), shape);
            let mag = dy * dy + dx * dx;
            if v > best.2 || (v == best.2 && mag < best_mag) {
                best = (r, c, v);
                best_mag = mag;
            }
        }
    }
    best
}

/// Displacement read from a response map, plus the peak value.
///
/// The hinge loss lets every positive sample sit at the margin, so a well-fit
/// response is a plateau rather than a spike. The displacement is the
/// weighted centroid of the connected region around the strongest entry that
/// stays above the level halfway between that entry and the map mean, rounded
/// to the nearest cell with halves going toward zero.
pub fn locate_peak(response: &RealGrid) -> ((isize, isize), f64) {
    locate_peak_at(response, PEAK_LEVEL)
}

const PEAK_LEVEL: f64 = 0.5;

#[doc(hidden)]
pub fn locate_peak_at(response: &RealGrid, fraction: f64) -> ((isize, isize), f64) {
    let shape = response.shape();
    let (rows, cols) = (shape.0 as isize, shape.1 as isize);
    let (r0, c0, top) = response_peak(response);
    let level = top - fraction * (top - response.mean());
    let index = |dr: isize, dc: isize| {
        let r = (r0 as isize + dr).rem_euclid(rows) as usize;
        let c = (c0 as isize + dc).rem_euclid(cols) as usize;
        (r, c)
    };
    let mut seen = vec![false; response.len()];
    seen[r0 * shape.1 + c0] = true;
    let mut stack = vec![(0isize, 0isize)];
    let (mut mass, mut sr, mut sc) = (0.0, 0.0, 0.0);
    while let Some((dr, dc)) = stack.pop() {
        let w = response[index(dr, dc)] - level;
        mass += w;
        sr += w * dr as f64;
        sc += w * dc as f64;
        for (nr, nc) in [(dr - 1, dc), (dr + 1, dc), (dr, dc - 1), (dr, dc + 1)] {
            if 2 * nr.abs() > rows || 2 * nc.abs() > cols {
                continue;
            }
            let (ri, ci) = index(nr, nc);
            if !seen[ri * shape.1 + ci] && response[(ri, ci)] >= level {
                seen[ri * shape.1 + ci] = true;
                stack.push((nr, nc));
            }
        }
    }
    let (d0r, d0c) = decode_peak((r0, c0), shape);
    if !(mass > 0.0) {
        return ((d0r, d0c), top);
    }
    let round = |v: f64| {
        if (v - v.trunc()).abs() == 0.5 {
            v.trunc() as isize
        } else {
            v.round() as isize
        }
    };
    let wrap = |d: isize, n: isize| {
        let m = d.rem_euclid(n);
        if 2 * m > n {
            m - n
        } else {
            m
        }
    };
    // a peak offset by +o in index space is a displacement of -o
    let d = (wrap(round(d0r as f64 - sr / mass), rows), wrap(round(d0c as f64 - sc / mass), cols));
    (d, top)
}

/// What happened on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub bbox: BBox,
    /// Pool factor applied on this frame.
    pub scale_factor: f64,
    /// Center displacement in frame pixels, `(rows, cols)`.
    pub displacement: (f64, f64),
    /// Displacement in feature cells before conversion to pixels.
    pub cell_shift: (isize, isize),
    pub peak: f64,
    /// The center left the frame and was pulled back onto it.
    pub clamped: bool,
    pub solve: SolveReport,
}

pub struct Tracker {
    cfg: TrackerConfig,
    table: Arc<ColorTable>,
    model: Model,
    bbox: BBox,
    scale: f64,
    patch_size: (usize, usize),
    fft: Fft2,
    init_report: SolveReport,
}

impl std::fmt::Debug for Tracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracker")
            .field("variant", &self.cfg.variant)
            .field("bbox", &self.bbox)
            .field("scale", &self.scale)
            .field("patch_size", &self.patch_size)
            .finish()
    }
}

/// Patch pixel dimensions for a region: area brought into the configured
/// bounds, each side a positive multiple of the cell size.
fn canonical_patch(region: (f64, f64), cfg: &TrackerConfig) -> (usize, usize) {
    let area = region.0 * region.1;
    let factor = if area > cfg.max_patch_area {
        (cfg.max_patch_area / area).sqrt()
    } else if area < cfg.min_patch_area {
        (cfg.min_patch_area / area).sqrt()
    } else {
        1.0
    };
    let cell = cfg.features.cell_size();
    let side = |len: f64| (((len * factor) / cell as f64).round().max(2.0) as usize) * cell;
    (side(region.0), side(region.1))
}

impl Tracker {
    pub fn init(frame: &Frame, bbox: BBox, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        bbox.validate()?;
        let table = match &cfg.color_table {
            Some(path) => Arc::new(ColorTable::load(path)?),
            None => Arc::new(ColorTable::builtin().clone()),
        };
        let patch_size = canonical_patch((bbox.h * cfg.padding, bbox.w * cfg.padding), &cfg);
        let cell = cfg.features.cell_size();
        let grid = (patch_size.0 / cell, patch_size.1 / cell);
        let fft = Fft2::new(grid.0, grid.1);
        let mut tracker = Self {
            model: Model::Linear(SupportFilter::zeros(grid.0, grid.1)),
            cfg,
            table,
            bbox,
            scale: 1.0,
            patch_size,
            fft,
            init_report: SolveReport {
                iterations: 0,
                converged: false,
                residuals: crate::solver::Residuals {
                    r1_inf: 0.0,
                    r2_max: 0.0,
                    r3_max: 0.0,
                },
                objective: 0.0,
            },
        };
        let x = tracker.features_at(frame, bbox.center(), (bbox.h, bbox.w))?;
        let labels = tracker.labels(bbox)?;
        let (model, report) = tracker.train(&x, &labels, None, tracker.cfg.init_max_iter)?;
        tracker.model = model;
        tracker.init_report = report;
        Ok(tracker)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Product of all selected scale factors so far.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Patch size in pixels before feature extraction.
    pub fn patch_size(&self) -> (usize, usize) {
        self.patch_size
    }

    /// Feature grid shape.
    pub fn grid(&self) -> (usize, usize) {
        self.fft.shape()
    }

    pub fn init_report(&self) -> &SolveReport {
        &self.init_report
    }

    fn patch_spec(&self, center: (f64, f64), target: (f64, f64)) -> PatchSpec {
        PatchSpec {
            center,
            target,
            padding: self.cfg.padding,
            resize: self.patch_size,
        }
    }

    fn features_at(&self, frame: &Frame, center: (f64, f64), target: (f64, f64)) -> Result<FeatureStack> {
        let patch = extract_patch(frame, &self.patch_spec(center, target))?;
        let x = self.cfg.features.extract(&patch, &self.table)?;
        Ok(if self.cfg.window { apply_window(&x) } else { x })
    }

    /// Frame pixels per feature cell for a target of the given size.
    fn cell_spacing(&self, target: (f64, f64)) -> (f64, f64) {
        let spec = self.patch_spec((0.0, 0.0), target);
        let (sy, sx) = spec.spacing();
        let cell = self.cfg.features.cell_size() as f64;
        (sy * cell, sx * cell)
    }

    fn labels(&self, bbox: BBox) -> Result<LabelGrid> {
        let (rows, cols) = self.fft.shape();
        let alpha = self.cfg.alpha.unwrap_or_else(|| adaptive_alpha(bbox.h, bbox.w));
        let map = confidence_map_with_spacing(rows, cols, alpha, self.cfg.beta, self.cell_spacing((bbox.h, bbox.w)))?;
        assign_labels(&map, self.cfg.thresholds)
    }

    fn train(&self, x: &FeatureStack, labels: &LabelGrid, warm: Option<&Model>, max_iter: usize) -> Result<(Model, SolveReport)> {
        let cfg = self.cfg.solver_config(labels.labeled(), max_iter)?;
        match self.cfg.variant {
            Variant::Scf => {
                let warm = match warm {
                    Some(Model::Linear(f)) => Some(f),
                    _ => None,
                };
                let opts = SolveOptions {
                    warm_start: warm,
                    record_trace: false,
                };
                let (sol, _) = scf::solve_scf_in(&self.fft, x.channel(0), labels, &cfg, &opts)?;
                Ok((Model::Linear(sol.filter), sol.report))
            }
            Variant::Mscf => {
                let warm = match warm {
                    Some(Model::Multi(f)) => Some(f),
                    _ => None,
                };
                let opts = SolveOptions {
                    warm_start: warm,
                    record_trace: false,
                };
                let (sol, _) = mscf::solve_mscf_in(&self.fft, x, labels, &cfg, &opts)?;
                Ok((Model::Multi(sol.filter), sol.report))
            }
            Variant::Kscf | Variant::Skscf => {
                let warm = match warm {
                    Some(Model::Dual(f)) => Some(f),
                    _ => None,
                };
                let opts = SolveOptions {
                    warm_start: warm,
                    record_trace: false,
                };
                let (sol, _) = kscf::solve_kscf_in(&self.fft, x, labels, self.cfg.kernel, &cfg, &opts)?;
                Ok((Model::Dual(sol.filter), sol.report))
            }
        }
    }

    /// Response map of the current model on a feature stack.
    pub fn response(&self, z: &FeatureStack) -> Result<RealGrid> {
        match &self.model {
            Model::Linear(f) => scf::response(&self.fft, &self.fft.forward(z.channel(0))?, f),
            Model::Multi(f) => mscf::multichannel_response(&self.fft, &mscf::transform_stack(&self.fft, z)?, f),
            Model::Dual(f) => kscf::kernel_response_in(&self.fft, f, z, self.cfg.kernel),
        }
    }

    pub fn step(&mut self, frame: &Frame) -> Result<StepReport> {
        let center = self.bbox.center();
        let pool: &[f64] = if self.cfg.variant == Variant::Skscf { &self.cfg.scale_pool } else { &[1.0] };

        // (peak value, |shift|^2, |log factor|, shift, factor)
        let mut best: Option<(f64, isize, f64, (isize, isize), f64)> = None;
        for &factor in pool {
            let target = (self.bbox.h * factor, self.bbox.w * factor);
            let z = self.features_at(frame, center, target)?;
            let response = self.response(&z)?;
            let (shift, value) = locate_peak(&response);
            let mag = shift.0 * shift.0 + shift.1 * shift.1;
            let dist = factor.ln().abs();
            let better = match best {
                None => true,
                Some((bv, bm, bd, _, _)) => value > bv || (value == bv && (mag < bm || (mag == bm && dist < bd))),
            };
            if better {
                best = Some((value, mag, dist, shift, factor));
            }
        }
        let (peak, _, _, cell_shift, factor) = best.expect("scale pool is never empty");

        let target = (self.bbox.h * factor, self.bbox.w * factor);
        let spacing = self.cell_spacing(target);
        let displacement = (cell_shift.0 as f64 * spacing.0, cell_shift.1 as f64 * spacing.1);
        let mut new_center = (center.0 + displacement.0, center.1 + displacement.1);
        let (fh, fw) = (frame.height() as f64, frame.width() as f64);
        let clamped = !(0.0..=fh).contains(&new_center.0) || !(0.0..=fw).contains(&new_center.1);
        new_center = (new_center.0.clamp(0.0, fh), new_center.1.clamp(0.0, fw));
        self.bbox = BBox::from_center(new_center, target.0, target.1);
        self.scale *= factor;

        let x = self.features_at(frame, new_center, target)?;
        let labels = self.labels(self.bbox)?;
        let (fresh, solve) = self.train(&x, &labels, Some(&self.model), self.cfg.online_max_iter)?;
        self.model = blend(&self.model, &fresh, self.cfg.adaption_rate)?;

        Ok(StepReport {
            bbox: self.bbox,
            scale_factor: factor,
            displacement,
            cell_shift,
            peak,
            clamped,
            solve,
        })
    }
}
