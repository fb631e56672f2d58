//! Feature stacks and the extractors that produce them.

pub mod color_names;
pub mod hog;
pub mod patch;

use serde::{Deserialize, Serialize};

pub use color_names::{cn_features, cn_probabilities, ColorTable};
pub use hog::hog_features;
pub use patch::{extract_patch, Frame, PatchSpec};

use crate::error::{Error, Result};
use crate::spectral::RealGrid;

/// `L` equally shaped channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: Vec<RealGrid>,
}

impl FeatureStack {
    pub fn new(channels: Vec<RealGrid>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Features("a feature stack needs at least one channel".into()))?;
        let shape = first.shape();
        for (l, ch) in channels.iter().enumerate() {
            if ch.shape() != shape {
                return Err(Error::shape(shape, ch.shape()));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::Features(format!("channel {l} has non-finite values")));
            }
        }
        Ok(Self { channels })
    }

    pub fn single(channel: RealGrid) -> Result<Self> {
        Self::new(vec![channel])
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    /// Total element count over all channels.
    pub fn total_len(&self) -> usize {
        self.channels.len() * self.channels[0].len()
    }

    pub fn channels(&self) -> &[RealGrid] {
        &self.channels
    }

    pub fn channel(&self, l: usize) -> &RealGrid {
        &self.channels[l]
    }

    pub fn into_channels(self) -> Vec<RealGrid> {
        self.channels
    }

    pub fn norm_sq(&self) -> f64 {
        self.channels.iter().map(RealGrid::norm_sq).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureStack {
        Self {
            channels: self.channels.iter().map(|c| c.map(&f)).collect(),
        }
    }

    /// Every channel translated by `(dr, dc)` with wrap-around.
    pub fn translated(&self, dr: isize, dc: isize) -> FeatureStack {
        Self {
            channels: self.channels.iter().map(|c| c.translated(dr, dc)).collect(),
        }
    }

    /// Channels of `self` followed by those of `other`.
    pub fn concat(&self, other: &FeatureStack) -> Result<FeatureStack> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        let mut channels = self.channels.clone();
        channels.extend(other.channels.iter().cloned());
        Ok(Self { channels })
    }
}

/// Luma mapped to `[0, 1]` and mean-subtracted.
pub fn raw_features(patch: &Frame) -> Result<FeatureStack> {
    let gray = patch.to_gray();
    let grid = RealGrid::from_fn(gray.height(), gray.width(), |r, c| f64::from(gray.get(r, c, 0)) / 255.0);
    let m = grid.mean();
    FeatureStack::single(grid.map(|v| v - m))
}

/// Periodic-free Hann taper: zero at both ends, one at the center of odd lengths.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Outer product of row and column Hann tapers.
pub fn hann_window(rows: usize, cols: usize) -> RealGrid {
    let (wr, wc) = (hann(rows), hann(cols));
    RealGrid::from_fn(rows, cols, |r, c| wr[r] * wc[c])
}

/// Multiplies every channel by the 2-D Hann window. Applying it twice squares the window.
pub fn apply_window(stack: &FeatureStack) -> FeatureStack {
    let w = hann_window(stack.rows(), stack.cols());
    let channels = stack
        .channels()
        .iter()
        .map(|c| c.zip_map(&w, |a, b| a * b).expect("window shares the stack shape"))
        .collect();
    FeatureStack::new(channels).expect("windowing keeps shapes and finiteness")
}

/// Averages non-overlapping `cell x cell` blocks.
pub fn pool_cells(stack: &FeatureStack, cell: usize) -> Result<FeatureStack> {
    if cell == 0 || !stack.rows().is_multiple_of(cell) || !stack.cols().is_multiple_of(cell) {
        return Err(Error::Features(format!(
            "{}x{} stack cannot be pooled by {cell}",
            stack.rows(),
            stack.cols()
        )));
    }
    let (rows, cols) = (stack.rows() / cell, stack.cols() / cell);
    let area = (cell * cell) as f64;
    let channels = stack
        .channels()
        .iter()
        .map(|ch| {
            RealGrid::from_fn(rows, cols, |r, c| {
                let mut s = 0.0;
                for y in r * cell..(r + 1) * cell {
                    for x in c * cell..(c + 1) * cell {
                        s += ch[(y, x)];
                    }
                }
                s / area
            })
        })
        .collect();
    FeatureStack::new(channels)
}

pub const HOG_ORIENTATIONS: usize = 9;
pub const HOG_CELL: usize = 4;

/// Feature configurations used by the trackers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Mean-subtracted gray levels, one channel at pixel resolution.
    Raw,
    /// 31-channel HOG at cell resolution.
    Hog,
    /// HOG followed by cell-pooled, centered color names (41 channels).
    HogCn,
}

impl FeatureKind {
    /// Patch pixels per feature cell along each axis.
    pub fn cell_size(self) -> usize {
        match self {
            FeatureKind::Raw => 1,
            FeatureKind::Hog | FeatureKind::HogCn => HOG_CELL,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            FeatureKind::Raw => 1,
            FeatureKind::Hog => hog::HOG_CHANNELS,
            FeatureKind::HogCn => hog::HOG_CHANNELS + color_names::CN_CHANNELS,
        }
    }

    pub fn extract(self, patch: &Frame, table: &ColorTable) -> Result<FeatureStack> {
        match self {
            FeatureKind::Raw => raw_features(patch),
            FeatureKind::Hog => hog_features(patch, HOG_ORIENTATIONS, HOG_CELL),
            FeatureKind::HogCn => {
                let hog = hog_features(patch, HOG_ORIENTATIONS, HOG_CELL)?;
                let cn = pool_cells(&cn_probabilities(patch, table)?, HOG_CELL)?;
                hog.concat(&color_names::center_channels(&cn))
            }
        }
    }
}
