//! Color-name features from a 32x32x32 RGB lookup table.
//!
//! Table file layout: 32768 rows of 10 little-endian `f32` probabilities, no
//! header. Row `floor(R/8) + 32 * floor(G/8) + 1024 * floor(B/8)` holds the
//! distribution over [`COLOR_NAMES`] for that RGB bin.

use std::path::Path;
use std::sync::OnceLock;

use super::patch::Frame;
use super::FeatureStack;
use crate::error::{Error, Result};
use crate::spectral::RealGrid;

pub const COLOR_NAMES: [&str; 10] = [
    "black", "blue", "brown", "gray", "green", "orange", "purple", "red", "white", "yellow",
];
pub const CN_CHANNELS: usize = COLOR_NAMES.len();
pub const TABLE_ROWS: usize = 32 * 32 * 32;

static BUILTIN_BYTES: &[u8] = include_bytes!("../../assets/color_names.bin");
static BUILTIN: OnceLock<ColorTable> = OnceLock::new();

/// sRGB anchors of the prototype table, in [`COLOR_NAMES`] order.
const PROTOTYPES: [[f64; 3]; CN_CHANNELS] = [
    [0.0, 0.0, 0.0],
    [30.0, 60.0, 200.0],
    [120.0, 70.0, 30.0],
    [128.0, 128.0, 128.0],
    [40.0, 160.0, 40.0],
    [255.0, 140.0, 0.0],
    [128.0, 40.0, 160.0],
    [220.0, 20.0, 30.0],
    [255.0, 255.0, 255.0],
    [250.0, 230.0, 30.0],
];

/// Width of the Gaussian affinity in Lab units.
const PROTOTYPE_TAU: f64 = 18.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ColorTable {
    rows: Vec<[f32; CN_CHANNELS]>,
}

impl ColorTable {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::parse(bytes).map_err(|reason| Error::ColorTable { path: None, reason })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::ColorTable {
            path: Some(path.to_path_buf()),
            reason: e.to_string(),
        })?;
        Self::parse(&bytes).map_err(|reason| Error::ColorTable {
            path: Some(path.to_path_buf()),
            reason,
        })
    }

    fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        let expected = TABLE_ROWS * CN_CHANNELS * 4;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let mut rows = Vec::with_capacity(TABLE_ROWS);
        for (i, chunk) in bytes.chunks_exact(CN_CHANNELS * 4).enumerate() {
            let mut row = [0.0f32; CN_CHANNELS];
            for (k, b) in chunk.chunks_exact(4).enumerate() {
                row[k] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(format!("row {i} has negative or non-finite entries"));
            }
            let sum: f32 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-4 {
                return Err(format!("row {i} sums to {sum}"));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static ColorTable {
        BUILTIN.get_or_init(|| Self::from_bytes(BUILTIN_BYTES).expect("shipped color table is valid"))
    }

    /// Procedural table: a Gaussian affinity in CIE Lab between each bin
    /// center and ten prototype colors, normalized per bin.
    pub fn prototype() -> Self {
        let anchors: Vec<[f64; 3]> = PROTOTYPES.iter().map(|p| srgb_to_lab(*p)).collect();
        let rows = (0..TABLE_ROWS)
            .map(|i| {
                let center = |bin: usize| (bin * 8) as f64 + 3.5;
                let lab = srgb_to_lab([center(i % 32), center((i / 32) % 32), center(i / 1024)]);
                let logits: Vec<f64> = anchors
                    .iter()
                    .map(|a| {
                        let d2: f64 = a.iter().zip(&lab).map(|(x, y)| (x - y) * (x - y)).sum();
                        -d2 / (2.0 * PROTOTYPE_TAU * PROTOTYPE_TAU)
                    })
                    .collect();
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut row = [0.0f32; CN_CHANNELS];
                for (r, w) in row.iter_mut().zip(&weights) {
                    *r = (w / total) as f32;
                }
                row
            })
            .collect();
        Self { rows }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.rows.iter().flat_map(|r| r.iter().flat_map(|v| v.to_le_bytes())).collect()
    }

    pub fn index(r: f32, g: f32, b: f32) -> usize {
        let bin = |v: f32| ((v.clamp(0.0, 255.0) as usize) / 8).min(31);
        bin(r) + 32 * bin(g) + 1024 * bin(b)
    }

    pub fn probabilities(&self, r: f32, g: f32, b: f32) -> &[f32; CN_CHANNELS] {
        &self.rows[Self::index(r, g, b)]
    }
}

fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = |v: f64| {
        let c = v / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let x = (0.4124 * r + 0.3576 * g + 0.1805 * b) / 0.95047;
    let y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    let z = (0.0193 * r + 0.1192 * g + 0.9505 * b) / 1.08883;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel color-name probabilities, before centering. Gray patches are
/// treated as RGB with equal components.
pub fn cn_probabilities(patch: &Frame, table: &ColorTable) -> Result<FeatureStack> {
    let rgb = patch.to_rgb();
    let (h, w) = (rgb.height(), rgb.width());
    let mut out = vec![RealGrid::zeros(h, w); CN_CHANNELS];
    for r in 0..h {
        for c in 0..w {
            let p = table.probabilities(rgb.get(r, c, 0), rgb.get(r, c, 1), rgb.get(r, c, 2));
            for (k, v) in p.iter().enumerate() {
                out[k][(r, c)] = f64::from(*v);
            }
        }
    }
    FeatureStack::new(out)
}

/// Color-name stack with every channel mean-centered.
pub fn cn_features(patch: &Frame, table: &ColorTable) -> Result<FeatureStack> {
    Ok(center_channels(&cn_probabilities(patch, table)?))
}

pub(crate) fn center_channels(stack: &FeatureStack) -> FeatureStack {
    let channels = stack
        .channels()
        .iter()
        .map(|c| {
            let m = c.mean();
            c.map(|v| v - m)
        })
        .collect();
    FeatureStack::new(channels).expect("centering keeps shapes and finiteness")
}
