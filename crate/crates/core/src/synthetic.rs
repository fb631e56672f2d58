//! Seeded synthetic instances and sequences with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::features::{FeatureStack, Frame};
use crate::labeling::{assign_labels, confidence_map, LabelGrid, Thresholds};
use crate::spectral::RealGrid;
use crate::tracker::BBox;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid with entries uniform in `[-1, 1)`.
pub fn random_grid(rng: &mut impl Rng, rows: usize, cols: usize) -> RealGrid {
    RealGrid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_stack(rng: &mut impl Rng, channels: usize, rows: usize, cols: usize) -> FeatureStack {
    FeatureStack::new((0..channels).map(|_| random_grid(rng, rows, cols)).collect()).expect("random channels share a shape")
}

/// Labels of the small oracle instances: `alpha = 50 / (rows * cols)`, `beta = 2`.
pub fn instance_labels(rows: usize, cols: usize, thresholds: Thresholds) -> Result<LabelGrid> {
    let map = confidence_map(rows, cols, 50.0 / (rows * cols) as f64, 2.0)?;
    assign_labels(&map, thresholds)
}

/// Smooth procedural texture: a few octaves of bilinearly interpolated
/// lattice noise, periodic with the base lattice.
#[derive(Debug, Clone)]
pub struct ValueNoise {
    lattice: Vec<f64>,
    size: usize,
    octaves: usize,
}

impl ValueNoise {
    pub fn new(rng: &mut impl Rng, size: usize, octaves: usize) -> Self {
        Self {
            lattice: (0..size * size).map(|_| rng.random_range(0.0..1.0)).collect(),
            size,
            octaves,
        }
    }

    fn lattice_at(&self, y: f64, x: f64) -> f64 {
        let n = self.size as f64;
        let (y, x) = (y.rem_euclid(n), x.rem_euclid(n));
        let (y0, x0) = (y.floor() as usize % self.size, x.floor() as usize % self.size);
        let (y1, x1) = ((y0 + 1) % self.size, (x0 + 1) % self.size);
        let (fy, fx) = (y - y.floor(), x - x.floor());
        let (sy, sx) = (fy * fy * (3.0 - 2.0 * fy), fx * fx * (3.0 - 2.0 * fx));
        let p = |r: usize, c: usize| self.lattice[r * self.size + c];
        let top = p(y0, x0) * (1.0 - sx) + p(y0, x1) * sx;
        let bottom = p(y1, x0) * (1.0 - sx) + p(y1, x1) * sx;
        top * (1.0 - sy) + bottom * sy
    }

    /// Value in `[0, 1]` at a continuous position measured in lattice cells.
    pub fn sample(&self, y: f64, x: f64) -> f64 {
        let (mut total, mut weight, mut amp, mut freq) = (0.0, 0.0, 1.0, 1.0);
        for o in 0..self.octaves {
            // offset octaves so their lattices do not line up
            let shift = 17.31 * o as f64;
            total += amp * self.lattice_at(y * freq + shift, x * freq - shift);
            weight += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        total / weight
    }
}

/// One reference frame and translated copies of it, all wrapping around the
/// frame border.
#[derive(Debug, Clone)]
pub struct CyclicShiftCase {
    pub base: Frame,
    pub bbox: BBox,
    /// `(frame, (rows, cols) displacement of its content relative to `base`)`.
    pub shifted: Vec<(Frame, (isize, isize))>,
}

/// Gray noise frame of `size x size` with the target box covering the middle
/// half, so a padding of 2 makes the search region the whole frame. Shifts
/// are drawn with magnitude below `size / 4`.
pub fn cyclic_shift_case(seed: u64, size: usize, count: usize) -> Result<CyclicShiftCase> {
    let mut rng = rng(seed);
    let base = Frame::from_fn(size, size, 1, |_, _, _| rng.random_range(0.0..255.0f32))?;
    let limit = (size as i64 - 1) / 4;
    let mut shifted = Vec::with_capacity(count);
    for _ in 0..count {
        let d = (rng.random_range(-limit..=limit) as isize, rng.random_range(-limit..=limit) as isize);
        let n = size as isize;
        let frame = Frame::from_fn(size, size, 1, |r, c, _| {
            base.get((r as isize - d.0).rem_euclid(n) as usize, (c as isize - d.1).rem_euclid(n) as usize, 0)
        })?;
        shifted.push((frame, d));
    }
    let half = size as f64 / 2.0;
    Ok(CyclicShiftCase {
        base,
        bbox: BBox::new(half / 2.0, half / 2.0, half, half)?,
        shifted,
    })
}

/// Frames with known ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub groundtruth: Vec<BBox>,
}

/// Color texture zooming in about the frame center by `rate` per frame.
/// The target box scales with the content.
pub fn zoom_sequence(seed: u64, size: usize, frames: usize, rate: f64, target: f64) -> Result<SyntheticSequence> {
    let mut rng = rng(seed);
    let noise: Vec<ValueNoise> = (0..3).map(|_| ValueNoise::new(&mut rng, 16, 4)).collect();
    let cells_per_pixel = 1.0 / 12.0;
    let center = size as f64 / 2.0;
    let mut out = Vec::with_capacity(frames);
    let mut groundtruth = Vec::with_capacity(frames);
    for k in 0..frames {
        let zoom = rate.powi(k as i32);
        let frame = Frame::from_fn(size, size, 3, |r, c, ch| {
            let y = center + (r as f64 + 0.5 - center) / zoom;
            let x = center + (c as f64 + 0.5 - center) / zoom;
            (255.0 * noise[ch].sample(y * cells_per_pixel, x * cells_per_pixel)) as f32
        })?;
        out.push(frame);
        groundtruth.push(BBox::from_center((center, center), target * zoom, target * zoom));
    }
    Ok(SyntheticSequence {
        frames: out,
        groundtruth,
    })
}

/// Textured square drifting over a flat background along a fixed velocity.
pub fn moving_square_sequence(seed: u64, size: usize, frames: usize, side: usize, velocity: (f64, f64)) -> Result<SyntheticSequence> {
    let mut rng = rng(seed);
    let texture = ValueNoise::new(&mut rng, 8, 3);
    let start = (size as f64 / 2.0 - velocity.0 * frames as f64 / 2.0, size as f64 / 2.0 - velocity.1 * frames as f64 / 2.0);
    let s = side as f64;
    let mut out = Vec::with_capacity(frames);
    let mut groundtruth = Vec::with_capacity(frames);
    for k in 0..frames {
        // integer positions keep the rendered square aligned with the box
        let top = (start.0 + velocity.0 * k as f64 - s / 2.0).round();
        let left = (start.1 + velocity.1 * k as f64 - s / 2.0).round();
        let frame = Frame::from_fn(size, size, 1, |r, c, _| {
            let (y, x) = (r as f64 - top, c as f64 - left);
            if (0.0..s).contains(&y) && (0.0..s).contains(&x) {
                (40.0 + 215.0 * texture.sample(y / 4.0, x / 4.0)) as f32
            } else {
                20.0
            }
        })?;
        out.push(frame);
        groundtruth.push(BBox::new(left, top, s, s)?);
    }
    Ok(SyntheticSequence {
        frames: out,
        groundtruth,
    })
}
