//! 31-channel histogram of oriented gradients.
//!
//! Per cell: 18 contrast-sensitive orientation channels, 9 contrast-insensitive
//! ones and 4 texture-energy channels, each normalized against the four 2x2
//! cell blocks the cell belongs to and truncated at 0.2.

use super::patch::Frame;
use super::FeatureStack;
use crate::error::{Error, Result};
use crate::spectral::RealGrid;

pub const HOG_CHANNELS: usize = 31;

const TRUNCATION: f64 = 0.2;
const NORM_EPS: f64 = 1e-4;
const TEXTURE_SCALE: f64 = 0.2357;

/// Per-pixel gradient magnitude and the nearest of `2 * orientations`
/// directions over the full circle. For color input the channel with the
/// strongest gradient wins.
fn gradients(patch: &Frame, orientations: usize) -> (Vec<f64>, Vec<usize>) {
    let (h, w) = (patch.height(), patch.width());
    let bins = 2 * orientations;
    let dirs: Vec<(f64, f64)> = (0..bins)
        .map(|o| {
            let a = std::f64::consts::PI * o as f64 / orientations as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let mut mag = vec![0.0; h * w];
    let mut bin = vec![0usize; h * w];
    for r in 0..h {
        for c in 0..w {
            let (mut best_sq, mut gx, mut gy) = (-1.0, 0.0, 0.0);
            for k in 0..patch.channels() {
                let px = |rr: usize, cc: usize| f64::from(patch.get(rr, cc, k));
                let dx = px(r, (c + 1).min(w - 1)) - px(r, c.saturating_sub(1));
                let dy = px((r + 1).min(h - 1), c) - px(r.saturating_sub(1), c);
                let sq = dx * dx + dy * dy;
                if sq > best_sq {
                    (best_sq, gx, gy) = (sq, dx, dy);
                }
            }
            let mut best = (f64::NEG_INFINITY, 0);
            for (o, &(cx, cy)) in dirs.iter().enumerate() {
                let dot = cx * gx + cy * gy;
                if dot > best.0 {
                    best = (dot, o);
                }
            }
            mag[r * w + c] = best_sq.sqrt();
            bin[r * w + c] = best.1;
        }
    }
    (mag, bin)
}

/// Orientation histograms per cell with bilinear spatial weighting.
fn cell_histograms(patch: &Frame, orientations: usize, cell: usize) -> (usize, usize, Vec<f64>) {
    let (h, w) = (patch.height(), patch.width());
    let (ch, cw) = (h / cell, w / cell);
    let bins = 2 * orientations;
    let (mag, bin) = gradients(patch, orientations);
    let mut hist = vec![0.0; ch * cw * bins];
    let cs = cell as f64;
    for r in 0..h {
        for c in 0..w {
            let m = mag[r * w + c];
            if m == 0.0 {
                continue;
            }
            let yp = (r as f64 + 0.5) / cs - 0.5;
            let xp = (c as f64 + 0.5) / cs - 0.5;
            let (iy, ix) = (yp.floor(), xp.floor());
            let (vy, vx) = (yp - iy, xp - ix);
            for (dy, wy) in [(0isize, 1.0 - vy), (1, vy)] {
                for (dx, wx) in [(0isize, 1.0 - vx), (1, vx)] {
                    let (cy, cx) = (iy as isize + dy, ix as isize + dx);
                    if cy < 0 || cx < 0 || cy >= ch as isize || cx >= cw as isize {
                        continue;
                    }
                    let idx = (cy as usize * cw + cx as usize) * bins + bin[r * w + c];
                    hist[idx] += wy * wx * m;
                }
            }
        }
    }
    (ch, cw, hist)
}

/// HOG stack at `1/cell` resolution: `(rows / cell, cols / cell)` cells.
pub fn hog_features(patch: &Frame, orientations: usize, cell: usize) -> Result<FeatureStack> {
    if orientations == 0 || cell == 0 {
        return Err(Error::param("orientations and cell size must be positive"));
    }
    if !patch.height().is_multiple_of(cell) || !patch.width().is_multiple_of(cell) {
        return Err(Error::Features(format!(
            "patch {}x{} is not divisible by cell size {cell}",
            patch.height(),
            patch.width()
        )));
    }
    let (ch, cw, hist) = cell_histograms(patch, orientations, cell);
    let bins = 2 * orientations;
    let energy: Vec<f64> = (0..ch * cw)
        .map(|i| {
            (0..orientations)
                .map(|o| {
                    let v = hist[i * bins + o] + hist[i * bins + o + orientations];
                    v * v
                })
                .sum()
        })
        .collect();
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, ch as isize - 1) as usize;
        let xx = x.clamp(0, cw as isize - 1) as usize;
        energy[yy * cw + xx]
    };
    let channels = bins + orientations + 4;
    let mut out = vec![RealGrid::zeros(ch, cw); channels];
    for y in 0..ch {
        for x in 0..cw {
            let (yi, xi) = (y as isize, x as isize);
            let mut norms = [0.0; 4];
            for (k, (dy, dx)) in [(-1isize, -1isize), (-1, 0), (0, -1), (0, 0)].into_iter().enumerate() {
                let s = at(yi + dy, xi + dx) + at(yi + dy, xi + dx + 1) + at(yi + dy + 1, xi + dx) + at(yi + dy + 1, xi + dx + 1);
                norms[k] = 1.0 / (s + NORM_EPS).sqrt();
            }
            let base = (y * cw + x) * bins;
            let mut texture = [0.0; 4];
            for o in 0..bins {
                let v = hist[base + o];
                let mut sum = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let t = (v * n).min(TRUNCATION);
                    sum += t;
                    texture[k] += t;
                }
                out[o][(y, x)] = 0.5 * sum;
            }
            for o in 0..orientations {
                let v = hist[base + o] + hist[base + o + orientations];
                let sum: f64 = norms.iter().map(|n| (v * n).min(TRUNCATION)).sum();
                out[bins + o][(y, x)] = 0.5 * sum;
            }
            for k in 0..4 {
                out[bins + orientations + k][(y, x)] = TEXTURE_SCALE * texture[k];
            }
        }
    }
    FeatureStack::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_edge(size: usize) -> Frame {
        Frame::from_fn(size, size, 1, |_, c, _| if c < size / 2 { 0.0 } else { 255.0 }).unwrap()
    }

    #[test]
    fn shape_and_channel_count() {
        let stack = hog_features(&vertical_edge(16), 9, 4).unwrap();
        assert_eq!(stack.num_channels(), HOG_CHANNELS);
        assert_eq!(stack.shape(), (4, 4));
        let wide = Frame::from_fn(24, 8, 3, |r, c, k| ((r * 7 + c * 3 + k) % 11) as f32 * 20.0).unwrap();
        assert_eq!(hog_features(&wide, 9, 4).unwrap().shape(), (2, 6));
    }

    #[test]
    fn indivisible_patch_is_rejected() {
        let f = Frame::from_fn(10, 8, 1, |_, _, _| 0.0).unwrap();
        assert!(hog_features(&f, 9, 4).is_err());
    }

    #[test]
    fn constant_patch_has_no_gradient_energy() {
        let f = Frame::from_fn(16, 16, 1, |_, _, _| 99.0).unwrap();
        let stack = hog_features(&f, 9, 4).unwrap();
        for ch in stack.channels() {
            assert!(ch.max_abs() < 1e-12);
        }
    }

    #[test]
    fn channels_are_bounded_and_nonnegative() {
        let f = Frame::from_fn(32, 32, 3, |r, c, k| (((r * 31 + c * 17 + k * 5) * 2654435761usize) % 256) as f32).unwrap();
        let stack = hog_features(&f, 9, 4).unwrap();
        for (l, ch) in stack.channels().iter().enumerate() {
            let cap = if l < 27 { 0.5 * 4.0 * TRUNCATION } else { TEXTURE_SCALE * 18.0 * TRUNCATION };
            assert!(ch.iter().all(|&v| v >= 0.0 && v <= cap + 1e-12), "channel {l}");
        }
    }

    /// Reference: plain per-cell histogram of unsigned orientation, no interpolation.
    fn reference_dominant_bin(patch: &Frame, cell_r: usize, cell_c: usize) -> usize {
        let mut hist = [0.0f64; 9];
        for r in cell_r * 4..cell_r * 4 + 4 {
            for c in cell_c * 4..cell_c * 4 + 4 {
                let px = |rr: usize, cc: usize| f64::from(patch.get(rr, cc, 0));
                let dx = px(r, (c + 1).min(15)) - px(r, c.saturating_sub(1));
                let dy = px((r + 1).min(15), c) - px(r.saturating_sub(1), c);
                let m = (dx * dx + dy * dy).sqrt();
                if m == 0.0 {
                    continue;
                }
                let mut angle = dy.atan2(dx);
                if angle < 0.0 {
                    angle += std::f64::consts::PI;
                }
                let b = ((angle / (std::f64::consts::PI / 9.0)).round() as usize) % 9;
                hist[b] += m;
            }
        }
        (0..9).max_by(|&a, &b| hist[a].partial_cmp(&hist[b]).unwrap()).unwrap()
    }

    #[test]
    fn vertical_edge_fills_the_horizontal_gradient_bin() {
        let patch = vertical_edge(16);
        let stack = hog_features(&patch, 9, 4).unwrap();
        for r in 0..4 {
            for c in [1, 2] {
                let best = (0..9)
                    .max_by(|&a, &b| stack.channel(18 + a)[(r, c)].partial_cmp(&stack.channel(18 + b)[(r, c)]).unwrap())
                    .unwrap();
                assert_eq!(best, reference_dominant_bin(&patch, r, c));
                assert_eq!(best, 0);
                // all insensitive energy sits in that one bin
                let others: f64 = (1..9).map(|o| stack.channel(18 + o)[(r, c)]).sum();
                assert!(others < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic() {
        let f = Frame::from_fn(16, 12, 3, |r, c, k| ((r * c + k) % 255) as f32).unwrap();
        assert_eq!(hog_features(&f, 9, 4).unwrap(), hog_features(&f, 9, 4).unwrap());
    }
}
