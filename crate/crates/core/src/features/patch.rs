//! Frames and search-region cropping.
//!
//! Coordinates are continuous with pixel `k` covering `[k, k + 1)`, so its
//! center sits at `k + 0.5`.

use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};

/// An 8-bit image held as `f32` samples in `[0, 255]`, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Features(format!("empty frame {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Features(format!("frames have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Features(format!(
                "frame data has {} samples, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn from_image(img: &DynamicImage) -> Result<Self> {
        use image::ColorType::*;
        match img.color() {
            L8 | L16 | La8 | La16 => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                Self::new(w as usize, h as usize, 1, g.into_raw().into_iter().map(f32::from).collect())
            }
            _ => {
                let rgb = img.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self::new(w as usize, h as usize, 3, rgb.into_raw().into_iter().map(f32::from).collect())
            }
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_image(&img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Luma with Rec. 601 weights; a single-channel frame is returned as is.
    pub fn to_gray(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Three-channel view; gray frames are replicated.
    pub fn to_rgb(&self) -> Frame {
        if self.channels == 3 {
            return self.clone();
        }
        Frame {
            width: self.width,
            height: self.height,
            channels: 3,
            data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }

    /// Bilinear sample at continuous pixel-index coordinates, replicating the border.
    fn sample(&self, y: f64, x: f64, channel: usize) -> f64 {
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (yc.floor() as usize, xc.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
        let (fy, fx) = (yc - y0 as f64, xc - x0 as f64);
        let p = |r: usize, c: usize| f64::from(self.get(r, c, channel));
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Search region: `padding x target` pixels around `center`, resampled to `resize`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    /// `(row, col)` in continuous pixel coordinates.
    pub center: (f64, f64),
    /// `(height, width)` of the target in pixels.
    pub target: (f64, f64),
    pub padding: f64,
    /// `(rows, cols)` of the output patch.
    pub resize: (usize, usize),
}

impl PatchSpec {
    /// `(height, width)` of the cropped region in frame pixels.
    pub fn region(&self) -> (f64, f64) {
        (self.target.0 * self.padding, self.target.1 * self.padding)
    }

    /// Frame pixels per output pixel along `(rows, cols)`.
    pub fn spacing(&self) -> (f64, f64) {
        let (h, w) = self.region();
        (h / self.resize.0 as f64, w / self.resize.1 as f64)
    }
}

/// Crops the region described by `spec` with border replication and resamples
/// it bilinearly.
pub fn extract_patch(frame: &Frame, spec: &PatchSpec) -> Result<Frame> {
    let (h, w) = spec.region();
    if !(h > 0.0 && w > 0.0 && h.is_finite() && w.is_finite()) {
        return Err(Error::Features(format!("degenerate patch region {h}x{w}")));
    }
    if spec.padding < 1.0 {
        return Err(Error::param(format!("padding must be at least 1, got {}", spec.padding)));
    }
    let (rows, cols) = spec.resize;
    if rows == 0 || cols == 0 {
        return Err(Error::param("patch resize target must be positive"));
    }
    let (sy, sx) = spec.spacing();
    let top = spec.center.0 - h / 2.0;
    let left = spec.center.1 - w / 2.0;
    Frame::from_fn(cols, rows, frame.channels, |r, c, k| {
        let y = top + (r as f64 + 0.5) * sy - 0.5;
        let x = left + (c as f64 + 0.5) * sx - 0.5;
        frame.sample(y, x, k) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(width: usize, height: usize) -> Frame {
        Frame::from_fn(width, height, 1, |r, c, _| (r * width + c) as f32).unwrap()
    }

    #[test]
    fn frame_validation() {
        assert!(Frame::new(0, 3, 1, vec![]).is_err());
        assert!(Frame::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Frame::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn aligned_crop_is_exact_copy() {
        let f = ramp(10, 8);
        let spec = PatchSpec {
            center: (2.0 + 2.0, 3.0 + 2.5),
            target: (4.0, 5.0),
            padding: 1.0,
            resize: (4, 5),
        };
        let p = extract_patch(&f, &spec).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                assert_eq!(p.get(r, c, 0), f.get(r + 2, c + 3, 0));
            }
        }
    }

    #[test]
    fn corner_crop_replicates_border() {
        let f = ramp(6, 6);
        let spec = PatchSpec {
            center: (0.0, 0.0),
            target: (4.0, 4.0),
            padding: 1.0,
            resize: (4, 4),
        };
        let p = extract_patch(&f, &spec).unwrap();
        assert_eq!((p.height(), p.width()), (4, 4));
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(p.get(r, c, 0), f.get(0, 0, 0));
            }
        }
        assert_eq!(p.get(3, 3, 0), f.get(1, 1, 0));
    }

    #[test]
    fn downscaled_constant_stays_constant() {
        let f = Frame::from_fn(20, 20, 3, |_, _, k| 40.0 + k as f32).unwrap();
        let spec = PatchSpec {
            center: (10.0, 10.0),
            target: (10.0, 10.0),
            padding: 2.0,
            resize: (10, 10),
        };
        let p = extract_patch(&f, &spec).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                for k in 0..3 {
                    assert_eq!(p.get(r, c, k), 40.0 + k as f32);
                }
            }
        }
    }

    #[test]
    fn degenerate_region_is_rejected() {
        let f = ramp(4, 4);
        let spec = PatchSpec {
            center: (2.0, 2.0),
            target: (0.0, 3.0),
            padding: 1.5,
            resize: (4, 4),
        };
        assert!(extract_patch(&f, &spec).is_err());
    }

    #[test]
    fn gray_and_rgb_conversions() {
        let f = Frame::new(1, 1, 3, vec![255.0, 0.0, 0.0]).unwrap();
        assert!((f.to_gray().get(0, 0, 0) - 76.245).abs() < 1e-3);
        let g = Frame::new(1, 1, 1, vec![7.0]).unwrap();
        assert_eq!(g.to_rgb().data(), &[7.0, 7.0, 7.0]);
    }
}
