//! Confidence maps and the ternary sample labels derived from them.
//!
//! Shift `(0, 0)` is the target centre. Distances are toroidal, so a shift of
//! `rows - 1` is one step away from the centre, matching the wrap-around of
//! the circulant sample set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::RealGrid;

/// Gaussian-shaped map `m(p) = gamma * exp(-alpha * |p - p*|^beta)`, peak-normalized (`gamma = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    values: RealGrid,
    alpha: f64,
    beta: f64,
}

impl ConfidenceMap {
    pub fn values(&self) -> &RealGrid {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        1.0
    }
}

/// Shift-to-centre distance with wrap-around, with `spacing` giving the size
/// of one grid step along each axis (pixels per cell).
pub fn toroidal_distance(r: usize, c: usize, shape: (usize, usize), spacing: (f64, f64)) -> f64 {
    let dr = r.min(shape.0 - r) as f64 * spacing.0;
    let dc = c.min(shape.1 - c) as f64 * spacing.1;
    (dr * dr + dc * dc).sqrt()
}

/// Confidence map on a `rows x cols` shift grid with unit spacing.
pub fn confidence_map(rows: usize, cols: usize, alpha: f64, beta: f64) -> Result<ConfidenceMap> {
    confidence_map_with_spacing(rows, cols, alpha, beta, (1.0, 1.0))
}

/// Confidence map whose distances are measured in physical units, one grid
/// step being `spacing.0` along rows and `spacing.1` along columns.
pub fn confidence_map_with_spacing(
    rows: usize,
    cols: usize,
    alpha: f64,
    beta: f64,
    spacing: (f64, f64),
) -> Result<ConfidenceMap> {
    if rows == 0 || cols == 0 {
        return Err(Error::param("confidence map needs a non-empty grid"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param(format!("beta must be positive, got {beta}")));
    }
    if !(spacing.0 > 0.0 && spacing.1 > 0.0) {
        return Err(Error::param(format!("spacing must be positive, got {spacing:?}")));
    }
    let values = RealGrid::from_fn(rows, cols, |r, c| {
        let d = toroidal_distance(r, c, (rows, cols), spacing);
        (-alpha * d.powf(beta)).exp()
    });
    Ok(ConfidenceMap {
        values,
        alpha,
        beta,
    })
}

/// Scale parameter adapted to an `h x w` target: `50 / (h * w)`.
pub fn adaptive_alpha(target_h: f64, target_w: f64) -> f64 {
    50.0 / (target_h * target_w)
}

/// Lower/upper label thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: f64,
}

impl Thresholds {
    pub const SCF: Thresholds = Thresholds { lower: 0.3, upper: 0.7 };
    pub const MSCF: Thresholds = Thresholds { lower: 0.4, upper: 0.9 };
    pub const KSCF: Thresholds = Thresholds { lower: 0.5, upper: 0.7 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lower && self.lower < self.upper && self.upper < 1.0) {
            return Err(Error::param(format!(
                "thresholds must satisfy 0 < lower < upper < 1, got ({}, {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Labels in `{-1, 0, +1}`; zero marks a discarded (unlabeled) sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    values: RealGrid,
    thresholds: Option<Thresholds>,
    positives: usize,
    negatives: usize,
}

impl LabelGrid {
    /// Wraps explicit label values, checking that both classes are present.
    pub fn from_values(values: RealGrid) -> Result<Self> {
        let mut positives = 0;
        let mut negatives = 0;
        for &v in values.iter() {
            if v == 1.0 {
                positives += 1;
            } else if v == -1.0 {
                negatives += 1;
            } else if v != 0.0 {
                return Err(Error::param(format!("label value {v} not in {{-1, 0, 1}}")));
            }
        }
        if positives == 0 {
            return Err(Error::EmptyLabelSet("positive"));
        }
        if negatives == 0 {
            return Err(Error::EmptyLabelSet("negative"));
        }
        Ok(Self {
            values,
            thresholds: None,
            positives,
            negatives,
        })
    }

    pub fn values(&self) -> &RealGrid {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn thresholds(&self) -> Option<Thresholds> {
        self.thresholds
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.negatives
    }

    pub fn labeled(&self) -> usize {
        self.positives + self.negatives
    }

    pub fn masked(&self) -> usize {
        self.len() - self.labeled()
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.values.as_slice()[i] != 0.0
    }
}

/// `+1` where `m >= upper`, `-1` where `m <= lower`, `0` in between.
pub fn assign_labels(map: &ConfidenceMap, thresholds: Thresholds) -> Result<LabelGrid> {
    thresholds.validate()?;
    let values = map.values.map(|m| {
        if m >= thresholds.upper {
            1.0
        } else if m <= thresholds.lower {
            -1.0
        } else {
            0.0
        }
    });
    let mut grid = LabelGrid::from_values(values)?;
    grid.thresholds = Some(thresholds);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_is_one_at_origin() {
        for (alpha, beta) in [(0.1, 2.0), (3.0, 1.0), (0.5, 0.7)] {
            let m = confidence_map(9, 7, alpha, beta).unwrap();
            assert_eq!(m.values()[(0, 0)], 1.0);
            assert_eq!(m.values().argmax(), (0, 0));
        }
    }

    #[test]
    fn gaussian_shape_for_beta_two() {
        let alpha = 0.2;
        let m = confidence_map(16, 16, alpha, 2.0).unwrap();
        // (3, 4) is at Euclidean distance 5; (13, 12) wraps to the same offset.
        let expected = (-alpha * 25.0f64).exp();
        assert!((m.values()[(3, 4)] - expected).abs() < 1e-15);
        assert!((m.values()[(13, 12)] - expected).abs() < 1e-15);
    }

    #[test]
    fn adaptive_alpha_follows_target_area() {
        assert_eq!(adaptive_alpha(10.0, 5.0), 1.0);
        assert_eq!(adaptive_alpha(20.0, 25.0), 0.1);
    }

    #[test]
    fn spacing_scales_distance() {
        let unit = confidence_map(8, 8, 0.05, 2.0).unwrap();
        let spaced = confidence_map_with_spacing(8, 8, 0.05, 2.0, (2.0, 2.0)).unwrap();
        let direct = confidence_map(8, 8, 0.2, 2.0).unwrap();
        for i in 0..64 {
            let (a, b) = (spaced.values().as_slice()[i], direct.values().as_slice()[i]);
            assert!((a - b).abs() < 1e-14);
        }
        assert!(unit.values()[(1, 0)] > spaced.values()[(1, 0)]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(confidence_map(4, 4, 0.0, 2.0).is_err());
        assert!(confidence_map(4, 4, 1.0, -1.0).is_err());
        let m = confidence_map(8, 8, 0.3, 2.0).unwrap();
        assert!(assign_labels(&m, Thresholds { lower: 0.7, upper: 0.3 }).is_err());
        assert!(assign_labels(&m, Thresholds { lower: 0.0, upper: 0.3 }).is_err());
    }

    #[test]
    fn labels_partition_the_grid() {
        let m = confidence_map(12, 10, 0.1, 2.0).unwrap();
        let y = assign_labels(&m, Thresholds::KSCF).unwrap();
        assert_eq!(y.positives() + y.negatives() + y.masked(), 120);
        assert_eq!(y.values()[(0, 0)], 1.0);
        assert!(y.negatives() > 0);
    }

    #[test]
    fn empty_negative_set_is_an_error() {
        // a tiny grid with a very flat map has no sample below the lower threshold
        let m = confidence_map(2, 2, 1e-3, 2.0).unwrap();
        assert!(matches!(
            assign_labels(&m, Thresholds::SCF),
            Err(Error::EmptyLabelSet("negative"))
        ));
    }

    #[test]
    fn mosaic_for_scf_thresholds() {
        // alpha = 50 / 64 on an 8x8 grid: only the centre is positive and the
        // four unit-distance neighbours are discarded.
        let m = confidence_map(8, 8, 50.0 / 64.0, 2.0).unwrap();
        let y = assign_labels(&m, Thresholds::SCF).unwrap();
        assert_eq!(y.positives(), 1);
        assert_eq!(y.masked(), 4);
        assert_eq!(y.negatives(), 59);
        for (r, c) in [(0, 1), (1, 0), (0, 7), (7, 0)] {
            assert_eq!(y.values()[(r, c)], 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn raising_upper_never_adds_positives(
                alpha in 0.01f64..1.0, lo in 0.05f64..0.4, hi in 0.45f64..0.9, bump in 0.0f64..0.09,
            ) {
                let m = confidence_map(15, 13, alpha, 2.0).unwrap();
                let a = assign_labels(&m, Thresholds { lower: lo, upper: hi });
                let b = assign_labels(&m, Thresholds { lower: lo, upper: hi + bump });
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert!(b.positives() <= a.positives());
                }
            }

            #[test]
            fn lowering_lower_never_adds_negatives(
                alpha in 0.01f64..1.0, lo in 0.1f64..0.4, hi in 0.45f64..0.9, drop in 0.0f64..0.09,
            ) {
                let m = confidence_map(15, 13, alpha, 2.0).unwrap();
                let a = assign_labels(&m, Thresholds { lower: lo, upper: hi });
                let b = assign_labels(&m, Thresholds { lower: lo - drop, upper: hi });
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert!(b.negatives() <= a.negatives());
                }
            }

            #[test]
            fn reflection_symmetry_on_odd_grids(
                half_r in 2usize..8, half_c in 2usize..8, alpha in 0.01f64..1.0,
            ) {
                let (rows, cols) = (2 * half_r + 1, 2 * half_c + 1);
                let m = confidence_map(rows, cols, alpha, 2.0).unwrap();
                let m_vals = m.values();
                for r in 0..rows {
                    for c in 0..cols {
                        let (rr, rc) = ((rows - r) % rows, (cols - c) % cols);
                        prop_assert_eq!(m_vals[(r, c)], m_vals[(rr, rc)]);
                    }
                }
                if let Ok(y) = assign_labels(&m, Thresholds::SCF) {
                    for r in 0..rows {
                        for c in 0..cols {
                            let (rr, rc) = ((rows - r) % rows, (cols - c) % cols);
                            prop_assert_eq!(y.values()[(r, c)], y.values()[(rr, rc)]);
                        }
                    }
                }
            }

            #[test]
            fn radially_non_increasing(alpha in 0.01f64..2.0, beta in 0.5f64..3.0) {
                let m = confidence_map(11, 11, alpha, beta).unwrap();
                let mut pairs: Vec<(f64, f64)> = (0..11)
                    .flat_map(|r| (0..11).map(move |c| (r, c)))
                    .map(|(r, c)| (toroidal_distance(r, c, (11, 11), (1.0, 1.0)), m.values()[(r, c)]))
                    .collect();
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                for w in pairs.windows(2) {
                    prop_assert!(w[1].1 <= w[0].1 + 1e-15);
                }
            }
        }
    }
}
