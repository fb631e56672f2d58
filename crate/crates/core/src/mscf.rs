//! Multi-channel support correlation filter.
//!
//! Per frequency the filter update is an `L x L` system
//! `(x_hat x_hat^H + I/C) w_hat = x_hat r_hat` whose matrix is a rank-one
//! update of a scaled identity, so it is solved in closed form.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::labeling::LabelGrid;
use crate::solver::{self, AlternatingModel, SolveOptions, Solution, SolverConfig, Trace};
use crate::spectral::{check_shape, guard, ComplexGrid, Fft2, RealGrid};

/// One spectral filter per channel plus a shared bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFilter {
    pub w_hat: Vec<ComplexGrid>,
    pub bias: f64,
}

impl MultiFilter {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            w_hat: vec![ComplexGrid::zeros(rows, cols); channels],
            bias: 0.0,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.w_hat.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_hat[0].shape()
    }

    /// `sum_l |w^l|^2`.
    pub fn weight_norm_sq(&self) -> f64 {
        let n = self.w_hat[0].len() as f64;
        self.w_hat.iter().map(ComplexGrid::norm_sq).sum::<f64>() / n
    }
}

/// Forward transform of every channel.
pub fn transform_stack(fft: &Fft2, x: &FeatureStack) -> Result<Vec<ComplexGrid>> {
    x.channels().iter().map(|c| fft.forward(c)).collect()
}

fn check_channels(x_hat: &[ComplexGrid], w_hat: &[ComplexGrid]) -> Result<()> {
    if x_hat.len() != w_hat.len() {
        return Err(Error::ChannelMismatch {
            expected: w_hat.len(),
            actual: x_hat.len(),
        });
    }
    if x_hat.is_empty() {
        return Err(Error::Features("empty channel list".into()));
    }
    for (x, w) in x_hat.iter().zip(w_hat) {
        check_shape(w.shape(), x.shape())?;
    }
    Ok(())
}

fn summed_products(x_hat: &[ComplexGrid], w_hat: &[ComplexGrid]) -> ComplexGrid {
    let (rows, cols) = x_hat[0].shape();
    let mut acc = ComplexGrid::zeros(rows, cols);
    for (x, w) in x_hat.iter().zip(w_hat) {
        for ((a, xv), wv) in acc.as_mut_slice().iter_mut().zip(x.iter()).zip(w.iter()) {
            *a += xv.conj() * wv;
        }
    }
    acc
}

/// `idft2(sum_l conj(x_hat^l) * w_hat^l) + b`.
pub fn multichannel_response(fft: &Fft2, x_hat: &[ComplexGrid], filter: &MultiFilter) -> Result<RealGrid> {
    check_channels(x_hat, &filter.w_hat)?;
    let f = fft.inverse(&summed_products(x_hat, &filter.w_hat))?;
    Ok(f.map(|v| v + filter.bias))
}

/// `w_hat^l(j) = C x_hat^l(j) r_hat(j) / (1 + C sum_k |x_hat^k(j)|^2)`.
pub fn update_filter_mc(x_hat: &[ComplexGrid], r_hat: &ComplexGrid, c: f64, floor: f64) -> Result<Vec<ComplexGrid>> {
    if x_hat.is_empty() {
        return Err(Error::Features("empty channel list".into()));
    }
    for x in x_hat {
        check_shape(r_hat.shape(), x.shape())?;
    }
    let (rows, cols) = r_hat.shape();
    let mut energy = vec![0.0; rows * cols];
    for x in x_hat {
        for (e, v) in energy.iter_mut().zip(x.iter()) {
            *e += v.norm_sqr();
        }
    }
    let gain: Vec<Complex64> = energy
        .iter()
        .zip(r_hat.iter())
        .map(|(&e, &r)| c * r / guard(Complex64::new(1.0 + c * e, 0.0), floor))
        .collect();
    x_hat
        .iter()
        .map(|x| {
            let data = x.iter().zip(&gain).map(|(&xv, &g)| xv * g).collect();
            ComplexGrid::new(rows, cols, data)
        })
        .collect()
}

/// Largest per-frequency defect `|(x x^H + I/C) w - x r| / (1 + |r|)` of a
/// candidate solution of the per-frequency system.
pub fn sherman_morrison_residual(x_hat: &[ComplexGrid], w_hat: &[ComplexGrid], r_hat: &ComplexGrid, c: f64) -> Result<f64> {
    check_channels(x_hat, w_hat)?;
    let mut worst = 0.0f64;
    for j in 0..r_hat.len() {
        let proj: Complex64 = x_hat.iter().zip(w_hat).map(|(x, w)| x.as_slice()[j].conj() * w.as_slice()[j]).sum();
        let r = r_hat.as_slice()[j];
        let defect: f64 = x_hat
            .iter()
            .zip(w_hat)
            .map(|(x, w)| (x.as_slice()[j] * proj + w.as_slice()[j] / c - x.as_slice()[j] * r).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(defect / (1.0 + r.norm()));
    }
    Ok(worst)
}

struct MscfModel<'a> {
    fft: &'a Fft2,
    x_hat: Vec<ComplexGrid>,
    max_channel_norm: f64,
    w_hat: Vec<ComplexGrid>,
    c: f64,
    floor: f64,
}

impl AlternatingModel for MscfModel<'_> {
    type Snapshot = Vec<ComplexGrid>;

    fn outputs(&self) -> Result<RealGrid> {
        self.fft.inverse(&summed_products(&self.x_hat, &self.w_hat))
    }

    fn refit(&mut self, p: &RealGrid) -> Result<()> {
        let p_hat = self.fft.forward(p)?;
        self.w_hat = update_filter_mc(&self.x_hat, &p_hat, self.c, self.floor)?;
        Ok(())
    }

    fn regularizer(&self) -> f64 {
        let n = self.w_hat[0].len() as f64;
        self.w_hat.iter().map(ComplexGrid::norm_sq).sum::<f64>() / n
    }

    fn drift_residual(&self, delta: &RealGrid) -> f64 {
        (self.max_channel_norm * delta.norm()).max(delta.sum().abs())
    }

    fn snapshot(&self) -> Vec<ComplexGrid> {
        self.w_hat.clone()
    }
}

/// Trains a multi-channel filter from a cold start.
pub fn solve_mscf(x: &FeatureStack, labels: &LabelGrid, cfg: &SolverConfig) -> Result<Solution<MultiFilter>> {
    let fft = Fft2::new(x.rows(), x.cols());
    Ok(solve_mscf_in(&fft, x, labels, cfg, &SolveOptions::default())?.0)
}

pub fn solve_mscf_in(
    fft: &Fft2,
    x: &FeatureStack,
    labels: &LabelGrid,
    cfg: &SolverConfig,
    opts: &SolveOptions<'_, MultiFilter>,
) -> Result<(Solution<MultiFilter>, Option<Trace<Vec<ComplexGrid>>>)> {
    check_shape(x.shape(), labels.shape())?;
    check_shape(fft.shape(), x.shape())?;
    let start = match opts.warm_start {
        Some(f) => {
            if f.num_channels() != x.num_channels() {
                return Err(Error::ChannelMismatch {
                    expected: x.num_channels(),
                    actual: f.num_channels(),
                });
            }
            check_shape(x.shape(), f.shape())?;
            f.clone()
        }
        None => MultiFilter::zeros(x.num_channels(), x.rows(), x.cols()),
    };
    let mut model = MscfModel {
        fft,
        x_hat: transform_stack(fft, x)?,
        max_channel_norm: x.channels().iter().map(RealGrid::norm).fold(0.0, f64::max),
        w_hat: start.w_hat,
        c: cfg.c,
        floor: cfg.division_floor,
    };
    let mut bias = start.bias;
    let (report, slack, trace) = solver::run(&mut model, &mut bias, labels, cfg, opts.record_trace)?;
    let filter = MultiFilter {
        w_hat: model.w_hat,
        bias,
    };
    Ok((Solution { filter, slack, report }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{assign_labels, confidence_map, Thresholds};
    use crate::scf::{self, SupportFilter};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealGrid {
        RealGrid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_stack(rng: &mut ChaCha8Rng, l: usize, n: usize) -> FeatureStack {
        FeatureStack::new((0..l).map(|_| random_grid(rng, n, n)).collect()).unwrap()
    }

    fn random_spectrum(rng: &mut ChaCha8Rng, n: usize) -> ComplexGrid {
        ComplexGrid::new(
            n,
            n,
            (0..n * n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_channel_response_matches_scf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fft = Fft2::new(6, 6);
        let x_hat = fft.forward(&random_grid(&mut rng, 6, 6)).unwrap();
        let w_hat = fft.forward(&random_grid(&mut rng, 6, 6)).unwrap();
        let mf = MultiFilter {
            w_hat: vec![w_hat.clone()],
            bias: 0.25,
        };
        let sf = SupportFilter { w_hat, bias: 0.25 };
        let a = multichannel_response(&fft, std::slice::from_ref(&x_hat), &mf).unwrap();
        let b = scf::response(&fft, &x_hat, &sf).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_filter_gives_constant_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fft = Fft2::new(5, 5);
        let x = random_stack(&mut rng, 3, 5);
        let mut filter = MultiFilter::zeros(3, 5, 5);
        filter.bias = -0.7;
        let f = multichannel_response(&fft, &transform_stack(&fft, &x).unwrap(), &filter).unwrap();
        assert!(f.iter().all(|&v| (v + 0.7).abs() < 1e-15));
    }

    #[test]
    fn response_matches_shifted_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let fft = Fft2::new(n, n);
        let x = random_stack(&mut rng, 3, n);
        let w = random_stack(&mut rng, 3, n);
        let filter = MultiFilter {
            w_hat: transform_stack(&fft, &w).unwrap(),
            bias: 0.1,
        };
        let f = multichannel_response(&fft, &transform_stack(&fft, &x).unwrap(), &filter).unwrap();
        for u in 0..n {
            for v in 0..n {
                let shifted = x.translated(u as isize, v as isize);
                let dense: f64 = (0..3).map(|l| shifted.channel(l).dot(w.channel(l))).sum::<f64>() + 0.1;
                assert!((f[(u, v)] - dense).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let fft = Fft2::new(4, 4);
        let x_hat = vec![ComplexGrid::zeros(4, 4); 2];
        let filter = MultiFilter::zeros(3, 4, 4);
        assert!(matches!(
            multichannel_response(&fft, &x_hat, &filter),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn single_channel_update_matches_scf() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x_hat = random_spectrum(&mut rng, 6);
        let r_hat = random_spectrum(&mut rng, 6);
        let mc = update_filter_mc(std::slice::from_ref(&x_hat), &r_hat, 37.0, 1e-12).unwrap();
        let sc = scf::update_filter(&x_hat, &r_hat, 37.0, 1e-12).unwrap();
        for (a, b) in mc[0].iter().zip(sc.iter()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn vanishing_frequency_gives_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x_hat = vec![random_spectrum(&mut rng, 4), random_spectrum(&mut rng, 4)];
        for x in &mut x_hat {
            x[(1, 2)] = Complex64::new(0.0, 0.0);
        }
        let w = update_filter_mc(&x_hat, &random_spectrum(&mut rng, 4), 10.0, 1e-12).unwrap();
        assert_eq!(w[0][(1, 2)], Complex64::new(0.0, 0.0));
        assert_eq!(w[1][(1, 2)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rank_one_solve_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = 3;
        let c = 12.5;
        let x_hat: Vec<ComplexGrid> = (0..l).map(|_| random_spectrum(&mut rng, 4)).collect();
        let r_hat = random_spectrum(&mut rng, 4);
        let w = update_filter_mc(&x_hat, &r_hat, c, 1e-12).unwrap();
        for j in 0..16 {
            let xj = DVector::from_fn(l, |k, _| x_hat[k].as_slice()[j]);
            let mut a: DMatrix<Complex64> = &xj * xj.adjoint();
            for k in 0..l {
                a[(k, k)] += Complex64::new(1.0 / c, 0.0);
            }
            let direct = a.lu().solve(&(&xj * r_hat.as_slice()[j])).unwrap();
            for k in 0..l {
                let got = w[k].as_slice()[j];
                assert!((got - direct[k]).norm() <= 1e-10 * direct.norm().max(1e-300));
            }
        }
        assert!(sherman_morrison_residual(&x_hat, &w, &r_hat, c).unwrap() <= 1e-10);
    }

    #[test]
    fn sherman_morrison_residual_detects_wrong_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x_hat: Vec<ComplexGrid> = (0..2).map(|_| random_spectrum(&mut rng, 4)).collect();
        let r_hat = random_spectrum(&mut rng, 4);
        let wrong = vec![r_hat.clone(), r_hat.clone()];
        assert!(sherman_morrison_residual(&x_hat, &wrong, &r_hat, 3.0).unwrap() > 1e-3);
    }

    #[test]
    fn infinite_tolerance_stops_after_one_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_stack(&mut rng, 2, 6);
        let y = assign_labels(&confidence_map(6, 6, 0.5, 2.0).unwrap(), Thresholds::SCF).unwrap();
        let cfg = SolverConfig::new(10.0, f64::INFINITY, 100).unwrap();
        assert_eq!(solve_mscf(&x, &y, &cfg).unwrap().report.iterations, 1);
    }

    #[test]
    fn single_channel_solve_matches_scf() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_grid(&mut rng, 6, 6);
        let y = assign_labels(&confidence_map(6, 6, 0.5, 2.0).unwrap(), Thresholds::SCF).unwrap();
        let cfg = SolverConfig::for_oracle(10.0);
        let a = solve_mscf(&FeatureStack::single(x.clone()).unwrap(), &y, &cfg).unwrap();
        let b = scf::solve_scf(&x, &y, &cfg).unwrap();
        assert!((a.filter.bias - b.filter.bias).abs() < 1e-5);
        for (p, q) in a.filter.w_hat[0].iter().zip(b.filter.w_hat.iter()) {
            assert!((p - q).norm() < 1e-5);
        }
    }
}
