//! Per-iteration cost of the alternating solvers on synthetic inputs.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kscf::{solve_kscf_in, KernelSpec};
use crate::labeling::Thresholds;
use crate::mscf::solve_mscf_in;
use crate::scf::solve_scf_in;
use crate::solver::{SolveOptions, SolverConfig};
use crate::spectral::Fft2;
use crate::synthetic::{instance_labels, random_stack, rng};
use crate::tracker::Variant;

/// Accepted range of the time ratio between consecutive doubled sizes.
pub const DOUBLING_BAND: (f64, f64) = (3.5, 6.0);

#[derive(Debug, Clone, Serialize)]
pub struct SizeTiming {
    pub n: usize,
    /// Seconds per solver iteration, setup excluded.
    pub per_iteration_s: f64,
    pub transforms_per_iteration: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedReport {
    pub variant: Variant,
    pub channels: usize,
    pub sizes: Vec<SizeTiming>,
    /// `time(n_{k+1}) / time(n_k)` for consecutive sizes.
    pub ratios: Vec<f64>,
}

impl SpeedReport {
    /// Ratios of sizes that double, all inside [`DOUBLING_BAND`].
    pub fn ratios_in_band(&self) -> bool {
        self.sizes
            .windows(2)
            .zip(&self.ratios)
            .filter(|(w, _)| w[1].n == 2 * w[0].n)
            .all(|(_, &r)| (DOUBLING_BAND.0..=DOUBLING_BAND.1).contains(&r))
    }

    pub fn transforms_exact(&self) -> bool {
        self.sizes.iter().all(|s| s.transforms_per_iteration == 2.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpeedOptions {
    /// Iterations of the short and the long run at n = 128; their difference
    /// is timed. Smaller sizes lengthen the long run in proportion to n^2.
    pub iterations: (usize, usize),
    /// Best of this many repetitions is kept.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        Self {
            iterations: (2, 62),
            repeats: 7,
            seed: 0,
        }
    }
}

/// Wall time and transform count of one solve capped at `iters` iterations.
fn timed_solve(variant: Variant, n: usize, iters: usize, seed: u64) -> Result<(f64, u64, usize)> {
    let channels = channels_for(variant);
    let x = random_stack(&mut rng(seed), channels, n, n);
    let labels = instance_labels(n, n, Thresholds::SCF)?;
    let fft = Fft2::new(n, n);
    // an unreachable threshold makes every solve run to the cap
    let cfg = SolverConfig::new(1e4, f64::MIN_POSITIVE, iters)?;
    let before = fft.transform_count();
    let start = Instant::now();
    let iterations = match variant {
        Variant::Scf => solve_scf_in(&fft, x.channel(0), &labels, &cfg, &SolveOptions::default())?.0.report.iterations,
        Variant::Mscf => solve_mscf_in(&fft, &x, &labels, &cfg, &SolveOptions::default())?.0.report.iterations,
        Variant::Kscf | Variant::Skscf => {
            solve_kscf_in(&fft, &x, &labels, KernelSpec::Gaussian { sigma: 0.2 }, &cfg, &SolveOptions::default())?
                .0
                .report
                .iterations
        }
    };
    Ok((start.elapsed().as_secs_f64(), fft.transform_count() - before, iterations))
}

fn channels_for(variant: Variant) -> usize {
    match variant {
        Variant::Scf => 1,
        _ => 4,
    }
}

/// Keeps large grids on the heap free lists. Under the default glibc
/// settings every grid of 128 x 128 or more is mapped and unmapped on each
/// allocation, which adds a page-fault cost that jumps at that size.
fn pin_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        const MMAP_THRESHOLD: libc::c_int = 64 << 20;
        // SAFETY: mallopt only adjusts allocator tuning parameters.
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, MMAP_THRESHOLD);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 2 * MMAP_THRESHOLD);
        }
    }
}

/// Times solver iterations at each size. The per-iteration figure is the
/// difference between a long and a short run, so setup work cancels.
///
/// On glibc this raises the process-wide mmap threshold to 64 MiB.
pub fn measure(variant: Variant, sizes: &[usize], opts: SpeedOptions) -> Result<SpeedReport> {
    let (short, long) = opts.iterations;
    if sizes.is_empty() || short == 0 || long <= short || opts.repeats == 0 {
        return Err(Error::param("need sizes, 0 < short < long iterations and at least one repeat"));
    }
    pin_allocator();
    for &n in sizes {
        if n < 2 {
            return Err(Error::param(format!("size {n} is too small")));
        }
    }
    // Sizes are interleaved within each repetition, so a slow spell on the
    // machine lands on every size instead of skewing one ratio.
    let mut best = vec![(f64::INFINITY, f64::INFINITY); sizes.len()];
    let mut counts = vec![(0.0, 0.0); sizes.len()];
    for r in 0..opts.repeats {
        let seed = opts.seed.wrapping_add(r as u64);
        for (k, &n) in sizes.iter().enumerate() {
            // scale the long run so every size does a similar amount of work
            let extra = ((long - short) * (128 * 128) / (n * n)).max(long - short);
            let (t_short, c_short, i_short) = timed_solve(variant, n, short, seed)?;
            let (t_long, c_long, i_long) = timed_solve(variant, n, short + extra, seed)?;
            if i_long <= i_short {
                return Err(Error::param(format!("solver stopped early at n = {n}")));
            }
            let steps = (i_long - i_short) as f64;
            best[k] = (best[k].0.min(t_short), best[k].1.min(t_long));
            counts[k] = (steps, (c_long - c_short) as f64 / steps);
        }
    }
    let timings: Vec<SizeTiming> = sizes
        .iter()
        .zip(best.iter().zip(&counts))
        .map(|(&n, (&(t_short, t_long), &(steps, transforms)))| {
            let per_iteration_s = (t_long - t_short).max(0.0) / steps;
            log::debug!("n = {n}: {per_iteration_s:.3e} s per iteration");
            SizeTiming {
                n,
                per_iteration_s,
                transforms_per_iteration: transforms,
            }
        })
        .collect();
    let ratios = timings.windows(2).map(|w| w[1].per_iteration_s / w[0].per_iteration_s).collect();
    Ok(SpeedReport {
        variant,
        channels: channels_for(variant),
        sizes: timings,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_transforms_per_iteration_for_every_variant() {
        let opts = SpeedOptions {
            iterations: (1, 4),
            repeats: 1,
            seed: 3,
        };
        for v in [Variant::Scf, Variant::Mscf, Variant::Kscf] {
            let r = measure(v, &[8], opts).unwrap();
            assert!(r.transforms_exact(), "{v}: {:?}", r.sizes);
            assert!(r.ratios.is_empty());
        }
    }

    #[test]
    fn bad_options_are_rejected() {
        assert!(measure(Variant::Scf, &[], SpeedOptions::default()).is_err());
        let opts = SpeedOptions {
            iterations: (5, 5),
            ..SpeedOptions::default()
        };
        assert!(measure(Variant::Scf, &[8], opts).is_err());
    }
}
