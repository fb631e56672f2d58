//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! The full-dataset criterion runs only when `SCF_DATASET` points at an
//! OTB-style directory and prints SKIP otherwise.

use std::path::PathBuf;
use std::time::Instant;

use scf_core::evaluation::{aggregate, format_table, list_sequences, load_sequence, run_ope};
use scf_core::speed::{self, SpeedOptions, DOUBLING_BAND};
use scf_core::verify::{self, Check};
use scf_core::{TrackerConfig, Variant};

const SEED: u64 = 7;
const SPEED_SIZES: [usize; 3] = [32, 64, 128];
const FULL_DATASET_SEQUENCES: usize = 50;

enum Outcome {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: usize,
    name: &'static str,
    outcome: Outcome,
    detail: String,
}

impl Line {
    fn from_checks(id: usize, name: &'static str, checks: &[Check], elapsed: f64) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        let mut detail = checks.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ");
        detail.push_str(&format!(" [{elapsed:.1} s]"));
        for c in checks.iter().filter(|c| !c.passed) {
            if let Some(replay) = &c.replay {
                detail.push_str(&format!("\n      replay {}: {replay}", c.name));
            }
        }
        Self {
            id,
            name,
            outcome: if passed { Outcome::Pass } else { Outcome::Fail },
            detail,
        }
    }

    fn error(id: usize, name: &'static str, err: impl std::fmt::Display) -> Self {
        Self {
            id,
            name,
            outcome: Outcome::Fail,
            detail: format!("error: {err}"),
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn checks_line(id: usize, name: &'static str, run: impl FnOnce() -> scf_core::Result<Vec<Check>>) -> Line {
    match timed(run) {
        (Ok(checks), elapsed) => Line::from_checks(id, name, &checks, elapsed),
        (Err(e), _) => Line::error(id, name, e),
    }
}

fn solver_equivalence() -> Line {
    checks_line(1, "solver-oracle equivalence", || {
        let check = verify::solver_equivalence(SEED, 50)?;
        let within_time = check.elapsed.is_some_and(|t| t < verify::SOLVER_TIME_LIMIT_S);
        let mut timing = check.clone();
        timing.name = "runtime".into();
        timing.passed = within_time;
        timing.detail = format!("{:.2} s (< {:.0} s)", check.elapsed.unwrap_or(f64::NAN), verify::SOLVER_TIME_LIMIT_S);
        timing.replay = None;
        Ok(vec![check, timing])
    })
}

fn complexity() -> Line {
    let id = 5;
    let name = "per-iteration complexity";
    let (result, elapsed) = timed(|| {
        [Variant::Scf, Variant::Mscf, Variant::Kscf]
            .into_iter()
            .map(|v| speed::measure(v, &SPEED_SIZES, SpeedOptions::default()))
            .collect::<scf_core::Result<Vec<_>>>()
    });
    let reports = match result {
        Ok(r) => r,
        Err(e) => return Line::error(id, name, e),
    };
    let passed = reports.iter().all(|r| r.ratios_in_band() && r.transforms_exact());
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            let ratios: Vec<String> = r.ratios.iter().map(|x| format!("{x:.2}")).collect();
            let transforms: Vec<String> = r.sizes.iter().map(|s| format!("{}", s.transforms_per_iteration)).collect();
            format!("{} ({} ch): ratios [{}], transforms/iter [{}]", r.variant, r.channels, ratios.join(", "), transforms.join(", "))
        })
        .collect();
    Line {
        id,
        name,
        outcome: if passed { Outcome::Pass } else { Outcome::Fail },
        detail: format!(
            "n = {:?}, band [{}, {}], exactly 2 transforms: {} [{elapsed:.1} s]",
            SPEED_SIZES,
            DOUBLING_BAND.0,
            DOUBLING_BAND.1,
            parts.join("; ")
        ),
    }
}

fn full_dataset() -> Line {
    let id = 8;
    let name = "full-dataset KSCF evaluation";
    let Some(root) = std::env::var_os("SCF_DATASET").map(PathBuf::from) else {
        return Line {
            id,
            name,
            outcome: Outcome::Skip,
            detail: "SCF_DATASET is not set".into(),
        };
    };
    let run = || -> scf_core::Result<(usize, usize, String, f64)> {
        let dirs = list_sequences(&root)?;
        let cfg = TrackerConfig::preset(Variant::Kscf);
        let mut results = Vec::with_capacity(dirs.len());
        for dir in &dirs {
            let seq = load_sequence(dir)?;
            results.push(run_ope(&cfg, &seq)?);
        }
        let summary = aggregate(&results)?;
        let table = format_table(&[("KSCF".to_string(), summary.clone())]);
        Ok((dirs.len(), results.len(), table, summary.mean_fps))
    };
    match timed(run) {
        (Ok((listed, done, table, fps)), elapsed) => {
            let passed = done == listed && listed >= FULL_DATASET_SEQUENCES && fps >= 1.0;
            Line {
                id,
                name,
                outcome: if passed { Outcome::Pass } else { Outcome::Fail },
                detail: format!(
                    "{done}/{listed} sequences completed (need {FULL_DATASET_SEQUENCES}), mean FPS {fps:.2} (>= 1) [{elapsed:.0} s]\n{table}\n      reference values for KSCF with HOG+CN: 85.0 DP / 57.5 AUC (informational)"
                ),
            }
        }
        (Err(e), _) => Line::error(id, name, e),
    }
}

fn main() {
    let lines = vec![
        solver_equivalence(),
        checks_line(2, "multi-channel equivalence", || Ok(vec![verify::multichannel_equivalence(SEED, 20)?])),
        checks_line(3, "kernel correctness", || Ok(vec![verify::kernel_correctness(SEED, 20)?])),
        checks_line(4, "convergence rate", || verify::convergence_rate(SEED, 20)),
        complexity(),
        checks_line(6, "tracking sanity", || verify::tracking_sanity(SEED)),
        checks_line(7, "metrics unit suite", || Ok(vec![verify::metrics_fixtures()?])),
        full_dataset(),
    ];
    let mut failed = 0;
    for line in &lines {
        let tag = match line.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => {
                failed += 1;
                "FAIL"
            }
            Outcome::Skip => "SKIP",
        };
        println!("{tag} [{}] {}: {}", line.id, line.name, line.detail);
    }
    println!("acceptance: {} passed, {failed} failed, {} skipped", lines.iter().filter(|l| matches!(l.outcome, Outcome::Pass)).count(), lines.iter().filter(|l| matches!(l.outcome, Outcome::Skip)).count());
    if failed > 0 {
        std::process::exit(1);
    }
}

