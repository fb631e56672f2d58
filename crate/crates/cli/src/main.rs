use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use scf_core::evaluation::{self, aggregate, format_table, list_sequences, load_sequence, run_ope, OpeResult};
use scf_core::speed::{self, SpeedOptions};
use scf_core::verify::{self, Suite};
use scf_core::{FeatureKind, KernelSpec, Thresholds, TrackerConfig, Variant};

#[derive(Parser)]
#[command(name = "scf", version, about = "Support correlation filter tracking, evaluation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence from its first ground-truth box.
    Track(TrackArgs),
    /// One-pass evaluation of several variants over a dataset.
    Eval(EvalArgs),
    /// Run the oracle-equivalence and property suites.
    Verify(VerifyArgs),
    /// Time solver iterations at several grid sizes.
    BenchSpeed(BenchArgs),
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory holding img/ and groundtruth_rect.txt.
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value = "scf", value_parser = variant_parser())]
    variant: Variant,
    /// Output directory for the run file, curves and config echo.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory with one sequence directory per entry.
    #[arg(long, env = "SCF_DATASET")]
    dataset: PathBuf,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "scf,mscf,kscf,skscf", value_parser = variant_parser())]
    variants: Vec<Variant>,
    /// Output directory; one subdirectory per variant plus the summaries.
    #[arg(long)]
    out: PathBuf,
    /// Only these sequences (comma-separated directory names).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Sequences tracked in parallel. FPS figures are only comparable at 1.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = suite_parser())]
    suite: Suite,
    /// Seed of the random problem instances.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also write the checks as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated grid sizes; ratios are reported for sizes that double.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
    sizes: Vec<usize>,
    #[arg(long, default_value = "scf", value_parser = variant_parser())]
    variant: Variant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing repeats per size; the fastest is kept.
    #[arg(long, default_value_t = 7)]
    repeats: usize,
}

fn variant_parser() -> impl clap::builder::TypedValueParser<Value = Variant> {
    clap::builder::PossibleValuesParser::new(Variant::ALL.map(Variant::name))
        .map(|s| s.parse::<Variant>().expect("possible values are variant names"))
}

fn suite_parser() -> impl clap::builder::TypedValueParser<Value = Suite> {
    clap::builder::PossibleValuesParser::new(["solver", "kernel", "convergence", "metrics", "tracking", "all"])
        .map(|s| s.parse::<Suite>().expect("possible values are suite names"))
}

#[derive(Clone, Copy, ValueEnum)]
enum Features {
    Raw,
    Hog,
    HogCn,
}

impl From<Features> for FeatureKind {
    fn from(f: Features) -> Self {
        match f {
            Features::Raw => FeatureKind::Raw,
            Features::Hog => FeatureKind::Hog,
            Features::HogCn => FeatureKind::HogCn,
        }
    }
}

/// Changes applied on top of the variant preset (or of `--config`).
#[derive(Args)]
struct Overrides {
    /// Tracker configuration as JSON: a bare config or a config echo.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature set; also resets the adaption rate to its preset.
    #[arg(long)]
    features: Option<Features>,
    /// Adaption rate.
    #[arg(long)]
    rho: Option<f64>,
    /// Loss/regularizer trade-off.
    #[arg(long)]
    c: Option<f64>,
    /// Search region size relative to the target.
    #[arg(long)]
    padding: Option<f64>,
    /// Label thresholds, as `L,U` or `L U`.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LOWER", "UPPER"])]
    thresholds: Option<Vec<f64>>,
    /// Gaussian kernel width.
    #[arg(long)]
    sigma: Option<f64>,
    /// Polynomial kernel degree; replaces the Gaussian kernel.
    #[arg(long, conflicts_with = "sigma")]
    degree: Option<u32>,
    /// Comma-separated scale factors.
    #[arg(long, value_delimiter = ',')]
    scale_pool: Option<Vec<f64>>,
    /// Solver stopping threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Confidence map decay.
    #[arg(long)]
    alpha: Option<f64>,
    /// Confidence map exponent.
    #[arg(long)]
    beta: Option<f64>,
    /// Solver iteration cap on the first frame.
    #[arg(long)]
    init_max_iter: Option<usize>,
    /// Solver iteration cap on later frames.
    #[arg(long)]
    online_max_iter: Option<usize>,
    /// Anderson mixing depth; 0 runs the plain solver.
    #[arg(long)]
    anderson_memory: Option<usize>,
    /// Disable the cosine window.
    #[arg(long)]
    no_window: bool,
    /// Color-name table replacing the built-in one.
    #[arg(long)]
    color_table: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, variant: Variant) -> Result<TrackerConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path).map_err(Failure::Usage)?,
            None => TrackerConfig::preset(variant),
        };
        if let Some(path) = self.config.as_ref().filter(|_| cfg.variant != variant) {
            log::info!("variant {} taken from {}", cfg.variant, path.display());
        }
        if let Some(f) = self.features {
            cfg = cfg.with_features(f.into());
        }
        macro_rules! set {
            ($($field:ident = $value:expr),* $(,)?) => {
                $(if let Some(v) = $value { cfg.$field = v; })*
            };
        }
        set!(
            adaption_rate = self.rho,
            c = self.c,
            padding = self.padding,
            scale_pool = self.scale_pool.clone(),
            beta = self.beta,
            init_max_iter = self.init_max_iter,
            online_max_iter = self.online_max_iter,
            anderson_memory = self.anderson_memory,
        );
        if let Some(t) = &self.thresholds {
            cfg.thresholds = Thresholds { lower: t[0], upper: t[1] };
        }
        if let Some(sigma) = self.sigma {
            cfg.kernel = KernelSpec::Gaussian { sigma };
        }
        if let Some(degree) = self.degree {
            cfg.kernel = KernelSpec::Polynomial { degree };
        }
        if self.epsilon.is_some() {
            cfg.epsilon = self.epsilon;
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        if self.no_window {
            cfg.window = false;
        }
        if self.color_table.is_some() {
            cfg.color_table = self.color_table.clone();
        }
        cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> anyhow::Result<TrackerConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(inner) = value.get_mut("tracker") {
        value = inner.take();
    }
    serde_json::from_value(value).with_context(|| format!("{} is not a tracker configuration", path.display()))
}

enum Failure {
    /// Bad arguments, configuration or inputs: exit 2.
    Usage(anyhow::Error),
    /// A check or run failed: exit 1.
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Failed(e)
    }
}

impl From<scf_core::Error> for Failure {
    fn from(e: scf_core::Error) -> Self {
        Failure::Failed(e.into())
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn summary_line(r: &OpeResult) -> String {
    format!(
        "{}: {} frames, DP@20 {:.1}%, AUC {:.1}%, {:.2} FPS{}",
        r.sequence,
        r.boxes.len(),
        100.0 * r.dp20,
        100.0 * r.auc,
        r.fps,
        if r.failures.is_empty() { String::new() } else { format!(", {} failed steps", r.failures.len()) }
    )
}

fn track(args: &TrackArgs) -> Result<(), Failure> {
    let cfg = args.overrides.apply(args.variant)?;
    let seq = load_sequence(&args.seq).map_err(|e| Failure::Usage(e.into()))?;
    create_dir(&args.out)?;
    write_json(
        &args.out.join("config.json"),
        &json!({ "command": "track", "sequence": args.seq, "tracker": cfg }),
    )?;
    let result = run_ope(&cfg, &seq)?;
    evaluation::write_run(&args.out.join(format!("{}.jsonl", seq.name)), &result)?;
    evaluation::write_curves(&args.out.join(format!("{}.curves.json", seq.name)), &result)?;
    println!("{} {}", cfg.variant, summary_line(&result));
    Ok(())
}

/// Tracks every sequence, `jobs` at a time; failures are logged and skipped.
fn run_variant(cfg: &TrackerConfig, dirs: &[PathBuf], jobs: usize) -> Vec<OpeResult> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; dirs.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(dir) = dirs.get(i) else { break };
                let outcome = load_sequence(dir).and_then(|seq| run_ope(cfg, &seq));
                match outcome {
                    Ok(r) => {
                        log::info!("{} {}", cfg.variant, summary_line(&r));
                        results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
                    }
                    Err(e) => log::error!("{} {}: {e}", cfg.variant, dir.display()),
                }
            });
        }
    });
    results.into_inner().expect("workers have finished").into_iter().flatten().collect()
}

fn eval(args: &EvalArgs) -> Result<(), Failure> {
    if args.variants.is_empty() {
        return Err(Failure::Usage(anyhow!("no variants given")));
    }
    let mut dirs = list_sequences(&args.dataset).map_err(|e| Failure::Usage(e.into()))?;
    if !args.only.is_empty() {
        dirs.retain(|d| d.file_name().and_then(|n| n.to_str()).is_some_and(|n| args.only.iter().any(|o| o == n)));
    }
    if dirs.is_empty() {
        return Err(Failure::Usage(anyhow!("no sequences found under {}", args.dataset.display())));
    }
    let configs = args
        .variants
        .iter()
        .map(|&v| args.overrides.apply(v).map(|c| (v, c)))
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(&args.out)?;
    let mut rows = Vec::new();
    for (variant, cfg) in &configs {
        let dir = args.out.join(variant.name());
        create_dir(&dir)?;
        write_json(
            &dir.join("config.json"),
            &json!({ "command": "eval", "dataset": args.dataset, "only": args.only, "tracker": cfg }),
        )?;
        let results = run_variant(cfg, &dirs, args.jobs);
        for r in &results {
            evaluation::write_run(&dir.join(format!("{}.jsonl", r.sequence)), r)?;
            evaluation::write_curves(&dir.join(format!("{}.curves.json", r.sequence)), r)?;
        }
        if results.len() < dirs.len() {
            log::warn!("{variant}: {} of {} sequences failed", dirs.len() - results.len(), dirs.len());
        }
        match aggregate(&results) {
            Ok(summary) => rows.push((variant.name().to_uppercase(), summary)),
            Err(e) => log::error!("{variant}: no sequence completed: {e}"),
        }
    }
    if rows.is_empty() {
        return Err(Failure::Failed(anyhow!("no (variant, sequence) pair completed")));
    }
    evaluation::write_summary_csv(&args.out.join("summary.csv"), &rows)?;
    evaluation::write_summary_json(&args.out.join("summary.json"), &rows)?;
    print!("{}", format_table(&rows));
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let checks = verify::run_suite(args.suite, args.seed)?;
    for c in &checks {
        println!("{c}");
        if !c.passed {
            if let Some(replay) = &c.replay {
                println!("  replay: {replay}");
            }
        }
    }
    if let Some(path) = &args.json {
        write_json(path, &json!({ "suite": args.suite, "seed": args.seed, "checks": checks }))?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        return Err(Failure::Failed(anyhow!("{failed} verification checks failed")));
    }
    Ok(())
}

fn bench_speed(args: &BenchArgs) -> Result<(), Failure> {
    let opts = SpeedOptions {
        seed: args.seed,
        repeats: args.repeats,
        ..SpeedOptions::default()
    };
    let report = speed::measure(args.variant, &args.sizes, opts).map_err(|e| Failure::Usage(e.into()))?;
    println!("{} with {} channel(s)", report.variant, report.channels);
    println!("{:>6} {:>16} {:>12}", "n", "s / iteration", "transforms");
    for s in &report.sizes {
        println!("{:>6} {:>16.3e} {:>12}", s.n, s.per_iteration_s, s.transforms_per_iteration);
    }
    for (w, r) in report.sizes.windows(2).zip(&report.ratios) {
        println!("ratio {} -> {}: {r:.2}", w[0].n, w[1].n);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => run_verify(a),
        Command::BenchSpeed(a) => bench_speed(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
