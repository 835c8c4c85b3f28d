use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use mrseg_eval::consensus::{pairwise_agreement, staple, STAPLE_MAX_ITER, STAPLE_TOL};
use mrseg_eval::harness::{evaluate_cohort, EvalConfig, TeamSubmission, VolumeUnit};
use mrseg_eval::io::{
    annotation_file, discover_cases, load_labels, load_reference, save_f32, save_mask,
    ANNOTATION_LABELS, RATER_COUNT, STAPLE_FILE, TUMOR_LABEL,
};
use mrseg_eval::metrics::ThresholdSet;
use mrseg_eval::phantom::{write_cohort, CohortSpec};

#[derive(Parser)]
#[command(
    name = "mrseg-eval",
    version,
    about = "Multi-rater tumor segmentation evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one or more submissions and write leaderboards and reports.
    Evaluate(EvaluateArgs),
    /// Rater agreement matrix over a dataset, or STAPLE fusion of one case.
    Consensus(ConsensusArgs),
    /// Synthetic cases with known geometry.
    #[command(subcommand)]
    Phantom(PhantomCommand),
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Team submission as NAME=DIR; repeatable.
    #[arg(long = "submission", value_name = "NAME=DIR")]
    submissions: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated probability thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    bootstrap_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    complexity_threshold: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Report overlap and calibration in percent.
    #[arg(long)]
    percent: bool,
    /// Report volumes in mm³ instead of cm³.
    #[arg(long)]
    mm3: bool,
    /// Also write SVG charts.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct ConsensusArgs {
    /// Dataset root; writes the pairwise agreement matrix to --out.
    #[arg(long, required_unless_present = "case", conflicts_with = "case")]
    dataset_root: Option<PathBuf>,
    /// Single case directory holding annotation_1..5; writes its STAPLE mask.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Matrix CSV, or fused mask (defaults to the case's STAPLE file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the voxel-wise posterior.
    #[arg(long)]
    posterior: Option<PathBuf>,
    #[arg(long, default_value_t = STAPLE_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = STAPLE_TOL)]
    tol: f64,
}

#[derive(Subcommand)]
enum PhantomCommand {
    /// Write a synthetic dataset and submissions in the benchmark layout.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Case or cohort description (JSON).
    #[arg(long, conflicts_with = "demo")]
    spec: Option<PathBuf>,
    /// Generate the built-in demo cohort with this many cases.
    #[arg(long)]
    demo: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_submission(s: &str) -> Result<TeamSubmission> {
    let (name, root) = s
        .split_once('=')
        .with_context(|| format!("submission {s:?} is not NAME=DIR"))?;
    Ok(TeamSubmission {
        name: name.to_string(),
        root: PathBuf::from(root),
    })
}

fn build_config(args: &EvaluateArgs) -> Result<EvalConfig> {
    let mut cfg = match &args.config {
        Some(path) => EvalConfig::from_json_file(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => EvalConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset_root = d.clone();
    }
    if !args.submissions.is_empty() {
        cfg.submissions = args
            .submissions
            .iter()
            .map(|s| parse_submission(s))
            .collect::<Result<_>>()?;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = &args.thresholds {
        cfg.thresholds = ThresholdSet::new(t.clone())?;
    }
    if let Some(n) = args.bootstrap_iters {
        cfg.bootstrap_iterations = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.complexity_threshold {
        cfg.complexity_threshold = t;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.units.percent |= args.percent;
    if args.mm3 {
        cfg.units.volume = VolumeUnit::Mm3;
    }
    cfg.plots |= args.plots;
    if cfg.dataset_root.as_os_str().is_empty() {
        bail!("no dataset given (--dataset or config dataset_root)");
    }
    if cfg.submissions.is_empty() {
        bail!("no submissions given (--submission NAME=DIR or config submissions)");
    }
    Ok(cfg)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let result = evaluate_cohort(&cfg)?;
    for e in &result.errors {
        warn!(
            "not evaluated: case {} team {}: {}",
            e.case_id,
            e.team.as_deref().unwrap_or("-"),
            e.error
        );
    }
    println!(
        "{} cases ranked, {} errors; reports in {}",
        result.ranking.cases.len(),
        result.errors.len(),
        cfg.output_dir.display()
    );
    for s in &result.ranking.leaderboard.standings {
        println!("{:<24} {:>6.2} ± {:.2}", s.team, s.mean_rank, s.rank_std);
    }
    Ok(())
}

fn consensus(args: &ConsensusArgs) -> Result<()> {
    match (&args.dataset_root, &args.case) {
        (Some(root), _) => {
            let out = args
                .out
                .as_ref()
                .context("--out is required with --dataset-root")?;
            agreement(root, out)
        }
        (None, Some(case)) => fuse(case, args),
        (None, None) => bail!("give --dataset-root or --case"),
    }
}

fn fuse(case: &Path, args: &ConsensusArgs) -> Result<()> {
    let masks = (1..=RATER_COUNT)
        .map(|k| {
            let p = case.join(annotation_file(k));
            Ok(load_labels(&p, ANNOTATION_LABELS)
                .with_context(|| format!("reading {}", p.display()))?
                .extract(TUMOR_LABEL))
        })
        .collect::<Result<Vec<_>>>()?;
    let result = staple(&masks, args.max_iter, args.tol)?;
    let out = args.out.clone().unwrap_or_else(|| case.join(STAPLE_FILE));
    save_mask(&result.consensus_bin, &out)?;
    if let Some(p) = &args.posterior {
        save_f32(&result.posterior.map(|&v| v as f32), p)?;
    }
    println!(
        "{} iterations (converged: {}), prior {:.4}",
        result.iterations, result.converged, result.prior
    );
    for (k, (p, q)) in result
        .sensitivities
        .iter()
        .zip(&result.specificities)
        .enumerate()
    {
        println!("rater {}: sensitivity {p:.4} specificity {q:.6}", k + 1);
    }
    info!("wrote {}", out.display());
    Ok(())
}

fn agreement(root: &Path, out: &Path) -> Result<()> {
    let discovery = discover_cases(root, None)?;
    let references = discovery
        .complete
        .iter()
        .map(|d| load_reference(d, false).with_context(|| format!("case {}", d.case_id)))
        .collect::<Result<Vec<_>>>()?;
    let matrix = pairwise_agreement(&references)?;
    matrix.write_csv(out)?;
    println!(
        "{} cases; pooled inter-rater DSC {:.4} ± {:.4}",
        matrix.case_count, matrix.pooled_interrater.mean, matrix.pooled_interrater.std
    );
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let spec = match (&args.spec, args.demo) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            CohortSpec::from_json(&text)?
        }
        (None, Some(n)) => CohortSpec::demo(n, args.seed),
        (None, None) => bail!("give --spec FILE or --demo N"),
    };
    let layout = write_cohort(&spec, &args.out)?;
    println!("dataset: {}", layout.dataset.display());
    for (team, dir) in &layout.submissions {
        println!("submission {team}: {}", dir.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Consensus(a) => consensus(a),
        Command::Phantom(PhantomCommand::Generate(a)) => generate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
