//! Batch command-line interface for the five-lobe segmentation pipeline.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 input I/O or format error,
//! 3 seeding failure, 4 solver failure. Every error prints a single
//! `ERROR <kind>: <detail>` line on standard error; progress and diagnostics
//! go to standard output as `key=value` lines.

use clap::{Args, Parser, Subcommand};
use lobeseg::io::{
    hu_window, read_volume, write_metrics_csv, write_volume, IoError, RawVolume, WindowSpec,
};
use lobeseg::metrics::{cumulative_histogram, lobe_scores, MetricsError};
use lobeseg::phantom::{self, PhantomConfig, PhantomError};
use lobeseg::rw::{segment_lobes, RwConfig, RwError, SegmentationResult};
use lobeseg::seeding::{
    boundary_mask, generate_seeds, interior_mask, LobeId, SeedSet, SeedingConfig, SeedingError,
};
use lobeseg::volume::VolumeError;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "lobeseg",
    about = "Five-lobe lung segmentation from a lobar-boundary probability volume",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeding and the random walker, writing a lobe label volume.
    Segment(SegmentArgs),
    /// Run the seeding stage only, writing seed labels.
    Seeds(SeedsArgs),
    /// Score a predicted label volume against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic phantom case.
    Phantom(PhantomArgs),
    /// Rescale a Hounsfield volume into three windowed 8-bit channels.
    Window(WindowArgs),
    /// Tabulate a cumulative histogram over a list of scores.
    Hist(HistArgs),
}

#[derive(Args)]
struct SeedingFlags {
    /// Boundary probability threshold (inclusive).
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 64)]
    max_erosions: usize,
    #[arg(long, default_value_t = 50)]
    min_seed_voxels: usize,
}

impl SeedingFlags {
    fn config(&self) -> SeedingConfig {
        SeedingConfig {
            theta: self.theta,
            max_erosions: self.max_erosions,
            min_seed_voxels: self.min_seed_voxels,
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Boundary probability volume (float32/float64 in [0, 1]).
    #[arg(long)]
    prob: PathBuf,
    /// Lung mask volume (uint8, nonzero = lung).
    #[arg(long)]
    lung: PathBuf,
    /// Output lobe label volume.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[command(flatten)]
    seeding: SeedingFlags,
    /// Also write the seed label volume here.
    #[arg(long)]
    seeds_out: Option<PathBuf>,
    /// Also write the five per-lobe probability volumes as <prefix>_<LOBE>.mhd.
    #[arg(long)]
    probs_out_prefix: Option<String>,
}

#[derive(Args)]
struct SeedsArgs {
    #[arg(long)]
    prob: PathBuf,
    #[arg(long)]
    lung: PathBuf,
    /// Output seed label volume (labels 1..5 at seed voxels).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seeding: SeedingFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted lobe label volume.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth lobe label volume.
    #[arg(long)]
    gt: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct PhantomArgs {
    /// Grid size as nx,ny,nz.
    #[arg(long, default_value = "64,64,64")]
    dims: String,
    #[arg(long, default_value_t = 0.0)]
    gap_frac: f64,
    /// Additive Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.5)]
    ridge_sigma: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory receiving prob.mhd/.raw, lung.mhd/.raw, gt.mhd/.raw.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct WindowArgs {
    /// Hounsfield volume (int16).
    #[arg(long)]
    hu: PathBuf,
    /// Channel volumes are written as <prefix>_ch1/2/3.mhd.
    #[arg(long)]
    out_prefix: String,
    /// Three windows as lo:hi,lo:hi,lo:hi.
    #[arg(long, default_value = "-1000:200,-160:240,-1000:-775")]
    windows: String,
}

#[derive(Args)]
struct HistArgs {
    /// Text file with one score per line.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    bins: usize,
    /// Score range as lo:hi.
    #[arg(long)]
    range: String,
    /// Output CSV path (threshold,fraction).
    #[arg(long)]
    out: PathBuf,
}

struct CliError {
    code: i32,
    kind: &'static str,
    detail: String,
}

type CliResult<T> = Result<T, CliError>;

fn invalid_args(detail: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        kind: "InvalidArgs",
        detail: detail.into(),
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let kind = match &e {
            IoError::Io(_) => "Io",
            IoError::Parse { .. } => "Parse",
            IoError::TypeMismatch { .. } => "TypeMismatch",
            IoError::TruncatedData { .. } => "TruncatedData",
            IoError::InvalidData(_) => "InvalidData",
            IoError::EmptyInput => "EmptyInput",
        };
        CliError {
            code: 2,
            kind,
            detail: e.to_string(),
        }
    }
}

impl From<SeedingError> for CliError {
    fn from(e: SeedingError) -> Self {
        let (code, kind) = match &e {
            SeedingError::MetaMismatch(_) => (2, "MetaMismatch"),
            SeedingError::SeedCountNeverFive { .. } => (3, "SeedCountNeverFive"),
            SeedingError::LungPartition(_) => (3, "LungPartitionError"),
            SeedingError::InvalidSeeds(_) => (3, "InvalidSeeds"),
        };
        CliError {
            code,
            kind,
            detail: e.to_string(),
        }
    }
}

impl From<RwError> for CliError {
    fn from(e: RwError) -> Self {
        let (code, kind) = match &e {
            RwError::MetaMismatch(_) => (2, "MetaMismatch"),
            RwError::EmptyLung => (3, "EmptyLung"),
            RwError::SolverDiverged { .. } => (4, "SolverDiverged"),
            RwError::TooLarge { .. } => (4, "TooLarge"),
            RwError::InvalidSeeds(_) => (3, "InvalidSeeds"),
            RwError::InvalidConfig(_) => (1, "InvalidArgs"),
        };
        CliError {
            code,
            kind,
            detail: e.to_string(),
        }
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        let kind = match &e {
            PhantomError::DimsTooSmall { .. } => "DimsTooSmall",
            PhantomError::InvalidConfig(_) => "InvalidArgs",
        };
        CliError {
            code: 1,
            kind,
            detail: e.to_string(),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let (code, kind) = match &e {
            MetricsError::MetaMismatch(_) => (2, "MetaMismatch"),
            MetricsError::EmptyMask => (2, "EmptyMask"),
            MetricsError::EmptyScores => (2, "EmptyScores"),
            MetricsError::InvalidRange(_) => (1, "InvalidArgs"),
        };
        CliError {
            code,
            kind,
            detail: e.to_string(),
        }
    }
}

impl From<VolumeError> for CliError {
    fn from(e: VolumeError) -> Self {
        CliError {
            code: 2,
            kind: "InvalidData",
            detail: e.to_string(),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let line = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("bad arguments")
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("ERROR InvalidArgs: {line}");
            std::process::exit(1);
        }
    };
    let outcome = match cli.command {
        Command::Segment(args) => cmd_segment(args),
        Command::Seeds(args) => cmd_seeds(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Phantom(args) => cmd_phantom(args),
        Command::Window(args) => cmd_window(args),
        Command::Hist(args) => cmd_hist(args),
    };
    if let Err(e) = outcome {
        eprintln!("ERROR {}: {}", e.kind, e.detail.replace('\n', " "));
        std::process::exit(e.code);
    }
}

fn load_case(prob: &Path, lung: &Path) -> CliResult<(lobeseg::ScalarVolume, lobeseg::MaskVolume)> {
    let prob = read_volume(prob)?.into_probabilities()?;
    let lung = read_volume(lung)?.into_mask()?;
    prob.meta()
        .ensure_matches(lung.meta())
        .map_err(|e| CliError {
            code: 2,
            kind: "MetaMismatch",
            detail: e.to_string(),
        })?;
    Ok((prob, lung))
}

fn run_seeding(
    prob: &lobeseg::ScalarVolume,
    lung: &lobeseg::MaskVolume,
    cfg: &SeedingConfig,
) -> CliResult<SeedSet> {
    let boundary = boundary_mask(prob, lung, cfg.theta)?;
    let interior = interior_mask(&boundary, lung)?;
    let seeds = generate_seeds(&interior, lung, cfg)?;
    println!("erosion_iterations={}", seeds.erosion_iterations());
    for lobe in LobeId::ALL {
        println!("seed_voxels_{}={}", lobe, seeds.region(lobe).len());
    }
    Ok(seeds)
}

fn print_solver_stats(result: &SegmentationResult) {
    for s in &result.stats {
        println!("solver_iterations_{}={}", s.lobe, s.iterations);
        println!("solver_residual_{}={:e}", s.lobe, s.residual);
        if s.orphan_nodes > 0 {
            println!("warning_orphan_nodes_{}={}", s.lobe, s.orphan_nodes);
        }
    }
}

fn cmd_segment(args: SegmentArgs) -> CliResult<()> {
    if !(args.seeding.theta > 0.0 && args.seeding.theta < 1.0) {
        return Err(invalid_args(format!(
            "theta must be in (0, 1), got {}",
            args.seeding.theta
        )));
    }
    let rw_cfg = RwConfig {
        beta: args.beta,
        weight_floor: args.eps,
        cg_tolerance: args.tol,
        cg_max_iterations: args.max_iter,
    };
    rw_cfg.validate()?;
    let (prob, lung) = load_case(&args.prob, &args.lung)?;
    let seeds = run_seeding(&prob, &lung, &args.seeding.config())?;
    let result = segment_lobes(&prob, &lung, &seeds, &rw_cfg)?;
    print_solver_stats(&result);
    write_volume(&RawVolume::from_labels(&result.labels), &args.out)?;
    if let Some(path) = &args.seeds_out {
        write_volume(&RawVolume::from_labels(&seeds.to_label_volume()), path)?;
    }
    if let Some(prefix) = &args.probs_out_prefix {
        for lobe in LobeId::ALL {
            let path = PathBuf::from(format!("{prefix}_{lobe}.mhd"));
            write_volume(
                &RawVolume::from_scalar_f64(result.probabilities.lobe(lobe)),
                &path,
            )?;
        }
    }
    Ok(())
}

fn cmd_seeds(args: SeedsArgs) -> CliResult<()> {
    if !(args.seeding.theta > 0.0 && args.seeding.theta < 1.0) {
        return Err(invalid_args(format!(
            "theta must be in (0, 1), got {}",
            args.seeding.theta
        )));
    }
    let (prob, lung) = load_case(&args.prob, &args.lung)?;
    let seeds = run_seeding(&prob, &lung, &args.seeding.config())?;
    write_volume(&RawVolume::from_labels(&seeds.to_label_volume()), &args.out)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let pred = read_volume(&args.pred)?.into_labels()?;
    let gt = read_volume(&args.gt)?.into_labels()?;
    let scores = lobe_scores(&pred, &gt)?;
    let case = args
        .pred
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string();
    println!("overall_jaccard={:?}", scores.overall_jaccard);
    write_metrics_csv(&[(case, scores)], &args.csv)?;
    Ok(())
}

fn parse_dims(text: &str) -> CliResult<(usize, usize, usize)> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid_args(format!("bad dims {text:?}, expected nx,ny,nz")))?;
    if parts.len() != 3 {
        return Err(invalid_args(format!(
            "dims need 3 entries, got {}",
            parts.len()
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn cmd_phantom(args: PhantomArgs) -> CliResult<()> {
    let dims = parse_dims(&args.dims)?;
    let cfg = PhantomConfig {
        dims,
        ridge_sigma: args.ridge_sigma,
        gap_frac: args.gap_frac,
        noise_sigma: args.noise,
        rng_seed: args.seed,
        ..PhantomConfig::default()
    };
    let case = phantom::generate(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(IoError::from)?;
    write_volume(
        &RawVolume::from_scalar_f64(&case.prob),
        &args.out_dir.join("prob.mhd"),
    )?;
    write_volume(&RawVolume::from_mask(&case.lung), &args.out_dir.join("lung.mhd"))?;
    write_volume(&RawVolume::from_labels(&case.gt), &args.out_dir.join("gt.mhd"))?;
    println!("fissure_voxels={}", case.fissure_voxel_count);
    println!("zeroed_voxels={}", case.zeroed_voxel_count);
    Ok(())
}

fn parse_window(text: &str) -> CliResult<WindowSpec> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| invalid_args(format!("bad window {text:?}, expected lo:hi")))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| invalid_args(format!("bad window bound {lo:?}")))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| invalid_args(format!("bad window bound {hi:?}")))?;
    WindowSpec::new(lo, hi).map_err(|e| invalid_args(e.to_string()))
}

fn cmd_window(args: WindowArgs) -> CliResult<()> {
    let specs: Vec<WindowSpec> = args
        .windows
        .split(',')
        .map(parse_window)
        .collect::<CliResult<_>>()?;
    let windows: [WindowSpec; 3] = specs
        .try_into()
        .map_err(|v: Vec<_>| invalid_args(format!("need exactly 3 windows, got {}", v.len())))?;
    let hu = read_volume(&args.hu)?.into_hu()?;
    let channels = hu_window(&hu, &windows);
    for (i, channel) in channels.iter().enumerate() {
        let path = PathBuf::from(format!("{}_ch{}.mhd", args.out_prefix, i + 1));
        write_volume(channel, &path)?;
    }
    Ok(())
}

fn cmd_hist(args: HistArgs) -> CliResult<()> {
    let (lo, hi) = {
        let (a, b) = args
            .range
            .split_once(':')
            .ok_or_else(|| invalid_args(format!("bad range {:?}, expected lo:hi", args.range)))?;
        let lo: f64 = a
            .trim()
            .parse()
            .map_err(|_| invalid_args(format!("bad range bound {a:?}")))?;
        let hi: f64 = b
            .trim()
            .parse()
            .map_err(|_| invalid_args(format!("bad range bound {b:?}")))?;
        (lo, hi)
    };
    let text = std::fs::read_to_string(&args.scores).map_err(IoError::from)?;
    let scores: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>().map_err(|_| CliError {
                code: 2,
                kind: "Parse",
                detail: format!("bad score line {l:?} in {}", args.scores.display()),
            })
        })
        .collect::<CliResult<_>>()?;
    let hist = cumulative_histogram(&scores, args.bins, (lo, hi))?;
    let mut out = String::from("threshold,fraction\n");
    for (t, f) in hist.thresholds.iter().zip(&hist.fractions) {
        out.push_str(&format!("{t},{f}\n"));
    }
    std::fs::write(&args.out, out).map_err(IoError::from)?;
    Ok(())
}
