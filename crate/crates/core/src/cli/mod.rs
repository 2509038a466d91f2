//! The `bermine` command line.
//!
//! Exit codes: 0 success, 1 usage or argument error, 2 no qualifying
//! region, 3 I/O or file-format error.

pub mod formats;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::analysis::{self, cross_validate, ecdf, fit_database, slice_fixed_alpha, slice_fixed_snr};
use crate::bucketing::{confidence_map, BucketGrid};
use crate::grid::{Axes, Grid};
use crate::miner::{optimize_confidence, optimize_gain, optimize_support, region_stats, MinedRegion, MissingPolicy};
use crate::sampler::{diagnostics, sweep, PerformanceDatabase};
use crate::simgen::{BlockSimulator, MonteCarlo, SimBlockConfig, Synthetic};
use crate::stats::StoppingConfig;
use crate::Error;
use formats::{read_database, write_database, Objective, RegionFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NO_REGION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bermine", version, about = "BER performance databases and region mining")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a grid of configurations into a database file.
    Simulate(SimulateArgs),
    /// Export confidence, hit, sample-size and spread matrices.
    Map(MapArgs),
    /// Mine an optimized admissible region.
    Mine(MineArgs),
    /// Export a one-dimensional slice of the fitted log10-BER surface.
    Slice(SliceArgs),
    /// Cross-validate the optimized-support region.
    Crossval(CrossvalArgs),
    /// Export the empirical CDF of the samples at one point.
    Ecdf(EcdfArgs),
}

/// Integer dB lattice `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub lo: i32,
    pub hi: i32,
    pub step: i32,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("expected lo:hi:step, got {s:?}"));
        };
        let num = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("{v:?}: {e}"));
        let spec = GridSpec {
            lo: num(lo)?,
            hi: num(hi)?,
            step: num(step)?,
        };
        if spec.step <= 0 || spec.hi < spec.lo {
            return Err(format!("grid {s:?} needs lo <= hi and a positive step"));
        }
        Ok(spec)
    }
}

/// `mc` or `synthetic:SD`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    MonteCarlo,
    Synthetic(f64),
}

impl FromStr for NoiseModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "mc" {
            return Ok(NoiseModel::MonteCarlo);
        }
        match s.strip_prefix("synthetic:").map(str::parse::<f64>) {
            Some(Ok(sd)) if sd >= 0.0 && sd.is_finite() => Ok(NoiseModel::Synthetic(sd)),
            _ => Err(format!("expected mc or synthetic:SD, got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "3:42:1")]
    pub grid: GridSpec,
    #[arg(long, default_value_t = 10_000)]
    pub frames: u64,
    #[arg(long, default_value_t = 80)]
    pub bits_per_frame: u64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// Threshold of the confidence stopping rule.
    #[arg(long = "t", default_value_t = 1e-4)]
    pub t_threshold: f64,
    #[arg(long, default_value_t = 50)]
    pub max_samples: usize,
    #[arg(long, default_value_t = 2)]
    pub min_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "mc")]
    pub noise_model: NoiseModel,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "BERMINE_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long = "T", default_value_t = 1e-3)]
    pub threshold: f64,
    /// Directory receiving confidence.csv, hit.csv, n.csv and sd_over_mean.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Gain,
    Support,
    Confidence,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MissingArg {
    Exclude,
    Zero,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long = "T", default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "support")]
    pub objective: ObjectiveArg,
    /// Slope of the gain objective.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Confidence target of the support objective.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Support floor of the confidence objective, in buckets.
    #[arg(long)]
    pub min_support: Option<usize>,
    #[arg(long, value_enum, default_value = "exclude")]
    pub missing: MissingArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// Fixed imbalance factor; the slice runs over effective SNR.
    #[arg(long, conflicts_with = "snr", required_unless_present = "snr")]
    pub alpha: Option<f64>,
    /// Fixed effective SNR in dB; the slice runs over the imbalance factor.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = analysis::DEFAULT_SPAN)]
    pub span: f64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long = "T", default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.99)]
    pub theta: f64,
    /// Output JSON; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EcdfArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub s1: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub s2: f64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            error: anyhow::anyhow!(msg.into()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

pub fn execute(command: Command) -> CmdResult {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Map(a) => cmd_map(&a),
        Command::Mine(a) => cmd_mine(&a),
        Command::Slice(a) => cmd_slice(&a),
        Command::Crossval(a) => cmd_crossval(&a),
        Command::Ecdf(a) => cmd_ecdf(&a),
    }
}

fn load(path: &Path) -> Result<PerformanceDatabase, Failure> {
    let file = File::open(path).map_err(|e| Failure {
        code: EXIT_IO,
        error: anyhow::Error::new(e).context(format!("cannot open {}", path.display())),
    })?;
    let db = read_database(BufReader::new(file)).map_err(|e| {
        let f = Failure::from(e);
        Failure {
            error: f.error.context(format!("cannot read {}", path.display())),
            ..f
        }
    })?;
    Ok(db)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure {
        code: EXIT_IO,
        error: anyhow::Error::new(e).context(format!("cannot write {}", path.display())),
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let axes = Axes::square(a.grid.lo, a.grid.hi, a.grid.step);
    let cfg = StoppingConfig {
        beta: a.beta,
        gamma: a.gamma,
        t_threshold: a.t_threshold,
        max_samples: a.max_samples,
        min_samples: a.min_samples,
    };
    cfg.validate()?;
    let block = SimBlockConfig {
        frames: a.frames,
        bits_per_frame: a.bits_per_frame,
        seed: a.seed,
    };
    block.validate()?;
    let sim: Box<dyn BlockSimulator> = match a.noise_model {
        NoiseModel::MonteCarlo => Box::new(MonteCarlo { block }),
        NoiseModel::Synthetic(sd) => Box::new(Synthetic::new(sd, block.bits(), a.seed)?),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = a.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be positive"));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::usage(format!("cannot start workers: {e}")))?;
    let db = pool.install(|| sweep(&axes, &cfg, sim.as_ref()))?;

    let mut out = create(&a.out)?;
    write_database(&db, &mut out)?;
    out.flush()?;
    println!(
        "{} points simulated, {} samples, {} cells written to {}",
        db.simulated_points(),
        db.simulated_samples(),
        db.records().len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

/// Writes a matrix with one row per `y` value and one column per `x` value.
fn write_matrix<T>(path: &Path, axes: &Axes, grid: &Grid<Option<T>>, fmt: impl Fn(&T) -> String) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["s2_db\\s1_db".to_string()];
    header.extend(axes.x.iter().map(f64::to_string));
    w.write_record(&header).map_err(Error::from)?;
    for iy in 0..grid.ny() {
        let mut row = vec![axes.y[iy].to_string()];
        row.extend((0..grid.nx()).map(|ix| grid.get(ix, iy).as_ref().map_or("NA".to_string(), &fmt)));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_map(a: &MapArgs) -> CmdResult {
    let db = load(&a.db)?;
    let map = confidence_map(&db, &BucketGrid::identity(db.axes()), a.threshold)?;
    let diag = diagnostics(&db);
    fs::create_dir_all(&a.out_dir)?;
    let axes = db.axes();
    write_matrix(&a.out_dir.join("confidence.csv"), axes, &map.probability, f64::to_string)?;
    write_matrix(&a.out_dir.join("hit.csv"), axes, &map.hits.hits, u32::to_string)?;
    write_matrix(&a.out_dir.join("n.csv"), axes, &diag.sample_size, usize::to_string)?;
    write_matrix(&a.out_dir.join("sd_over_mean.csv"), axes, &diag.sd_over_mean, f64::to_string)?;
    println!("maps written to {}", a.out_dir.display());
    Ok(EXIT_OK)
}

pub fn cmd_mine(a: &MineArgs) -> CmdResult {
    let db = load(&a.db)?;
    let policy = match a.missing {
        MissingArg::Exclude => MissingPolicy::Exclude,
        MissingArg::Zero => MissingPolicy::Zero,
    };
    let map = confidence_map(&db, &BucketGrid::identity(db.axes()), a.threshold)?;
    let hits = policy.apply(&map.hits);

    let (objective, mined) = match a.objective {
        ObjectiveArg::Gain => {
            let tau = a.tau.ok_or_else(|| Failure::usage("--objective gain needs --tau"))?;
            let region = optimize_gain(&hits, tau)?;
            let stats = region_stats(&hits, &region)?;
            let mined = (!region.is_empty()).then_some(MinedRegion {
                region,
                stats,
                tau,
                evaluations: 1,
            });
            (Objective::Gain, mined)
        }
        ObjectiveArg::Support => {
            let theta = a.theta.ok_or_else(|| Failure::usage("--objective support needs --theta"))?;
            (Objective::Support, optimize_support(&hits, theta)?)
        }
        ObjectiveArg::Confidence => {
            let floor = a
                .min_support
                .ok_or_else(|| Failure::usage("--objective confidence needs --min-support"))?;
            (Objective::Confidence, optimize_confidence(&hits, floor)?)
        }
    };

    let mut file = RegionFile::new(objective, a.threshold, mined.as_ref(), db.axes(), policy);
    file.theta = a.theta.filter(|_| objective == Objective::Support);
    file.min_support = a.min_support.filter(|_| objective == Objective::Confidence);
    let mut out = create(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &file).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;

    match &mined {
        Some(m) => {
            println!(
                "support {} ({} buckets), confidence {:.6}, tau {}",
                m.stats.support,
                m.stats.buckets,
                m.confidence(),
                m.tau
            );
            Ok(EXIT_OK)
        }
        None => {
            eprintln!("no qualifying region; empty region written to {}", a.out.display());
            Ok(EXIT_NO_REGION)
        }
    }
}

pub fn cmd_slice(a: &SliceArgs) -> CmdResult {
    if a.steps < 2 {
        return Err(Failure::usage("--steps must be at least 2"));
    }
    let db = load(&a.db)?;
    let surface = fit_database(&db, a.span)?;
    let range: Vec<f64> = (0..a.steps)
        .map(|i| a.from + (a.to - a.from) * i as f64 / (a.steps - 1) as f64)
        .collect();
    let slice = match (a.alpha, a.snr) {
        (Some(alpha), _) => slice_fixed_alpha(&surface, alpha, &range)?,
        (None, Some(snr)) => slice_fixed_snr(&surface, snr, &range)?,
        (None, None) => return Err(Failure::usage("give --alpha or --snr")),
    };
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["alpha", "snr_db", "s1_db", "s2_db", "log10_ber"])
        .map_err(Error::from)?;
    for p in slice {
        w.write_record([
            p.alpha.to_string(),
            p.snr_db.to_string(),
            p.s1_db.to_string(),
            p.s2_db.to_string(),
            p.value.map_or("NA".to_string(), |v| v.to_string()),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FoldSummary {
    dropped_index: usize,
    support: u64,
    hit: u64,
    confidence: Option<f64>,
    region: RegionFile,
}

#[derive(Serialize)]
struct CrossvalSummary {
    folds: Vec<FoldSummary>,
    supports: Vec<u64>,
    jaccard: Vec<(usize, usize, f64)>,
    excluded_points: Vec<(f64, f64)>,
}

pub fn cmd_crossval(a: &CrossvalArgs) -> CmdResult {
    let db = load(&a.db)?;
    let report = cross_validate(&db, a.folds, a.threshold, a.theta)?;
    let axes = db.axes();
    info!("{} points excluded", report.excluded.len());
    let summary = CrossvalSummary {
        folds: report
            .folds
            .iter()
            .map(|f| {
                let mut region = RegionFile::new(
                    Objective::Support,
                    a.threshold,
                    f.mined.as_ref(),
                    axes,
                    MissingPolicy::Exclude,
                );
                region.theta = Some(a.theta);
                FoldSummary {
                    dropped_index: f.dropped_index,
                    support: f.support(),
                    hit: f.mined.as_ref().map_or(0, |m| m.stats.hit),
                    confidence: f.mined.as_ref().and_then(|m| m.stats.confidence()),
                    region,
                }
            })
            .collect(),
        supports: report.supports(),
        jaccard: report.jaccard.clone(),
        excluded_points: report
            .excluded
            .iter()
            .map(|&(ix, iy)| (axes.x[ix], axes.y[iy]))
            .collect(),
    };
    let mut out = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &summary).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    if a.out.is_some() {
        println!(
            "fold supports {:?}, minimum pairwise Jaccard {:.4}",
            report.supports(),
            report.min_jaccard()
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_ecdf(a: &EcdfArgs) -> CmdResult {
    let db = load(&a.db)?;
    let axes = db.axes();
    let ix = axes.x.iter().position(|v| (v - a.s1).abs() <= 1e-9);
    let iy = axes.y.iter().position(|v| (v - a.s2).abs() <= 1e-9);
    let rec = ix
        .zip(iy)
        .and_then(|(ix, iy)| db.get(ix, iy))
        .ok_or_else(|| Failure::usage(format!("no point at ({}, {}) in the database", a.s1, a.s2)))?;
    let values: Vec<f64> = rec.samples.iter().map(|s| s.value()).collect();
    let steps = ecdf(&values)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["ber", "fraction"]).map_err(Error::from)?;
    for (v, f) in steps {
        w.write_record([v.to_string(), f.to_string()]).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}
