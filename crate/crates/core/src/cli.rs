//! Command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 malformed input or usage,
//! 3 support cap exceeded, 4 theory or cover cap exceeded.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::covers::{grid_cover_gaussian, grid_cover_sparse_pmd, moment_matching_cover, GridSpec, Quantizer};
use crate::decomposition::decompose;
use crate::io::{format_sig, read_matrix, read_samples_file, LawFile};
use crate::lattice::{pmd_pmf_exact, siirv_pmf_exact, tv_distance, DecompositionConfig, SCHEMA};
use crate::learn::{learn_pmd, learn_siirv, LearnConfig};
use crate::{Error, Result};

/// Largest sparse-row bound `t·k²` that `decompose --theory` will execute.
pub const THEORY_EXEC_CAP: f64 = 1e6;

#[derive(Parser, Debug)]
#[command(name = "pmdlab", version, about = "Poisson multinomial distributions: exact pmfs, decompositions, covers, learners")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact probability of a point under a PMD.
    Pmf {
        /// Parameter matrix JSON.
        matrix: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<i64>,
    },
    /// Total variation distance between two laws (matrix or pmf files).
    Tv {
        /// First law.
        a: PathBuf,
        /// Second law.
        b: PathBuf,
    },
    /// Structural decomposition with its TV ledger.
    Decompose(DecomposeArgs),
    /// Learn a PMD or SIIRV from CSV samples.
    Learn(LearnArgs),
    /// Stream a cover as JSON lines.
    Cover(CoverArgs),
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    /// Parameter matrix JSON.
    pub matrix: PathBuf,
    /// Rounding floor.
    #[arg(long)]
    pub c: Option<f64>,
    /// Bucket base.
    #[arg(long)]
    pub t: Option<f64>,
    /// Bucket exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Use the asymptotic constants for accuracy `--epsilon`.
    #[arg(long, requires = "epsilon", conflicts_with_all = ["c", "t", "gamma"])]
    pub theory: bool,
    /// Target accuracy for `--theory`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Print the constants without running.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnKind {
    Pmd,
    Siirv,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    /// CSV samples, one point per line.
    pub samples: PathBuf,
    #[arg(long, value_enum)]
    pub kind: LearnKind,
    /// Dimension of a PMD, or support size of a SIIRV summand.
    #[arg(long)]
    pub k: usize,
    /// Target TV accuracy.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Failure probability.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// RNG seed; required when PMDLAB_STRICT_SEED=1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parameter matrix of the true law, for reporting the exact TV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Write the tournament log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write the learned hypothesis here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest number of sparse rows guessed.
    #[arg(long)]
    pub sparse_cap: Option<usize>,
    /// Overrides the default moment sample count.
    #[arg(long)]
    pub moment_samples: Option<usize>,
    /// Disable moment pruning; every assembled combination enters the tournament.
    #[arg(long)]
    pub paranoid: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverKind {
    GridPmd,
    GridGauss,
    MomentMatch,
}

#[derive(Args, Debug)]
pub struct CoverArgs {
    #[arg(long, value_enum)]
    pub kind: CoverKind,
    /// Number of rows.
    #[arg(long)]
    pub n: usize,
    /// Dimension.
    #[arg(long)]
    pub k: usize,
    /// Parameter grid granularity.
    #[arg(long, default_value_t = 0.5)]
    pub granularity: f64,
    /// Moment order for moment matching.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Quantize moment profiles to this grid instead of comparing exactly.
    #[arg(long)]
    pub quantize: Option<f64>,
    /// Mean grid spacing for Gaussian covers.
    #[arg(long, default_value_t = 1.0)]
    pub mean_cube: f64,
    /// Cholesky factor grid spacing for Gaussian covers.
    #[arg(long, default_value_t = 1.0)]
    pub chol_granularity: f64,
    /// Smallest total row count for Gaussian covers; defaults to `--n`.
    #[arg(long)]
    pub total_min: Option<i64>,
    /// Largest total row count for Gaussian covers; defaults to `--n`.
    #[arg(long)]
    pub total_max: Option<i64>,
    /// Refuse covers with more elements than this.
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u128,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SupportCapExceeded { .. } => 3,
        Error::CoverCapExceeded { .. } => 4,
        Error::Precondition(_) | Error::SingularCovariance { .. } | Error::TournamentFailure => 1,
        _ => 2,
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            if cli.json {
                let _ = writeln!(err, "{}", json!({"schema": SCHEMA, "error": e.to_string(), "exit_code": code}));
            } else {
                let _ = writeln!(err, "error: {e}");
            }
            code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Pmf { matrix, point } => cmd_pmf(cli.json, matrix, point, out),
        Command::Tv { a, b } => cmd_tv(cli.json, a, b, out),
        Command::Decompose(args) => cmd_decompose(cli.json, args, out, err),
        Command::Learn(args) => cmd_learn(cli.json, args, out),
        Command::Cover(args) => cmd_cover(cli.json, args, out, err),
    }
}

fn emit(out: &mut dyn Write, v: &serde_json::Value) -> Result<i32> {
    writeln!(out, "{}", serde_json::to_string(v)?)?;
    Ok(0)
}

fn cmd_pmf(as_json: bool, matrix: &Path, point: &[i64], out: &mut dyn Write) -> Result<i32> {
    let pm = read_matrix(matrix)?;
    if point.len() != pm.k() {
        return Err(Error::DimensionMismatch { expected: pm.k(), got: point.len() });
    }
    let p = pmd_pmf_exact(&pm)?.prob(point);
    if as_json {
        return emit(out, &json!({"schema": SCHEMA, "point": point, "probability": p}));
    }
    writeln!(out, "{}", format_sig(p))?;
    Ok(0)
}

fn cmd_tv(as_json: bool, a: &Path, b: &Path, out: &mut dyn Write) -> Result<i32> {
    let pa = LawFile::read(a)?.into_pmf()?;
    let pb = LawFile::read(b)?.into_pmf()?;
    if pa.dims() != pb.dims() {
        return Err(Error::DimensionMismatch { expected: pa.dims(), got: pb.dims() });
    }
    let tv = tv_distance(&pa, &pb);
    if as_json {
        return emit(out, &json!({"schema": SCHEMA, "tv": tv}));
    }
    writeln!(out, "{}", format_sig(tv))?;
    Ok(0)
}

fn cmd_decompose(as_json: bool, args: &DecomposeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let pm = read_matrix(&args.matrix)?;
    let k = pm.k();
    let cfg = if args.theory {
        let eps = args.epsilon.expect("clap enforces --epsilon");
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument { name: "epsilon", reason: format!("{eps} outside (0, 1)") });
        }
        DecompositionConfig::theory(k, eps)
    } else {
        let d = DecompositionConfig::desk(k);
        DecompositionConfig::new(k, args.c.unwrap_or(d.c), args.t.unwrap_or(d.t), args.gamma.unwrap_or(d.gamma))?
    };
    let constants =
        json!({"c": cfg.c, "t": cfg.t, "gamma": cfg.gamma, "sparse_cap": cfg.sparse_cap(k), "theory": cfg.theory_mode});
    let over = cfg.sparse_cap(k) > THEORY_EXEC_CAP;
    if args.dry_run || over {
        if as_json {
            emit(out, &json!({"schema": SCHEMA, "constants": constants, "executed": false}))?;
        } else {
            writeln!(out, "c = {}\nt = {}\ngamma = {}\nsparse cap = {}", cfg.c, cfg.t, cfg.gamma, cfg.sparse_cap(k))?;
        }
        if over && !args.dry_run {
            writeln!(err, "sparse cap {} exceeds the execution cap {THEORY_EXEC_CAP}; rerun with --dry-run", cfg.sparse_cap(k))?;
            return Ok(4);
        }
        return Ok(0);
    }
    let d = decompose(&pm, &cfg)?;
    let measured = match pmd_pmf_exact(&pm) {
        Ok(exact) => Some(tv_distance(&exact, &d.result.tabulate()?)),
        Err(Error::SupportCapExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    if as_json {
        return emit(
            out,
            &json!({
                "schema": SCHEMA,
                "constants": constants,
                "decomposition": d.result,
                "ledger": d.ledger,
                "ledger_total": d.ledger.total(),
                "measured_tv": measured,
            }),
        );
    }
    let g = d.result.gaussian();
    writeln!(out, "blocks: {}", g.blocks().len())?;
    for b in g.blocks() {
        writeln!(out, "  coords {:?} pivot {} total {}", b.coords(), b.pivot(), b.total())?;
    }
    writeln!(out, "sparse rows: {}", d.result.sparse().n())?;
    for e in &d.ledger.entries {
        writeln!(out, "ledger {} ({}): {}", format!("{:?}", e.kind).to_lowercase(), e.detail, format_sig(e.cost))?;
    }
    writeln!(out, "ledger total: {}", format_sig(d.ledger.total()))?;
    match measured {
        Some(tv) => writeln!(out, "measured tv: {}", format_sig(tv))?,
        None => writeln!(out, "measured tv: unavailable (support cap)")?,
    }
    Ok(0)
}

fn cmd_learn(as_json: bool, args: &LearnArgs, out: &mut dyn Write) -> Result<i32> {
    let strict = std::env::var("PMDLAB_STRICT_SEED").is_ok_and(|v| v == "1");
    if strict && args.seed.is_none() {
        return Err(Error::InvalidArgument { name: "seed", reason: "PMDLAB_STRICT_SEED=1 requires --seed".into() });
    }
    let seed = args.seed.unwrap_or(0);
    let samples = read_samples_file(&args.samples)?;
    let dims = samples[0].len();
    let expected = if args.kind == LearnKind::Pmd { args.k } else { 1 };
    if dims != expected {
        return Err(Error::DimensionMismatch { expected, got: dims });
    }
    let mut cfg = LearnConfig::desk(args.epsilon, args.delta);
    cfg.seed = seed;
    cfg.paranoid = args.paranoid;
    if let Some(c) = args.sparse_cap {
        cfg.sparse_cap = c;
    }
    if args.moment_samples.is_some() {
        cfg.moment_samples = args.moment_samples;
    }
    // the file is the only access to the law: resample it with replacement
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x0c5f));
    let outcome = match args.kind {
        LearnKind::Pmd => {
            let mut oracle = || samples[rng.random_range(0..samples.len())].clone();
            learn_pmd(&mut oracle, args.k, &cfg)?
        }
        LearnKind::Siirv => {
            let mut oracle = || samples[rng.random_range(0..samples.len())][0];
            learn_siirv(&mut oracle, args.k, &cfg)?
        }
    };
    let tv = match &args.truth {
        Some(path) => {
            let pm = read_matrix(path)?;
            let truth = match args.kind {
                LearnKind::Pmd => pmd_pmf_exact(&pm)?,
                LearnKind::Siirv => siirv_pmf_exact(&pm)?,
            };
            Some(tv_distance(&truth, &outcome.hypothesis.tabulate()?))
        }
        None => None,
    };
    if let Some(path) = &args.log {
        std::fs::write(path, serde_json::to_string_pretty(&outcome.tournament)?)?;
    }
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&outcome.hypothesis)?)?;
    }
    let log_path = args.log.as_ref().map(|p| p.display().to_string());
    if as_json {
        return emit(
            out,
            &json!({
                "schema": SCHEMA,
                "config": cfg,
                "input_samples": samples.len(),
                "hypothesis": outcome.hypothesis,
                "report": outcome.report,
                "tv_to_truth": tv,
                "tournament_log": log_path,
            }),
        );
    }
    writeln!(out, "hypothesis: {}", outcome.hypothesis.kind())?;
    writeln!(out, "tournament: {} hypotheses, winner {}", outcome.tournament.hypotheses, outcome.tournament.winner.unwrap_or(0))?;
    if let Some(tv) = tv {
        writeln!(out, "tv to truth: {}", format_sig(tv))?;
    }
    writeln!(out, "{}", serde_json::to_string(&outcome.hypothesis)?)?;
    Ok(0)
}

fn check_cap(total: u128, cap: u128) -> Result<()> {
    if total > cap {
        return Err(Error::CoverCapExceeded { count: total, cap });
    }
    Ok(())
}

fn cmd_cover(as_json: bool, args: &CoverArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut count: u64 = 0;
    match args.kind {
        CoverKind::GridPmd => {
            let cover = grid_cover_sparse_pmd(args.n, args.k, args.granularity)?;
            check_cap(cover.total(), args.cap)?;
            for pm in cover {
                writeln!(out, "{}", serde_json::to_string(&pm)?)?;
                count += 1;
            }
        }
        CoverKind::GridGauss => {
            let spec = GridSpec {
                param_granularity: args.granularity,
                mean_cube: args.mean_cube,
                chol_granularity: args.chol_granularity,
                total_min: args.total_min.unwrap_or(args.n as i64),
                total_max: args.total_max.unwrap_or(args.n as i64),
            };
            let cover = grid_cover_gaussian(args.n, args.k, &spec)?;
            check_cap(cover.total(), args.cap)?;
            for g in cover {
                writeln!(out, "{}", serde_json::to_string(&g)?)?;
                count += 1;
            }
        }
        CoverKind::MomentMatch => {
            let cover = grid_cover_sparse_pmd(args.n, args.k, args.granularity)?;
            check_cap(cover.total(), args.cap)?;
            let q = args.quantize.map_or(Quantizer::Exact, Quantizer::Grid);
            for pm in moment_matching_cover(cover, args.order, q) {
                writeln!(out, "{}", serde_json::to_string(&pm)?)?;
                count += 1;
            }
        }
    }
    if as_json {
        writeln!(err, "{}", json!({"schema": SCHEMA, "count": count}))?;
    } else {
        writeln!(err, "count: {count}")?;
    }
    Ok(0)
}
