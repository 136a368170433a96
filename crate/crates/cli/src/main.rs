use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use blockgth::augment::{self, Depth};
use blockgth::mg1::{self, Mg1Spec, DEFAULT_DEPTH_CEILING};
use blockgth::models::{self, MxM1WvParams};
use blockgth::{gth, io, oracle, rgfact, Error, StationaryVector};

#[derive(Parser)]
#[command(
    name = "blockgth",
    version,
    about = "Stationary analysis and truncation of block-structured Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gth,
    Rg,
    Power,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary vector of a finite chain in block-matrix format.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Gth)]
        method: Method,
        /// Power-iteration tolerance on |xP - x|_1.
        #[arg(long, default_value_t = oracle::DEFAULT_POWER_TOL)]
        tol: f64,
        #[arg(long, default_value_t = oracle::DEFAULT_POWER_MAX_ITER)]
        max_iter: usize,
    },
    /// Compare natural-LBCA and RA-CM truncation errors on the working-vacation queue.
    Table1 {
        /// Model parameters (TOML); defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "10,15,20,25,30,35,40,50,100,200")]
        n_list: Vec<usize>,
        /// Depth of the censored-column series.
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Truncation level of the reference solution.
        #[arg(long, default_value_t = 3000)]
        n_ref: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest series depth whose error bound meets a tolerance.
    CensorDepth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_DEPTH_CEILING)]
        max_depth: usize,
    },
    /// Dense censored matrix of a deep truncation, in block-matrix format.
    Censor {
        /// Model parameters (TOML); ignored when --mg1 is given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Chain in M/G/1 text format.
        #[arg(long, conflicts_with = "config")]
        mg1: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Levels kept beyond N before censoring; defaults to N + 200.
        #[arg(long)]
        buffer: Option<usize>,
    },
}

/// `v` rounded to 12 significant digits, printed without trailing zeros.
fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if (1e-5..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_params(config: Option<&Path>) -> Result<MxM1WvParams> {
    match config {
        Some(p) => Ok(MxM1WvParams::from_toml(&read(p)?).with_context(|| format!("in {}", p.display()))?),
        None => Ok(MxM1WvParams::default()),
    }
}

fn load_spec(config: Option<&Path>) -> Result<Mg1Spec> {
    Ok(models::working_vacation_spec(&load_params(config)?)?)
}

fn print_vector(pi: &StationaryVector, out: &mut impl Write) -> Result<()> {
    for i in 0..pi.num_levels() {
        let line: Vec<String> = pi.level(i).iter().map(|v| sig12(*v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn solve(file: &Path, method: Method, tol: f64, max_iter: usize) -> Result<()> {
    let p = io::parse_block_matrix(&read(file)?).with_context(|| format!("in {}", file.display()))?;
    let pi = match method {
        Method::Gth => gth::solve(&p)?,
        Method::Rg => rgfact::solve_by_factors(&rgfact::factorize(&p)?)?,
        Method::Power => oracle::power_iteration(&p, tol, max_iter)?,
    };
    print_vector(&pi, &mut std::io::stdout().lock())
}

fn table1(config: Option<&Path>, n_list: &[usize], m: usize, n_ref: usize, out: Option<&Path>) -> Result<()> {
    let spec = load_spec(config)?;
    if let Some(&too_deep) = n_list.iter().find(|&&n| n == 0 || n > n_ref) {
        anyhow::bail!("truncation level {too_deep} must lie in 1..={n_ref}");
    }
    let reference = oracle::reference_stationary(&spec, n_ref)?;
    eprintln!(
        "reference at level {n_ref}: l1 distance to the level-{} reference = {:.3e}",
        n_ref / 2,
        reference.self_consistency
    );
    let rows = augment::compare_truncations(&spec, &reference.pi, n_list, Depth::Fixed(m))?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(["N", "method", "l1_error", "improvement", "relative_rate_percent"])?;
    for r in &rows {
        let n = r.n.to_string();
        w.write_record([n.as_str(), "lbca", &sig12(r.lbca), "0", "0"])?;
        w.write_record([
            n.as_str(),
            "racm",
            &sig12(r.racm),
            &sig12(r.improvement),
            &sig12(r.relative_rate_percent),
        ])?;
        eprintln!(
            "N = {:>4}  LBCA {:.4}  RA-CM {:.4}  improvement {:.4}  rate {:.4}%",
            r.n, r.lbca, r.racm, r.improvement, r.relative_rate_percent
        );
    }
    w.flush()?;
    Ok(())
}

fn censor_depth(config: Option<&Path>, n: usize, eps: f64, max_depth: usize) -> Result<()> {
    let spec = load_spec(config)?;
    let found = mg1::stop_depth(&spec, n, eps, max_depth)?;
    let series = &found.series;
    let worst = (0..=series.depth())
        .filter_map(|s| series.captured(s))
        .flatten()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let first = series.captured(0).unwrap_or(&[]);
    println!("depth {}", found.depth);
    println!("bound {}", sig12(found.bound.max));
    println!(
        "captured_s0 {}",
        first.iter().map(|v| sig12(*v)).collect::<Vec<_>>().join(" ")
    );
    println!("captured_min {}", sig12(worst));
    Ok(())
}

fn censor(config: Option<&Path>, mg1_file: Option<&Path>, n: usize, buffer: Option<usize>) -> Result<()> {
    let spec = match mg1_file {
        Some(p) => io::parse_mg1(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => load_spec(config)?,
    };
    let buffer = buffer.unwrap_or_else(|| oracle::default_buffer(n));
    let c = oracle::dense_censor_oracle(&spec, n, buffer)?;
    print!("{}", io::write_block_matrix(&c));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            file,
            method,
            tol,
            max_iter,
        } => solve(&file, method, tol, max_iter),
        Command::Table1 {
            config,
            n_list,
            m,
            n_ref,
            out,
        } => table1(config.as_deref(), &n_list, m, n_ref, out.as_deref()),
        Command::CensorDepth {
            config,
            n,
            eps,
            max_depth,
        } => censor_depth(config.as_deref(), n, eps, max_depth),
        Command::Censor { config, mg1, n, buffer } => censor(config.as_deref(), mg1.as_deref(), n, buffer),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let parse = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Parse { .. })));
            ExitCode::from(if parse { 2 } else { 1 })
        }
    }
}
