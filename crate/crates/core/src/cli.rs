//! Command-line front end.
//!
//! CSV columns are fixed: `count` writes `T,N,N2,pi,pi2`, `primes` writes
//! `T,pi,pi2,pi_ratio,pi2_ratio` and `modp` writes the [`ModPSummary`] columns.
//! JSON documents carry `"schema": "1"`. The default worker count comes from
//! `APOLLONIAN_WORKERS`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    fit_exponent, geometric_thresholds, report, CountSeries, FitResult, REFERENCE_ALPHA,
};
use crate::arithmetic::{
    ratio_spread, sieve_ratio_report, summarize_prime, ModOptions, ModPSummary,
};
use crate::descartes::{Curvature, Quadruple, RootQuadruple};
use crate::error::{Error, Result};
use crate::geometry::{render_svg, standard_embedding, RenderOptions, DEFAULT_ELEMENT_CAP};
use crate::orbit::{count_orbit_points, EnumerationOptions, Generator, Norm};
use crate::verify::{self, VerifyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "apollonian",
    version,
    about = "Integral Apollonian circle packings: counts, primes, local densities and pictures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cumulative counts N, N2 (and optionally pi, pi2) over a threshold grid.
    Count(CountArgs),
    /// Reduce a Descartes quadruple to its root.
    Reduce {
        #[arg(long, allow_hyphen_values = true)]
        root: String,
    },
    /// Prime counts and normalized sieve ratios.
    Primes(PrimesArgs),
    /// Fit N ~ c T^alpha to a series CSV written by `count`.
    Fit(FitArgs),
    /// Orbit and cone sizes modulo primes, with local densities.
    Modp(ModpArgs),
    /// Draw a packing as SVG.
    Render(RenderArgs),
    /// Standard embedding of a root as CSV rows (cocurv,curv,cx,cy).
    Embed {
        #[arg(long, allow_hyphen_values = true)]
        root: String,
    },
    /// Distinct orbit vectors below a norm bound.
    Points(PointsArgs),
    /// Full JSON report: counts, fit, sieve ratios, densities and checks.
    Report(ReportArgs),
    /// Run the built-in invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RootArgs {
    /// Descartes quadruple, e.g. -1,2,2,3. Non-root input is reduced first.
    #[arg(long, allow_hyphen_values = true)]
    pub root: String,
    /// Reject quadruples that are not already root quadruples.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Largest threshold; curvatures strictly below it are counted.
    #[arg(long)]
    pub tmax: Curvature,
    /// First threshold of the geometric grid.
    #[arg(long, default_value_t = 10)]
    pub t0: Curvature,
    /// Grid ratio between consecutive thresholds.
    #[arg(long, default_value_t = 2.0)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, env = "APOLLONIAN_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Maximum word length before the walk gives up.
    #[arg(long, default_value_t = 10_000)]
    pub depth_cap: u32,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub root: RootArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Also count prime circles and prime tangent pairs.
    #[arg(long)]
    pub primes: bool,
    /// Emit each row as soon as it is known.
    #[arg(long)]
    pub stream: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrimesArgs {
    #[command(flatten)]
    pub root: RootArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Exponent used in the normalization; fitted from the counts when absent.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Series CSV with columns T,N,N2,pi,pi2.
    pub series: PathBuf,
    /// Smallest threshold in the fit window (default: top two decades).
    #[arg(long)]
    pub lo: Option<Curvature>,
    #[arg(long)]
    pub hi: Option<Curvature>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ModpArgs {
    #[command(flatten)]
    pub root: RootArgs,
    /// Comma-separated primes.
    #[arg(long, value_delimiter = ',', default_values_t = [5u32, 7, 11, 13])]
    pub primes: Vec<u32>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value_t = ModOptions::default().max_prime)]
    pub max_prime: u32,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub root: RootArgs,
    /// Draw circles of curvature below this bound.
    #[arg(long)]
    pub tmax: Option<Curvature>,
    /// Draw circles created by at most this many flips.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Write each circle's curvature inside it.
    #[arg(long)]
    pub labels: bool,
    #[arg(long, default_value_t = DEFAULT_ELEMENT_CAP)]
    pub element_cap: usize,
    #[arg(long, default_value_t = 800.0)]
    pub size: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Max,
    Euclidean,
}

#[derive(Debug, Args)]
pub struct PointsArgs {
    #[command(flatten)]
    pub root: RootArgs,
    #[arg(long)]
    pub tmax: Curvature,
    #[arg(long, value_enum, default_value_t = NormArg::Max)]
    pub norm: NormArg,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub root: RootArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Primes for the local density table.
    #[arg(long, value_delimiter = ',', default_values_t = [5u32, 7, 11, 13])]
    pub primes: Vec<u32>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, env = "APOLLONIAN_WORKERS", default_value_t = 4)]
    pub workers: usize,
    #[arg(long)]
    pub json: bool,
    /// Testing hook: perturb one off-diagonal entry of generator SLOT (1-based).
    #[arg(long, value_name = "SLOT")]
    pub corrupt_generator: Option<usize>,
    /// Testing hook: add this offset to the direct tangent-pair count.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub inject_n2_offset: i64,
}

fn resolve_root(args: &RootArgs) -> Result<RootQuadruple> {
    let q: Quadruple = args.root.parse()?;
    q.ensure_descartes()?;
    if q.is_root() {
        return RootQuadruple::new(q);
    }
    if args.strict {
        return Err(Error::InvalidInput(format!(
            "{q} is not a root quadruple (drop --strict to reduce it)"
        )));
    }
    let red = q.reduce_to_root()?;
    let word: Vec<String> = red.flips.iter().map(|s| (s + 1).to_string()).collect();
    eprintln!(
        "# reduced {q} to root {} by flips [{}]",
        red.root,
        word.join(",")
    );
    Ok(red.root)
}

fn grid(g: &GridArgs) -> Result<Vec<Curvature>> {
    geometric_thresholds(g.t0.min(g.tmax), g.tmax, g.ratio)
}

fn enum_opts(r: &RunArgs) -> Result<EnumerationOptions> {
    if r.workers == 0 {
        return Err(Error::InvalidInput(
            "worker count must be at least 1".into(),
        ));
    }
    Ok(EnumerationOptions {
        depth_cap: r.depth_cap,
        ..EnumerationOptions::with_workers(r.workers)
    })
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn fmt_opt(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn check_pairs(series: &CountSeries) -> Result<()> {
    match series.pair_identity().into_iter().find(|&(_, ok)| !ok) {
        Some((t, _)) => Err(Error::InternalInvariant(format!("N2 != 3N - 6 at T={t}"))),
        None => Ok(()),
    }
}

fn cmd_count(a: &CountArgs) -> Result<()> {
    let root = resolve_root(&a.root)?;
    let ts = grid(&a.grid)?;
    let opts = enum_opts(&a.run)?;
    let mut out = sink(&a.output)?;
    if !a.stream {
        let series = CountSeries::compute(&root, &ts, &opts, a.primes)?;
        check_pairs(&series)?;
        series.write_csv(&mut out)?;
        out.flush()?;
        return Ok(());
    }
    writeln!(out, "{}", CountSeries::CSV_HEADER)?;
    out.flush()?;
    let max = root.quad().max_entry();
    for k in 0..ts.len() {
        let step = CountSeries::compute(&root, &ts[..=k], &opts, a.primes && ts[k] > max)
            .and_then(|s| check_pairs(&s).map(|_| s));
        match step {
            Ok(s) => {
                let r = s.row(k);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.t,
                    r.n,
                    r.n2,
                    fmt_opt(r.pi),
                    fmt_opt(r.pi2)
                )?;
                out.flush()?;
            }
            Err(e) => {
                writeln!(out, "# incomplete: {e}")?;
                out.flush()?;
                return Err(e);
            }
        }
    }
    Ok(())
}

fn cmd_reduce(root: &str) -> Result<()> {
    let q: Quadruple = root.parse()?;
    let red = q.reduce_to_root()?;
    let word: Vec<String> = red.flips.iter().map(|s| (s + 1).to_string()).collect();
    println!("root {}", red.root);
    println!("flips {}", word.join(","));
    Ok(())
}

fn cmd_primes(a: &PrimesArgs) -> Result<()> {
    let root = resolve_root(&a.root)?;
    let max = root.quad().max_entry();
    let ts: Vec<Curvature> = grid(&a.grid)?.into_iter().filter(|&t| t > max).collect();
    if ts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "prime counts need thresholds above the root maximum {max}"
        )));
    }
    let series = CountSeries::compute(&root, &ts, &enum_opts(&a.run)?, true)?;
    let alpha = match a.alpha {
        Some(x) => x,
        None => fit_exponent(&series, series.default_window())
            .map(|f| f.alpha_hat)
            .unwrap_or(REFERENCE_ALPHA),
    };
    let rows = sieve_ratio_report(&series.prime_counts(), alpha);
    let mut out = sink(&a.output)?;
    writeln!(out, "T,pi,pi2,pi_ratio,pi2_ratio")?;
    for (c, r) in series.prime_counts().iter().zip(&rows) {
        writeln!(
            out,
            "{},{},{},{:.9},{:.9}",
            c.bound, c.pi, c.pi2, r.pi_ratio, r.pi2_ratio
        )?;
    }
    write!(out, "# alpha={alpha:.6}")?;
    if let Some((s1, s2)) = rows
        .first()
        .zip(rows.last())
        .and_then(|(f, l)| ratio_spread(&rows, f.bound, l.bound))
    {
        write!(out, " spread_pi={s1:.6} spread_pi2={s2:.6}")?;
    }
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    schema: &'static str,
    #[serde(flatten)]
    fit: FitResult,
    alpha_reference: f64,
    alpha_deviation: f64,
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let series = CountSeries::read_csv(File::open(&a.series)?)?;
    let window = match (a.lo, a.hi) {
        (None, None) => series.default_window(),
        (lo, hi) => series.window_between(lo.unwrap_or(0), hi.unwrap_or(Curvature::MAX)),
    };
    let fit = fit_exponent(&series, window)?;
    let out = FitOutput {
        schema: "1",
        alpha_deviation: fit.alpha_hat - REFERENCE_ALPHA,
        fit,
        alpha_reference: REFERENCE_ALPHA,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_modp(a: &ModpArgs) -> Result<()> {
    let root = resolve_root(&a.root)?;
    let opts = ModOptions {
        max_prime: a.max_prime,
        ..ModOptions::default()
    };
    let rows: Vec<ModPSummary> = a
        .primes
        .iter()
        .map(|&p| summarize_prime(&root, p, &opts))
        .collect::<Result<_>>()?;
    match a.format {
        Format::Csv => {
            println!("{}", ModPSummary::CSV_HEADER);
            for r in &rows {
                println!("{}", r.to_csv_row());
            }
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
    }
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let root = resolve_root(&a.root)?;
    let svg = render_svg(
        &root,
        &RenderOptions {
            bound: a.tmax,
            max_depth: a.depth,
            labels: a.labels,
            element_cap: a.element_cap,
            size: a.size,
        },
    )?;
    let mut out = sink(&a.output)?;
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_embed(root: &str) -> Result<()> {
    let root = resolve_root(&RootArgs {
        root: root.to_string(),
        strict: false,
    })?;
    print!("{}", standard_embedding(&root)?.to_csv()?);
    Ok(())
}

fn cmd_points(a: &PointsArgs) -> Result<()> {
    let root = resolve_root(&a.root)?;
    let norm = match a.norm {
        NormArg::Max => Norm::Max,
        NormArg::Euclidean => Norm::Euclidean,
    };
    println!(
        "{}",
        count_orbit_points(&root, a.tmax, norm, &enum_opts(&a.run)?)?
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let root = resolve_root(&a.root)?;
    let ts = grid(&a.grid)?;
    let primes = root.is_primitive() && a.grid.tmax > root.quad().max_entry();
    let series = CountSeries::compute(&root, &ts, &enum_opts(&a.run)?, primes)?;
    let fit = fit_exponent(&series, series.default_window()).ok();
    let alpha = fit.as_ref().map_or(REFERENCE_ALPHA, |f| f.alpha_hat);
    let max = root.quad().max_entry();
    let above: Vec<_> = series
        .prime_counts()
        .into_iter()
        .filter(|c| c.bound > max)
        .collect();
    let sieve = sieve_ratio_report(&above, alpha);
    let densities = if primes {
        a.primes
            .iter()
            .map(|&p| summarize_prime(&root, p, &ModOptions::default()))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let rep = report(&series, fit, sieve, densities);
    let mut out = sink(&a.output)?;
    serde_json::to_writer_pretty(&mut out, &rep)?;
    writeln!(out)?;
    out.flush()?;
    if rep.all_passed() {
        Ok(())
    } else {
        Err(Error::InternalInvariant("report checks failed".into()))
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let mut opts = VerifyOptions {
        workers: a.workers.max(1),
        n2_offset: a.inject_n2_offset,
        ..VerifyOptions::default()
    };
    if let Some(slot) = a.corrupt_generator {
        if !(1..=4).contains(&slot) {
            return Err(Error::InvalidInput(format!(
                "generator slot {slot} out of range 1..=4"
            )));
        }
        let i = slot - 1;
        let mut m = *opts.generators[i].matrix();
        m[i][(i + 1) % 4] += 1;
        opts.generators[i] = Generator::from_matrix(i, m);
    }
    let rep = verify::run(&opts);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        for c in &rep.checks {
            println!(
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
    }
    if rep.all_passed() {
        Ok(())
    } else {
        Err(Error::InternalInvariant("invariant suite failed".into()))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Count(a) => cmd_count(a),
        Command::Reduce { root } => cmd_reduce(root),
        Command::Primes(a) => cmd_primes(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Modp(a) => cmd_modp(a),
        Command::Render(a) => cmd_render(a),
        Command::Embed { root } => cmd_embed(root),
        Command::Points(a) => cmd_points(a),
        Command::Report(a) => cmd_report(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn root_resolution() {
        let args = |s: &str, strict| RootArgs {
            root: s.into(),
            strict,
        };
        assert_eq!(
            resolve_root(&args("-1,2,2,3", true)).unwrap().quad(),
            Quadruple::new(-1, 2, 2, 3)
        );
        assert_eq!(
            resolve_root(&args("15,2,2,3", false)).unwrap().quad(),
            Quadruple::new(-1, 2, 2, 3)
        );
        assert!(resolve_root(&args("15,2,2,3", true)).is_err());
        assert_eq!(
            resolve_root(&args("1,1,1,1", false))
                .unwrap_err()
                .to_string(),
            "not a Descartes quadruple (form = -8)"
        );
    }
}
