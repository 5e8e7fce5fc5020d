//! `otar`: simulate, fit, and analyze autoregressive chains of monotone
//! transport maps from the command line.
//!
//! Structured results are JSON; map and matrix data are CSV. Errors exit
//! with code 2 (configuration or input) or 3 (numeric degeneracy) and emit
//! a machine-readable JSON object on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use otar::dynamics::{
    check_stationarity_condition, maps_from_distributions, series_to_distributions,
    simulate_chain, ChainConfig, ModelKind, ModelParams, SystemKind,
};
use otar::error::{Error, Result};
use otar::estimation::{fit, fit_alt, FitConfig};
use otar::experiments::{
    builtin_map, compare_models, run_rate_experiment, run_simulation_grid, GridSpec,
    BUILTIN_MAP_NAMES,
};
use otar::ingest::{empirical_quantiles, load_samples, IngestConfig, SampleTable};
use otar::io;
use otar::noise::NoiseSpec;
use otar::rng::Seed;
use otar::transport::{Interval, QuantileCurve, UnitMap};
use otar::{Interval64, MapSeries64, UnitMap64, DEFAULT_GRID_M};

#[derive(Parser)]
#[command(
    name = "otar",
    version,
    about = "Autoregressive modeling of distributional time series via transport maps"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum SystemArg {
    /// T_i = eps ∘ S ∘ [alpha T_{i-1}]
    #[default]
    PerturbThenMap,
    /// T_i = eps ∘ alpha[T_{i-1}, S]
    ContractAbout,
}

impl From<SystemArg> for SystemKind {
    fn from(v: SystemArg) -> Self {
        match v {
            SystemArg::PerturbThenMap => SystemKind::PerturbThenMap,
            SystemArg::ContractAbout => SystemKind::ContractAbout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// Maps are transports between consecutive distributions.
    Increment,
    /// Maps are the quantile functions themselves.
    UniformQuantile,
    /// Maps push a fixed reference distribution forward.
    GeneralizedQuantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TransformOp {
    Invert,
    Compose,
    Contract,
    ContractAbout,
    LpDistance,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a chain of maps and write it as a series container.
    Simulate {
        /// Contraction strength of the dynamics.
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        /// Deterministic map: id, zeta:K, kinked, steps, or a file path.
        #[arg(long, default_value = "id")]
        s: String,
        #[arg(long, value_enum, default_value_t)]
        system: SystemArg,
        /// Total iterations including burn-in.
        #[arg(long, default_value_t = 300)]
        steps: usize,
        /// Leading iterations to discard.
        #[arg(long, default_value_t = 100)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Substream index for parallel reproduction schemes.
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Grid resolution M (maps are sampled at M + 1 points).
        #[arg(long, default_value_t = DEFAULT_GRID_M)]
        grid: usize,
        /// Noise: none, default, or a NoiseSpec JSON file.
        #[arg(long, default_value = "default")]
        noise: String,
        /// Output stem; writes <stem>.json and <stem>.csv.
        #[arg(long)]
        out: PathBuf,
        /// Additionally write the chain as distribution curves under this
        /// interpretation (to <stem>_curves.{json,csv}).
        #[arg(long, value_enum)]
        distributions: Option<KindArg>,
        /// Reference map file for the generalized-quantile interpretation.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Fit the model to an observed map or curve series.
    Fit {
        /// Map series stem (from `simulate` or compatible).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Curve series stem (from `ingest`); requires --model.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// How to read curves as a map chain.
        #[arg(long, value_enum)]
        model: Option<KindArg>,
        /// Reference map file for --model generalized-quantile.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        system: SystemArg,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        #[arg(long, default_value_t = -0.999, allow_hyphen_values = true)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.999)]
        alpha_max: f64,
        #[arg(long, default_value_t = 1e-4)]
        refine_tol: f64,
        /// Output stem; writes <stem>.json, <stem>_s_hat.csv,
        /// <stem>_profile.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a single map operation.
    Transform {
        #[arg(long, value_enum)]
        op: TransformOp,
        /// First operand: builtin name or file path.
        #[arg(long)]
        a: String,
        /// Second operand, where the operation needs one.
        #[arg(long)]
        b: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Exponent for lp-distance (default 2).
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID_M)]
        grid: usize,
        /// Output file for map-valued results (.csv or .json); scalar
        /// results print to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a (period, value) sample table into a curve series.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "period")]
        period_col: String,
        #[arg(long, default_value = "value")]
        value_col: String,
        /// Date column (YYYY-MM-DD); when given, the year is the period
        /// and --months/--years filters apply.
        #[arg(long)]
        date_col: Option<String>,
        /// Months to keep (1-12), with --date-col.
        #[arg(long, value_delimiter = ',')]
        months: Vec<u32>,
        /// Inclusive year range "from-to", with --date-col.
        #[arg(long)]
        years: Option<String>,
        #[arg(long, default_value_t = DEFAULT_GRID_M)]
        grid: usize,
        /// Fixed domain "lo,hi" (default: padded sample range).
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the sufficient stationarity condition.
    Check {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value = "id")]
        s: String,
        #[arg(long, default_value_t = DEFAULT_GRID_M)]
        grid: usize,
        #[arg(long, default_value = "default")]
        noise: String,
    },
    /// Run the simulation grid over (alpha, S) cells.
    Grid {
        /// GridSpec JSON file; defaults to the canonical grid.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GRID_M)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        replicates: Option<usize>,
        /// Report JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Optional tidy CSV (one row per replicate).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Estimation-error convergence study over chain lengths.
    Rate {
        #[arg(long, value_delimiter = ',')]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value = "zeta:-2")]
        s: String,
        #[arg(long, default_value_t = DEFAULT_GRID_M)]
        grid: usize,
        #[arg(long, default_value = "default")]
        noise: String,
        #[arg(long, default_value_t = 100)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare increment and quantile readings of a curve series.
    Compare {
        /// Curve series stem (from `ingest`).
        #[arg(long)]
        curves: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        /// Optional report JSON path (always printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_map_source(source: &str, m: usize) -> Result<UnitMap64> {
    match builtin_map(source, m) {
        Ok(map) => Ok(map),
        Err(Error::Config(_)) if Path::new(source).exists() => {
            io::read_unit_map(Path::new(source))
        }
        Err(Error::Config(_)) => Err(Error::Config(format!(
            "map source '{source}' is neither a builtin ({}) nor an existing file",
            BUILTIN_MAP_NAMES.join(", ")
        ))),
        Err(e) => Err(e),
    }
}

fn parse_noise_source(source: &str) -> Result<NoiseSpec> {
    match source {
        "none" => Ok(NoiseSpec::noiseless()),
        "default" => Ok(NoiseSpec::default()),
        path => {
            let spec: NoiseSpec = io::read_json(Path::new(path))?;
            spec.validate()?;
            Ok(spec)
        }
    }
}

fn parse_interval(text: &str) -> Result<Interval64> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("expected 'lo,hi', got '{text}'")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number '{s}' in interval '{text}'")))
    };
    Interval::new(parse(lo)?, parse(hi)?)
}

/// WAR_SEED overrides any --seed flag, for external sweep drivers.
fn effective_seed(flag: u64) -> Result<Seed> {
    match std::env::var("WAR_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Seed)
            .map_err(|_| Error::Config(format!("WAR_SEED '{text}' is not a u64"))),
        Err(_) => Ok(Seed(flag)),
    }
}

fn model_kind(
    kind: KindArg,
    reference: Option<&PathBuf>,
) -> Result<ModelKind<f64>> {
    Ok(match kind {
        KindArg::Increment => ModelKind::Increment,
        KindArg::UniformQuantile => ModelKind::UniformQuantile,
        KindArg::GeneralizedQuantile => {
            let path = reference.ok_or_else(|| {
                Error::Config("generalized-quantile needs --reference".into())
            })?;
            ModelKind::GeneralizedQuantile {
                reference: QuantileCurve::from_unit_map(io::read_unit_map(path)?),
            }
        }
    })
}

fn write_curves(stem: &Path, curves: &[QuantileCurve<f64>]) -> Result<()> {
    let domain = curves
        .first()
        .map(|c| c.domain)
        .ok_or_else(|| Error::Input("no curves to write".into()))?;
    let series = otar::ingest::EmpiricalSeries {
        periods: (0..curves.len()).map(|i| format!("t{i}")).collect(),
        curves: curves.to_vec(),
        domain,
        repaired: vec![],
    };
    io::write_empirical_series(stem, &series)
}

fn load_series_for_fit(
    input: Option<&PathBuf>,
    curves: Option<&PathBuf>,
    model: Option<KindArg>,
    reference: Option<&PathBuf>,
) -> Result<MapSeries64> {
    match (input, curves) {
        (Some(stem), None) => io::read_map_series(stem),
        (None, Some(stem)) => {
            let kind = model.ok_or_else(|| {
                Error::Config("--curves requires --model to pick an interpretation".into())
            })?;
            let series = io::read_empirical_series(stem)?;
            maps_from_distributions(&series.curves, &model_kind(kind, reference)?)
        }
        _ => Err(Error::Config("provide exactly one of --input or --curves".into())),
    }
}

fn grid_tidy_csv(path: &Path, report: &otar::experiments::GridReport) -> Result<()> {
    let mut out = String::from("alpha_true,s_name,replicate,alpha_hat,s_error\n");
    use std::fmt::Write as _;
    for cell in &report.cells {
        for rep in &cell.replicates {
            writeln!(
                out,
                "{},{},{},{},{}",
                cell.alpha_true, cell.s_name, rep.replicate, rep.alpha_hat, rep.s_error
            )
            .expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            alpha,
            s,
            system,
            steps,
            burn_in,
            seed,
            stream,
            grid,
            noise,
            out,
            distributions,
            reference,
        } => {
            let params = ModelParams {
                alpha,
                s: parse_map_source(&s, grid)?,
                system: system.into(),
            };
            let cfg = ChainConfig {
                n_steps: steps,
                burn_in,
                init: UnitMap::identity(grid),
                seed: effective_seed(seed)?,
                stream,
            };
            let spec = parse_noise_source(&noise)?;
            let series = simulate_chain(&params, &cfg, &spec)?;
            io::write_map_series(&out, &series)?;
            if let Some(kind) = distributions {
                let init_q = QuantileCurve::from_unit_map(UnitMap::identity(grid));
                let curves =
                    series_to_distributions(&series, &model_kind(kind, reference.as_ref())?, &init_q)?;
                let mut stem = out.file_name().unwrap_or_default().to_os_string();
                stem.push("_curves");
                write_curves(&out.with_file_name(stem), &curves)?;
            }
            println!(
                "{}",
                json!({"maps": series.len(), "grid": series.grid_m(), "out": out})
            );
            Ok(())
        }
        Command::Fit {
            input,
            curves,
            model,
            reference,
            system,
            grid_step,
            alpha_min,
            alpha_max,
            refine_tol,
            out,
        } => {
            let series =
                load_series_for_fit(input.as_ref(), curves.as_ref(), model, reference.as_ref())?;
            let cfg = FitConfig {
                alpha_grid_step: grid_step,
                alpha_bounds: (alpha_min, alpha_max),
                refine_tol,
            };
            let result = match SystemKind::from(system) {
                SystemKind::PerturbThenMap => fit(&series, &cfg)?,
                SystemKind::ContractAbout => fit_alt(&series, &cfg)?,
            };
            io::write_fit_result(&out, &result)?;
            println!(
                "{}",
                json!({
                    "alpha_hat": result.alpha_hat,
                    "n_used": result.n_used,
                    "flags": result.flags,
                    "out": out,
                })
            );
            Ok(())
        }
        Command::Transform { op, a, b, alpha, p, grid, out } => {
            let map_a = parse_map_source(&a, grid)?;
            let need_b = || -> Result<UnitMap64> {
                parse_map_source(
                    b.as_deref()
                        .ok_or_else(|| Error::Config("this operation needs --b".into()))?,
                    grid,
                )
            };
            let map_result: Option<UnitMap64> = match op {
                TransformOp::Invert => Some(map_a.invert()),
                TransformOp::Compose => Some(map_a.compose(&need_b()?)?),
                TransformOp::Contract => Some(map_a.contract(
                    alpha.ok_or_else(|| Error::Config("contract needs --alpha".into()))?,
                )?),
                TransformOp::ContractAbout => Some(map_a.contract_about(
                    alpha.ok_or_else(|| Error::Config("contract-about needs --alpha".into()))?,
                    &need_b()?,
                )?),
                TransformOp::LpDistance => {
                    let d = map_a.lp_distance(&need_b()?, p.unwrap_or(2.0))?;
                    println!("{}", json!({"value": d}));
                    None
                }
            };
            if let Some(map) = map_result {
                let path = out.ok_or_else(|| {
                    Error::Config("map-valued transform needs --out".into())
                })?;
                match path.extension().and_then(|e| e.to_str()) {
                    Some("json") => io::write_unit_map_json(&path, &map)?,
                    _ => io::write_unit_map_csv(&path, &map)?,
                }
            }
            Ok(())
        }
        Command::Ingest {
            input,
            period_col,
            value_col,
            date_col,
            months,
            years,
            grid,
            domain,
            out,
        } => {
            let table = match date_col {
                Some(date_col) => load_samples_by_date(
                    &input,
                    &date_col,
                    &value_col,
                    &months,
                    years.as_deref(),
                )?,
                None => load_samples(
                    &input,
                    &IngestConfig { period_column: period_col, value_column: value_col },
                )?,
            };
            let domain = domain.as_deref().map(parse_interval).transpose()?;
            let series = empirical_quantiles(&table, grid, domain)?;
            io::write_empirical_series(&out, &series)?;
            println!(
                "{}",
                json!({
                    "periods": series.periods.len(),
                    "dropped": table.n_dropped,
                    "repaired": series.repaired,
                    "domain": [series.domain.lo, series.domain.hi],
                    "out": out,
                })
            );
            Ok(())
        }
        Command::Check { alpha, s, grid, noise } => {
            let params = ModelParams {
                alpha,
                s: parse_map_source(&s, grid)?,
                system: SystemKind::PerturbThenMap,
            };
            let report = check_stationarity_condition(&params, &parse_noise_source(&noise)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Grid { spec, grid, seed, replicates, out, csv } => {
            let mut grid_spec: GridSpec<f64> = match spec {
                Some(path) => io::read_json(&path)?,
                None => GridSpec::canonical(grid, Seed(0)),
            };
            grid_spec.seed = effective_seed(seed)?;
            if let Some(r) = replicates {
                grid_spec.replicates = r;
            }
            let report = run_simulation_grid(&grid_spec)?;
            io::write_json(&out, &report)?;
            if let Some(csv_path) = csv {
                grid_tidy_csv(&csv_path, &report)?;
            }
            println!("{}", json!({"cells": report.cells.len(), "out": out}));
            Ok(())
        }
        Command::Rate {
            ns,
            replicates,
            alpha,
            s,
            grid,
            noise,
            burn_in,
            seed,
            grid_step,
            out,
            csv,
        } => {
            let params = ModelParams {
                alpha,
                s: parse_map_source(&s, grid)?,
                system: SystemKind::PerturbThenMap,
            };
            let cfg = FitConfig { alpha_grid_step: grid_step, ..FitConfig::default() };
            let report = run_rate_experiment(
                &ns,
                replicates,
                &params,
                &parse_noise_source(&noise)?,
                &cfg,
                burn_in,
                effective_seed(seed)?,
            )?;
            io::write_json(&out, &report)?;
            if let Some(csv_path) = csv {
                let mut text = String::from("n,rmse_alpha,mean_s_error\n");
                use std::fmt::Write as _;
                for point in &report.points {
                    writeln!(text, "{},{},{}", point.n, point.rmse_alpha, point.mean_s_error)
                        .expect("string write");
                }
                std::fs::write(csv_path, text)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Compare { curves, grid_step, out } => {
            let series = io::read_empirical_series(&curves)?;
            let cfg = FitConfig { alpha_grid_step: grid_step, ..FitConfig::default() };
            let report = compare_models(&series, &cfg)?;
            if let Some(path) = out {
                io::write_json(&path, &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

/// Date-keyed ingestion: the period is the calendar year of a YYYY-MM-DD
/// date column, optionally filtered to given months and an inclusive year
/// range.
fn load_samples_by_date(
    path: &Path,
    date_col: &str,
    value_col: &str,
    months: &[u32],
    years: Option<&str>,
) -> Result<SampleTable<f64>> {
    let year_range = years
        .map(|text| -> Result<(i32, i32)> {
            let (a, b) = text
                .split_once('-')
                .ok_or_else(|| Error::Config(format!("expected 'from-to', got '{text}'")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<i32>()
                    .map_err(|_| Error::Config(format!("bad year '{s}'")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .transpose()?;

    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("column '{name}' not found in {path:?}")))
    };
    let date_idx = find(date_col)?;
    let value_idx = find(value_col)?;

    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut n_dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let date = record.get(date_idx).unwrap_or("");
        let mut parts = date.splitn(3, '-');
        let (year, month) = match (
            parts.next().and_then(|y| y.parse::<i32>().ok()),
            parts.next().and_then(|m| m.parse::<u32>().ok()),
        ) {
            (Some(y), Some(m)) if (1..=12).contains(&m) => (y, m),
            _ => {
                n_dropped += 1;
                continue;
            }
        };
        if !months.is_empty() && !months.contains(&month) {
            continue;
        }
        if let Some((lo, hi)) = year_range {
            if year < lo || year > hi {
                continue;
            }
        }
        match record.get(value_idx).unwrap_or("").trim().parse::<f64>() {
            Ok(v) if v.is_finite() => groups.entry(format!("{year}")).or_default().push(v),
            _ => n_dropped += 1,
        }
    }
    if groups.is_empty() {
        return Err(Error::Input(format!("no usable rows in {path:?}")));
    }
    let (periods, samples) = groups.into_iter().unzip();
    Ok(SampleTable { periods, samples, n_dropped })
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let code = err.exit_code();
        eprintln!("{}", json!({"error": err.to_string(), "code": code}));
        std::process::exit(code);
    }
}
