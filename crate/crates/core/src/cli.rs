//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation, 2 computation, 3 resource.
//! Angles on the command line and in CSV files are degrees. Each successful
//! run that writes files also writes `run.json`, an echo of its parameters,
//! next to them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::basis::{count_hsh, count_scs, matched_eta, BasisConfig, BasisFamily};
use crate::dataset::{load_hrir, magnitude_spectra, Direction, Ear, MagnitudeSet};
use crate::error::Error;
use crate::evaluation::{
    ard_are, mse_by_direction, mse_by_frequency, overall_mse, sweep, write_mse_by_direction_csv,
    write_mse_by_frequency_csv, write_sweep_csv, HearingRange, SweepGrid,
};
use crate::fitting::{decode, fit_with, CoefficientSet, FitOptions, SamplePoint, WeightSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(name = "hrtf4d", version, about = "Fit HRTF magnitudes to continuous 4D space-frequency bases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit one ear of a dataset and write a coefficient file.
    Fit(FitArgs),
    /// Decode magnitudes at arbitrary (direction, frequency) queries.
    Decode(DecodeArgs),
    /// Error reports (overall, per frequency, per direction) for fitted coefficients.
    Evaluate(EvaluateArgs),
    /// Fit a grid of configurations and flag the Pareto-optimal ones.
    Sweep(SweepArgs),
    /// HSH frequency order whose function count matches a spherindrical basis.
    MatchEta(MatchEtaArgs),
    /// Per-subject average relative difference / error from an MSE table.
    ArdAre(ArdAreArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct WeightArgs {
    /// Lower limit of the pass band, Hz.
    #[arg(long = "fl", default_value_t = 20.0)]
    pub f_l: f64,
    /// Upper limit of the pass band, Hz.
    #[arg(long = "fu", default_value_t = 20_000.0)]
    pub f_u: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ear: String,
    #[arg(long)]
    pub family: String,
    /// Max SH order.
    #[arg(long = "L")]
    pub max_order: u32,
    /// Frequency approximation order (half steps allowed for hsh).
    #[arg(long)]
    pub eta: f64,
    #[command(flatten)]
    pub weight: WeightArgs,
    #[arg(long = "mem-budget-gb", default_value_t = 4.0)]
    pub mem_budget_gb: f64,
    /// Coefficient file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    #[arg(long)]
    pub coeffs: PathBuf,
    /// CSV with columns azimuth_deg, elevation_deg, freq_hz.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// One or two coefficient files (ears are read from the files).
    #[arg(long, num_args = 1..=2, required = true)]
    pub coeffs: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Require the per-direction report (needs both ears).
    #[arg(long)]
    pub per_direction: bool,
    /// Hearing range used for the error, Hz.
    #[command(flatten)]
    pub range: WeightArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "hsh,shfs,shfbs,shrfbs")]
    pub families: Vec<String>,
    #[arg(long = "L", value_delimiter = ',', required = true)]
    pub max_orders: Vec<u32>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta: Vec<f64>,
    /// Use the count-matched η for the hsh family.
    #[arg(long)]
    pub hsh_matched: bool,
    /// left, right or both (ear-averaged).
    #[arg(long, default_value = "both")]
    pub ears: String,
    #[command(flatten)]
    pub weight: WeightArgs,
    #[arg(long = "mem-budget-gb", default_value_t = 4.0)]
    pub mem_budget_gb: f64,
    /// Sweep CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MatchEtaArgs {
    #[arg(long = "L")]
    pub max_order: u32,
    #[arg(long)]
    pub eta: u32,
    /// Optional directory for a JSON copy of the result.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ArdAreArgs {
    /// CSV: first column subject id, remaining columns MSE per configuration.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::MemoryBudget { .. } => EXIT_RESOURCE,
            Error::Underdetermined { .. } | Error::UndefinedDenominator | Error::Division(_) | Error::Io(_) => {
                EXIT_COMPUTATION
            }
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn gib_to_bytes(gb: f64) -> CliResult<u64> {
    if !(gb > 0.0) || !gb.is_finite() {
        return Err(CliError::validation(format!("--mem-budget-gb must be positive, got {gb}")));
    }
    Ok((gb * (1u64 << 30) as f64) as u64)
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::Io)?;
    }
    Ok(())
}

fn write_echo(dir: &Path, cli: &Cli) -> CliResult<()> {
    #[derive(Serialize)]
    struct Echo<'a> {
        tool: &'static str,
        version: &'static str,
        #[serde(flatten)]
        cli: &'a Command,
    }
    fs::create_dir_all(dir).map_err(Error::Io)?;
    let text = serde_json::to_string_pretty(&Echo {
        tool: "hrtf4d",
        version: env!("CARGO_PKG_VERSION"),
        cli: &cli.command,
    })
    .map_err(|e| CliError::validation(e.to_string()))?;
    fs::write(dir.join("run.json"), text + "\n").map_err(Error::Io)?;
    Ok(())
}

fn dir_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn cmd_fit(args: &FitArgs, cli: &Cli) -> CliResult<()> {
    let ear: Ear = args.ear.parse()?;
    let family: BasisFamily = args.family.parse()?;
    let budget = gib_to_bytes(args.mem_budget_gb)?;
    let hrirs = load_hrir(&args.manifest)?;
    let config = BasisConfig::new(family, args.max_order, args.eta, hrirs.fs)?;
    let spec = WeightSpec::new(args.weight.f_l, args.weight.f_u);
    spec.validate(hrirs.fs)?;
    let mags = magnitude_spectra(&hrirs, ear);
    let options = FitOptions {
        mem_budget_bytes: budget,
        ..FitOptions::default()
    };
    let cs = fit_with(&config, &mags, &spec, &options)?;
    ensure_parent(&args.out)?;
    cs.save(&args.out)?;
    write_echo(&dir_of(&args.out), cli)?;
    println!(
        "N={} residual={:e} condition={:e} rows={}",
        cs.coeffs.len(),
        cs.fit_metadata.residual_norm,
        cs.fit_metadata.condition_estimate,
        cs.fit_metadata.rows_used
    );
    Ok(())
}

fn read_queries(path: &Path) -> CliResult<Vec<(f64, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::validation(format!("{}: missing column '{name}'", path.display())))
    };
    let (ia, ie, ifr) = (col("azimuth_deg")?, col("elevation_deg")?, col("freq_hz")?);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let num = |j: usize| -> CliResult<f64> {
            record
                .get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::validation(format!("{}: row {}: bad number", path.display(), i + 1)))
        };
        out.push((num(ia)?, num(ie)?, num(ifr)?));
    }
    Ok(out)
}

fn cmd_decode(args: &DecodeArgs, cli: &Cli) -> CliResult<()> {
    let cs = CoefficientSet::load(&args.coeffs)?;
    let queries = read_queries(&args.queries)?;
    let nyquist = cs.config.fs() / 2.0;
    let mut bad = Vec::new();
    for (i, &(_, el, f)) in queries.iter().enumerate() {
        if !(f >= 0.0 && f <= nyquist) {
            bad.push(format!("row {}: frequency {f} Hz outside [0, {nyquist}] Hz", i + 1));
        } else if !(-90.0..=90.0).contains(&el) {
            bad.push(format!("row {}: elevation {el} outside [-90, 90]", i + 1));
        }
    }
    if !bad.is_empty() {
        return Err(CliError::validation(format!("invalid queries:\n  {}", bad.join("\n  "))));
    }
    let points: Vec<SamplePoint> = queries
        .iter()
        .map(|&(az, el, f)| SamplePoint::at(Direction::from_degrees(az, el), f))
        .collect();
    let values = decode(&cs, &points)?;
    ensure_parent(&args.out)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| CliError::validation(e.to_string()))?;
    w.write_record(["azimuth_deg", "elevation_deg", "freq_hz", "magnitude"])
        .map_err(|e| CliError::validation(e.to_string()))?;
    for (&(az, el, f), v) in queries.iter().zip(values) {
        w.write_record([az.to_string(), el.to_string(), f.to_string(), v.to_string()])
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    w.flush().map_err(Error::Io)?;
    write_echo(&dir_of(&args.out), cli)?;
    println!("decoded {} queries", queries.len());
    Ok(())
}

fn check_compatible(cs: &CoefficientSet, mags: &MagnitudeSet, path: &Path) -> CliResult<()> {
    if cs.subject_id != mags.subject_id {
        return Err(CliError::validation(format!(
            "{}: coefficients belong to subject '{}' but the manifest describes '{}'",
            path.display(),
            cs.subject_id,
            mags.subject_id
        )));
    }
    if (cs.config.fs() - mags.fs).abs() > 1e-9 * mags.fs {
        return Err(CliError::validation(format!(
            "{}: coefficients use fs={} Hz but the manifest has fs={} Hz",
            path.display(),
            cs.config.fs(),
            mags.fs
        )));
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, cli: &Cli) -> CliResult<()> {
    let range = HearingRange {
        lower: args.range.f_l,
        upper: args.range.f_u,
    };
    if !(range.lower < range.upper) {
        return Err(CliError::validation("hearing range needs --fl < --fu"));
    }
    let sets: Vec<CoefficientSet> = args
        .coeffs
        .iter()
        .map(CoefficientSet::load)
        .collect::<Result<_, _>>()?;
    if sets.len() == 2 && sets[0].ear == sets[1].ear {
        return Err(CliError::validation(format!("both coefficient files describe the {} ear", sets[0].ear.name())));
    }
    let both = sets.len() == 2;
    if args.per_direction && !both {
        return Err(CliError::validation(
            "per-direction report needs coefficient files for both ears",
        ));
    }
    let hrirs = load_hrir(&args.manifest)?;
    let mags: Vec<MagnitudeSet> = sets.iter().map(|cs| magnitude_spectra(&hrirs, cs.ear)).collect();
    for ((cs, m), path) in sets.iter().zip(&mags).zip(&args.coeffs) {
        check_compatible(cs, m, path)?;
    }

    let overall: Vec<f64> = sets
        .iter()
        .zip(&mags)
        .map(|(cs, m)| overall_mse(cs, m, &range))
        .collect::<Result<_, _>>()?;
    let per_freq: Vec<Vec<(f64, f64)>> = sets
        .iter()
        .zip(&mags)
        .map(|(cs, m)| mse_by_frequency(cs, m, &range))
        .collect::<Result<_, _>>()?;
    let freq_avg: Vec<(f64, f64)> = (0..per_freq[0].len())
        .map(|i| {
            let f = per_freq[0][i].0;
            (f, per_freq.iter().map(|v| v[i].1).sum::<f64>() / per_freq.len() as f64)
        })
        .collect();
    let per_dir = if both {
        let (l, r) = if sets[0].ear == Ear::Left { (0, 1) } else { (1, 0) };
        Some(mse_by_direction(&sets[l], &sets[r], &mags[l], &mags[r], &range)?)
    } else {
        None
    };

    fs::create_dir_all(&args.out).map_err(Error::Io)?;
    let mean = overall.iter().sum::<f64>() / overall.len() as f64;
    let mut w = csv::Writer::from_path(args.out.join("overall.csv")).map_err(|e| CliError::validation(e.to_string()))?;
    w.write_record(["ear", "overall_mse_percent"])
        .map_err(|e| CliError::validation(e.to_string()))?;
    for (cs, v) in sets.iter().zip(&overall) {
        w.write_record([cs.ear.name().to_string(), v.to_string()])
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    w.write_record(["mean".to_string(), mean.to_string()])
        .map_err(|e| CliError::validation(e.to_string()))?;
    w.flush().map_err(Error::Io)?;
    write_mse_by_frequency_csv(fs::File::create(args.out.join("mse_by_frequency.csv")).map_err(Error::Io)?, &freq_avg)?;
    if let Some(rows) = &per_dir {
        write_mse_by_direction_csv(fs::File::create(args.out.join("mse_by_direction.csv")).map_err(Error::Io)?, rows)?;
    }
    write_echo(&args.out, cli)?;
    println!("overall MSE {mean}% ({} ear(s))", sets.len());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, cli: &Cli) -> CliResult<()> {
    let families: Vec<BasisFamily> = args
        .families
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let budget = gib_to_bytes(args.mem_budget_gb)?;
    let ears = match args.ears.to_ascii_lowercase().as_str() {
        "both" => vec![Ear::Left, Ear::Right],
        other => vec![other.parse::<Ear>()?],
    };
    let hrirs = load_hrir(&args.manifest)?;
    let spec = WeightSpec::new(args.weight.f_l, args.weight.f_u);
    spec.validate(hrirs.fs)?;
    let grid = SweepGrid {
        families,
        max_orders: args.max_orders.clone(),
        etas: args.eta.clone(),
        hsh_matched: args.hsh_matched,
    };
    // reject invalid combinations before any fitting
    grid.configs(hrirs.fs)?;
    let mags: Vec<MagnitudeSet> = ears.iter().map(|&e| magnitude_spectra(&hrirs, e)).collect();
    let options = FitOptions {
        mem_budget_bytes: budget,
        ..FitOptions::default()
    };
    let result = sweep(&mags, &grid, &spec, &options, &HearingRange::default())?;
    ensure_parent(&args.out)?;
    write_sweep_csv(fs::File::create(&args.out).map_err(Error::Io)?, &result)?;
    write_echo(&dir_of(&args.out), cli)?;
    let failed = result.entries.iter().filter(|e| e.mse.is_none()).count();
    println!("{} configurations, {failed} failed", result.entries.len());
    Ok(())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct MatchReport {
    #[serde(rename = "L")]
    pub max_order: u32,
    pub eta: u32,
    pub eta_matched: f64,
    pub n_scs: usize,
    pub n_hsh: usize,
    pub n_hsh_matched: usize,
    pub rel_diff_hsh_percent: f64,
    pub rel_diff_hsh_matched_percent: f64,
}

pub fn match_report(max_order: u32, eta: u32) -> MatchReport {
    let n_scs = count_scs(max_order, eta);
    let n_hsh = count_hsh(max_order, eta as f64).expect("integer eta");
    let eta_matched = matched_eta(max_order, eta);
    let n_hsh_matched = count_hsh(max_order, eta_matched).expect("half-step eta");
    let rel = |n: usize| 100.0 * (n as f64 - n_scs as f64) / n_scs as f64;
    MatchReport {
        max_order,
        eta,
        eta_matched,
        n_scs,
        n_hsh,
        n_hsh_matched,
        rel_diff_hsh_percent: rel(n_hsh),
        rel_diff_hsh_matched_percent: rel(n_hsh_matched),
    }
}

fn cmd_match_eta(args: &MatchEtaArgs, cli: &Cli) -> CliResult<()> {
    let r = match_report(args.max_order, args.eta);
    println!("L={} eta={}", r.max_order, r.eta);
    println!("eta_m={}", r.eta_matched);
    println!("N_SCS={}", r.n_scs);
    println!("N_HSH={} ({:+.1}%)", r.n_hsh, r.rel_diff_hsh_percent);
    println!("N_HSHm={} ({:+.1}%)", r.n_hsh_matched, r.rel_diff_hsh_matched_percent);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(Error::Io)?;
        let text = serde_json::to_string_pretty(&r).map_err(|e| CliError::validation(e.to_string()))?;
        fs::write(dir.join("match_eta.json"), text + "\n").map_err(Error::Io)?;
        write_echo(dir, cli)?;
    }
    Ok(())
}

fn read_mse_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |msg: String| CliError::validation(format!("{}: malformed MSE table: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let width = reader.headers().map_err(|e| malformed(e.to_string()))?.len();
    if width < 2 {
        return Err(malformed("need a subject column and at least one configuration column".into()));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        ids.push(record.get(0).unwrap_or_default().to_string());
        let values = record
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| malformed(format!("row {}: '{s}' is not a number", i + 1))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok((ids, rows))
}

fn cmd_ard_are(args: &ArdAreArgs, cli: &Cli) -> CliResult<()> {
    let (ids, rows) = read_mse_table(&args.table)?;
    let stats = ard_are(&rows).map_err(|e| match e {
        Error::Division(_) => CliError::from(e),
        other => CliError::validation(format!("{}: malformed MSE table: {other}", args.table.display())),
    })?;
    let min_abs_ard = stats.iter().map(|s| s.ard.abs()).fold(f64::INFINITY, f64::min);
    let min_are = stats.iter().map(|s| s.are).fold(f64::INFINITY, f64::min);
    ensure_parent(&args.out)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| CliError::validation(e.to_string()))?;
    w.write_record(["subject", "ard_percent", "are_percent", "min_abs_ard", "min_are"])
        .map_err(|e| CliError::validation(e.to_string()))?;
    for (id, s) in ids.iter().zip(&stats) {
        w.write_record([
            id.clone(),
            s.ard.to_string(),
            s.are.to_string(),
            ((s.ard.abs() == min_abs_ard) as u8).to_string(),
            ((s.are == min_are) as u8).to_string(),
        ])
        .map_err(|e| CliError::validation(e.to_string()))?;
    }
    w.flush().map_err(Error::Io)?;
    write_echo(&dir_of(&args.out), cli)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli),
        Command::Decode(a) => cmd_decode(a, cli),
        Command::Evaluate(a) => cmd_evaluate(a, cli),
        Command::Sweep(a) => cmd_sweep(a, cli),
        Command::MatchEta(a) => cmd_match_eta(a, cli),
        Command::ArdAre(a) => cmd_ard_are(a, cli),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
