//! The `timerng` command-line front end.
//!
//! Stages communicate through files: `simulate` or `ingest` produce timestamp
//! files, `extract` turns them into packed bit files with a JSON sidecar, and
//! `analyze` reports on bit files. `sweep`, `validate` and `oracle` wrap the
//! experiments and analytic laws.
//!
//! Every command that writes an output also writes a run manifest
//! (`<first output>.manifest.json`, or `--manifest PATH`); `replay` re-runs
//! the recorded arguments.
//!
//! Exit codes: 0 success, 1 a validation check failed, 2 usage or
//! configuration error, 3 I/O or data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{self, laws, AnalysisReport};
use crate::event_source::{
    self, interval_histogram,
    io::{ingest_timestamps, quantize_ns_dedup, write_timestamps, TimestampFormat},
    Binning, SourceConfig,
};
use crate::experiments::{self, SweepSpec};
use crate::extractor::{
    self, read_bit_file, read_sidecar, write_bit_file, write_sidecar, BitFileMeta, ClockConfig,
    ClockMode, Method,
};
use crate::{Error, Result, SCHEMA_VERSION, VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

// ------------------------------------------------------------ value parsing

fn split_suffix(s: &str) -> (&str, &str) {
    let s = s.trim();
    let cut = s
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphabetic())
        .last()
        .map_or(s.len(), |(i, _)| i);
    (s[..cut].trim(), &s[cut..])
}

fn parse_number(num: &str, whole: &str) -> std::result::Result<f64, String> {
    if let Some((a, b)) = num.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| format!("invalid number '{whole}'"))?;
        let b: f64 = b.trim().parse().map_err(|_| format!("invalid number '{whole}'"))?;
        return Ok(a / b);
    }
    num.parse().map_err(|_| format!("invalid number '{whole}'"))
}

/// Decimal exponent of an SI prefix.
fn prefix_exponent(p: &str) -> Option<i32> {
    Some(match p {
        "" => 0,
        "p" => -12,
        "n" => -9,
        "u" | "µ" | "μ" => -6,
        "m" => -3,
        "k" => 3,
        "M" => 6,
        "G" => 9,
        _ => return None,
    })
}

/// `v · 10^e`, dividing for negative exponents so `25ns` is the double
/// nearest 2.5e-8.
fn scale(v: f64, e: i32) -> f64 {
    if e < 0 {
        v / 10f64.powi(-e)
    } else {
        v * 10f64.powi(e)
    }
}

/// Duration in seconds: `25ns`, `0.5us`, `1e-6`, `2 ms`.
pub fn parse_seconds(s: &str) -> std::result::Result<f64, String> {
    let (num, suffix) = split_suffix(s);
    let v = parse_number(num, s)?;
    let e = match suffix.strip_suffix('s') {
        Some(p) => prefix_exponent(p),
        None if suffix.is_empty() => Some(0),
        None => None,
    }
    .ok_or_else(|| format!("unknown time unit '{suffix}' in '{s}'"))?;
    Ok(scale(v, e))
}

/// Frequency in hertz: `48MHz`, `2e6`, `2 MHz`, `48M`.
pub fn parse_hertz(s: &str) -> std::result::Result<f64, String> {
    let (num, suffix) = split_suffix(s);
    let v = parse_number(num, s)?;
    let prefix = if suffix.len() >= 2 && suffix[suffix.len() - 2..].eq_ignore_ascii_case("hz") {
        let p = &suffix[..suffix.len() - 2];
        // `mhz` is taken as megahertz; nobody clocks a counter at millihertz.
        match p {
            "m" => "M",
            "K" => "k",
            "g" => "G",
            other => other,
        }
    } else {
        suffix
    };
    let e = prefix_exponent(prefix).ok_or_else(|| format!("unknown frequency unit '{suffix}' in '{s}'"))?;
    Ok(scale(v, e))
}

/// A count: `1e6`, `10000000`, `5M`. Must be a whole number.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let (num, suffix) = split_suffix(s);
    let e = prefix_exponent(suffix)
        .filter(|&e| e >= 0)
        .ok_or_else(|| format!("unknown count suffix '{suffix}' in '{s}'"))?;
    if suffix.is_empty() {
        if let Ok(n) = num.parse::<u64>() {
            return Ok(n);
        }
    }
    let v = scale(parse_number(num, s)?, e);
    if !(v >= 0.0 && v.fract() == 0.0 && v <= 2f64.powi(53)) {
        return Err(format!("'{s}' is not a whole number"));
    }
    Ok(v as u64)
}

/// A plain number or fraction: `0.3`, `1/24`.
pub fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    parse_number(s.trim(), s)
}

/// A grid of x values: `0.02:20:log20`, `0.1:1:lin10`, or a comma list
/// `0.05,1/24,0.2`.
pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, spec] => {
            let lo = parse_ratio(lo)?;
            let hi = parse_ratio(hi)?;
            let (kind, n) = spec.split_at(3.min(spec.len()));
            let n: usize = n.parse().map_err(|_| format!("invalid point count in '{s}'"))?;
            if n == 0 {
                return Err(format!("grid '{s}' has no points"));
            }
            match kind {
                "log" => {
                    if !(lo > 0.0 && hi > 0.0) {
                        return Err(format!("log grid '{s}' needs positive ends"));
                    }
                    Ok(experiments::log_grid(lo, hi, n))
                }
                "lin" => Ok((0..n)
                    .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
                    .collect()),
                _ => Err(format!("grid spacing must be 'log' or 'lin' in '{s}'")),
            }
        }
        [_] => s.split(',').map(parse_ratio).collect(),
        _ => Err(format!("cannot parse grid '{s}'")),
    }
}

/// A parsed x grid, kept as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid_arg(s: &str) -> std::result::Result<Grid, String> {
    parse_grid(s).map(Grid)
}

// ------------------------------------------------------------------ flags

#[derive(Debug, Parser)]
#[command(name = "timerng", version, about = "Random bits from the timing of Poissonian events")]
pub struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run manifest path (default: next to the first output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// More log output (-v, -vv).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a detected-pulse timestamp stream.
    Simulate(SimulateArgs),
    /// Extract bits from a timestamp file.
    Extract(ExtractArgs),
    /// ENT-style report on a bit file.
    Analyze(AnalyzeArgs),
    /// Sweep x = T/τ and write a CSV of a1, bias and efficiency.
    Sweep(SweepArgs),
    /// Run named validations; exits 1 if any check fails.
    Validate(ValidateArgs),
    /// Read, check and summarize a timestamp file.
    Ingest(IngestArgs),
    /// Closed-form restartable-clock statistics.
    Oracle(OracleArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

impl From<FormatArg> for TimestampFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Binary => TimestampFormat::Binary,
            FormatArg::Csv => TimestampFormat::Csv,
        }
    }
}

fn resolve_format(f: Option<FormatArg>, path: &Path) -> TimestampFormat {
    f.map(Into::into).unwrap_or_else(|| TimestampFormat::from_path(path))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Mean event rate (Hz); alternative to --tau.
    #[arg(long, value_parser = parse_hertz, conflicts_with = "tau")]
    pub rate: Option<f64>,
    /// Mean inter-event time.
    #[arg(long, value_parser = parse_seconds)]
    pub tau: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    pub events: u64,
    #[arg(long, value_parser = parse_seconds, default_value = "0")]
    pub dead_time: f64,
    #[arg(long, default_value_t = 0.0)]
    pub afterpulse_prob: f64,
    #[arg(long, value_parser = parse_seconds, default_value = "1us")]
    pub afterpulse_tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    /// Exact interval comparison.
    Exact,
    /// Clock counting; see --clock-mode.
    Clock,
    /// Restartable clock.
    Restart,
    /// Continuous (free-running) clock.
    Continuous,
    /// Up/down counter with a restartable clock.
    Updown,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Continuous,
    Restartable,
}

impl From<ModeArg> for ClockMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => ClockMode::Continuous,
            ModeArg::Restartable => ClockMode::Restartable,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "restart")]
    pub method: MethodArg,
    /// Clock frequency.
    #[arg(long, value_parser = parse_hertz)]
    pub clock: Option<f64>,
    #[arg(long, value_enum, default_value = "restartable")]
    pub clock_mode: ModeArg,
    /// Continuous clock phase as a fraction of the period, in [0, 1).
    #[arg(long, value_parser = parse_ratio, default_value = "0")]
    pub phase: f64,
    /// Up-window skew Δt.
    #[arg(long, value_parser = parse_seconds, default_value = "0")]
    pub skew: f64,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl ExtractArgs {
    fn method(&self) -> Result<Method> {
        let clock = |mode: ClockMode| -> Result<ClockConfig> {
            let hz = self
                .clock
                .ok_or_else(|| Error::config("--clock is required for clocked methods"))?;
            if !(0.0..1.0).contains(&self.phase) {
                return Err(Error::config(format!("--phase must be in [0, 1), got {}", self.phase)));
            }
            let c = ClockConfig::from_frequency(hz, mode).map_err(|e| e.context("--clock"))?;
            let c = c.with_phase(self.phase * c.period).with_skew(self.skew);
            c.validate()?;
            Ok(c)
        };
        Ok(match self.method {
            MethodArg::Exact => Method::Basic,
            MethodArg::Clock => Method::Clocked(clock(self.clock_mode.into())?),
            MethodArg::Restart => Method::Clocked(clock(ClockMode::Restartable)?),
            MethodArg::Continuous => Method::Clocked(clock(ClockMode::Continuous)?),
            MethodArg::Updown => Method::UpDown(clock(ClockMode::Restartable)?),
        })
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Bits to read (default: sidecar count, else the whole file).
    #[arg(long, value_parser = parse_count)]
    pub n_bits: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Highest autocorrelation lag.
    #[arg(long, default_value_t = analysis::BATTERY_LAGS)]
    pub lags: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "continuous")]
    pub method: ModeArg,
    /// Grid of x = T/τ: `lo:hi:logN`, `lo:hi:linN` or a comma list.
    #[arg(long, value_parser = parse_grid_arg, default_value = "0.02:20:log20")]
    pub x: Grid,
    #[arg(long, value_parser = parse_count, default_value = "1e7")]
    pub events: u64,
    /// Dead time in units of τ.
    #[arg(long, value_parser = parse_ratio, default_value = "0")]
    pub dead_time: f64,
    /// Skew Δt in units of τ.
    #[arg(long, value_parser = parse_ratio, default_value = "0")]
    pub skew: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicates: u32,
    /// CSV output (default: stdout).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Check name, or `all`.
    #[arg(long, default_value = "all")]
    pub check: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// JSON report output.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Re-export the stream (format from extension or --out-format).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub out_format: Option<FormatArg>,
    /// Interval histogram CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// x = T/τ values (grid syntax as for sweep).
    #[arg(long, value_parser = parse_grid_arg, default_value = "1/24")]
    pub x: Grid,
    /// Dead time in units of τ.
    #[arg(long, value_parser = parse_ratio, default_value = "0")]
    pub dead_time: f64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

// --------------------------------------------------------------- manifest

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    /// Resolved configuration in SI units.
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

struct Outcome {
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    code: i32,
}

impl Outcome {
    fn new(config: Value) -> Self {
        Outcome {
            config,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            code: EXIT_OK,
        }
    }
}

fn manifest_path(explicit: Option<&Path>, outputs: &[PathBuf]) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        outputs.first().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// --------------------------------------------------------------- commands

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let tau = match (a.rate, a.tau) {
        (Some(r), _) if !(r > 0.0 && r.is_finite()) => {
            return Err(Error::config(format!("--rate must be > 0, got {r}")))
        }
        (Some(r), _) => 1.0 / r,
        (None, Some(t)) if !(t > 0.0 && t.is_finite()) => {
            return Err(Error::config(format!("--tau must be > 0, got {t}")))
        }
        (None, Some(t)) => t,
        (None, None) => return Err(Error::config("one of --rate or --tau is required")),
    };
    if a.events == 0 {
        return Err(Error::config("--events must be >= 1"));
    }
    let cfg = SourceConfig::new(tau, a.events, a.seed)
        .with_dead_time(a.dead_time)
        .with_afterpulsing(a.afterpulse_prob, a.afterpulse_tau);
    cfg.validate()?;
    let stream = event_source::simulate(&cfg)?;
    let format = resolve_format(a.format, &a.out);
    let (stream, dropped) = match format {
        TimestampFormat::Binary => quantize_ns_dedup(&stream)?,
        TimestampFormat::Csv => (stream, 0),
    };
    if dropped > 0 {
        log::warn!("{dropped} events fell on the same nanosecond as their predecessor and were dropped");
    }
    write_timestamps(&stream, &a.out, format)?;
    eprintln!("wrote {} events to {}", stream.len(), a.out.display());
    let mut o = Outcome::new(json!({
        "source": cfg,
        "format": format.name(),
        "records": stream.len(),
        "dropped_on_quantization": dropped,
    }));
    o.seed = Some(a.seed);
    o.outputs.push(a.out.clone());
    Ok(o)
}

fn cmd_extract(a: &ExtractArgs) -> Result<Outcome> {
    let method = a.method()?;
    let format = resolve_format(a.format, &a.input);
    let stream = ingest_timestamps(&a.input, format).map_err(|e| e.context(a.input.display().to_string()))?;
    let (bits, stats) = extractor::extract(&stream, &method)?;
    write_bit_file(&a.out, &bits)?;
    let meta = BitFileMeta {
        schema_version: SCHEMA_VERSION,
        n_bits: bits.len() as u64,
        method: method.name().to_string(),
        clock: method.clock().copied(),
        source: Some(stream.meta().clone()),
        stats,
        efficiency: stats.efficiency(),
        bits_per_pair: stats.bits_per_pair(),
    };
    write_sidecar(&a.out, &meta)?;
    println!("{}", serde_json::to_string_pretty(&meta)?);
    let mut o = Outcome::new(json!({ "method": method, "input_format": format.name() }));
    o.inputs.push(a.input.clone());
    o.outputs.push(a.out.clone());
    o.outputs.push(extractor::sidecar_path(&a.out));
    Ok(o)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let bits = read_bit_file(&a.input, a.n_bits.map(|n| n as usize))?;
    let meta = read_sidecar(&a.input)?;
    let acc = analysis::accumulate(&bits, a.lags)?;
    let report = AnalysisReport::from_accumulator(&acc, meta.as_ref().map(|m| &m.stats))?;
    print!("{report}");
    let mut o = Outcome::new(json!({ "lags": a.lags, "n_bits": bits.len() }));
    o.inputs.push(a.input.clone());
    if let Some(path) = &a.json {
        fs::write(path, report.to_json()? + "\n")?;
        o.outputs.push(path.clone());
    }
    Ok(o)
}

fn cmd_sweep(a: &SweepArgs) -> Result<Outcome> {
    let spec = SweepSpec {
        mode: a.method.into(),
        x_grid: a.x.0.clone(),
        events_per_point: a.events,
        dead_time: a.dead_time,
        skew_dt: a.skew,
        seed: a.seed,
        replicates: a.replicates,
    };
    let result = experiments::sweep(&spec)?;
    let mut o = Outcome::new(serde_json::to_value(&spec)?);
    o.seed = Some(a.seed);
    match &a.out {
        Some(path) => {
            result.write_csv(std::io::BufWriter::new(fs::File::create(path)?))?;
            o.outputs.push(path.clone());
        }
        None => result.write_csv(std::io::stdout().lock())?,
    }
    Ok(o)
}

fn cmd_validate(a: &ValidateArgs) -> Result<Outcome> {
    let names: Vec<&str> = if a.check == "all" {
        experiments::CHECKS.to_vec()
    } else {
        a.check.split(',').map(str::trim).collect()
    };
    let mut reports = Vec::new();
    for name in &names {
        let r = experiments::run_check(name, a.seed)?;
        println!("== {name}");
        print!("{}", r.lines());
        for n in &r.notes {
            println!("   note: {n}");
        }
        reports.push(r);
    }
    let pass = reports.iter().all(|r| r.pass);
    println!("{}", if pass { "ALL CHECKS PASSED" } else { "SOME CHECKS FAILED" });
    let mut o = Outcome::new(json!({ "checks": names }));
    o.seed = Some(a.seed);
    if let Some(path) = &a.out {
        let doc = json!({ "schema_version": SCHEMA_VERSION, "pass": pass, "reports": reports });
        fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        o.outputs.push(path.clone());
    }
    o.code = if pass { EXIT_OK } else { EXIT_CHECK_FAILED };
    Ok(o)
}

fn cmd_ingest(a: &IngestArgs) -> Result<Outcome> {
    let format = resolve_format(a.format, &a.input);
    let stream = ingest_timestamps(&a.input, format).map_err(|e| e.context(a.input.display().to_string()))?;
    let n = stream.len();
    let mut summary = json!({ "schema_version": SCHEMA_VERSION, "events": n, "format": format.name() });
    if n >= 2 {
        let (mut min, mut sum) = (f64::INFINITY, 0.0);
        for dt in stream.intervals() {
            min = min.min(dt);
            sum += dt;
        }
        summary["mean_interval_s"] = json!(sum / (n - 1) as f64);
        summary["min_interval_s"] = json!(min);
    }
    let mut o = Outcome::new(json!({ "input_format": format.name(), "bins": a.bins }));
    o.inputs.push(a.input.clone());
    if let Some(path) = &a.histogram {
        let mean = summary["mean_interval_s"].as_f64().unwrap_or(1e-9);
        let binning = Binning::Log {
            lo: 1e-9,
            hi: (100.0 * mean).max(2e-9),
            bins: a.bins,
        };
        let h = interval_histogram(&stream, &binning)?;
        summary["fitted_tau_s"] = json!(h.fitted_tau);
        summary["cutoff_estimate_s"] = json!(h.cutoff_estimate);
        h.write_csv(std::io::BufWriter::new(fs::File::create(path)?))?;
        o.outputs.push(path.clone());
    }
    if let Some(path) = &a.out {
        let out_format = a.out_format.map(Into::into).unwrap_or_else(|| TimestampFormat::from_path(path));
        write_timestamps(&stream, path, out_format)?;
        o.outputs.push(path.clone());
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(o)
}

fn cmd_oracle(a: &OracleArgs) -> Result<Outcome> {
    let results = a
        .x
        .0
        .iter()
        .map(|&x| laws::oracle_restartable_dead_time(x, a.dead_time))
        .collect::<Result<Vec<_>>>()?;
    println!("{}", serde_json::to_string_pretty(&results)?);
    Ok(Outcome::new(json!({ "x": a.x.0, "dead_time_over_tau": a.dead_time })))
}

fn cmd_replay(a: &ReplayArgs) -> Result<i32> {
    let m = read_manifest(&a.manifest)?;
    if m.command == "replay" {
        return Err(Error::config("cannot replay a replay"));
    }
    eprintln!("replaying: timerng {}", m.args.join(" "));
    let argv = std::iter::once("timerng".to_string()).chain(m.args);
    Ok(run(argv))
}

fn dispatch(cli: &Cli, args: &[String]) -> Result<i32> {
    let start = Instant::now();
    let (name, outcome) = match &cli.command {
        Command::Simulate(a) => ("simulate", cmd_simulate(a)?),
        Command::Extract(a) => ("extract", cmd_extract(a)?),
        Command::Analyze(a) => ("analyze", cmd_analyze(a)?),
        Command::Sweep(a) => ("sweep", cmd_sweep(a)?),
        Command::Validate(a) => ("validate", cmd_validate(a)?),
        Command::Ingest(a) => ("ingest", cmd_ingest(a)?),
        Command::Oracle(a) => ("oracle", cmd_oracle(a)?),
        Command::Replay(a) => return cmd_replay(a),
    };
    if let Some(path) = manifest_path(cli.manifest.as_deref(), &outcome.outputs) {
        let display = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect();
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: VERSION.to_string(),
            command: name.to_string(),
            args: args.to_vec(),
            config: outcome.config,
            seed: outcome.seed,
            inputs: display(&outcome.inputs),
            outputs: display(&outcome.outputs),
            duration_s: start.elapsed().as_secs_f64(),
        };
        let mut f = fs::File::create(&path)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(outcome.code)
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Domain(_) | Error::Unsupported(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `argv` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be >= 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    match dispatch(&cli, &argv[1..]) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
