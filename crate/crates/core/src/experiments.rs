//! Seeded end-to-end runs: parameter sweeps over x = T/τ and validations of
//! the extraction laws.
//!
//! Every run streams intervals through the detector model, the extractor and
//! a [`BitAccumulator`] without materializing the event stream, so budgets of
//! 10^9 events fit in constant memory.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, laws, AnalysisReport, BitAccumulator, PairProbs};
use crate::event_source::{
    self, coherence_time, interval_histogram, ks_exponential, Afterpulser, Binning,
    DeadTimeGaps, PoissonIntervals, SourceConfig,
};
use crate::extractor::{ClockConfig, ClockMode, ExtractionStats, Extractor, Method};
use crate::rng::derive_seed;
use crate::{Error, Result, SCHEMA_VERSION};

/// When a pipeline run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "snake_case")]
pub enum Budget {
    /// Events reaching the extractor.
    Events(u64),
    Bits(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Mean inter-event time of the source, seconds.
    pub tau: f64,
    pub dead_time: f64,
    pub afterpulse_prob: f64,
    pub afterpulse_tau: f64,
    pub method: Method,
    pub seed: u64,
    pub budget: Budget,
    pub max_lag: usize,
}

impl PipelineConfig {
    pub fn new(tau: f64, method: Method, seed: u64, budget: Budget) -> Self {
        PipelineConfig {
            tau,
            dead_time: 0.0,
            afterpulse_prob: 0.0,
            afterpulse_tau: tau,
            method,
            seed,
            budget,
            max_lag: 8,
        }
    }

    /// τ = 1, so the clock period is `x` and every time is in units of τ.
    pub fn dimensionless(x: f64, mode: ClockMode, seed: u64, budget: Budget) -> Self {
        Self::new(1.0, Method::Clocked(ClockConfig::new(x, mode)), seed, budget)
    }

    pub fn with_dead_time(mut self, d: f64) -> Self {
        self.dead_time = d;
        self
    }

    pub fn with_afterpulsing(mut self, prob: f64, tau: f64) -> Self {
        self.afterpulse_prob = prob;
        self.afterpulse_tau = tau;
        self
    }

    pub fn with_skew(mut self, skew: f64) -> Self {
        match &mut self.method {
            Method::Clocked(c) | Method::UpDown(c) => c.skew = skew,
            Method::Basic => {}
        }
        self
    }

    pub fn with_max_lag(mut self, lag: usize) -> Self {
        self.max_lag = lag;
        self
    }

    /// Clock period over τ, when the method has a clock.
    pub fn x(&self) -> Option<f64> {
        self.method.clock().map(|c| c.period / self.tau)
    }

    fn source(&self) -> SourceConfig {
        SourceConfig::new(self.tau, 0, self.seed)
            .with_dead_time(self.dead_time)
            .with_afterpulsing(self.afterpulse_prob, self.afterpulse_tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub accumulator: BitAccumulator,
    pub stats: ExtractionStats,
}

/// Streams the source (origin counted as the first event) through dead time,
/// afterpulsing and extraction until the budget is met.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.source().validate()?;
    let mut ex = Extractor::new(cfg.method)?;
    let mut acc = BitAccumulator::new(cfg.max_lag)?;
    let mut gaps = DeadTimeGaps::new(cfg.dead_time)?;
    let source = PoissonIntervals::new(cfg.tau, cfg.seed)?;
    let budget = cfg.budget;

    if cfg.afterpulse_prob == 0.0 {
        ex.start(0.0);
        for dt in source {
            if done(budget, &ex, &acc) {
                break;
            }
            if let Some(dt) = gaps.push(dt) {
                if let Some(b) = ex.push_interval(dt) {
                    acc.push(b);
                }
            }
        }
    } else {
        let mut ap = Afterpulser::new(cfg.afterpulse_prob, cfg.afterpulse_tau, cfg.seed)?;
        let mut sink = Sink {
            ex: &mut ex,
            acc: &mut acc,
            last: None,
            budget,
        };
        let mut t = 0.0;
        let mut parents = 0u64;
        ap.push(t, &mut |te| sink.feed(te));
        for dt in source {
            if let Some(g) = gaps.push(dt) {
                t += g;
                ap.push(t, &mut |te| sink.feed(te));
                parents += 1;
                // Keep absolute times small.
                if parents.is_multiple_of(1 << 20) {
                    ap.rebase(t);
                    sink.last = sink.last.map(|l| l - t);
                    t = 0.0;
                }
            }
            if done(budget, sink.ex, sink.acc) {
                break;
            }
        }
    }
    Ok(PipelineOutput {
        accumulator: acc,
        stats: *ex.stats(),
    })
}

fn done(budget: Budget, ex: &Extractor, acc: &BitAccumulator) -> bool {
    match budget {
        Budget::Events(n) => ex.stats().events_consumed >= n,
        Budget::Bits(n) => acc.n_bits() >= n,
    }
}

/// Feeds absolute event times to an extractor as intervals.
struct Sink<'a> {
    ex: &'a mut Extractor,
    acc: &'a mut BitAccumulator,
    last: Option<f64>,
    budget: Budget,
}

impl Sink<'_> {
    fn feed(&mut self, te: f64) {
        if done(self.budget, self.ex, self.acc) {
            return;
        }
        match self.last {
            None => self.ex.start(te),
            Some(prev) => {
                if let Some(b) = self.ex.push_interval(te - prev) {
                    self.acc.push(b);
                }
            }
        }
        self.last = Some(te);
    }
}

/// Point statistics of one run, with the standard errors used by checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub n_bits: u64,
    pub events: u64,
    pub pairs: u64,
    /// a_1..a_max_lag
    pub autocorr: Vec<f64>,
    /// 1/√N
    pub a_sigma: f64,
    pub bias: f64,
    pub bias_sigma: f64,
    pub eta: f64,
    pub eta_sigma: f64,
    pub p_bit: f64,
    pub p_bit_sigma: f64,
    pub pair_probs: PairProbs,
}

impl Measurement {
    pub fn from_output(out: &PipelineOutput) -> Result<Self> {
        let acc = &out.accumulator;
        let n = acc.n_bits();
        if n < 2 {
            return Err(Error::insufficient(format!("run produced {n} bits")));
        }
        let autocorr = (1..=acc.max_lag())
            .map(|k| acc.autocorr(k))
            .collect::<Result<Vec<_>>>()?;
        let counts = acc.pair_counts()?;
        let total = (n - 1) as f64;
        let pair_probs = PairProbs {
            p00: counts[0] as f64 / total,
            p01: counts[1] as f64 / total,
            p10: counts[2] as f64 / total,
            p11: counts[3] as f64 / total,
        };
        let s = &out.stats;
        let pairs = s.pairs_formed.max(1) as f64;
        let p_bit = s.bits_emitted as f64 / pairs;
        let p_bit_sigma = (p_bit * (1.0 - p_bit) / pairs).sqrt();
        let eta = s.efficiency().unwrap_or(0.0);
        Ok(Measurement {
            n_bits: n,
            events: s.events_consumed,
            pairs: s.pairs_formed,
            autocorr,
            a_sigma: 1.0 / (n as f64).sqrt(),
            bias: acc.ones() as f64 / n as f64 - 0.5,
            bias_sigma: 0.5 / (n as f64).sqrt(),
            eta,
            // Pairs consume two events each.
            eta_sigma: p_bit_sigma * pairs / s.events_consumed.max(1) as f64,
            p_bit,
            p_bit_sigma,
            pair_probs,
        })
    }

    pub fn a1(&self) -> f64 {
        self.autocorr[0]
    }

    /// Standard error of p̂_a − p̂_b for two pair frequencies.
    pub fn pair_diff_sigma(&self, pa: f64, pb: f64) -> f64 {
        ((pa + pb - (pa - pb).powi(2)) / (self.n_bits - 1) as f64).sqrt()
    }
}

pub fn measure(cfg: &PipelineConfig) -> Result<Measurement> {
    Measurement::from_output(&run_pipeline(cfg)?)
}

/// One named pass/fail check with the resolution it was judged at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub sigma: f64,
    /// Largest accepted |measured − expected|, or the required margin for
    /// one-sided checks.
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// |measured − expected| ≤ max(rel·|expected|, 3σ)
    pub fn within(name: impl Into<String>, measured: f64, expected: f64, sigma: f64, rel: f64) -> Self {
        let tolerance = (rel * expected.abs()).max(3.0 * sigma);
        Check {
            name: name.into(),
            measured,
            expected,
            sigma,
            tolerance,
            pass: (measured - expected).abs() <= tolerance,
            detail: format!("|measured - expected| <= max({rel} rel, 3 sigma)"),
        }
    }

    /// |measured − expected| ≤ tol, fixed.
    pub fn within_abs(name: impl Into<String>, measured: f64, expected: f64, sigma: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected,
            sigma,
            tolerance: tol,
            pass: (measured - expected).abs() <= tol,
            detail: format!("|measured - expected| <= {tol:e}"),
        }
    }

    /// |measured| ≤ 3σ
    pub fn null(name: impl Into<String>, measured: f64, sigma: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: 0.0,
            sigma,
            tolerance: 3.0 * sigma,
            pass: measured.abs() <= 3.0 * sigma,
            detail: "|measured| <= 3 sigma".into(),
        }
    }

    /// measured ≥ 3σ
    pub fn positive(name: impl Into<String>, measured: f64, sigma: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: 0.0,
            sigma,
            tolerance: 3.0 * sigma,
            pass: measured >= 3.0 * sigma,
            detail: "measured >= 3 sigma".into(),
        }
    }

    /// measured ≥ −3σ
    pub fn non_negative(name: impl Into<String>, measured: f64, sigma: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: 0.0,
            sigma,
            tolerance: 3.0 * sigma,
            pass: measured >= -3.0 * sigma,
            detail: "measured >= -3 sigma".into(),
        }
    }

    /// lo ≤ measured ≤ hi
    pub fn in_range(name: impl Into<String>, measured: f64, lo: f64, hi: f64, sigma: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: 0.5 * (lo + hi),
            sigma,
            tolerance: 0.5 * (hi - lo),
            pass: (lo..=hi).contains(&measured),
            detail: format!("measured in [{lo}, {hi}]"),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.6e} expected {:.6e} sigma {:.2e} tol {:.2e} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.expected,
            self.sigma,
            self.tolerance,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub name: String,
    pub checks: Vec<Check>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table: Option<AnalysisReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn new(name: impl Into<String>, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        ValidationReport {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            checks,
            pass,
            table: None,
            notes: Vec::new(),
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn lines(&self) -> String {
        self.checks.iter().map(|c| c.line() + "\n").collect()
    }
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: ClockMode,
    pub x_grid: Vec<f64>,
    pub events_per_point: u64,
    /// Units of τ.
    pub dead_time: f64,
    /// Units of τ.
    pub skew_dt: f64,
    pub seed: u64,
    pub replicates: u32,
}

impl SweepSpec {
    pub const MIN_EVENTS: u64 = 100_000;

    pub fn validate(&self) -> Result<()> {
        if self.x_grid.is_empty() {
            return Err(Error::config("x grid is empty"));
        }
        if self.x_grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::config("x grid values must be > 0"));
        }
        if self.x_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("x grid must be strictly ascending"));
        }
        if self.events_per_point < Self::MIN_EVENTS {
            return Err(Error::config(format!(
                "events per point must be >= {}, got {}",
                Self::MIN_EVENTS,
                self.events_per_point
            )));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be >= 1"));
        }
        if !(self.dead_time >= 0.0 && self.skew_dt >= 0.0) {
            return Err(Error::config("dead time and skew must be >= 0"));
        }
        Ok(())
    }

    fn point_config(&self, index: usize, replicate: u32) -> PipelineConfig {
        let x = self.x_grid[index];
        PipelineConfig::dimensionless(
            x,
            self.mode,
            derive_seed(self.seed, index as u64, replicate as u64),
            Budget::Events(self.events_per_point),
        )
        .with_dead_time(self.dead_time)
        .with_skew(self.skew_dt)
        .with_max_lag(1)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default grid: 20 log-spaced points in [0.02, 20].
pub fn default_grid() -> Vec<f64> {
    log_grid(0.02, 20.0, 20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub replicate: u32,
    pub seed: u64,
    pub a1: f64,
    pub a1_sigma: f64,
    pub bias: f64,
    pub bias_sigma: f64,
    pub eta: f64,
    pub eta_sigma: f64,
    pub ref_a: Option<f64>,
    pub ref_eta: Option<f64>,
    pub ref_bias: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "x,replicate,a1,a1_sigma,bias,bias_sigma,eta,ref_a,ref_eta,pass";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e},{:e},{:e},{},{},{}",
                r.x,
                r.replicate,
                r.a1,
                r.a1_sigma,
                r.bias,
                r.bias_sigma,
                r.eta,
                opt(r.ref_a),
                opt(r.ref_eta),
                r.pass
            )?;
        }
        Ok(())
    }

    /// Rows at one grid value.
    pub fn at(&self, x: f64) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.x == x)
    }
}

/// Largest x for which the quadratic autocorrelation law is quoted.
pub const QUADRATIC_LAW_VALIDITY: f64 = 0.2;

fn sweep_point(spec: &SweepSpec, index: usize, replicate: u32) -> Result<SweepRow> {
    let x = spec.x_grid[index];
    let cfg = spec.point_config(index, replicate);
    let m = measure(&cfg).map_err(|e| e.context(format!("sweep point x = {x}, replicate {replicate}")))?;
    let (ref_a, ref_eta, ref_bias, pass) = match spec.mode {
        ClockMode::Restartable => {
            let law = laws::restartable_pair_law(x, spec.dead_time + spec.skew_dt, spec.dead_time)?;
            let pass = m.a1().abs() <= 3.0 * m.a_sigma
                && (m.eta - law.eta()).abs() <= 3.0 * m.eta_sigma
                && (m.bias - law.bias()).abs() <= 3.0 * m.bias_sigma;
            (Some(0.0), Some(law.eta()), Some(law.bias()), pass)
        }
        ClockMode::Continuous => {
            if x <= QUADRATIC_LAW_VALIDITY && spec.dead_time == 0.0 {
                let a = laws::a_asymptotic(x);
                let pass = (m.a1() - a).abs() <= (0.1 * a).max(3.0 * m.a_sigma);
                (Some(a), None, None, pass)
            } else {
                (None, None, None, m.a1() >= -3.0 * m.a_sigma)
            }
        }
    };
    Ok(SweepRow {
        x,
        replicate,
        seed: cfg.seed,
        a1: m.a1(),
        a1_sigma: m.a_sigma,
        bias: m.bias,
        bias_sigma: m.bias_sigma,
        eta: m.eta,
        eta_sigma: m.eta_sigma,
        ref_a,
        ref_eta,
        ref_bias,
        pass,
    })
}

/// Every (x, replicate) point, run in parallel; rows are ordered by x, then
/// replicate.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let points: Vec<(usize, u32)> = (0..spec.x_grid.len())
        .flat_map(|i| (0..spec.replicates).map(move |r| (i, r)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(i, r)| sweep_point(spec, i, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        rows,
    })
}

// ----------------------------------------------------------- validations

fn null_checks(prefix: &str, m: &Measurement, lags: usize, checks: &mut Vec<Check>) {
    checks.push(Check::null(format!("{prefix}/bias"), m.bias, m.bias_sigma));
    for k in 1..=lags.min(m.autocorr.len()) {
        checks.push(Check::null(format!("{prefix}/a{k}"), m.autocorr[k - 1], m.a_sigma));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadTimeSpec {
    pub x: f64,
    /// Units of τ; must include 0.
    pub dead_times: Vec<f64>,
    pub n_bits: u64,
    /// Continuous-clock contrast point.
    pub contrast_x: f64,
    pub contrast_d: f64,
    pub contrast_bits: u64,
    pub seed: u64,
}

impl Default for DeadTimeSpec {
    fn default() -> Self {
        DeadTimeSpec {
            x: 1.0 / 24.0,
            dead_times: vec![0.0, 0.05],
            n_bits: 10_000_000,
            contrast_x: 0.3,
            contrast_d: 0.5,
            contrast_bits: 50_000_000,
            seed: 1,
        }
    }
}

/// Restartable and exact extraction stay unbiased and uncorrelated under
/// dead time; the continuous clock does not.
pub fn validate_dead_time_cancellation(spec: &DeadTimeSpec) -> Result<ValidationReport> {
    if !spec.dead_times.contains(&0.0) {
        return Err(Error::config("dead times must include 0"));
    }
    let mut runs = Vec::new();
    for (i, &d) in spec.dead_times.iter().enumerate() {
        let restart = PipelineConfig::dimensionless(
            spec.x,
            ClockMode::Restartable,
            derive_seed(spec.seed, i as u64, 0),
            Budget::Bits(spec.n_bits),
        )
        .with_dead_time(d);
        let basic = PipelineConfig::new(
            1.0,
            Method::Basic,
            derive_seed(spec.seed, i as u64, 1),
            Budget::Bits(spec.n_bits),
        )
        .with_dead_time(d);
        runs.push((format!("restartable/d={d}"), restart));
        runs.push((format!("basic/d={d}"), basic));
    }
    let contrast = |d: f64, r: u64| {
        PipelineConfig::dimensionless(
            spec.contrast_x,
            ClockMode::Continuous,
            derive_seed(spec.seed, 1000, r),
            Budget::Bits(spec.contrast_bits),
        )
        .with_dead_time(d)
        .with_max_lag(1)
    };
    runs.push(("continuous/d=0".into(), contrast(0.0, 0)));
    runs.push((format!("continuous/d={}", spec.contrast_d), contrast(spec.contrast_d, 1)));

    let results = runs
        .par_iter()
        .map(|(name, cfg)| measure(cfg).map_err(|e| e.context(name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    for ((name, cfg), m) in runs.iter().zip(&results) {
        if name.starts_with("continuous") {
            continue;
        }
        null_checks(name, m, 8, &mut checks);
        if name.starts_with("restartable") {
            let o = laws::oracle_restartable_dead_time(spec.x, cfg.dead_time)?;
            checks.push(Check::within(format!("{name}/eta_oracle"), m.eta, o.eta_exact, m.eta_sigma, 0.0));
        }
    }
    let n = results.len();
    let (m0, md) = (&results[n - 2], &results[n - 1]);
    let diff = m0.a1() - md.a1();
    let sigma = (m0.a_sigma.powi(2) + md.a_sigma.powi(2)).sqrt();
    let mut contrast_check = Check::positive("continuous/a1_shift", diff.abs(), sigma);
    contrast_check.detail = format!(
        "a1(d=0) = {:.6} vs a1(d={}) = {:.6}, |difference| >= 3 sigma",
        m0.a1(),
        spec.contrast_d,
        md.a1()
    );
    checks.push(contrast_check);
    Ok(ValidationReport::new("dead-time", checks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasModelSpec {
    pub x_grid: Vec<f64>,
    /// Δt/τ values.
    pub dt_grid: Vec<f64>,
    pub n_bits: u64,
    pub seed: u64,
}

impl Default for BiasModelSpec {
    fn default() -> Self {
        BiasModelSpec {
            x_grid: vec![0.1],
            dt_grid: vec![0.02],
            n_bits: 25_000_000,
            seed: 2,
        }
    }
}

/// Bits needed for 3/(2√N) < b/3.
pub fn required_bits(b: f64) -> u64 {
    (4.5 / b).powi(2).ceil() as u64 + 1
}

/// Restartable extraction with an up-window skew against the leading-order
/// bias model and its predicted 1/τ² scaling.
pub fn validate_bias_model(spec: &BiasModelSpec) -> Result<ValidationReport> {
    if spec.x_grid.iter().chain(&spec.dt_grid).any(|&v| !(v > 0.0)) {
        return Err(Error::config("x and dt grids must be positive"));
    }
    for &x in &spec.x_grid {
        for &dt in &spec.dt_grid {
            let need = required_bits(laws::bias_model(x, dt));
            if spec.n_bits < need {
                return Err(Error::insufficient(format!(
                    "bias model at x = {x}, dt/tau = {dt} predicts b = {:.3e}; resolving it at 3 sigma needs N >= {need} bits, got {}",
                    laws::bias_model(x, dt),
                    spec.n_bits
                )));
            }
        }
    }
    let run = |x: f64, dt: f64, tag: u64| {
        let cfg = PipelineConfig::dimensionless(
            x,
            ClockMode::Restartable,
            derive_seed(spec.seed, tag, 0),
            Budget::Bits(spec.n_bits),
        )
        .with_skew(dt)
        .with_max_lag(1);
        measure(&cfg).map_err(|e| e.context(format!("bias model x = {x}, dt/tau = {dt}")))
    };
    let mut jobs = Vec::new();
    for (i, &x) in spec.x_grid.iter().enumerate() {
        jobs.push((x, 0.0, 1000 + i as u64));
        for (j, &dt) in spec.dt_grid.iter().enumerate() {
            let tag = (i * spec.dt_grid.len() + j) as u64;
            jobs.push((x, dt, 2 * tag));
            // τ halved at fixed T and Δt.
            jobs.push((2.0 * x, 2.0 * dt, 2 * tag + 1));
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(x, dt, tag)| run(x, dt, tag))
        .collect::<Result<Vec<_>>>()?;
    let get = |x: f64, dt: f64| {
        jobs.iter()
            .position(|&(jx, jd, _)| jx == x && jd == dt)
            .map(|i| &results[i])
            .expect("job scheduled")
    };

    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for &x in &spec.x_grid {
        let m = get(x, 0.0);
        checks.push(Check::null(format!("x={x}/dt=0/bias"), m.bias, m.bias_sigma));
        for &dt in &spec.dt_grid {
            let m = get(x, dt);
            let model = laws::bias_model(x, dt);
            let exact = laws::skew_bias_exact(x, dt, 0.0)?;
            checks.push(Check::within(format!("x={x}/dt={dt}/bias_vs_model"), m.bias, model, m.bias_sigma, 0.25));
            checks.push(Check::within(format!("x={x}/dt={dt}/bias_vs_exact"), m.bias, exact, m.bias_sigma, 0.0));
            let h = get(2.0 * x, 2.0 * dt);
            let ratio = h.bias / m.bias;
            let sigma = ratio.abs() * ((h.bias_sigma / h.bias).powi(2) + (m.bias_sigma / m.bias).powi(2)).sqrt();
            checks.push(Check::in_range(format!("x={x}/dt={dt}/tau_halving_ratio"), ratio, 3.0, 5.0, sigma));
            notes.push(format!(
                "x = {x}, dt/tau = {dt}: model b = {model:.4e}, exact b = {exact:.4e}, exact halving ratio = {:.3}",
                laws::skew_bias_exact(2.0 * x, 2.0 * dt, 0.0)? / exact
            ));
        }
    }
    let mut report = ValidationReport::new("bias-model", checks);
    report.notes = notes;
    Ok(report)
}

/// Operating point of the prototype: 2 MHz events, 48 MHz restartable clock,
/// 25 ns dead time.
pub mod prototype {
    pub const TAU: f64 = 500e-9;
    pub const PERIOD: f64 = 1.0 / 48e6;
    pub const DEAD_TIME: f64 = 25e-9;
    pub const TARGET_BIAS: f64 = 1e-4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSpec {
    pub n_events: u64,
    pub seed: u64,
}

impl Default for PrototypeSpec {
    fn default() -> Self {
        PrototypeSpec {
            n_events: 100_000_000,
            seed: 3,
        }
    }
}

/// Full prototype pipeline. The main run's skew is tuned with the exact
/// pair law so the bias is 10⁻⁴; a second run uses the skew at which the
/// leading-order model predicts 10⁻⁴.
pub fn reproduce_prototype(spec: &PrototypeSpec) -> Result<ValidationReport> {
    use prototype::*;
    if spec.n_events < 10_000_000 {
        return Err(Error::config(format!(
            "the prototype run needs >= 1e7 events, got {}",
            spec.n_events
        )));
    }
    let x = PERIOD / TAU;
    let d = DEAD_TIME / TAU;
    let skew_exact = laws::skew_for_bias(x, TARGET_BIAS, d)? * TAU;
    let skew_model = TARGET_BIAS / (0.5 * x) * TAU;
    let cfg = |skew: f64, r: u64| {
        PipelineConfig::new(
            TAU,
            Method::Clocked(ClockConfig::restartable(PERIOD).with_skew(skew)),
            derive_seed(spec.seed, 0, r),
            Budget::Events(spec.n_events),
        )
        .with_dead_time(DEAD_TIME)
        .with_max_lag(analysis::BATTERY_LAGS)
    };
    let arms = [cfg(skew_exact, 0), cfg(skew_model, 1)];
    let outs = arms.par_iter().map(run_pipeline).collect::<Result<Vec<_>>>()?;
    let main = Measurement::from_output(&outs[0])?;
    let model_arm = Measurement::from_output(&outs[1])?;

    let oracle = laws::restartable_pair_law(x, d + skew_exact / TAU, d)?;
    let mut checks = vec![
        Check::in_range("efficiency", main.eta, 0.485, 0.494, main.eta_sigma),
        Check::within("efficiency_vs_oracle", main.eta, oracle.eta(), main.eta_sigma, 0.0),
        Check::within("bias_exact_skew", main.bias, TARGET_BIAS, main.bias_sigma, 0.0),
        Check::within("bias_model_skew", model_arm.bias, TARGET_BIAS, model_arm.bias_sigma, 0.0),
    ];
    for k in 1..=8 {
        checks.push(Check::within_abs(format!("a{k}"), main.autocorr[k - 1], 0.0, main.a_sigma, 3e-4));
    }
    let mut report = ValidationReport::new("prototype", checks);
    report.table = Some(AnalysisReport::from_accumulator(&outs[0].accumulator, Some(&outs[0].stats))?);
    report.notes = vec![
        format!("x = {x:.6}, d/tau = {d}, skew (exact law) = {:.4} ns, skew (leading-order model) = {:.4} ns", skew_exact * 1e9, skew_model * 1e9),
        format!(
            "exact bias at the model skew = {:.4e}",
            laws::skew_bias_exact(x, skew_model / TAU, d)?
        ),
    ];
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLawSpec {
    pub x_grid: Vec<f64>,
    pub n_bits: u64,
    /// The x ≈ 1/90 point and its budget.
    pub small_x: f64,
    pub small_x_bits: u64,
    pub seed: u64,
}

impl Default for QuadraticLawSpec {
    fn default() -> Self {
        QuadraticLawSpec {
            x_grid: vec![0.05, 0.1, 0.2],
            n_bits: 10_000_000,
            small_x: 1.0 / 90.0,
            small_x_bits: 1_000_000_000,
            seed: 4,
        }
    }
}

/// Continuous-clock a₁ against the quadratic law 0.8·x².
pub fn validate_quadratic_law(spec: &QuadraticLawSpec) -> Result<ValidationReport> {
    let mut jobs: Vec<(f64, u64)> = spec.x_grid.iter().map(|&x| (x, spec.n_bits)).collect();
    if spec.small_x_bits > 0 {
        jobs.push((spec.small_x, spec.small_x_bits));
    }
    let results = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(x, n))| {
            measure(
                &PipelineConfig::dimensionless(x, ClockMode::Continuous, derive_seed(spec.seed, i as u64, 0), Budget::Bits(n))
                    .with_max_lag(1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    for (&(x, _), m) in jobs.iter().zip(&results) {
        if spec.small_x_bits > 0 && x == spec.small_x {
            checks.push(Check::within_abs(format!("x={x:.6}/a1"), m.a1(), 1e-4, m.a_sigma, 0.3e-4));
        } else {
            checks.push(Check::within(format!("x={x}/a1"), m.a1(), laws::a_asymptotic(x), m.a_sigma, 0.1));
        }
    }
    Ok(ValidationReport::new("quadratic-law", checks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub x_fast: f64,
    pub x_peak: f64,
    pub x_slow: f64,
    pub n_bits: u64,
    pub seed: u64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec {
            x_fast: 0.05,
            x_peak: 1.0,
            x_slow: 20.0,
            n_bits: 2_000_000,
            seed: 5,
        }
    }
}

/// a₁ of the continuous clock vanishes in both limits and is non-negative.
pub fn validate_a1_shape(spec: &ShapeSpec) -> Result<ValidationReport> {
    let xs = [spec.x_fast, spec.x_peak, spec.x_slow];
    let ms = xs
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            measure(
                &PipelineConfig::dimensionless(x, ClockMode::Continuous, derive_seed(spec.seed, i as u64, 0), Budget::Bits(spec.n_bits))
                    .with_max_lag(1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let peak = &ms[1];
    let mut checks = Vec::new();
    for (label, m) in [("fast", &ms[0]), ("slow", &ms[2])] {
        let s = (m.a_sigma.powi(2) + peak.a_sigma.powi(2)).sqrt();
        checks.push(Check::positive(format!("{label}_below_peak"), peak.a1() - m.a1(), s));
    }
    for (x, m) in xs.iter().zip(&ms) {
        checks.push(Check::non_negative(format!("x={x}/a1_non_negative"), m.a1(), m.a_sigma));
    }
    Ok(ValidationReport::new("a1-shape", checks))
}

/// p11 = p00, p10 = p01 and p11 > p10 for the continuous clock.
pub fn validate_pair_symmetry(x: f64, n_bits: u64, seed: u64) -> Result<ValidationReport> {
    let m = measure(
        &PipelineConfig::dimensionless(x, ClockMode::Continuous, seed, Budget::Bits(n_bits)).with_max_lag(1),
    )?;
    let p = m.pair_probs;
    Ok(ValidationReport::new(
        "pair-symmetry",
        vec![
            Check::null("p11-p00", p.p11 - p.p00, m.pair_diff_sigma(p.p11, p.p00)),
            Check::null("p10-p01", p.p10 - p.p01, m.pair_diff_sigma(p.p10, p.p01)),
            Check::positive("p11-p10", p.p11 - p.p10, m.pair_diff_sigma(p.p11, p.p10)),
        ],
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfterpulseSpec {
    pub x: f64,
    pub prob: f64,
    /// Mean afterpulse delay, units of τ.
    pub ap_tau: f64,
    pub n_bits: u64,
    pub seed: u64,
}

impl Default for AfterpulseSpec {
    fn default() -> Self {
        AfterpulseSpec {
            x: 1.0 / 24.0,
            prob: 0.05,
            ap_tau: 0.1,
            n_bits: 10_000_000,
            seed: 6,
        }
    }
}

/// Afterpulses break the independence of consecutive intervals, so even the
/// restartable clock picks up serial correlation.
pub fn afterpulse_study(spec: &AfterpulseSpec) -> Result<ValidationReport> {
    let base = |r: u64| {
        PipelineConfig::dimensionless(spec.x, ClockMode::Restartable, derive_seed(spec.seed, 0, r), Budget::Bits(spec.n_bits))
            .with_max_lag(1)
    };
    let cfgs = [base(0), base(1).with_afterpulsing(spec.prob, spec.ap_tau)];
    let ms = cfgs.par_iter().map(measure).collect::<Result<Vec<_>>>()?;
    let (clean, ap) = (&ms[0], &ms[1]);
    let mut shift = Check::positive("a1_afterpulse_magnitude", ap.a1().abs(), ap.a_sigma);
    shift.detail = format!("a1 = {:.6}, |a1| >= 3 sigma", ap.a1());
    Ok(ValidationReport::new(
        "afterpulse",
        vec![
            Check::null("a1_clean", clean.a1(), clean.a_sigma),
            shift,
            Check::null("bias_afterpulse", ap.bias, ap.bias_sigma),
        ],
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalLawSpec {
    pub tau: f64,
    pub dead_time: f64,
    pub n_events: u64,
    pub seed: u64,
}

impl Default for IntervalLawSpec {
    fn default() -> Self {
        IntervalLawSpec {
            tau: prototype::TAU,
            dead_time: prototype::DEAD_TIME,
            n_events: 10_000_000,
            seed: 7,
        }
    }
}

/// Interval histogram of a dead-time stream: exponential tail with the source
/// τ, sharp cutoff at d, and an exact exponential law without dead time.
pub fn validate_interval_law(spec: &IntervalLawSpec) -> Result<ValidationReport> {
    let cfg = SourceConfig::new(spec.tau, spec.n_events, spec.seed).with_dead_time(spec.dead_time);
    let stream = event_source::simulate(&cfg)?;
    let h = interval_histogram(&stream, &Binning::Auto)?;
    drop(stream);
    let cutoff_bin = h.bin_width_at(h.cutoff_estimate);
    let tail = (h.counts.iter().sum::<u64>() as f64).sqrt();

    let free = event_source::gen_poisson_stream(&SourceConfig::new(spec.tau, spec.n_events, spec.seed ^ 1))?;
    let intervals: Vec<f64> = free.intervals().collect();
    drop(free);
    let ks = ks_exponential(&intervals, spec.tau)?;

    let mut ks_check = Check::positive("ks_p_value", ks.p_value, 0.01 / 3.0);
    ks_check.detail = format!("KS D = {:.3e}, p = {:.4} >= 0.01", ks.statistic, ks.p_value);
    Ok(ValidationReport::new(
        "interval-law",
        vec![
            Check::within_abs("fitted_tau", h.fitted_tau, spec.tau, spec.tau / tail, 0.01 * spec.tau),
            Check::within_abs("cutoff", h.cutoff_estimate, spec.dead_time, cutoff_bin, cutoff_bin),
            ks_check,
        ],
    ))
}

/// Coherence frequency of the source spectrum, 688 nm ± 35 nm.
pub fn validate_coherence() -> Result<ValidationReport> {
    let c = coherence_time(688e-9, 35e-9)?;
    let ratio = c.f_cohr / 2e15;
    Ok(ValidationReport::new(
        "coherence",
        vec![Check::in_range("f_cohr_ratio", ratio, 1.0 / 1.15, 1.15, 0.0)],
    ))
}

/// Every named validation, in the order `validate --check all` runs them.
pub const CHECKS: &[&str] = &[
    "dead-time",
    "bias-model",
    "prototype",
    "quadratic-law",
    "a1-shape",
    "pair-symmetry",
    "afterpulse",
    "interval-law",
    "coherence",
];

/// Runs a validation by name with default parameters and the given seed.
pub fn run_check(name: &str, seed: u64) -> Result<ValidationReport> {
    let start = Instant::now();
    let report = match name {
        "dead-time" => validate_dead_time_cancellation(&DeadTimeSpec { seed, ..Default::default() }),
        "bias-model" => validate_bias_model(&BiasModelSpec { seed, ..Default::default() }),
        "prototype" => reproduce_prototype(&PrototypeSpec { seed, ..Default::default() }),
        "quadratic-law" => validate_quadratic_law(&QuadraticLawSpec { seed, ..Default::default() }),
        "a1-shape" => validate_a1_shape(&ShapeSpec { seed, ..Default::default() }),
        "pair-symmetry" => validate_pair_symmetry(0.3, 10_000_000, seed),
        "afterpulse" => afterpulse_study(&AfterpulseSpec { seed, ..Default::default() }),
        "interval-law" => validate_interval_law(&IntervalLawSpec { seed, ..Default::default() }),
        "coherence" => validate_coherence(),
        other => Err(Error::config(format!(
            "unknown check '{other}'; expected one of {}",
            CHECKS.join(", ")
        ))),
    }?;
    log::info!("check {name} finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = PipelineConfig::dimensionless(0.3, ClockMode::Continuous, 9, Budget::Events(200_000));
        assert_eq!(run_pipeline(&cfg).unwrap(), run_pipeline(&cfg).unwrap());
    }

    #[test]
    fn budgets_are_met_exactly() {
        let cfg = PipelineConfig::dimensionless(0.1, ClockMode::Restartable, 1, Budget::Bits(12_345));
        assert_eq!(run_pipeline(&cfg).unwrap().accumulator.n_bits(), 12_345);
        let cfg = PipelineConfig::dimensionless(0.1, ClockMode::Restartable, 1, Budget::Events(10_001));
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.stats.events_consumed, 10_001);
        assert_eq!(out.stats.bits_emitted + out.stats.ties_discarded, 5_000);
        let ap = cfg.clone().with_afterpulsing(0.1, 0.05);
        assert_eq!(run_pipeline(&ap).unwrap().stats.events_consumed, 10_001);
    }

    #[test]
    fn pipeline_matches_materialized_chain() {
        use crate::event_source::{apply_dead_time, EventStream};
        use crate::extractor::extract;
        // The pipeline counts the origin as the first event.
        let (tau, d, seed) = (1.0, 0.3, 11);
        let cfg = PipelineConfig::dimensionless(0.2, ClockMode::Continuous, seed, Budget::Events(5_001))
            .with_dead_time(d)
            .with_max_lag(4);
        let out = run_pipeline(&cfg).unwrap();

        let mut t = 0.0;
        let mut ts = vec![0.0];
        ts.extend(PoissonIntervals::new(tau, seed).unwrap().take(20_000).map(|dt| {
            t += dt;
            t
        }));
        let s = apply_dead_time(&EventStream::from_times(&ts).unwrap(), d).unwrap();
        let s = EventStream::from_times(&s.timestamps()[..5_001]).unwrap();
        let (bits, stats) = extract(&s, &cfg.method).unwrap();
        assert_eq!(stats, out.stats);
        assert_eq!(analysis::accumulate(&bits, 4).unwrap(), out.accumulator);
    }

    #[test]
    fn sweep_rows_are_ordered_and_reproducible() {
        let spec = SweepSpec {
            mode: ClockMode::Restartable,
            x_grid: vec![0.1, 1.0],
            events_per_point: 100_000,
            dead_time: 0.0,
            skew_dt: 0.0,
            seed: 3,
            replicates: 2,
        };
        let a = sweep(&spec).unwrap();
        assert_eq!(a, sweep(&spec).unwrap());
        let keys: Vec<_> = a.rows.iter().map(|r| (r.x, r.replicate)).collect();
        assert_eq!(keys, vec![(0.1, 0), (0.1, 1), (1.0, 0), (1.0, 1)]);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), SweepResult::CSV_HEADER);
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn sweep_spec_validation() {
        let mut spec = SweepSpec {
            mode: ClockMode::Continuous,
            x_grid: vec![0.2, 0.1],
            events_per_point: 100_000,
            dead_time: 0.0,
            skew_dt: 0.0,
            seed: 0,
            replicates: 1,
        };
        assert!(spec.validate().is_err());
        spec.x_grid = vec![0.1, 0.2];
        spec.events_per_point = 10;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = default_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.02).abs() < 1e-15 && (g[19] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn bias_model_refuses_underpowered_runs() {
        let spec = BiasModelSpec {
            n_bits: 10_000_000,
            ..Default::default()
        };
        let err = validate_bias_model(&spec).unwrap_err();
        assert!(err.to_string().contains(&required_bits(1e-3).to_string()));
    }

    #[test]
    fn check_constructors() {
        assert!(Check::within("a", 1.05, 1.0, 0.0, 0.1).pass);
        assert!(!Check::within("a", 1.2, 1.0, 0.01, 0.1).pass);
        assert!(Check::null("b", 0.02, 0.01).pass);
        assert!(!Check::positive("c", 0.02, 0.01).pass);
        assert!(Check::non_negative("d", -0.02, 0.01).pass);
        assert!(Check::line(&Check::null("e", 0.0, 1.0)).starts_with("PASS e"));
    }
}
