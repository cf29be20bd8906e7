//! Detected-pulse streams: Poisson simulation, detector models, ingestion.
//!
//! Times are `f64` seconds. Files exchange integer nanoseconds (see [`io`]).

mod histogram;
pub mod io;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::rng::{self, Purpose};
use crate::{Error, Result};

pub use histogram::{interval_histogram, ks_exponential, Binning, IntervalHistogram, KsResult};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Where a stream came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Simulated { tau: f64, seed: u64, n_events: u64 },
    Ingested { path: String, format: String },
    Literal,
}

/// A transformation applied after generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Filter {
    DeadTime { d: f64 },
    Afterpulse { prob: f64, tau: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub source: Source,
    pub filters: Vec<Filter>,
}

impl StreamMeta {
    pub fn literal() -> Self {
        StreamMeta {
            source: Source::Literal,
            filters: Vec::new(),
        }
    }

    fn with_filter(&self, filter: Filter) -> Self {
        let mut meta = self.clone();
        meta.filters.push(filter);
        meta
    }

    /// Dead time applied by the most recent dead-time filter, if any.
    pub fn dead_time(&self) -> Option<f64> {
        self.filters.iter().rev().find_map(|f| match f {
            Filter::DeadTime { d } => Some(*d),
            _ => None,
        })
    }
}

/// Strictly increasing event times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    timestamps: Vec<f64>,
    meta: StreamMeta,
}

impl EventStream {
    /// Validates that every timestamp is finite and strictly after its
    /// predecessor. Errors name the 1-based offending record.
    pub fn new(timestamps: Vec<f64>, meta: StreamMeta) -> Result<Self> {
        for (i, &t) in timestamps.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Parse {
                    index: i + 1,
                    message: format!("timestamp {t} is not finite"),
                });
            }
            if i > 0 && t <= timestamps[i - 1] {
                return Err(Error::NonMonotone {
                    index: i + 1,
                    value: t,
                    previous: timestamps[i - 1],
                });
            }
        }
        Ok(EventStream { timestamps, meta })
    }

    /// Stream of literal timestamps, mostly for tests and examples.
    pub fn from_times(timestamps: &[f64]) -> Result<Self> {
        Self::new(timestamps.to_vec(), StreamMeta::literal())
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn meta(&self) -> &StreamMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Consecutive differences.
    pub fn intervals(&self) -> impl Iterator<Item = f64> + '_ {
        self.timestamps.windows(2).map(|w| w[1] - w[0])
    }

    pub fn into_timestamps(self) -> Vec<f64> {
        self.timestamps
    }

    /// The same stream shifted by a constant.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        let ts = self.timestamps.iter().map(|t| t + offset).collect();
        Self::new(ts, self.meta.clone())
    }

    /// The same stream with every time multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::config(format!("scale factor must be > 0, got {factor}")));
        }
        let ts = self.timestamps.iter().map(|t| t * factor).collect();
        Self::new(ts, self.meta.clone())
    }
}

/// Parameters of a simulated detector stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Mean inter-event time of the photon source, seconds.
    pub tau: f64,
    pub n_events: u64,
    pub seed: u64,
    /// Non-paralyzable dead time, seconds.
    pub dead_time: f64,
    pub afterpulse_prob: f64,
    /// Mean afterpulse delay, seconds.
    pub afterpulse_tau: f64,
}

impl SourceConfig {
    pub fn new(tau: f64, n_events: u64, seed: u64) -> Self {
        SourceConfig {
            tau,
            n_events,
            seed,
            dead_time: 0.0,
            afterpulse_prob: 0.0,
            afterpulse_tau: 1e-6,
        }
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

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be > 0, got {}", self.tau)));
        }
        validate_dead_time(self.dead_time)?;
        validate_afterpulse(self.afterpulse_prob, self.afterpulse_tau)
    }
}

fn validate_dead_time(d: f64) -> Result<()> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::config(format!("dead time must be >= 0, got {d}")));
    }
    Ok(())
}

fn validate_afterpulse(p: f64, tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!(
            "afterpulse probability must be in [0, 1), got {p}"
        )));
    }
    if p > 0.0 && !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!(
            "afterpulse time constant must be > 0, got {tau}"
        )));
    }
    Ok(())
}

/// Infinite iterator of exponential inter-arrival times.
#[derive(Debug, Clone)]
pub struct PoissonIntervals {
    rng: rand_chacha::ChaCha8Rng,
    tau: f64,
}

impl PoissonIntervals {
    pub fn new(tau: f64, seed: u64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::config(format!("tau must be > 0, got {tau}")));
        }
        Ok(PoissonIntervals {
            rng: rng::substream(seed, Purpose::Intervals),
            tau,
        })
    }
}

impl Iterator for PoissonIntervals {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(rng::exponential(&mut self.rng, self.tau))
    }
}

/// Advance `t` by `dt`, stepping to the next representable value if the sum
/// rounds back onto `t`.
#[inline]
fn advance(t: f64, dt: f64) -> f64 {
    let next = t + dt;
    if next > t {
        next
    } else {
        t.next_up()
    }
}

/// Poisson process starting at t = 0: the first event is one exponential
/// draw after the origin. `cfg.dead_time` and afterpulsing are not applied.
pub fn gen_poisson_stream(cfg: &SourceConfig) -> Result<EventStream> {
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(Error::config(format!("tau must be > 0, got {}", cfg.tau)));
    }
    let mut t = 0.0;
    let timestamps = PoissonIntervals::new(cfg.tau, cfg.seed)?
        .take(cfg.n_events as usize)
        .map(|dt| {
            t = advance(t, dt);
            t
        })
        .collect();
    let meta = StreamMeta {
        source: Source::Simulated {
            tau: cfg.tau,
            seed: cfg.seed,
            n_events: cfg.n_events,
        },
        filters: Vec::new(),
    };
    Ok(EventStream { timestamps, meta })
}

/// Non-paralyzable detector: an event is accepted iff it arrives at least
/// `d` after the previously accepted one.
#[derive(Debug, Clone)]
pub struct DeadTime {
    d: f64,
    last_kept: Option<f64>,
}

impl DeadTime {
    pub fn new(d: f64) -> Result<Self> {
        validate_dead_time(d)?;
        Ok(DeadTime { d, last_kept: None })
    }

    #[inline]
    pub fn admit(&mut self, t: f64) -> bool {
        match self.last_kept {
            Some(prev) if t - prev < self.d => false,
            _ => {
                self.last_kept = Some(t);
                true
            }
        }
    }
}

/// Streaming dead-time filter over inter-arrival times: accumulates dropped
/// gaps and releases the interval since the last accepted event.
#[derive(Debug, Clone)]
pub struct DeadTimeGaps {
    d: f64,
    gap: f64,
}

impl DeadTimeGaps {
    pub fn new(d: f64) -> Result<Self> {
        validate_dead_time(d)?;
        Ok(DeadTimeGaps { d, gap: 0.0 })
    }

    #[inline]
    pub fn push(&mut self, dt: f64) -> Option<f64> {
        self.gap += dt;
        if self.gap >= self.d {
            let out = self.gap;
            self.gap = 0.0;
            Some(out)
        } else {
            None
        }
    }
}

pub fn apply_dead_time(s: &EventStream, d: f64) -> Result<EventStream> {
    let mut filter = DeadTime::new(d)?;
    let timestamps = s.timestamps.iter().copied().filter(|&t| filter.admit(t)).collect();
    Ok(EventStream {
        timestamps,
        meta: s.meta.with_filter(Filter::DeadTime { d }),
    })
}

/// Total order wrapper so times can live in a heap. Never holds NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Afterpulse model: each parent event independently spawns at most one
/// afterpulse, with probability `prob`, at an exponential delay of mean
/// `tau`. Afterpulses do not spawn afterpulses. Output is merged in time
/// order; a time that does not exceed the previous output is bumped to the
/// next representable value.
#[derive(Debug, Clone)]
pub struct Afterpulser {
    rng: rand_chacha::ChaCha8Rng,
    prob: f64,
    tau: f64,
    pending: BinaryHeap<Reverse<Time>>,
    last: f64,
}

impl Afterpulser {
    pub fn new(prob: f64, tau: f64, seed: u64) -> Result<Self> {
        validate_afterpulse(prob, tau)?;
        Ok(Afterpulser {
            rng: rng::substream(seed, Purpose::Afterpulse),
            prob,
            tau,
            pending: BinaryHeap::new(),
            last: f64::NEG_INFINITY,
        })
    }

    fn emit(&mut self, t: f64, out: &mut impl FnMut(f64)) {
        let t = if t > self.last { t } else { self.last.next_up() };
        self.last = t;
        out(t);
    }

    /// Feed the next parent event; releases every event up to it.
    pub fn push(&mut self, t: f64, out: &mut impl FnMut(f64)) {
        while let Some(&Reverse(Time(next))) = self.pending.peek() {
            if next >= t {
                break;
            }
            self.pending.pop();
            self.emit(next, out);
        }
        self.emit(t, out);
        // Both draws happen for every parent so the substream position only
        // depends on the parent count.
        let u = rng::open_unit(&mut self.rng);
        let delay = rng::exponential(&mut self.rng, self.tau);
        if u < self.prob {
            self.pending.push(Reverse(Time(t + delay)));
        }
    }

    pub fn finish(&mut self, out: &mut impl FnMut(f64)) {
        while let Some(Reverse(Time(next))) = self.pending.pop() {
            self.emit(next, out);
        }
    }

    /// Shift all internal times by `-offset` (long streams rebase their
    /// origin to keep absolute times small).
    pub fn rebase(&mut self, offset: f64) {
        let pending: Vec<_> = self
            .pending
            .drain()
            .map(|Reverse(Time(t))| Reverse(Time(t - offset)))
            .collect();
        self.pending = pending.into();
        self.last -= offset;
    }
}

pub fn apply_afterpulsing(s: &EventStream, prob: f64, tau: f64, seed: u64) -> Result<EventStream> {
    validate_afterpulse(prob, tau)?;
    let meta = s.meta.with_filter(Filter::Afterpulse { prob, tau, seed });
    if prob == 0.0 {
        return Ok(EventStream {
            timestamps: s.timestamps.clone(),
            meta,
        });
    }
    let mut ap = Afterpulser::new(prob, tau, seed)?;
    let mut timestamps = Vec::with_capacity(s.len() + (s.len() as f64 * prob * 1.1) as usize);
    let mut out = |t| timestamps.push(t);
    for &t in &s.timestamps {
        ap.push(t, &mut out);
    }
    ap.finish(&mut out);
    Ok(EventStream { timestamps, meta })
}

/// Full detector chain: Poisson source, then dead time, then afterpulsing.
pub fn simulate(cfg: &SourceConfig) -> Result<EventStream> {
    cfg.validate()?;
    let mut s = gen_poisson_stream(cfg)?;
    if cfg.dead_time > 0.0 {
        s = apply_dead_time(&s, cfg.dead_time)?;
    }
    if cfg.afterpulse_prob > 0.0 {
        s = apply_afterpulsing(&s, cfg.afterpulse_prob, cfg.afterpulse_tau, cfg.seed)?;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    /// Coherence time, seconds.
    pub tau_cohr: f64,
    /// Coherence frequency 2π/τ_cohr, hertz.
    pub f_cohr: f64,
}

/// Coherence time of a Gaussian emission spectrum centred at `lambda` with
/// width `sigma` (both meters): λ²/(4πcσ).
pub fn coherence_time(lambda: f64, sigma: f64) -> Result<Coherence> {
    if !(lambda > 0.0 && sigma > 0.0) || !lambda.is_finite() || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "wavelength and spectral width must be > 0, got {lambda} and {sigma}"
        )));
    }
    let tau_cohr = lambda * lambda / (4.0 * std::f64::consts::PI * SPEED_OF_LIGHT * sigma);
    Ok(Coherence {
        tau_cohr,
        f_cohr: 2.0 * std::f64::consts::PI / tau_cohr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: f64 = 1e-9;

    #[test]
    fn empty_stream_for_zero_events() {
        let s = gen_poisson_stream(&SourceConfig::new(500.0 * NS, 0, 1)).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn rejects_non_positive_tau() {
        for tau in [0.0, -1.0, f64::NAN] {
            let err = gen_poisson_stream(&SourceConfig::new(tau, 10, 1)).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SourceConfig::new(500.0 * NS, 10_000, 7);
        let a = gen_poisson_stream(&cfg).unwrap();
        let b = gen_poisson_stream(&cfg).unwrap();
        assert_eq!(a.timestamps(), b.timestamps());
        let c = gen_poisson_stream(&SourceConfig::new(500.0 * NS, 10_000, 8)).unwrap();
        assert_ne!(a.timestamps(), c.timestamps());
    }

    #[test]
    fn dead_time_hand_trace() {
        let s = EventStream::from_times(&[0.0, 10.0 * NS, 30.0 * NS, 35.0 * NS, 70.0 * NS]).unwrap();
        let out = apply_dead_time(&s, 25.0 * NS).unwrap();
        assert_eq!(out.timestamps(), &[0.0, 30.0 * NS, 70.0 * NS]);
    }

    #[test]
    fn zero_dead_time_and_zero_afterpulsing_are_identities() {
        let s = gen_poisson_stream(&SourceConfig::new(1.0, 5_000, 3)).unwrap();
        assert_eq!(apply_dead_time(&s, 0.0).unwrap().timestamps(), s.timestamps());
        assert_eq!(
            apply_afterpulsing(&s, 0.0, 2.0, 4).unwrap().timestamps(),
            s.timestamps()
        );
    }

    #[test]
    fn negative_dead_time_rejected() {
        let s = EventStream::from_times(&[0.0, 1.0]).unwrap();
        assert!(matches!(apply_dead_time(&s, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn afterpulse_probability_must_be_below_one() {
        let s = EventStream::from_times(&[0.0, 1.0]).unwrap();
        assert!(matches!(apply_afterpulsing(&s, 1.0, 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(apply_afterpulsing(&s, 0.2, 0.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn afterpulsed_stream_is_strictly_increasing() {
        let s = gen_poisson_stream(&SourceConfig::new(1.0, 20_000, 11)).unwrap();
        let out = apply_afterpulsing(&s, 0.9, 0.5, 12).unwrap();
        assert!(out.timestamps().windows(2).all(|w| w[1] > w[0]));
        assert!(out.len() > s.len());
    }

    #[test]
    fn dead_time_gaps_match_timestamp_filter() {
        let s = gen_poisson_stream(&SourceConfig::new(1.0, 50_000, 5)).unwrap();
        let filtered = apply_dead_time(&s, 0.4).unwrap();
        let mut gaps = DeadTimeGaps::new(0.4).unwrap();
        let kept: Vec<f64> = s.intervals().filter_map(|dt| gaps.push(dt)).collect();
        let expected: Vec<f64> = filtered.intervals().collect();
        assert_eq!(kept.len(), expected.len());
        for (a, b) in kept.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn non_monotone_input_names_record() {
        let err = EventStream::from_times(&[1.0, 2.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { index: 3, .. }));
    }

    #[test]
    fn coherence_formula() {
        let c = coherence_time(688e-9, 35e-9).unwrap();
        // λ²/(4πcσ) evaluated by hand: 4.73344e-13 / 1.31854e2 = 3.5899e-15
        assert!((c.tau_cohr - 3.5899e-15).abs() < 1e-18);
        let wide = coherence_time(688e-9, 70e-9).unwrap();
        assert!((wide.tau_cohr * 2.0 - c.tau_cohr).abs() < 1e-28);
        assert!(coherence_time(0.0, 1e-9).is_err());
        assert!(coherence_time(1e-6, -1e-9).is_err());
    }
}
