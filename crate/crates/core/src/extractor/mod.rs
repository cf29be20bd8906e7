//! Bit extraction from pairs of consecutive inter-event intervals.
//!
//! Each bit consumes two intervals `(t1, t2)` defined by three consecutive
//! events; the next pair starts at the last event of the previous one. A bit
//! is `1` when the first interval measures longer, `0` when shorter, and the
//! pair is discarded on a tie.
//!
//! Intervals are measured either exactly ([`Method::Basic`]) or by counting
//! clock edges ([`Method::Clocked`]). With a restartable clock the first edge
//! comes one full period after each interval start, so an interval of length
//! `t` reads `floor(t / T)`. A continuous clock ticks at `phase + kT`
//! (k = 1, 2, …) and an interval `(start, end]` reads the number of edges
//! inside it; the phase carries over from pair to pair. The up/down counter
//! ([`Method::UpDown`]) replays the hardware realization edge by edge.
//!
//! Skew `Δt` lengthens the first (up-counting) window of every pair.

mod bits;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::event_source::EventStream;
use crate::{Error, Result};

pub use bits::{
    read_bit_file, read_sidecar, sidecar_path, write_bit_file, write_sidecar, BitBuffer,
    BitFileMeta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Continuous,
    Restartable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockConfig {
    /// Clock period T, seconds.
    pub period: f64,
    pub mode: ClockMode,
    /// Offset of the edge train in [0, T); continuous mode only.
    pub phase: f64,
    /// Extra length Δt of the up-counting window, seconds.
    pub skew: f64,
}

impl ClockConfig {
    pub fn new(period: f64, mode: ClockMode) -> Self {
        ClockConfig {
            period,
            mode,
            phase: 0.0,
            skew: 0.0,
        }
    }

    pub fn restartable(period: f64) -> Self {
        Self::new(period, ClockMode::Restartable)
    }

    pub fn continuous(period: f64) -> Self {
        Self::new(period, ClockMode::Continuous)
    }

    pub fn from_frequency(hz: f64, mode: ClockMode) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(Error::config(format!("clock frequency must be > 0, got {hz}")));
        }
        Ok(Self::new(1.0 / hz, mode))
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_skew(mut self, skew: f64) -> Self {
        self.skew = skew;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::config(format!("clock period must be > 0, got {}", self.period)));
        }
        if !(self.phase >= 0.0 && self.phase < self.period) {
            return Err(Error::config(format!(
                "clock phase must be in [0, T), got {} with T = {}",
                self.phase, self.period
            )));
        }
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return Err(Error::config(format!("skew must be >= 0, got {}", self.skew)));
        }
        if self.skew > self.period / 2.0 {
            log::warn!(
                "skew {} s exceeds half the clock period {} s",
                self.skew,
                self.period
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Exact interval comparison.
    Basic,
    Clocked(ClockConfig),
    /// Signed up/down counter; restartable clocks only.
    UpDown(ClockConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Basic => "exact",
            Method::Clocked(c) if c.mode == ClockMode::Restartable => "restartable",
            Method::Clocked(_) => "continuous",
            Method::UpDown(_) => "updown",
        }
    }

    pub fn clock(&self) -> Option<&ClockConfig> {
        match self {
            Method::Basic => None,
            Method::Clocked(c) | Method::UpDown(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub events_consumed: u64,
    pub intervals_formed: u64,
    pub pairs_formed: u64,
    pub ties_discarded: u64,
    pub bits_emitted: u64,
}

impl ExtractionStats {
    /// Bits per consumed event.
    pub fn efficiency(&self) -> Option<f64> {
        (self.events_consumed > 0).then(|| self.bits_emitted as f64 / self.events_consumed as f64)
    }

    pub fn bits_per_pair(&self) -> Option<f64> {
        (self.pairs_formed > 0).then(|| self.bits_emitted as f64 / self.pairs_formed as f64)
    }

    /// Combine stats of consecutive shards cut at pair boundaries, where
    /// neighbouring shards share their boundary event.
    pub fn merge(&self, other: &ExtractionStats) -> ExtractionStats {
        let intervals_formed = self.intervals_formed + other.intervals_formed;
        ExtractionStats {
            events_consumed: if self.events_consumed == 0 && other.events_consumed == 0 {
                0
            } else {
                intervals_formed + 1
            },
            intervals_formed,
            pairs_formed: self.pairs_formed + other.pairs_formed,
            ties_discarded: self.ties_discarded + other.ties_discarded,
            bits_emitted: self.bits_emitted + other.bits_emitted,
        }
    }
}

/// First interval of the pair in progress.
#[derive(Debug, Clone, Copy)]
enum Pending {
    Nothing,
    Exact(f64),
    Count(i64),
}

/// Single-pass extractor with O(1) state.
///
/// Feed either absolute timestamps with [`push_timestamp`](Self::push_timestamp)
/// or, after [`start`](Self::start), inter-event intervals with
/// [`push_interval`](Self::push_interval). Both return the bit completed by
/// that event, if any.
#[derive(Debug, Clone)]
pub struct Extractor {
    method: Method,
    stats: ExtractionStats,
    prev: Option<f64>,
    pending: Pending,
    // Continuous clock: position of the last event within its clock period,
    // in units of T, and the number of edge positions ahead that do not
    // exist (edges start at k = 1).
    frac: f64,
    phantom_edges: u64,
}

impl Extractor {
    pub fn new(method: Method) -> Result<Self> {
        match &method {
            Method::Basic => {}
            Method::Clocked(c) => c.validate()?,
            Method::UpDown(c) => {
                c.validate()?;
                if c.mode != ClockMode::Restartable {
                    return Err(Error::Unsupported(
                        "the up/down counter requires a restartable clock".into(),
                    ));
                }
            }
        }
        Ok(Extractor {
            method,
            stats: ExtractionStats::default(),
            prev: None,
            pending: Pending::Nothing,
            frac: 0.0,
            phantom_edges: 0,
        })
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn stats(&self) -> &ExtractionStats {
        &self.stats
    }

    /// Register the first event at absolute time `t0`.
    pub fn start(&mut self, t0: f64) {
        self.stats.events_consumed += 1;
        self.prev = Some(t0);
        if let Method::Clocked(c) = &self.method {
            if c.mode == ClockMode::Continuous {
                let pos = (t0 - c.phase) / c.period;
                let base = pos.floor();
                self.frac = pos - base;
                self.phantom_edges = if base < 0.0 { (-base) as u64 } else { 0 };
            }
        }
    }

    #[inline]
    pub fn push_timestamp(&mut self, t: f64) -> Option<bool> {
        match self.prev {
            None => {
                self.start(t);
                None
            }
            Some(prev) => {
                self.prev = Some(t);
                self.interval(t - prev)
            }
        }
    }

    /// Next interval; the event count advances by one. Without a prior
    /// [`start`](Self::start) the first event is taken to be at t = 0. Do not
    /// mix with [`push_timestamp`](Self::push_timestamp) on one extractor.
    #[inline]
    pub fn push_interval(&mut self, dt: f64) -> Option<bool> {
        if self.stats.events_consumed == 0 {
            self.start(0.0);
        }
        self.interval(dt)
    }

    #[inline]
    fn interval(&mut self, dt: f64) -> Option<bool> {
        self.stats.events_consumed += 1;
        self.stats.intervals_formed += 1;
        let first = matches!(self.pending, Pending::Nothing);
        let reading = match self.method {
            Method::Basic => Pending::Exact(dt),
            Method::Clocked(c) => Pending::Count(match c.mode {
                ClockMode::Restartable => restart_count(dt, first, &c),
                ClockMode::Continuous => self.continuous_count(dt, first, &c),
            }),
            Method::UpDown(c) => Pending::Count(updown_edges(dt, first, &c)),
        };
        if first {
            self.pending = reading;
            return None;
        }
        let previous = std::mem::replace(&mut self.pending, Pending::Nothing);
        self.stats.pairs_formed += 1;
        let bit = match (previous, reading) {
            (Pending::Exact(t1), Pending::Exact(t2)) => compare(t1.partial_cmp(&t2)),
            // Up/down: the counter holds n1 - n2 after the second window.
            (Pending::Count(a), Pending::Count(b)) if matches!(self.method, Method::UpDown(_)) => {
                compare((a + b).partial_cmp(&0))
            }
            (Pending::Count(n1), Pending::Count(n2)) => compare(n1.partial_cmp(&n2)),
            _ => unreachable!("pair readings share the method"),
        };
        if bit.is_some() {
            self.stats.bits_emitted += 1;
        } else {
            self.stats.ties_discarded += 1;
        }
        bit
    }

    #[inline]
    fn continuous_count(&mut self, dt: f64, first: bool, c: &ClockConfig) -> i64 {
        let step = dt / c.period;
        let window = if first { (dt + c.skew) / c.period } else { step };
        let raw = (self.frac + window).floor() as u64;
        let counted = raw - raw.min(self.phantom_edges);

        let pos = self.frac + step;
        let crossed = pos.floor();
        self.frac = pos - crossed;
        let crossed = crossed as u64;
        self.phantom_edges -= crossed.min(self.phantom_edges);
        counted as i64
    }
}

#[inline]
fn compare(ord: Option<std::cmp::Ordering>) -> Option<bool> {
    match ord {
        Some(std::cmp::Ordering::Greater) => Some(true),
        Some(std::cmp::Ordering::Less) => Some(false),
        _ => None,
    }
}

#[inline]
fn restart_count(dt: f64, first: bool, c: &ClockConfig) -> i64 {
    let t = if first { dt + c.skew } else { dt };
    (t / c.period).floor() as i64
}

/// Edge-by-edge replay of the up/down counter: +1 per edge in the up window,
/// -1 per edge in the down window. Edge `k` falls inside a restarted window
/// of length `t` iff `k <= t / T`.
fn updown_edges(dt: f64, first: bool, c: &ClockConfig) -> i64 {
    let (t, dir) = if first { (dt + c.skew, 1) } else { (dt, -1) };
    let limit = t / c.period;
    let mut counter = 0i64;
    let mut k = 1u64;
    while (k as f64) <= limit {
        counter += dir;
        k += 1;
    }
    counter
}

/// Consecutive interval pairs `(e0→e1, e1→e2), (e2→e3, e3→e4), …`; a trailing
/// unpaired interval is dropped.
pub fn pair_intervals(s: &EventStream) -> Vec<(f64, f64)> {
    let ts = s.timestamps();
    if ts.len() < 3 {
        return Vec::new();
    }
    ts.windows(3)
        .step_by(2)
        .map(|w| (w[1] - w[0], w[2] - w[1]))
        .collect()
}

pub fn extract(s: &EventStream, method: &Method) -> Result<(BitBuffer, ExtractionStats)> {
    let mut ex = Extractor::new(*method)?;
    let mut bits = BitBuffer::with_capacity(s.len() / 2);
    for &t in s.timestamps() {
        if let Some(b) = ex.push_timestamp(t) {
            bits.push(b);
        }
    }
    Ok((bits, ex.stats))
}

pub fn extract_basic(s: &EventStream) -> (BitBuffer, ExtractionStats) {
    extract(s, &Method::Basic).expect("exact comparison has no configuration to reject")
}

pub fn extract_clocked(s: &EventStream, c: &ClockConfig) -> Result<(BitBuffer, ExtractionStats)> {
    extract(s, &Method::Clocked(*c))
}

pub fn extract_updown_counter(
    s: &EventStream,
    c: &ClockConfig,
) -> Result<(BitBuffer, ExtractionStats)> {
    extract(s, &Method::UpDown(*c))
}

/// Restartable extraction split into `shards` pieces at pair boundaries and
/// run in parallel. Output equals [`extract_clocked`] exactly.
pub fn extract_restartable_sharded(
    s: &EventStream,
    c: &ClockConfig,
    shards: usize,
) -> Result<(BitBuffer, ExtractionStats)> {
    if c.mode != ClockMode::Restartable {
        return Err(Error::Unsupported(
            "only restartable extraction can be sharded".into(),
        ));
    }
    c.validate()?;
    let ts = s.timestamps();
    if ts.is_empty() {
        return Ok((BitBuffer::new(), ExtractionStats::default()));
    }
    let pairs = (ts.len() - 1) / 2;
    let per = pairs.div_ceil(shards.max(1)).max(1);
    // Shard i covers events [2·per·i, 2·per·(i+1)], sharing boundary events.
    let ranges: Vec<(usize, usize)> = (0..)
        .map(|i| (2 * per * i, (2 * per * (i + 1)).min(ts.len() - 1)))
        .take_while(|&(lo, _)| lo < ts.len() - 1)
        .collect();
    let parts: Vec<(BitBuffer, ExtractionStats)> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut ex = Extractor::new(Method::Clocked(*c)).expect("validated above");
            let mut bits = BitBuffer::new();
            for &t in &ts[lo..=hi] {
                if let Some(b) = ex.push_timestamp(t) {
                    bits.push(b);
                }
            }
            (bits, ex.stats)
        })
        .collect();
    let mut bits = BitBuffer::new();
    let mut stats = ExtractionStats::default();
    for (b, st) in &parts {
        bits.append(b);
        stats = stats.merge(st);
    }
    Ok((bits, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ts: &[f64]) -> EventStream {
        EventStream::from_times(ts).unwrap()
    }

    #[test]
    fn pairing_hand_trace() {
        let s = stream(&[0.0, 1.0, 3.0, 4.0, 10.0]);
        assert_eq!(pair_intervals(&s), vec![(1.0, 2.0), (1.0, 6.0)]);
        assert!(pair_intervals(&stream(&[0.0, 1.0])).is_empty());
        let six = stream(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(pair_intervals(&six).len(), 2);
    }

    #[test]
    fn basic_hand_trace() {
        let (bits, st) = extract_basic(&stream(&[0.0, 1.0, 3.0, 4.0, 10.0]));
        assert_eq!(bits.to_string(), "00");
        assert_eq!(st.events_consumed, 5);
        assert_eq!(st.intervals_formed, 4);
        assert_eq!(st.pairs_formed, 2);
        assert_eq!(st.bits_emitted, 2);
    }

    #[test]
    fn basic_tie_discarded() {
        let (bits, st) = extract_basic(&stream(&[0.0, 2.0, 4.0]));
        assert!(bits.is_empty());
        assert_eq!(st.ties_discarded, 1);
    }

    #[test]
    fn basic_reversed_pair_complements() {
        let (a, _) = extract_basic(&stream(&[0.0, 3.0, 4.0]));
        let (b, _) = extract_basic(&stream(&[0.0, 1.0, 4.0]));
        assert_eq!(a.to_string(), "1");
        assert_eq!(b.to_string(), "0");
    }

    #[test]
    fn restartable_hand_traces() {
        let c = ClockConfig::restartable(1.0);
        let (bits, _) = extract_clocked(&stream(&[0.0, 2.5, 3.7]), &c).unwrap();
        assert_eq!(bits.to_string(), "1");
        let (bits, st) = extract_clocked(&stream(&[0.0, 0.4, 1.1]), &c).unwrap();
        assert!(bits.is_empty());
        assert_eq!(st.ties_discarded, 1);
    }

    #[test]
    fn continuous_hand_trace() {
        let c = ClockConfig::continuous(1.0);
        let (bits, st) = extract_clocked(&stream(&[0.5, 1.7, 2.1]), &c).unwrap();
        assert!(bits.is_empty());
        assert_eq!(st.ties_discarded, 1);
        // Edges at 1, 2, 3, 4: (0.5, 1.7] has 1, (1.7, 4.2] has 3.
        let (bits, _) = extract_clocked(&stream(&[0.5, 1.7, 4.2]), &c).unwrap();
        assert_eq!(bits.to_string(), "0");
    }

    #[test]
    fn continuous_edge_on_boundary_counted_once() {
        // Edge at 2.0 belongs to (1.5, 2.0], not (2.0, 2.5].
        let c = ClockConfig::continuous(1.0);
        let (bits, _) = extract_clocked(&stream(&[1.5, 2.0, 2.5]), &c).unwrap();
        assert_eq!(bits.to_string(), "1");
    }

    #[test]
    fn continuous_no_edge_before_first_period() {
        // phase 0.6: edges at 1.6, 2.6, ...; nothing at 0.6.
        let c = ClockConfig::continuous(1.0).with_phase(0.6);
        let (bits, _) = extract_clocked(&stream(&[0.1, 0.9, 1.0]), &c).unwrap();
        assert!(bits.is_empty());
        let (bits, _) = extract_clocked(&stream(&[0.1, 1.7, 1.8]), &c).unwrap();
        assert_eq!(bits.to_string(), "1");
    }

    #[test]
    fn skew_lengthens_up_window() {
        let c = ClockConfig::restartable(1.0).with_skew(0.3);
        // t1 = 0.8 → 1.1 with skew: n = (1, 0).
        let (bits, _) = extract_clocked(&stream(&[0.0, 0.8, 1.5]), &c).unwrap();
        assert_eq!(bits.to_string(), "1");
    }

    #[test]
    fn updown_hand_traces() {
        let c = ClockConfig::restartable(1.0);
        let (bits, _) = extract_updown_counter(&stream(&[0.0, 2.5, 3.7]), &c).unwrap();
        assert_eq!(bits.to_string(), "1");
        let (bits, st) = extract_updown_counter(&stream(&[0.0, 0.4, 1.1]), &c).unwrap();
        assert!(bits.is_empty());
        assert_eq!(st.ties_discarded, 1);
    }

    #[test]
    fn updown_rejects_continuous() {
        let c = ClockConfig::continuous(1.0);
        let err = extract_updown_counter(&stream(&[0.0, 1.0]), &c).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn clock_validation() {
        assert!(ClockConfig::restartable(0.0).validate().is_err());
        assert!(ClockConfig::continuous(1.0).with_phase(1.0).validate().is_err());
        assert!(ClockConfig::continuous(1.0).with_skew(-0.1).validate().is_err());
        assert!(ClockConfig::continuous(1.0).with_phase(0.99).validate().is_ok());
    }

    #[test]
    fn interval_and_timestamp_feeds_agree() {
        let ts = [0.3, 1.9, 2.2, 5.0, 5.1, 7.7, 9.9];
        let c = ClockConfig::continuous(0.7).with_phase(0.2);
        let (by_ts, _) = extract_clocked(&stream(&ts), &c).unwrap();
        let mut ex = Extractor::new(Method::Clocked(c)).unwrap();
        ex.start(ts[0]);
        let mut by_iv = BitBuffer::new();
        for w in ts.windows(2) {
            if let Some(b) = ex.push_interval(w[1] - w[0]) {
                by_iv.push(b);
            }
        }
        assert_eq!(by_ts, by_iv);
    }

    #[test]
    fn stats_merge_accounts_for_shared_boundary() {
        let a = ExtractionStats {
            events_consumed: 5,
            intervals_formed: 4,
            pairs_formed: 2,
            ties_discarded: 1,
            bits_emitted: 1,
        };
        let m = a.merge(&a);
        assert_eq!(m.events_consumed, 9);
        assert_eq!(m.pairs_formed, 4);
    }
}
