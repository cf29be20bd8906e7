use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EventStream;
use crate::{Error, Result};

/// Histogram bin layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Binning {
    Log { lo: f64, hi: f64, bins: usize },
    Linear { lo: f64, hi: f64, bins: usize },
    /// 200 logarithmic bins over [1 ns, 100·τ̄], τ̄ the sample mean interval.
    #[default]
    Auto,
}


impl Binning {
    fn edges(&self, mean_interval: f64) -> Result<Vec<f64>> {
        let (lo, hi, bins, log) = match *self {
            Binning::Log { lo, hi, bins } => (lo, hi, bins, true),
            Binning::Linear { lo, hi, bins } => (lo, hi, bins, false),
            Binning::Auto => (1e-9, (100.0 * mean_interval).max(2e-9), 200, true),
        };
        if bins == 0 || !(hi > lo) || (log && !(lo > 0.0)) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!(
                "bad binning: lo={lo}, hi={hi}, bins={bins}{}",
                if log { " (log)" } else { "" }
            )));
        }
        let edges = (0..=bins)
            .map(|i| {
                let f = i as f64 / bins as f64;
                if log {
                    lo * (hi / lo).powf(f)
                } else {
                    lo + (hi - lo) * f
                }
            })
            .collect();
        Ok(edges)
    }
}

/// Histogram of consecutive intervals with an exponential tail fit.
///
/// Intervals outside the bin range are counted in the first or last bin, so
/// the counts always sum to the number of intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Maximum-likelihood mean of the exponential tail, seconds.
    pub fitted_tau: f64,
    /// Smallest observed interval: the dead-time edge.
    pub cutoff_estimate: f64,
    /// Lower threshold of the tail fit.
    pub fit_threshold: f64,
    /// Reduced χ² of the fit over bins above the threshold.
    pub goodness: f64,
}

impl IntervalHistogram {
    fn bin_of(&self, t: f64) -> usize {
        // partition_point gives the number of edges <= t.
        let i = self.bin_edges.partition_point(|&e| e <= t);
        i.saturating_sub(1).min(self.counts.len() - 1)
    }

    pub fn bin_width_at(&self, t: f64) -> f64 {
        let i = self.bin_of(t);
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo_s,bin_hi_s,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:e},{:e},{}", self.bin_edges[i], self.bin_edges[i + 1], c)?;
        }
        Ok(())
    }
}

pub fn interval_histogram(s: &EventStream, binning: &Binning) -> Result<IntervalHistogram> {
    if s.len() < 2 {
        return Err(Error::insufficient(format!(
            "interval histogram needs at least 2 events, got {}",
            s.len()
        )));
    }
    let intervals: Vec<f64> = s.intervals().collect();
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let bin_edges = binning.edges(mean)?;
    let mut hist = IntervalHistogram {
        counts: vec![0; bin_edges.len() - 1],
        bin_edges,
        fitted_tau: 0.0,
        cutoff_estimate: 0.0,
        fit_threshold: 0.0,
        goodness: f64::NAN,
    };
    let mut cutoff = f64::INFINITY;
    for &t in &intervals {
        let b = hist.bin_of(t);
        hist.counts[b] += 1;
        cutoff = cutoff.min(t);
    }
    hist.cutoff_estimate = cutoff;

    // The dead-time edge region is not exponential; fit strictly above it.
    let threshold = cutoff + hist.bin_width_at(cutoff);
    let (sum, count) = intervals
        .iter()
        .filter(|&&t| t > threshold)
        .fold((0.0, 0u64), |(s, c), &t| (s + (t - threshold), c + 1));
    if count == 0 {
        return Err(Error::insufficient("no intervals above the dead-time edge to fit"));
    }
    let tau = sum / count as f64;
    if !(tau > 0.0) {
        return Err(Error::insufficient("degenerate exponential tail"));
    }
    hist.fitted_tau = tau;
    hist.fit_threshold = threshold;
    hist.goodness = reduced_chi_square(&hist, threshold, tau, count);
    Ok(hist)
}

fn reduced_chi_square(h: &IntervalHistogram, threshold: f64, tau: f64, n_tail: u64) -> f64 {
    let last = h.counts.len() - 1;
    let mut chi2 = 0.0;
    let mut used = 0usize;
    for (i, &obs) in h.counts.iter().enumerate() {
        let lo = h.bin_edges[i];
        if lo < threshold {
            continue;
        }
        let survive = |t: f64| (-(t - threshold) / tau).exp();
        let p = if i == last {
            survive(lo)
        } else {
            survive(lo) - survive(h.bin_edges[i + 1])
        };
        let expected = n_tail as f64 * p;
        if expected < 5.0 {
            continue;
        }
        chi2 += (obs as f64 - expected).powi(2) / expected;
        used += 1;
    }
    if used > 1 {
        chi2 / (used - 1) as f64
    } else {
        f64::NAN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test of `samples` against Exp(mean `tau`).
pub fn ks_exponential(samples: &[f64], tau: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::insufficient("KS test needs at least one sample"));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be > 0, got {tau}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = -(-x / tau).exp_m1();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n: sorted.len(),
    })
}

/// Complementary Kolmogorov distribution Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 2.0;
    let mut prev_term = 0.0f64;
    for k in 1..=100 {
        let term = sign * (a2 * (k * k) as f64).exp();
        sum += term;
        if term.abs() <= 1e-10 * prev_term.abs() || term.abs() <= 1e-16 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev_term = term;
    }
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_source::{apply_dead_time, gen_poisson_stream, SourceConfig};

    #[test]
    fn counts_are_conserved() {
        let s = gen_poisson_stream(&SourceConfig::new(500e-9, 20_001, 2)).unwrap();
        let h = interval_histogram(&s, &Binning::Auto).unwrap();
        assert_eq!(h.total(), 20_000);
        assert_eq!(h.counts.len(), 200);
        assert!(h.bin_edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn needs_two_events() {
        let s = EventStream::from_times(&[1.0]).unwrap();
        assert!(matches!(
            interval_histogram(&s, &Binning::Auto),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn out_of_range_intervals_land_in_edge_bins() {
        let s = EventStream::from_times(&[0.0, 0.5, 10.5, 11.0]).unwrap();
        let h = interval_histogram(&s, &Binning::Linear { lo: 1.0, hi: 5.0, bins: 4 }).unwrap();
        assert_eq!(h.counts, vec![2, 0, 0, 1]);
    }

    #[test]
    fn zero_dead_time_cutoff_in_first_bin() {
        let s = gen_poisson_stream(&SourceConfig::new(500e-9, 1_000_000, 3)).unwrap();
        let h = interval_histogram(&s, &Binning::Auto).unwrap();
        assert!(h.cutoff_estimate <= h.bin_edges[1]);
    }

    #[test]
    fn fit_recovers_tau_and_dead_time() {
        let s = gen_poisson_stream(&SourceConfig::new(500e-9, 1_000_000, 4)).unwrap();
        let s = apply_dead_time(&s, 25e-9).unwrap();
        let h = interval_histogram(&s, &Binning::Auto).unwrap();
        // σ(τ̂)/τ = 1/√n ≈ 0.1 %
        assert!((h.fitted_tau / 500e-9 - 1.0).abs() < 0.005, "{}", h.fitted_tau);
        assert!((h.cutoff_estimate - 25e-9).abs() < h.bin_width_at(25e-9));
        assert!(h.goodness < 2.0, "reduced chi2 {}", h.goodness);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098 (standard critical values).
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_detects_wrong_mean() {
        let s = gen_poisson_stream(&SourceConfig::new(1.0, 100_001, 5)).unwrap();
        let iv: Vec<f64> = s.intervals().collect();
        assert!(ks_exponential(&iv, 1.0).unwrap().p_value > 0.01);
        assert!(ks_exponential(&iv, 1.05).unwrap().p_value < 1e-6);
    }

    #[test]
    fn csv_export_header() {
        let s = EventStream::from_times(&[0.0, 1.0, 3.0, 3.6, 6.0]).unwrap();
        let h = interval_histogram(&s, &Binning::Linear { lo: 0.5, hi: 2.5, bins: 2 }).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("bin_lo_s,bin_hi_s,count\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
