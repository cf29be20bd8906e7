//! Randomness statistics of extracted bits and the laws they are checked
//! against.

mod accumulator;
pub mod laws;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

pub use accumulator::{BitAccumulator, MAX_LAG, PI_POINT_BITS};
pub use laws::{
    a_asymptotic, bias_model, eta_asymptotic, oracle_restartable, oracle_restartable_dead_time,
    restartable_pair_law, skew_bias_exact, skew_for_bias, OracleResult, PairLaw,
};

use crate::extractor::{BitBuffer, ExtractionStats};
use crate::{Error, Result, SCHEMA_VERSION};

/// Lags reported by the battery.
pub const BATTERY_LAGS: usize = 32;

/// Bias `b = ones/n − 1/2` and its standard error `1/(2√n)`.
pub fn bias(bits: &BitBuffer) -> Result<(f64, f64)> {
    if bits.is_empty() {
        return Err(Error::insufficient("bias of an empty bit sequence"));
    }
    let n = bits.len() as f64;
    Ok((bits.count_ones() as f64 / n - 0.5, 0.5 / n.sqrt()))
}

/// Serial autocorrelation a_1..a_{k_max} with standard error 1/√N,
/// computed directly from the definition (two passes, no accumulator).
pub fn autocorr(bits: &BitBuffer, k_max: usize) -> Result<Vec<(f64, f64)>> {
    let n = bits.len();
    if n <= k_max {
        return Err(Error::insufficient(format!(
            "lag {k_max} needs more than {k_max} bits, got {n}"
        )));
    }
    let y: Vec<f64> = bits.iter().map(|b| b as u8 as f64).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let den: f64 = dev.iter().map(|d| d * d).sum();
    if den == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let se = 1.0 / (n as f64).sqrt();
    Ok((1..=k_max)
        .map(|k| {
            let num: f64 = dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum();
            (num / den, se)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairProbs {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl PairProbs {
    fn from_counts(c: [u64; 4]) -> Self {
        let total = c.iter().sum::<u64>() as f64;
        PairProbs {
            p00: c[0] as f64 / total,
            p01: c[1] as f64 / total,
            p10: c[2] as f64 / total,
            p11: c[3] as f64 / total,
        }
    }

    /// p11 + p00 − p10 − p01
    pub fn correlation(&self) -> f64 {
        self.p11 + self.p00 - self.p10 - self.p01
    }
}

/// Frequencies of the N−1 overlapping consecutive pairs.
pub fn pair_probs(bits: &BitBuffer) -> Result<PairProbs> {
    if bits.len() < 2 {
        return Err(Error::insufficient(format!(
            "pair frequencies need at least 2 bits, got {}",
            bits.len()
        )));
    }
    let mut c = [0u64; 4];
    let mut prev = bits.get(0).expect("len >= 2");
    for b in bits.iter().skip(1) {
        c[(prev as usize) << 1 | b as usize] += 1;
        prev = b;
    }
    Ok(PairProbs::from_counts(c))
}

/// Shannon entropy per bit of a source with P(1) = p.
pub fn entropy_per_bit(p1: f64) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    h(p1) + h(1.0 - p1)
}

/// Bit-level χ² over the {0, 1} counts and its 1-dof tail probability.
pub fn chi_square(n0: u64, n1: u64) -> (f64, f64) {
    let n = (n0 + n1) as f64;
    let d = n1 as f64 - n0 as f64;
    let chi2 = d * d / n;
    let p = if chi2 == 0.0 { 1.0 } else { gamma_ur(0.5, chi2 / 2.0) };
    (chi2, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCoefficient {
    pub lag: usize,
    pub a: f64,
    pub stderr: f64,
}

/// ENT-style summary of a bit sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub n_bits: u64,
    pub mean: f64,
    pub bias: f64,
    pub bias_stderr: f64,
    pub autocorr: Vec<LagCoefficient>,
    /// Why `autocorr` is empty, when it is.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub autocorr_error: Option<String>,
    pub pair_probs: Option<PairProbs>,
    pub entropy: f64,
    pub chi_square: f64,
    pub chi_square_p: f64,
    pub pi_estimate: f64,
    /// Relative error of the π estimate, in percent.
    pub pi_error: f64,
    pub pi_points: u64,
    /// Bits per event, when extraction stats are known.
    pub efficiency: Option<f64>,
    pub bits_per_pair: Option<f64>,
}

impl AnalysisReport {
    /// Finalize an accumulator. Autocorrelation failures (constant input)
    /// are recorded in `autocorr_error` rather than aborting the report.
    pub fn from_accumulator(acc: &BitAccumulator, stats: Option<&ExtractionStats>) -> Result<Self> {
        let n = acc.n_bits();
        if n < PI_POINT_BITS as u64 {
            return Err(Error::insufficient(format!(
                "the battery needs at least {PI_POINT_BITS} bits, got {n}"
            )));
        }
        let ones = acc.ones();
        let mean = ones as f64 / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        let lags = acc.max_lag().min(n as usize - 1);
        let (autocorr, autocorr_error) = match (1..=lags)
            .map(|k| {
                acc.autocorr(k).map(|a| LagCoefficient {
                    lag: k,
                    a,
                    stderr: se,
                })
            })
            .collect::<Result<Vec<_>>>()
        {
            Ok(v) => (v, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        let (chi2, chi2_p) = chi_square(n - ones, ones);
        let pi = 4.0 * acc.pi_hits() as f64 / acc.pi_points() as f64;
        Ok(AnalysisReport {
            schema_version: SCHEMA_VERSION,
            n_bits: n,
            mean,
            bias: mean - 0.5,
            bias_stderr: 0.5 * se,
            autocorr,
            autocorr_error,
            pair_probs: Some(PairProbs::from_counts(acc.pair_counts()?)),
            entropy: entropy_per_bit(mean),
            chi_square: chi2,
            chi_square_p: chi2_p,
            pi_estimate: pi,
            pi_error: 100.0 * (pi - std::f64::consts::PI).abs() / std::f64::consts::PI,
            pi_points: acc.pi_points(),
            efficiency: stats.and_then(|s| s.efficiency()),
            bits_per_pair: stats.and_then(|s| s.bits_per_pair()),
        })
    }

    pub fn a(&self, lag: usize) -> Option<f64> {
        self.autocorr.iter().find(|c| c.lag == lag).map(|c| c.a)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Entropy = {:.6} bits per bit.", self.entropy)?;
        writeln!(f)?;
        writeln!(
            f,
            "Chi square distribution for {} samples is {:.2}, and randomly",
            self.n_bits, self.chi_square
        )?;
        writeln!(
            f,
            "would exceed this value {:.2} percent of the times.",
            100.0 * self.chi_square_p
        )?;
        writeln!(f)?;
        writeln!(
            f,
            "Arithmetic mean value of bits is {:.6} +/- {:.6}",
            self.mean, self.bias_stderr
        )?;
        writeln!(
            f,
            "Monte Carlo value for Pi is {:.9} (error {:.2} percent).",
            self.pi_estimate, self.pi_error
        )?;
        match &self.autocorr_error {
            Some(e) => writeln!(f, "Serial correlation coef.: {e}")?,
            None => {
                for c in &self.autocorr {
                    writeln!(
                        f,
                        "Serial correlation coef. a_{:02} = {:+.6} +/- {:.6}",
                        c.lag, c.a, c.stderr
                    )?;
                }
            }
        }
        if let Some(p) = &self.pair_probs {
            writeln!(
                f,
                "Pair frequencies p00 = {:.6}, p01 = {:.6}, p10 = {:.6}, p11 = {:.6}",
                p.p00, p.p01, p.p10, p.p11
            )?;
        }
        if let Some(eta) = self.efficiency {
            writeln!(f, "Bit efficiency = {eta:.6} bits per event.")?;
        }
        Ok(())
    }
}

/// Accumulate a bit buffer with `max_lag` tracked lags.
pub fn accumulate(bits: &BitBuffer, max_lag: usize) -> Result<BitAccumulator> {
    let mut acc = BitAccumulator::new(max_lag)?;
    acc.extend(bits.iter());
    Ok(acc)
}

/// Accumulate in parallel over shards and merge in order. Shards are cut on
/// 48-bit boundaries; the result equals [`accumulate`] exactly.
pub fn accumulate_sharded(bits: &BitBuffer, max_lag: usize, shards: usize) -> Result<BitAccumulator> {
    let n = bits.len();
    let points = n / PI_POINT_BITS as usize;
    let per = points.div_ceil(shards.max(1)).max(1) * PI_POINT_BITS as usize;
    let bounds: Vec<(usize, usize)> = (0..n.div_ceil(per).max(1))
        .map(|i| (i * per, ((i + 1) * per).min(n)))
        .collect();
    let parts = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = BitAccumulator::new(max_lag)?;
            acc.extend((lo..hi).map(|i| bits.get(i).expect("in range")));
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let mut total = iter.next().expect("at least one shard");
    for p in iter {
        total.merge(&p)?;
    }
    Ok(total)
}

/// The full battery: mean, bias, a_1..a_32, pair frequencies, entropy, χ²
/// and Monte-Carlo π.
pub fn ent_battery(bits: &BitBuffer) -> Result<AnalysisReport> {
    analyze(bits, None)
}

pub fn analyze(bits: &BitBuffer, stats: Option<&ExtractionStats>) -> Result<AnalysisReport> {
    let acc = accumulate(bits, BATTERY_LAGS)?;
    AnalysisReport::from_accumulator(&acc, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> BitBuffer {
        BitBuffer::from_str_bits(s)
    }

    #[test]
    fn bias_examples() {
        assert_eq!(bias(&b(&"01".repeat(500))).unwrap().0, 0.0);
        assert_eq!(bias(&b("11111111")).unwrap().0, 0.5);
        assert_eq!(bias(&b("1101")).unwrap().0, 0.25);
        assert!(bias(&BitBuffer::new()).is_err());
    }

    #[test]
    fn autocorr_examples() {
        assert!((autocorr(&b("0101"), 1).unwrap()[0].0 + 0.75).abs() < 1e-15);
        assert!((autocorr(&b("0011"), 1).unwrap()[0].0 - 0.25).abs() < 1e-15);
        assert!(matches!(autocorr(&b("1111"), 1), Err(Error::ZeroVariance)));
        assert!(matches!(autocorr(&b("01"), 2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pair_examples() {
        let p = pair_probs(&b("0011")).unwrap();
        assert_eq!((p.p00, p.p01, p.p10, p.p11), (1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0));
        let p = pair_probs(&b("0101")).unwrap();
        assert_eq!((p.p00, p.p01, p.p10, p.p11), (0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0));
        assert!(pair_probs(&b("1")).is_err());
    }

    #[test]
    fn entropy_and_chi_square() {
        assert_eq!(entropy_per_bit(0.5), 1.0);
        assert!((entropy_per_bit(0.25) - 0.811278).abs() < 5e-7);
        assert_eq!(entropy_per_bit(0.0), 0.0);
        let (c, _) = chi_square(4, 6);
        assert!((c - 0.4).abs() < 1e-15);
        assert_eq!(chi_square(5, 5), (0.0, 1.0));
        // n1 − n0 = 62 over 1000 bits: χ² = 3.844, just past the 5% point.
        let (c, p) = chi_square(469, 531);
        assert!((c - 3.844).abs() < 1e-12);
        assert!((p - 0.0499).abs() < 2e-4);
    }

    #[test]
    fn battery_on_balanced_and_zero_input() {
        let r = ent_battery(&b(&"01".repeat(48))).unwrap();
        assert_eq!(r.entropy, 1.0);
        assert_eq!(r.chi_square, 0.0);
        let z = ent_battery(&b(&"0".repeat(96))).unwrap();
        assert_eq!(z.pi_estimate, 4.0);
        assert!(z.autocorr.is_empty());
        assert!(z.autocorr_error.is_some());
        assert!(ent_battery(&b(&"01".repeat(20))).is_err());
    }

    #[test]
    fn accumulator_matches_direct_autocorr() {
        let bits = BitBuffer::from_bits((0..5000u64).map(|i| ((i * 2654435761) >> 7) % 3 == 0));
        let direct = autocorr(&bits, 16).unwrap();
        let acc = accumulate(&bits, 16).unwrap();
        for (k, (a, _)) in direct.iter().enumerate() {
            assert!((acc.autocorr(k + 1).unwrap() - a).abs() < 1e-12);
        }
        assert_eq!(accumulate_sharded(&bits, 16, 7).unwrap(), acc);
    }
}
