use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bits per Monte-Carlo π point: two 24-bit coordinates.
pub const PI_POINT_BITS: u32 = 48;
const PI_COORD_BITS: u32 = 24;

/// Largest lag an accumulator can track.
pub const MAX_LAG: usize = 64;

/// Sufficient statistics of a bit sequence, kept in integers so that
/// merging shards and finalizing gives exactly the single-pass result.
///
/// Shards are merged in sequence order. A shard followed by another must
/// hold a multiple of 48 bits, so π points never straddle a boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitAccumulator {
    max_lag: usize,
    n: u64,
    ones: u64,
    /// `lag_ones[k-1]` = #{i : Y_i = Y_{i+k} = 1}
    lag_ones: Vec<u64>,
    /// First min(n, 64) bits, bit i of the word = i-th bit.
    head: u64,
    /// Last min(n, 64) bits, bit 0 of the word = most recent.
    tail: u64,
    pi_word: u64,
    pi_len: u32,
    pi_points: u64,
    pi_hits: u64,
}

impl BitAccumulator {
    pub fn new(max_lag: usize) -> Result<Self> {
        if max_lag == 0 || max_lag > MAX_LAG {
            return Err(Error::config(format!("max lag must be in 1..={MAX_LAG}, got {max_lag}")));
        }
        Ok(BitAccumulator {
            max_lag,
            n: 0,
            ones: 0,
            lag_ones: vec![0; max_lag],
            head: 0,
            tail: 0,
            pi_word: 0,
            pi_len: 0,
            pi_points: 0,
            pi_hits: 0,
        })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn n_bits(&self) -> u64 {
        self.n
    }

    pub fn ones(&self) -> u64 {
        self.ones
    }

    pub fn pi_points(&self) -> u64 {
        self.pi_points
    }

    pub fn pi_hits(&self) -> u64 {
        self.pi_hits
    }

    fn lag_mask(&self) -> u64 {
        low_mask(self.max_lag)
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        let b = bit as u64;
        if bit {
            self.ones += 1;
            let mut partners = self.tail & self.lag_mask();
            while partners != 0 {
                let k = partners.trailing_zeros() as usize;
                self.lag_ones[k] += 1;
                partners &= partners - 1;
            }
        }
        if self.n < 64 {
            self.head |= b << self.n;
        }
        self.tail = (self.tail << 1) | b;
        self.n += 1;

        self.pi_word = (self.pi_word << 1) | b;
        self.pi_len += 1;
        if self.pi_len == PI_POINT_BITS {
            let x = self.pi_word >> PI_COORD_BITS;
            let y = self.pi_word & low_mask(PI_COORD_BITS as usize);
            if x * x + y * y < 1u64 << (2 * PI_COORD_BITS) {
                self.pi_hits += 1;
            }
            self.pi_points += 1;
            self.pi_word = 0;
            self.pi_len = 0;
        }
    }

    pub fn extend<I: IntoIterator<Item = bool>>(&mut self, bits: I) {
        for b in bits {
            self.push(b);
        }
    }

    /// Append the statistics of the sequence that follows this one.
    pub fn merge(&mut self, next: &BitAccumulator) -> Result<()> {
        if next.max_lag != self.max_lag {
            return Err(Error::Merge(format!(
                "max lag differs ({} vs {})",
                self.max_lag, next.max_lag
            )));
        }
        if next.n == 0 {
            return Ok(());
        }
        if self.pi_len != 0 {
            return Err(Error::Merge(format!(
                "left shard holds {} bits, not a multiple of {PI_POINT_BITS}",
                self.n
            )));
        }
        // Lagged pairs straddling the boundary: r-th from the end of self
        // with s-th from the start of next, at distance r + s - 1.
        for k in 1..=self.max_lag {
            let mut cross = 0;
            for r in 1..=k.min(self.n as usize) {
                let s = k - r + 1;
                if s as u64 > next.n {
                    continue;
                }
                cross += (self.tail >> (r - 1)) & (next.head >> (s - 1)) & 1;
            }
            self.lag_ones[k - 1] += next.lag_ones[k - 1] + cross;
        }
        if self.n < 64 {
            self.head |= next.head << self.n;
        }
        self.tail = if next.n >= 64 {
            next.tail
        } else {
            (self.tail << next.n) | next.tail
        };
        self.n += next.n;
        self.ones += next.ones;
        self.pi_points += next.pi_points;
        self.pi_hits += next.pi_hits;
        self.pi_word = next.pi_word;
        self.pi_len = next.pi_len;
        Ok(())
    }

    /// Serial autocorrelation at lag `k`, evaluated exactly in integers:
    /// a_k = Σ_{i≤N-k}(Y_i-Ȳ)(Y_{i+k}-Ȳ) / Σ(Y_i-Ȳ)².
    pub fn autocorr(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.max_lag {
            return Err(Error::config(format!(
                "lag {k} outside the tracked range 1..={}",
                self.max_lag
            )));
        }
        if self.n <= k as u64 {
            return Err(Error::insufficient(format!(
                "lag {k} needs more than {k} bits, got {}",
                self.n
            )));
        }
        if self.ones == 0 || self.ones == self.n {
            return Err(Error::ZeroVariance);
        }
        let n = self.n as i128;
        let ones = self.ones as i128;
        let first_k = (self.head & low_mask(k)).count_ones() as i128;
        let last_k = (self.tail & low_mask(k)).count_ones() as i128;
        let s = self.lag_ones[k - 1] as i128;
        let leading = ones - last_k; // Σ_{i≤N-k} Y_i
        let trailing = ones - first_k; // Σ_{i>k} Y_i
        let num = s * n * n - ones * n * (leading + trailing) + (n - k as i128) * ones * ones;
        let den = n * (ones * n - ones * ones);
        Ok(num as f64 / den as f64)
    }

    /// Counts of overlapping pairs (00, 01, 10, 11).
    pub fn pair_counts(&self) -> Result<[u64; 4]> {
        if self.n < 2 {
            return Err(Error::insufficient(format!(
                "pair frequencies need at least 2 bits, got {}",
                self.n
            )));
        }
        let c11 = self.lag_ones[0];
        let c1x = self.ones - (self.tail & 1);
        let cx1 = self.ones - (self.head & 1);
        let c10 = c1x - c11;
        let c01 = cx1 - c11;
        let c00 = self.n - 1 - c11 - c10 - c01;
        Ok([c00, c01, c10, c11])
    }
}

#[inline]
fn low_mask(k: usize) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc_of(bits: &[bool], lag: usize) -> BitAccumulator {
        let mut a = BitAccumulator::new(lag).unwrap();
        a.extend(bits.iter().copied());
        a
    }

    fn bits_of(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn autocorr_hand_values() {
        assert!((acc_of(&bits_of("0101"), 1).autocorr(1).unwrap() + 0.75).abs() < 1e-15);
        assert!((acc_of(&bits_of("0011"), 1).autocorr(1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pair_counts_hand_values() {
        assert_eq!(acc_of(&bits_of("0011"), 1).pair_counts().unwrap(), [1, 1, 0, 1]);
        assert_eq!(acc_of(&bits_of("0101"), 1).pair_counts().unwrap(), [0, 2, 1, 0]);
    }

    #[test]
    fn constant_sequence_is_an_error() {
        assert!(matches!(
            acc_of(&[false; 10], 2).autocorr(1),
            Err(Error::ZeroVariance)
        ));
        assert!(matches!(
            acc_of(&[true, false], 4).autocorr(2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn pi_point_convention() {
        // All zeros: every point at the origin, counted as a hit.
        let a = acc_of(&[false; 96], 1);
        assert_eq!((a.pi_points(), a.pi_hits()), (2, 2));
        // X = 2^24 - 1 (24 ones), Y = 0: u ≈ 1 - 2^-24, hit.
        let mut bits = vec![true; 24];
        bits.extend([false; 24]);
        assert_eq!(acc_of(&bits, 1).pi_hits(), 1);
        // X = Y = 2^23 + 2^22 (u = v = 0.75): u² + v² > 1, miss.
        let mut coord = vec![true, true];
        coord.extend([false; 22]);
        let mut bits = coord.clone();
        bits.extend(coord);
        assert_eq!(acc_of(&bits, 1).pi_hits(), 0);
    }

    #[test]
    fn merge_rejects_misaligned_shards() {
        let mut a = acc_of(&[true; 10], 2);
        let b = acc_of(&[true; 10], 2);
        assert!(matches!(a.merge(&b), Err(Error::Merge(_))));
        let mut c = acc_of(&[true; 10], 3);
        assert!(c.merge(&b).is_err());
    }

    #[test]
    fn merge_with_short_shards() {
        let seq = bits_of("0110100111010001101011100101101100011101010101110001011010011101");
        let lag = 5;
        let whole = acc_of(&seq[..seq.len()], lag);
        // Only the last shard may break 48-bit alignment.
        let mut left = acc_of(&seq[..48], lag);
        let right = acc_of(&seq[48..], lag);
        left.merge(&right).unwrap();
        assert_eq!(left, whole);
    }
}
