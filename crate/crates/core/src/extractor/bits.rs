use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClockConfig, ExtractionStats};
use crate::event_source::StreamMeta;
use crate::{Error, Result};

/// Packed bit sequence. The first bit occupies the least-significant bit of
/// the first byte; pad bits after `n_bits` are zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuffer {
    bytes: Vec<u8>,
    n_bits: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitBuffer {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            n_bits: 0,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut buf = BitBuffer::new();
        buf.extend(bits);
        buf
    }

    /// Parse from a `0`/`1` string; other characters are ignored.
    pub fn from_str_bits(s: &str) -> Self {
        Self::from_bits(s.chars().filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        }))
    }

    /// Takes `n_bits` from `bytes`; remaining pad bits must be zero.
    pub fn from_bytes(mut bytes: Vec<u8>, n_bits: usize) -> Result<Self> {
        let need = n_bits.div_ceil(8);
        if bytes.len() < need {
            return Err(Error::insufficient(format!(
                "{n_bits} bits need {need} bytes, got {}",
                bytes.len()
            )));
        }
        bytes.truncate(need);
        if !n_bits.is_multiple_of(8) {
            let last = bytes[need - 1];
            if last >> (n_bits % 8) != 0 {
                return Err(Error::Parse {
                    index: need,
                    message: "non-zero pad bits after the last data bit".into(),
                });
            }
        }
        Ok(BitBuffer { bytes, n_bits })
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        let i = self.n_bits % 8;
        if i == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("byte pushed above") |= 1 << i;
        }
        self.n_bits += 1;
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.n_bits).then(|| self.bytes[i / 8] >> (i % 8) & 1 == 1)
    }

    pub fn len(&self) -> usize {
        self.n_bits
    }

    pub fn is_empty(&self) -> bool {
        self.n_bits == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.n_bits).map(move |i| self.bytes[i / 8] >> (i % 8) & 1 == 1)
    }

    pub fn count_ones(&self) -> u64 {
        self.bytes.iter().map(|b| b.count_ones() as u64).sum()
    }

    pub fn append(&mut self, other: &BitBuffer) {
        if self.n_bits.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.n_bits += other.n_bits;
        } else {
            self.extend(other.iter());
        }
    }

    /// Every bit inverted.
    pub fn complement(&self) -> BitBuffer {
        BitBuffer::from_bits(self.iter().map(|b| !b))
    }
}

impl Extend<bool> for BitBuffer {
    fn extend<I: IntoIterator<Item = bool>>(&mut self, iter: I) {
        for b in iter {
            self.push(b);
        }
    }
}

impl std::fmt::Display for BitBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Sidecar JSON written next to a raw bit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitFileMeta {
    pub schema_version: u32,
    pub n_bits: u64,
    pub method: String,
    pub clock: Option<ClockConfig>,
    pub source: Option<StreamMeta>,
    pub stats: ExtractionStats,
    /// Bits per consumed event.
    pub efficiency: Option<f64>,
    pub bits_per_pair: Option<f64>,
}

/// `<bits>.json`
pub fn sidecar_path(bits: &Path) -> PathBuf {
    let mut name = bits.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_bit_file(path: &Path, bits: &BitBuffer) -> Result<()> {
    fs::write(path, bits.as_bytes())?;
    Ok(())
}

pub fn write_sidecar(path: &Path, meta: &BitFileMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(sidecar_path(path), text + "\n")?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Option<BitFileMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(side)?)?))
}

/// Reads a raw bit file. Without an explicit count, the sidecar's `n_bits`
/// is used when present, else every bit of every byte.
pub fn read_bit_file(path: &Path, n_bits: Option<usize>) -> Result<BitBuffer> {
    let bytes = fs::read(path)?;
    let n = match n_bits {
        Some(n) => n,
        None => match read_sidecar(path)? {
            Some(meta) => meta.n_bits as usize,
            None => bytes.len() * 8,
        },
    };
    BitBuffer::from_bytes(bytes, n)
}
