//! Timestamp files.
//!
//! Binary: little-endian `u64` nanoseconds since capture start, strictly
//! increasing, no header. CSV: one decimal value in seconds per line; blank
//! lines and lines starting with `#` are skipped.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EventStream, Source, StreamMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampFormat {
    Binary,
    Csv,
}

impl TimestampFormat {
    /// `.csv` and `.txt` are CSV; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("txt") => {
                TimestampFormat::Csv
            }
            _ => TimestampFormat::Binary,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimestampFormat::Binary => "binary",
            TimestampFormat::Csv => "csv",
        }
    }
}

impl FromStr for TimestampFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bin" | "binary" | "u64" => Ok(TimestampFormat::Binary),
            "csv" | "txt" | "text" => Ok(TimestampFormat::Csv),
            other => Err(Error::config(format!("unknown timestamp format '{other}'"))),
        }
    }
}

/// Nanoseconds to seconds.
#[inline]
pub fn ns_to_seconds(ns: u64) -> f64 {
    ns as f64 / 1e9
}

/// Seconds to the nearest nanosecond.
pub fn seconds_to_ns(t: f64) -> Result<u64> {
    let ns = (t * 1e9).round();
    if !(ns >= 0.0 && ns < 2f64.powi(64)) {
        return Err(Error::Domain(format!("time {t} s not representable as u64 ns")));
    }
    Ok(ns as u64)
}

pub fn parse_binary(bytes: &[u8]) -> Result<Vec<u64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Parse {
            index: bytes.len() / 8 + 1,
            message: format!("truncated record: file length {} is not a multiple of 8", bytes.len()),
        });
    }
    let values: Vec<u64> = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    for i in 1..values.len() {
        if values[i] <= values[i - 1] {
            return Err(Error::NonMonotone {
                index: i + 1,
                value: ns_to_seconds(values[i]),
                previous: ns_to_seconds(values[i - 1]),
            });
        }
    }
    Ok(values)
}

pub fn parse_csv(text: &str) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let index = out.len() + 1;
        // Tolerate trailing columns; the first is the timestamp.
        let field = line.split(',').next().unwrap_or("").trim();
        let t: f64 = field.parse().map_err(|_| Error::Parse {
            index,
            message: format!("cannot parse '{field}' as seconds"),
        })?;
        if !t.is_finite() {
            return Err(Error::Parse {
                index,
                message: format!("timestamp '{field}' is not finite"),
            });
        }
        if let Some(&prev) = out.last() {
            if t <= prev {
                return Err(Error::NonMonotone {
                    index,
                    value: t,
                    previous: prev,
                });
            }
        }
        out.push(t);
    }
    Ok(out)
}

pub fn ingest_timestamps(path: &Path, format: TimestampFormat) -> Result<EventStream> {
    let timestamps = match format {
        TimestampFormat::Binary => {
            let bytes = fs::read(path)?;
            parse_binary(&bytes)?.into_iter().map(ns_to_seconds).collect::<Vec<_>>()
        }
        TimestampFormat::Csv => parse_csv(&fs::read_to_string(path)?)?,
    };
    if timestamps.is_empty() {
        return Err(Error::Empty);
    }
    let meta = StreamMeta {
        source: Source::Ingested {
            path: path.display().to_string(),
            format: format.name().to_string(),
        },
        filters: Vec::new(),
    };
    EventStream::new(timestamps, meta)
}

/// Encode as binary nanoseconds. Fails if rounding to whole nanoseconds
/// would merge two events.
pub fn encode_binary(s: &EventStream) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(s.len() * 8);
    let mut prev: Option<u64> = None;
    for (i, &t) in s.timestamps().iter().enumerate() {
        let ns = seconds_to_ns(t)?;
        if let Some(p) = prev {
            if ns <= p {
                return Err(Error::NonMonotone {
                    index: i + 1,
                    value: ns_to_seconds(ns),
                    previous: ns_to_seconds(p),
                });
            }
        }
        prev = Some(ns);
        out.extend_from_slice(&ns.to_le_bytes());
    }
    Ok(out)
}

pub fn write_timestamps(s: &EventStream, path: &Path, format: TimestampFormat) -> Result<()> {
    match format {
        TimestampFormat::Binary => fs::write(path, encode_binary(s)?)?,
        TimestampFormat::Csv => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            writeln!(w, "# timestamp_s")?;
            for t in s.timestamps() {
                // Shortest representation that round-trips exactly.
                writeln!(w, "{t:?}")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Round to the nanosecond grid, dropping events that land on the same
/// nanosecond as their predecessor (a 1 ns digitizer cannot separate them).
/// Returns the quantized stream and the number of dropped events.
pub fn quantize_ns_dedup(s: &EventStream) -> Result<(EventStream, usize)> {
    let mut ts = Vec::with_capacity(s.len());
    let mut prev: Option<u64> = None;
    for &t in s.timestamps() {
        let ns = seconds_to_ns(t)?;
        if prev.is_none_or(|p| ns > p) {
            ts.push(ns_to_seconds(ns));
            prev = Some(ns);
        }
    }
    let dropped = s.len() - ts.len();
    Ok((EventStream::new(ts, s.meta().clone())?, dropped))
}

/// Round every time to the nanosecond grid used by binary files.
pub fn quantize_ns(s: &EventStream) -> Result<EventStream> {
    let ts = s
        .timestamps()
        .iter()
        .map(|&t| seconds_to_ns(t).map(ns_to_seconds))
        .collect::<Result<Vec<_>>>()?;
    EventStream::new(ts, s.meta().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_format_definition() {
        let mut bytes = Vec::new();
        for v in [0u64, 100, 250] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("three.ts");
        fs::write(&path, &bytes).unwrap();
        let s = ingest_timestamps(&path, TimestampFormat::Binary).unwrap();
        assert_eq!(s.timestamps(), &[0.0, 100e-9, 250e-9]);
    }

    #[test]
    fn non_monotone_record_is_named() {
        let mut bytes = Vec::new();
        for v in [100u64, 50] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let err = parse_binary(&bytes).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { index: 2, .. }));
        assert!(err.to_string().starts_with("record 2"));
    }

    #[test]
    fn truncated_binary_rejected() {
        assert!(matches!(parse_binary(&[0u8; 12]), Err(Error::Parse { index: 2, .. })));
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ts");
        fs::write(&path, b"").unwrap();
        assert!(matches!(
            ingest_timestamps(&path, TimestampFormat::Binary),
            Err(Error::Empty)
        ));
        let csv = dir.path().join("empty.csv");
        fs::write(&csv, "# only a comment\n\n").unwrap();
        assert!(matches!(ingest_timestamps(&csv, TimestampFormat::Csv), Err(Error::Empty)));
    }

    #[test]
    fn csv_comments_and_errors() {
        assert_eq!(parse_csv("# header\n0.5\n\n1.25\n").unwrap(), vec![0.5, 1.25]);
        assert!(matches!(
            parse_csv("0.5\nabc\n"),
            Err(Error::Parse { index: 2, .. })
        ));
        assert!(matches!(
            parse_csv("# c\n2.0\n1.0\n"),
            Err(Error::NonMonotone { index: 2, .. })
        ));
    }

    #[test]
    fn rounding_collision_is_an_error() {
        let s = EventStream::from_times(&[1e-9, 1.2e-9]).unwrap();
        assert!(encode_binary(&s).is_err());
    }

    #[test]
    fn dedup_drops_merged_events() {
        let s = EventStream::from_times(&[1e-9, 1.2e-9, 3e-9]).unwrap();
        let (q, dropped) = quantize_ns_dedup(&s).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(q.timestamps(), &[1e-9, 3e-9]);
        assert!(encode_binary(&q).is_ok());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(TimestampFormat::from_path(Path::new("a.csv")), TimestampFormat::Csv);
        assert_eq!(TimestampFormat::from_path(Path::new("a.ts")), TimestampFormat::Binary);
        assert_eq!("bin".parse::<TimestampFormat>().unwrap(), TimestampFormat::Binary);
    }
}
