//! Waveform and stream import/export.
//!
//! - CSV: header `index,re,im`, one row per sample, floats in shortest
//!   round-trip decimal form.
//! - Raw IQ: interleaved little-endian `f64` pairs `re0 im0 re1 im1 ...`,
//!   no header.
//! - Streams: raw IQ plus a JSON sidecar at `<file>.json` holding the sample
//!   rate, sample count and optional ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{RxStream, StreamTruth};
use crate::{Error, Result, C64};

pub const CSV_HEADER: &str = "index,re,im";
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

pub fn waveform_to_csv(samples: &[C64]) -> String {
    let mut out = String::with_capacity(samples.len() * 48);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, s) in samples.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", s.re, s.im));
    }
    out
}

pub fn waveform_from_csv(text: &str) -> Result<Vec<C64>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Schema(format!("expected header `{CSV_HEADER}`, got {other:?}"))),
    }
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| Error::Schema(format!("row {}: {what}: `{line}`", row + 1));
        if fields.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
        if index != out.len() {
            return Err(bad("indices must count up from 0"));
        }
        let re: f64 = fields[1].parse().map_err(|_| bad("bad re"))?;
        let im: f64 = fields[2].parse().map_err(|_| bad("bad im"))?;
        out.push(C64::new(re, im));
    }
    Ok(out)
}

pub fn encode_iq(samples: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 16);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> Result<Vec<C64>> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Schema(format!(
            "raw IQ length {} is not a multiple of 16 bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_waveform_csv(path: impl AsRef<Path>, samples: &[C64]) -> Result<()> {
    write(path.as_ref(), waveform_to_csv(samples).as_bytes())
}

pub fn read_waveform_csv(path: impl AsRef<Path>) -> Result<Vec<C64>> {
    let bytes = read(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))?;
    waveform_from_csv(&text)
}

pub fn write_iq(path: impl AsRef<Path>, samples: &[C64]) -> Result<()> {
    write(path.as_ref(), &encode_iq(samples))
}

pub fn read_iq(path: impl AsRef<Path>) -> Result<Vec<C64>> {
    decode_iq(&read(path.as_ref())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSidecar {
    pub schema_version: u32,
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub truth: Option<StreamTruth>,
}

pub fn sidecar_path(iq_path: &Path) -> PathBuf {
    let mut name = iq_path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

impl RxStream {
    pub fn sidecar(&self) -> StreamSidecar {
        StreamSidecar {
            schema_version: SIDECAR_SCHEMA_VERSION,
            sample_rate_hz: self.sample_rate_hz,
            num_samples: self.samples.len(),
            truth: self.truth,
        }
    }

    /// Writes `path` (raw IQ) and `path.json` (sidecar).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_iq(path, &self.samples)?;
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        write(&sidecar_path(path), json.as_bytes())
    }

    /// Loads raw IQ and, when present, its sidecar. Without a sidecar the
    /// default 1.92 MHz rate is assumed and no truth is attached.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let samples = read_iq(path)?;
        let side = sidecar_path(path);
        if !side.exists() {
            return Ok(Self {
                samples,
                sample_rate_hz: crate::channel::DEFAULT_SAMPLE_RATE_HZ,
                truth: None,
            });
        }
        let meta: StreamSidecar = serde_json::from_slice(&read(&side)?)?;
        if meta.schema_version != SIDECAR_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported sidecar schema_version {}",
                meta.schema_version
            )));
        }
        if meta.num_samples != samples.len() {
            return Err(Error::LengthMismatch {
                expected: meta.num_samples,
                got: samples.len(),
            });
        }
        if let Some(t) = meta.truth {
            if t.pss_start >= samples.len() {
                return Err(Error::Schema(format!(
                    "truth pss_start {} outside {} samples",
                    t.pss_start,
                    samples.len()
                )));
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz: meta.sample_rate_hz,
            truth: meta.truth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pss::pss_time_domain;

    #[test]
    fn csv_round_trip_is_exact() {
        let w = pss_time_domain(25, 128).unwrap();
        let text = waveform_to_csv(w.body());
        assert_eq!(text.lines().count(), 129);
        assert_eq!(waveform_from_csv(&text).unwrap(), w.body());
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(waveform_from_csv("i,re,im\n").is_err());
        assert!(waveform_from_csv("index,re,im\n1,0,0\n").is_err());
        assert!(waveform_from_csv("index,re,im\n0,x,0\n").is_err());
        assert!(waveform_from_csv("index,re,im\n0,1\n").is_err());
    }

    #[test]
    fn iq_layout() {
        let bytes = encode_iq(&[C64::new(1.0, -2.0)]);
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[8..], &(-2.0f64).to_le_bytes());
        assert!(decode_iq(&bytes[..15]).is_err());
    }

    #[test]
    fn stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rx.iq");
        let s = RxStream {
            samples: pss_time_domain(34, 64).unwrap().body().to_vec(),
            sample_rate_hz: 0.96e6,
            truth: Some(StreamTruth {
                root: 34,
                pss_start: 3,
                period: 0,
            }),
        };
        s.save(&path).unwrap();
        assert!(dir.path().join("rx.iq.json").exists());
        assert_eq!(RxStream::load(&path).unwrap(), s);

        fs::remove_file(sidecar_path(&path)).unwrap();
        let bare = RxStream::load(&path).unwrap();
        assert_eq!(bare.truth, None);
        assert_eq!(bare.samples, s.samples);
    }
}
