//! `SHDW1` binary tensor container.
//!
//! ```text
//! magic     5 bytes  "SHDW1"
//! version   u32 LE   1 = f32 payload, 2 = f64 payload
//! count     u32 LE   number of records
//! height    u32 LE
//! width     u32 LE
//! channels  u32 LE
//! records   count × { label: u32 LE, pixels: height·width·channels floats
//!                     (row-major, channels interleaved), meta: 4 floats }
//! ```
//! Floats are little-endian IEEE-754 of the width implied by `version`.

use std::io::{Read, Write};

use crate::error::{format_err, invalid, Result};

pub const MAGIC: &[u8; 5] = b"SHDW1";
const HEADER_LEN: usize = 5 + 5 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn version(self) -> u32 {
        match self {
            Precision::F32 => 1,
            Precision::F64 => 2,
        }
    }

    fn from_version(v: u32) -> Result<Self> {
        match v {
            1 => Ok(Precision::F32),
            2 => Ok(Precision::F64),
            other => Err(format_err("container", format!("unsupported version {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub label: u32,
    pub pixels: Vec<f64>,
    pub meta: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub precision: Precision,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub records: Vec<Record>,
}

impl Container {
    pub fn new(precision: Precision, height: usize, width: usize, channels: usize) -> Self {
        Self {
            precision,
            height,
            width,
            channels,
            records: Vec::new(),
        }
    }

    pub fn record_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if record.pixels.len() != self.record_len() {
            return Err(invalid(format!(
                "record has {} values, container expects {}",
                record.pixels.len(),
                self.record_len()
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let dims = [self.records.len(), self.height, self.width, self.channels];
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&self.precision.version().to_le_bytes());
        for d in dims {
            let d = u32::try_from(d).map_err(|_| invalid("container dimension exceeds u32"))?;
            header.extend_from_slice(&d.to_le_bytes());
        }
        out.write_all(&header)?;
        let mut buf = Vec::with_capacity(4 + (self.record_len() + 4) * self.precision.width());
        for rec in &self.records {
            buf.clear();
            buf.extend_from_slice(&rec.label.to_le_bytes());
            for &v in rec.pixels.iter().chain(rec.meta.iter()) {
                match self.precision {
                    Precision::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                    Precision::F64 => buf.extend_from_slice(&v.to_le_bytes()),
                }
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    /// Parses a complete container; trailing bytes are rejected.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(format_err("container", "truncated header"));
        }
        if &bytes[..5] != MAGIC {
            return Err(format_err("container", "bad magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes")) as usize;
        let precision = Precision::from_version(word(0) as u32)?;
        let (count, height, width, channels) = (word(1), word(2), word(3), word(4));
        let values = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| format_err("container", "record size overflows"))?;
        let record_bytes = values
            .checked_add(4)
            .and_then(|v| v.checked_mul(precision.width()))
            .and_then(|v| v.checked_add(4))
            .ok_or_else(|| format_err("container", "record size overflows"))?;
        let body = &bytes[HEADER_LEN..];
        let expected = count
            .checked_mul(record_bytes)
            .ok_or_else(|| format_err("container", "payload size overflows"))?;
        if body.len() != expected {
            return Err(format_err(
                "container",
                format!("payload is {} bytes, header implies {expected}", body.len()),
            ));
        }

        let read_float = |chunk: &[u8]| -> f64 {
            match precision {
                Precision::F32 => f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes"))),
                Precision::F64 => f64::from_le_bytes(chunk.try_into().expect("8 bytes")),
            }
        };
        let w = precision.width();
        let mut records = Vec::with_capacity(count);
        for rec in body.chunks_exact(record_bytes.max(1)).take(count) {
            let label = u32::from_le_bytes(rec[..4].try_into().expect("4 bytes"));
            let floats: Vec<f64> = rec[4..].chunks_exact(w).map(read_float).collect();
            let (pixels, meta) = floats.split_at(values);
            records.push(Record {
                label,
                pixels: pixels.to_vec(),
                meta: [meta[0], meta[1], meta[2], meta[3]],
            });
        }
        Ok(Self {
            precision,
            height,
            width,
            channels,
            records,
        })
    }
}
