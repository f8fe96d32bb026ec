//! Digitiser trace segments and their binary file format.
//!
//! A trace file is a concatenation of records. Each record is a 40-byte
//! little-endian header followed by `count` signed 16-bit samples:
//!
//! | offset | size | field                      |
//! |-------:|-----:|----------------------------|
//! | 0      | 4    | magic `PCTR`               |
//! | 4      | 2    | format version, `u16` = 1  |
//! | 6      | 2    | ADC bits, `u16`            |
//! | 8      | 8    | sample rate in Hz, `f64`   |
//! | 16     | 8    | volts per code, `f64`      |
//! | 24     | 8    | sequence id, `u64`         |
//! | 32     | 8    | sample count, `u64`        |
//! | 40     | 2·n  | samples, `i16`             |

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PCTR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 40;

/// One contiguous acquisition of ADC codes.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSegment {
    pub samples: Vec<i16>,
    pub sample_rate: f64,
    /// Volts per code.
    pub scale: f64,
    pub bits: u16,
    pub sequence_id: u64,
}

impl TraceSegment {
    pub fn new(samples: Vec<i16>, sample_rate: f64, scale: f64, bits: u16, sequence_id: u64) -> Result<Self> {
        let seg = TraceSegment {
            samples,
            sample_rate,
            scale,
            bits,
            sequence_id,
        };
        seg.validate()?;
        Ok(seg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::format(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::format(format!("invalid sample rate {}", self.sample_rate)));
        }
        if !(1..=16).contains(&self.bits) {
            return Err(Error::format(format!("unsupported bit depth {}", self.bits)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn volts(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64 * self.scale).collect()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 2 * self.samples.len()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(&MAGIC);
        header[4..6].copy_from_slice(&VERSION.to_le_bytes());
        header[6..8].copy_from_slice(&self.bits.to_le_bytes());
        header[8..16].copy_from_slice(&self.sample_rate.to_le_bytes());
        header[16..24].copy_from_slice(&self.scale.to_le_bytes());
        header[24..32].copy_from_slice(&self.sequence_id.to_le_bytes());
        header[32..40].copy_from_slice(&(self.samples.len() as u64).to_le_bytes());
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(2 * self.samples.len());
        for s in &self.samples {
            body.extend_from_slice(&s.to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    /// Reads one record; `Ok(None)` at a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            match r.read(&mut header[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if got == 0 {
            return Ok(None);
        }
        if got < HEADER_LEN {
            return Err(Error::format("truncated trace header"));
        }
        if header[0..4] != MAGIC {
            return Err(Error::format("bad magic, not a trace record"));
        }
        let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::format(format!("unsupported trace version {version}")));
        }
        let count = usize::try_from(u64_at(32)).map_err(|_| Error::format("sample count overflows"))?;
        let mut body = vec![0u8; 2 * count];
        r.read_exact(&mut body).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::format("truncated trace body"),
            _ => e.into(),
        })?;
        let samples = body
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        TraceSegment::new(samples, f64_at(8), f64_at(16), u16_at(6), u64_at(24)).map(Some)
    }
}

/// Iterates the records of a trace stream.
pub struct TraceReader<R: Read> {
    inner: R,
}

impl<R: Read> TraceReader<R> {
    pub fn new(inner: R) -> Self {
        TraceReader { inner }
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<TraceSegment>;

    fn next(&mut self) -> Option<Self::Item> {
        TraceSegment::read_from(&mut self.inner).transpose()
    }
}

/// Anything the convolution engine can read real samples from.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies samples `start..start+out.len()` as volts.
    fn fill(&self, start: usize, out: &mut [f64]);

    fn sample_rate(&self) -> Option<f64> {
        None
    }
}

impl SampleSource for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn fill(&self, start: usize, out: &mut [f64]) {
        out.copy_from_slice(&self[start..start + out.len()]);
    }
}

impl SampleSource for Vec<f64> {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn fill(&self, start: usize, out: &mut [f64]) {
        out.copy_from_slice(&self[start..start + out.len()]);
    }
}

impl SampleSource for TraceSegment {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn fill(&self, start: usize, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.samples[start..]) {
            *o = *s as f64 * self.scale;
        }
    }

    fn sample_rate(&self) -> Option<f64> {
        Some(self.sample_rate)
    }
}

impl<T: SampleSource + ?Sized> SampleSource for &T {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn fill(&self, start: usize, out: &mut [f64]) {
        (**self).fill(start, out)
    }

    fn sample_rate(&self) -> Option<f64> {
        (**self).sample_rate()
    }
}
