//! Binary grid snapshots.
//!
//! Layout, little-endian: magic `QDSG`, version `u16`, axis count `u16`, one
//! `u64` point count per axis, one `f64` half-width per axis, then the payload
//! in row-major order, either `f64` values or interleaved `(re, im)` pairs.
//! Real and complex payloads are told apart by their length.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::WignerGrid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QDSG";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub counts: Vec<usize>,
    pub half_widths: Vec<f64>,
    pub data: SnapshotData,
}

impl Snapshot {
    pub fn from_wigner(w: &WignerGrid) -> Self {
        Self {
            counts: vec![w.grid_x.points, w.grid_xi.points],
            half_widths: vec![w.grid_x.half_width, w.grid_xi.half_width],
            data: SnapshotData::Real(w.values.clone()),
        }
    }

    fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        if self.counts.len() != self.half_widths.len() || self.counts.len() > u16::MAX as usize {
            return Err(Error::Format("axis metadata lengths disagree".into()));
        }
        let expected = self.len();
        let actual = match &self.data {
            SnapshotData::Real(v) => v.len(),
            SnapshotData::Complex(v) => v.len(),
        };
        if expected != actual {
            return Err(Error::Format(format!("payload has {actual} entries, axes give {expected}")));
        }
        let mut buf = Vec::with_capacity(16 + 16 * self.counts.len() + 16 * actual);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.counts.len() as u16).to_le_bytes());
        for &c in &self.counts {
            buf.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for &h in &self.half_widths {
            buf.extend_from_slice(&h.to_le_bytes());
        }
        match &self.data {
            SnapshotData::Real(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            SnapshotData::Complex(v) => v.iter().for_each(|z| {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let slice = bytes.get(pos..pos + n).ok_or_else(|| Error::Format("truncated header".into()))?;
            pos += n;
            Ok(slice)
        };
        if take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let axes = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let counts = (0..axes)
            .map(|_| Ok(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize))
            .collect::<Result<Vec<_>>>()?;
        let half_widths = (0..axes)
            .map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        let payload = &bytes[pos..];
        let len: usize = counts.iter().product();
        let floats: Vec<f64> =
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if payload.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64 values".into()));
        }
        let data = if floats.len() == len {
            SnapshotData::Real(floats)
        } else if floats.len() == 2 * len {
            SnapshotData::Complex(floats.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
        } else {
            return Err(Error::Format(format!(
                "payload has {} values, expected {len} or {}",
                floats.len(),
                2 * len
            )));
        };
        Ok(Self { counts, half_widths, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_and_complex_round_trip() {
        for data in [
            SnapshotData::Real(vec![1.0, -2.5, 3.0, 0.0, 1e-300, 7.0]),
            SnapshotData::Complex((0..6).map(|i| Complex64::new(i as f64, -(i as f64))).collect()),
        ] {
            let snap = Snapshot { counts: vec![2, 3], half_widths: vec![1.0, 4.5], data };
            let mut buf = Vec::new();
            snap.write_to(&mut buf).unwrap();
            assert_eq!(&buf[..4], MAGIC);
            assert_eq!(Snapshot::read_from(buf.as_slice()).unwrap(), snap);
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let snap = Snapshot { counts: vec![4], half_widths: vec![1.0], data: SnapshotData::Real(vec![0.0; 4]) };
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(Snapshot::read_from(buf.as_slice()).is_err());
        assert!(Snapshot::read_from(&b"QDSX"[..]).is_err());
    }
}
