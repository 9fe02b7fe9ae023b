use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 4] = b"RCPM";

/// Every trainable scalar of a model, in one contiguous vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams(Vec<f64>);

impl FlatParams {
    /// Rejects NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("FlatParams"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `"RCPM"`, little-endian `u32` length, then the raw little-endian `f64`s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.0.len());
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&(self.0.len() as u32).to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a blob produced by [`to_bytes`](Self::to_bytes); returns the
    /// parameters and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 8 || &bytes[..4] != PARAMS_MAGIC {
            return Err(Error::Format("missing RCPM magic".into()));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let end = 8 + 8 * len;
        if bytes.len() < end {
            return Err(Error::Format(format!(
                "truncated parameter blob: need {end} bytes, have {}",
                bytes.len()
            )));
        }
        let values = bytes[8..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((Self::new(values)?, end))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "value")?;
        for v in &self.0 {
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if i == 0 && line == "value" || line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Format(format!("line {}: not a number: {line:?}", i + 1)))?;
            values.push(v);
        }
        Self::new(values)
    }
}

impl AsRef<[f64]> for FlatParams {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
