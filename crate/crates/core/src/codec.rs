//! JSON helpers shared by the decomposition and DMD exports.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout tag written next to every encoded matrix.
pub const COMPLEX_LAYOUT: &str = "column-major, interleaved re/im, float64 little-endian";

/// A complex matrix as base64 of its float64 little-endian values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub layout: String,
    pub data: String,
}

impl EncodedMatrix {
    pub fn encode(m: &Mat<c64>) -> Self {
        let mut bytes = Vec::with_capacity(m.nrows() * m.ncols() * 16);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                bytes.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                bytes.extend_from_slice(&m[(i, j)].im.to_le_bytes());
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            layout: COMPLEX_LAYOUT.to_owned(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Mat<c64>> {
        if self.layout != COMPLEX_LAYOUT {
            return Err(Error::Serialization(format!(
                "unknown matrix layout {:?}",
                self.layout
            )));
        }
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        if bytes.len() != self.rows * self.cols * 16 {
            return Err(Error::Serialization(format!(
                "matrix payload has {} bytes, expected {}",
                bytes.len(),
                self.rows * self.cols * 16
            )));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rows = self.rows;
        Ok(Mat::from_fn(rows, self.cols, |i, j| {
            let k = 2 * (j * rows + i);
            c64::new(vals[k], vals[k + 1])
        }))
    }
}

pub fn pairs(values: &[c64]) -> Vec<[f64; 2]> {
    values.iter().map(|z| [z.re, z.im]).collect()
}

pub fn unpairs(values: &[[f64; 2]]) -> Vec<c64> {
    values.iter().map(|p| c64::new(p[0], p[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_exact() {
        let m = Mat::from_fn(3, 2, |i, j| c64::new(i as f64 / 3.0, -(j as f64) * 1e-300));
        let back = EncodedMatrix::encode(&m).decode().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bad_payload() {
        let mut e = EncodedMatrix::encode(&Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0)));
        e.rows = 2;
        assert!(e.decode().is_err());
    }
}
