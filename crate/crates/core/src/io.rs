//! Serialization helpers shared by the exporters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::CMat;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Complex matrix as nested row-major real and imaginary arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl ComplexMatrixJson {
    pub fn from_matrix(a: &CMat) -> Self {
        let re = (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| a[(i, j)].re).collect())
            .collect();
        let im = (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| a[(i, j)].im).collect())
            .collect();
        Self { re, im: Some(im) }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if self.re.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidModel("ragged real part".into()));
        }
        if let Some(im) = &self.im {
            if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                return Err(Error::InvalidModel(
                    "imaginary part shape differs from real part".into(),
                ));
            }
        }
        Ok(CMat::from_fn(rows, cols, |i, j| {
            let im = self.im.as_ref().map_or(0.0, |m| m[i][j]);
            Complex64::new(self.re[i][j], im)
        }))
    }
}

/// Full-precision scientific notation (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a value's canonical (compact, field-ordered) JSON encoding.
pub fn json_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}
