use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `n_rows × d` matrix of finite features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    d: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major data. Entries must be finite; the
    /// `[0, 1]` range is a convention of the preprocessing stage and is not
    /// enforced here, so raw coordinates can be clustered too.
    pub fn new(n_rows: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::contract("feature matrix needs at least one column"));
        }
        if data.len() != n_rows * d {
            return Err(Error::contract(format!(
                "expected {} entries for {n_rows}x{d}, got {}",
                n_rows * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("feature matrix entries must be finite"));
        }
        Ok(Self { n_rows, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::contract("ragged rows"));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn take_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            d: self.d,
            data,
        }
    }
}
