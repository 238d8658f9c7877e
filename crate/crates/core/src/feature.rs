use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary feature vector; every entry is 0 (absent) or 1 (present).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<u8>);

impl FeatureVector {
    /// Builds a vector from 0/1 values, rejecting anything else.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Precondition(format!(
                "feature {pos} has value {}, expected 0 or 1",
                bits[pos]
            )));
        }
        Ok(FeatureVector(bits))
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        FeatureVector(bits.into_iter().map(u8::from).collect())
    }

    pub fn zeros(len: usize) -> Self {
        FeatureVector(vec![0; len])
    }

    pub fn ones(len: usize) -> Self {
        FeatureVector(vec![1; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as f64).collect()
    }
}

/// Stacks feature vectors into a `(rows, dim)` real matrix.
pub fn to_matrix<'a, I>(rows: I, dim: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for row in rows {
        debug_assert_eq!(row.len(), dim);
        data.extend(row.bits().iter().map(|&b| b as f64));
        n += 1;
    }
    Array2::from_shape_vec((n, dim), data).expect("rows share one dimension")
}
