//! Month-tagged binary feature records and the operations that carve them
//! into training, validation, stream and labeled/unlabeled pools.

mod format;
mod split;
mod synth;

pub use format::{
    load_dataset, write_dataset, DatasetManifest, MonthEntry, ShardEncoding, MANIFEST_FILE,
};
pub use split::{inject_label_noise, label_ratio_split, temporal_split, NoisyLabels, Period, TemporalSplit};
pub use synth::{synth_drift_generate, DriftGeneratorConfig, SyntheticStream};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::feature::{to_matrix, FeatureVector};

pub const BENIGN: u8 = 0;
pub const MALWARE: u8 = 1;

/// Calendar month, written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: u16,
    pub month: u8,
}

impl Month {
    pub fn new(year: u16, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Precondition(format!("month {month} outside 1..=12")));
        }
        Ok(Month { year, month })
    }

    pub fn next(self) -> Month {
        if self.month == 12 {
            Month {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Month {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// The month `n` steps later.
    pub fn plus(self, n: usize) -> Month {
        (0..n).fold(self, |m, _| m.next())
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("`{s}` is not a YYYY-MM month"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub month: Month,
    /// 0 benign, 1 malware.
    pub label: u8,
    pub features: FeatureVector,
    /// Reserved for reporting; nothing consumes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

/// Records of one feature dimension, kept in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub records: Vec<FeatureRecord>,
}

impl Dataset {
    /// Validates dimensions and labels, then sorts records by month
    /// (stable, so within-month order is preserved).
    pub fn new(name: impl Into<String>, feature_dim: usize, mut records: Vec<FeatureRecord>) -> Result<Self> {
        let name = name.into();
        for r in &records {
            if r.features.len() != feature_dim {
                return Err(Error::data(
                    &name,
                    format!("record {} has {} features, expected {feature_dim}", r.id, r.features.len()),
                ));
            }
            if r.label > 1 {
                return Err(Error::data(&name, format!("record {} has label {}", r.id, r.label)));
            }
        }
        records.sort_by_key(|r| r.month);
        Ok(Dataset {
            name,
            feature_dim,
            records,
        })
    }

    pub fn empty_like(&self, name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            feature_dim: self.feature_dim,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct months in chronological order.
    pub fn months(&self) -> Vec<Month> {
        let mut months: Vec<Month> = self.records.iter().map(|r| r.month).collect();
        months.dedup();
        months
    }

    /// One dataset per month, chronological.
    pub fn split_by_month(&self) -> Vec<(Month, Dataset)> {
        let mut out: Vec<(Month, Dataset)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some((m, ds)) if *m == r.month => ds.records.push(r.clone()),
                _ => {
                    let mut ds = self.empty_like(format!("{}:{}", self.name, r.month));
                    ds.records.push(r.clone());
                    out.push((r.month, ds));
                }
            }
        }
        out
    }

    pub fn filter(&self, name: impl Into<String>, keep: impl Fn(&FeatureRecord) -> bool) -> Dataset {
        Dataset {
            name: name.into(),
            feature_dim: self.feature_dim,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn features(&self) -> Vec<&FeatureVector> {
        self.records.iter().map(|r| &r.features).collect()
    }

    pub fn matrix(&self) -> Array2<f64> {
        to_matrix(self.records.iter().map(|r| &r.features), self.feature_dim)
    }

    /// `(benign, malware)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let malware = self.records.iter().filter(|r| r.label == MALWARE).count();
        (self.records.len() - malware, malware)
    }

    pub fn concat(name: impl Into<String>, parts: &[&Dataset]) -> Result<Dataset> {
        let dim = parts.first().map(|d| d.feature_dim).unwrap_or(0);
        let records = parts.iter().flat_map(|d| d.records.iter().cloned()).collect();
        Dataset::new(name, dim, records)
    }
}
