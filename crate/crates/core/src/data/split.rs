use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Dataset, Month};
use crate::augment::RandomSource;
use crate::error::{Error, Result};

/// Inclusive month range, written `YYYY-MM..YYYY-MM`, `YYYY-MM` or `YYYY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub start: Month,
    pub end: Month,
}

impl Period {
    pub fn new(start: Month, end: Month) -> Result<Self> {
        if start > end {
            return Err(Error::config("period", format!("{start} is after {end}")));
        }
        Ok(Period { start, end })
    }

    pub fn contains(&self, m: Month) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn overlaps(&self, other: &Period) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |e: Error| Error::config("period", format!("`{s}`: {e}"));
        if let Some((a, b)) = s.split_once("..") {
            return Period::new(a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        }
        if s.len() == 4 {
            let year: u16 = s
                .parse()
                .map_err(|_| Error::config("period", format!("`{s}` is not a year")))?;
            return Period::new(Month::new(year, 1)?, Month::new(year, 12)?);
        }
        let m: Month = s.parse().map_err(bad)?;
        Period::new(m, m)
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Partitions records by month into three disjoint periods; months outside
/// all three are dropped.
pub fn temporal_split(dataset: &Dataset, train: Period, validation: Period, test: Period) -> Result<TemporalSplit> {
    let named = [("train", train), ("validation", validation), ("test", test)];
    for i in 0..3 {
        for j in i + 1..3 {
            if named[i].1.overlaps(&named[j].1) {
                return Err(Error::config(
                    format!("split.{}", named[j].0),
                    format!("{} overlaps {} period {}", named[j].1, named[i].0, named[i].1),
                ));
            }
        }
    }
    Ok(TemporalSplit {
        train: dataset.filter(format!("{}:train", dataset.name), |r| train.contains(r.month)),
        validation: dataset.filter(format!("{}:val", dataset.name), |r| validation.contains(r.month)),
        test: dataset.filter(format!("{}:test", dataset.name), |r| test.contains(r.month)),
    })
}

/// Class-stratified labeled/unlabeled split with `round(ratio * N)` labeled
/// records. Per-class quotas use largest remainders; when at least two
/// records are labeled and both classes exist, each class gets at least one.
pub fn label_ratio_split(train: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config("label_ratio", format!("{ratio} outside [0, 1]")));
    }
    let n = train.len();
    let target = (ratio * n as f64).round() as usize;
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in train.records.iter().enumerate() {
        by_class[r.label as usize].push(i);
    }
    let exact: Vec<f64> = by_class.iter().map(|c| ratio * c.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = target - quota.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    if target >= 2 {
        for c in 0..2 {
            let other = 1 - c;
            if quota[c] == 0 && !by_class[c].is_empty() && quota[other] > 1 {
                quota[c] += 1;
                quota[other] -= 1;
            }
        }
    }

    let mut rng = RandomSource::new(seed);
    let mut labeled_idx = Vec::with_capacity(target);
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        labeled_idx.extend_from_slice(&members[..quota[c]]);
    }
    let mut is_labeled = vec![false; n];
    for &i in &labeled_idx {
        is_labeled[i] = true;
    }
    let pick = |want: bool, name: String| Dataset {
        name,
        feature_dim: train.feature_dim,
        records: train
            .records
            .iter()
            .zip(&is_labeled)
            .filter(|(_, &l)| l == want)
            .map(|(r, _)| r.clone())
            .collect(),
    };
    Ok((
        pick(true, format!("{}:labeled", train.name)),
        pick(false, format!("{}:unlabeled", train.name)),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLabels {
    pub dataset: Dataset,
    /// Positions whose labels were flipped, ascending.
    pub flipped: Vec<usize>,
}

/// Flips exactly `round(rate * N)` labels chosen uniformly without replacement.
pub fn inject_label_noise(labeled: &Dataset, rate: f64, seed: u64) -> Result<NoisyLabels> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config("noise_rate", format!("{rate} outside [0, 1]")));
    }
    let n = labeled.len();
    let count = (rate * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = RandomSource::new(seed);
    let (chosen, _) = idx.partial_shuffle(&mut rng, count);
    let mut flipped = chosen.to_vec();
    flipped.sort_unstable();
    let mut dataset = labeled.clone();
    for &i in &flipped {
        dataset.records[i].label = 1 - dataset.records[i].label;
    }
    Ok(NoisyLabels { dataset, flipped })
}
