//! Synthetic month-by-month stream with drifting class-conditional rates.
//!
//! Every feature has a role: shared (same Bernoulli rate in both classes) or
//! indicative of one class (high rate in that class, low in the other).
//! Samples are products of independent Bernoulli draws from the per-class
//! rates of their month. Between consecutive months each feature is, with
//! probability `drift_rate`, given a fresh role and fresh rates, so the
//! evidence the classes leave in feature space migrates over time.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureRecord, Month};
use crate::augment::RandomSource;
use crate::error::{Error, Result};
use crate::feature::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftGeneratorConfig {
    pub name: String,
    pub dim: usize,
    pub months: usize,
    pub start_month: Month,
    pub samples_per_class: usize,
    /// Per-month probability that a feature is re-drawn.
    pub drift_rate: f64,
    /// Fraction of features that carry no class signal.
    pub overlap: f64,
    /// Explicit initial `[benign, malware]` rates; drawn from the role prior
    /// when absent.
    pub class_probs: Option<[Vec<f64>; 2]>,
    /// Rate range of an indicative feature inside its own class.
    pub active_prob: (f64, f64),
    /// Rate range of an indicative feature inside the other class.
    pub inactive_prob: (f64, f64),
    /// Rate range of shared features.
    pub shared_prob: (f64, f64),
    pub seed: u64,
}

impl Default for DriftGeneratorConfig {
    fn default() -> Self {
        DriftGeneratorConfig {
            name: "synthetic".into(),
            dim: 200,
            months: 24,
            start_month: Month { year: 2012, month: 1 },
            samples_per_class: 500,
            drift_rate: 0.15,
            overlap: 0.8,
            class_probs: None,
            active_prob: (0.15, 0.35),
            inactive_prob: (0.02, 0.10),
            shared_prob: (0.02, 0.30),
            seed: 0,
        }
    }
}

fn check_range(path: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::config(path, format!("range ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1")));
    }
    Ok(())
}

impl DriftGeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("generator.dim", "must be positive"));
        }
        if self.months == 0 {
            return Err(Error::config("generator.months", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.drift_rate) {
            return Err(Error::config("generator.drift_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::config("generator.overlap", "must lie in [0, 1]"));
        }
        check_range("generator.active_prob", self.active_prob)?;
        check_range("generator.inactive_prob", self.inactive_prob)?;
        check_range("generator.shared_prob", self.shared_prob)?;
        if let Some(probs) = &self.class_probs {
            for (c, p) in probs.iter().enumerate() {
                if p.len() != self.dim {
                    return Err(Error::config(
                        format!("generator.class_probs[{c}]"),
                        format!("length {} differs from dim {}", p.len(), self.dim),
                    ));
                }
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config(
                        format!("generator.class_probs[{c}]"),
                        "probabilities must lie in [0, 1]",
                    ));
                }
            }
        }
        Ok(())
    }

    fn draw_feature(&self, rng: &mut RandomSource) -> [f64; 2] {
        fn uniform(rng: &mut RandomSource, (lo, hi): (f64, f64)) -> f64 {
            lo + (hi - lo) * rng.random::<f64>()
        }
        if rng.bernoulli(self.overlap) {
            let p = uniform(rng, self.shared_prob);
            [p, p]
        } else if rng.bernoulli(0.5) {
            [uniform(rng, self.active_prob), uniform(rng, self.inactive_prob)]
        } else {
            [uniform(rng, self.inactive_prob), uniform(rng, self.active_prob)]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub dataset: Dataset,
    /// Per month, the `[benign, malware]` Bernoulli rates per feature.
    pub class_probs: Vec<[Vec<f64>; 2]>,
}

pub fn synth_drift_generate(cfg: &DriftGeneratorConfig) -> Result<SyntheticStream> {
    cfg.validate()?;
    let mut rng = RandomSource::new(cfg.seed);
    let mut probs: [Vec<f64>; 2] = match &cfg.class_probs {
        Some(p) => p.clone(),
        None => {
            let mut benign = Vec::with_capacity(cfg.dim);
            let mut malware = Vec::with_capacity(cfg.dim);
            for _ in 0..cfg.dim {
                let [b, m] = cfg.draw_feature(&mut rng);
                benign.push(b);
                malware.push(m);
            }
            [benign, malware]
        }
    };

    let mut records = Vec::with_capacity(cfg.months * cfg.samples_per_class * 2);
    let mut history = Vec::with_capacity(cfg.months);
    for t in 0..cfg.months {
        if t > 0 {
            for i in 0..cfg.dim {
                if rng.bernoulli(cfg.drift_rate) {
                    let [b, m] = cfg.draw_feature(&mut rng);
                    probs[0][i] = b;
                    probs[1][i] = m;
                }
            }
        }
        let month = cfg.start_month.plus(t);
        let mut batch = Vec::with_capacity(cfg.samples_per_class * 2);
        for label in [0u8, 1] {
            let rates = &probs[label as usize];
            for k in 0..cfg.samples_per_class {
                let features = FeatureVector::from_bools(rates.iter().map(|&p| rng.bernoulli(p)));
                batch.push(FeatureRecord {
                    id: format!("{month}-{}{k:05}", if label == 1 { 'm' } else { 'b' }),
                    month,
                    label,
                    features,
                    family: None,
                });
            }
        }
        batch.shuffle(&mut rng);
        records.extend(batch);
        history.push(probs.clone());
    }
    Ok(SyntheticStream {
        dataset: Dataset::new(cfg.name.clone(), cfg.dim, records)?,
        class_probs: history,
    })
}
