//! Studies layered on the trainer and stream harness: month splitting,
//! label-ratio comparison against supervised-only training, and label-noise
//! sweeps.

use serde::{Deserialize, Serialize};

use crate::data::{label_ratio_split, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MonthlyMetrics};
use crate::net::Classifier;
use crate::stream::{run_experiment, StreamConfig, StreamResult, StreamSetup};
use crate::trainer::{predict_labels, train, TrainConfig};

/// Chronological split by month position: the first `train_months` months
/// for initial training, the next `skip_months` dropped (validation), then
/// up to `stream_months` months replayed as the stream (all if `None`).
pub fn split_months(
    dataset: &Dataset,
    train_months: usize,
    skip_months: usize,
    stream_months: Option<usize>,
) -> Result<(Dataset, Vec<Dataset>)> {
    if train_months == 0 {
        return Err(Error::config("split.train_months", "must be >= 1"));
    }
    let groups: Vec<Dataset> = dataset.split_by_month().into_iter().map(|(_, d)| d).collect();
    if groups.len() < train_months + skip_months {
        return Err(Error::data(
            &dataset.name,
            format!(
                "{} months available, split needs at least {}",
                groups.len(),
                train_months + skip_months
            ),
        ));
    }
    let train = Dataset::concat(format!("{}:train", dataset.name), &groups[..train_months].iter().collect::<Vec<_>>())?;
    let rest = &groups[train_months + skip_months..];
    let take = stream_months.unwrap_or(rest.len()).min(rest.len());
    Ok((train, rest[..take].to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub ratio: f64,
    pub seed: u64,
    pub ssl: MonthlyMetrics,
    /// Same labeled subset and initialization, plain cross-entropy.
    pub supervised: MonthlyMetrics,
}

fn evaluate(model: &Classifier, test: &Dataset) -> Result<MonthlyMetrics> {
    compute_metrics(&predict_labels(model, &test.features())?, &test.labels())
}

/// Trains once with the full objective on `(D_l, D_u)` and once on `D_l`
/// alone with cross-entropy only, for every ratio and seed, and scores both
/// on `test`.
pub fn label_ratio_study(
    train_set: &Dataset,
    test: &Dataset,
    ratios: &[f64],
    hidden: &[usize],
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<RatioRecord>> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::data(&test.name, "held-out set is empty"));
    }
    let mut out = Vec::with_capacity(ratios.len() * seeds.len());
    for &ratio in ratios {
        for &seed in seeds {
            let (labeled, unlabeled) = label_ratio_split(train_set, ratio, seed)?;
            if labeled.is_empty() {
                return Err(Error::config("label_ratio", format!("{ratio} leaves no labeled samples")));
            }
            let mut run_cfg = *cfg;
            run_cfg.seed = seed;
            let mut ssl = Classifier::mlp(train_set.feature_dim, hidden, seed)?;
            train(&mut ssl, &labeled.features(), &labeled.labels(), &unlabeled.features(), &run_cfg)?;

            let mut sup_cfg = run_cfg;
            sup_cfg.loss.lambda_con = 0.0;
            let mut sup = Classifier::mlp(train_set.feature_dim, hidden, seed)?;
            train(&mut sup, &labeled.features(), &labeled.labels(), &[], &sup_cfg)?;

            out.push(RatioRecord {
                ratio,
                seed,
                ssl: evaluate(&ssl, test)?,
                supervised: evaluate(&sup, test)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub rate: f64,
    pub result: StreamResult,
}

/// One full experiment per noise rate; the rate applies to the initial
/// labeled set only, oracle answers stay clean.
pub fn noise_sweep(setup: &StreamSetup, cfg: &StreamConfig, rates: &[f64]) -> Result<Vec<NoisePoint>> {
    for &rate in rates {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::config("noise.rates", format!("{rate} outside [0, 1]")));
        }
    }
    rates
        .iter()
        .map(|&rate| {
            let noisy = StreamSetup {
                noise_rate: rate,
                ..setup.clone()
            };
            let mut result = run_experiment(&noisy, cfg)?;
            result.label = format!("noise{:.0}/{}", 100.0 * rate, result.label);
            Ok(NoisePoint { rate, result })
        })
        .collect()
}
