//! Runtime and operation-count benchmark.
//!
//! For each pool size `n`: one epoch of semi-supervised training over an
//! `n`-sample unlabeled pool and a fixed labeled seed set, one multi-criteria
//! selection of `budget` samples, and one retraining epoch on the updated
//! pools. Operations are counted analytically from layer shapes and batch
//! sizes; distances are counted at their brute-force cost.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::RandomSource;
use crate::data::{synth_drift_generate, DriftGeneratorConfig};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::net::Classifier;
use crate::par;
use crate::selection::{embed_all, select, SelectorConfig};
use crate::trainer::{train, EpochBasis, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub budget: usize,
    /// Size of the labeled seed set, held fixed across pool sizes.
    pub labeled: usize,
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![100, 1_000, 5_000, 10_000],
            budget: 400,
            labeled: 1_000,
            dim: 200,
            hidden: vec![64, 32],
            batch: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub seconds: f64,
    pub operations: u64,
    pub train_operations: u64,
    pub selection_operations: u64,
    pub retrain_operations: u64,
}

/// Brute-force cost of nearest-labeled distances: subtract, power and
/// accumulate per coordinate of every pair, plus one root per query.
pub fn distance_ops(pool: usize, labeled: usize, embedding_dim: usize) -> u64 {
    let (p, l, e) = (pool as u64, labeled as u64, embedding_dim as u64);
    p * l * 3 * e + p
}

/// Forward passes over pool and labeled set plus the distance search.
pub fn selection_ops(model: &Classifier, pool: usize, labeled: usize) -> u64 {
    model.forward_ops(pool) + model.forward_ops(labeled) + distance_ops(pool, labeled, model.embedding_dim())
}

fn bench_one(cfg: &BenchConfig, n: usize) -> Result<BenchRecord> {
    let per_class = (n + cfg.labeled).div_ceil(2);
    let data = synth_drift_generate(&DriftGeneratorConfig {
        name: format!("bench-{n}"),
        dim: cfg.dim,
        months: 1,
        samples_per_class: per_class,
        seed: cfg.seed,
        ..Default::default()
    })?
    .dataset;
    let (seed_set, pool) = data.records.split_at(cfg.labeled);
    let pool = &pool[..n];
    let mut labeled: Vec<&FeatureVector> = seed_set.iter().map(|r| &r.features).collect();
    let mut labels: Vec<u8> = seed_set.iter().map(|r| r.label).collect();
    let pool_feats: Vec<&FeatureVector> = pool.iter().map(|r| &r.features).collect();

    let tcfg = TrainConfig {
        epochs: 1,
        labeled_batch: cfg.batch,
        unlabeled_batch: cfg.batch,
        epoch_basis: EpochBasis::Unlabeled,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut model = Classifier::mlp(cfg.dim, &cfg.hidden, cfg.seed)?;

    let start = Instant::now();
    let first = train(&mut model, &labeled, &labels, &pool_feats, &tcfg)?;
    let emb = embed_all(&model, &labeled)?;
    let mut rng = RandomSource::new(cfg.seed);
    let chosen = select(&pool_feats, &model, emb.view(), &SelectorConfig::default(), cfg.budget, &mut rng)?;
    let selection_operations = selection_ops(&model, pool_feats.len(), labeled.len());
    let mut take = vec![false; n];
    for &i in &chosen.indices {
        take[i] = true;
        labeled.push(&pool[i].features);
        labels.push(pool[i].label);
    }
    let rest: Vec<&FeatureVector> = pool_feats.iter().zip(&take).filter(|(_, &t)| !t).map(|(x, _)| *x).collect();
    let second = train(&mut model, &labeled, &labels, &rest, &tcfg)?;
    let seconds = start.elapsed().as_secs_f64();

    Ok(BenchRecord {
        n,
        seconds,
        operations: first.operations + selection_operations + second.operations,
        train_operations: first.operations,
        selection_operations,
        retrain_operations: second.operations,
    })
}

/// One record per pool size, run on a single worker for stable timings.
pub fn bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.labeled < 2 {
        return Err(Error::config("bench.labeled", "needs at least two labeled samples"));
    }
    if cfg.batch == 0 {
        return Err(Error::config("bench.batch", "must be >= 1"));
    }
    par::with_single_worker(|| cfg.sizes.iter().map(|&n| bench_one(cfg, n)).collect())
}

pub const BENCH_COLUMNS: [&str; 6] = [
    "n",
    "seconds",
    "operations",
    "train_operations",
    "selection_operations",
    "retrain_operations",
];

pub fn write_bench_csv(path: &std::path::Path, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(BENCH_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
