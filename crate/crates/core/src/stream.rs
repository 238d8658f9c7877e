//! Monthly stream replay with budgeted oracle labeling.
//!
//! Each month is first evaluated with the current model, then added to the
//! unlabeled pool. The selector picks up to `budget` pool samples, the oracle
//! labels them, they move to the labeled pool, and the model is retrained on
//! both pools before the next month arrives.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::augment::RandomSource;
use crate::data::{inject_label_noise, label_ratio_split, Dataset, FeatureRecord, Month};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::metrics::{aggregate, compute_metrics, AggregateMetrics, MonthlyMetrics, ReportRow, RunSummary, Summary};
use crate::net::Classifier;
use crate::selection::{embed_all, select, SelectorConfig};
use crate::trainer::{predict_labels, train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Oracle labels bought per month.
    pub budget: usize,
    pub selector: SelectorConfig,
    /// Monthly retraining; its seed is replaced per run and month.
    pub retrain: TrainConfig,
    /// Continue from current parameters; otherwise reinitialize each month.
    pub warm_start: bool,
    pub seeds: Vec<u64>,
    /// Keep only the most recent this-many months of streamed samples in the
    /// unlabeled pool. The initial unlabeled pool is never evicted.
    pub window_months: Option<usize>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            budget: 50,
            selector: SelectorConfig::default(),
            retrain: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            warm_start: true,
            seeds: vec![0],
            window_months: None,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("stream.seeds", "at least one seed is required"));
        }
        if self.window_months == Some(0) {
            return Err(Error::config("stream.window_months", "must be >= 1 when set"));
        }
        self.selector.validate()?;
        self.retrain.validate()
    }
}

/// Ground-truth labels for every streamed sample.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    labels: HashMap<String, u8>,
}

impl Oracle {
    pub fn from_datasets<'a>(sets: impl IntoIterator<Item = &'a Dataset>) -> Self {
        let labels = sets
            .into_iter()
            .flat_map(|d| d.records.iter().map(|r| (r.id.clone(), r.label)))
            .collect();
        Oracle { labels }
    }

    pub fn label(&self, id: &str) -> Result<u8> {
        self.labels
            .get(id)
            .copied()
            .ok_or_else(|| Error::State(format!("oracle has no label for `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A pool sample whose label is not visible to the learner.
#[derive(Debug, Clone, PartialEq)]
struct Hidden {
    id: String,
    month: Month,
    features: FeatureVector,
    streamed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSample {
    pub id: String,
    pub label: u8,
    pub margin: f64,
    pub lp_distance: f64,
    pub confidence: f64,
    pub hybrid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub metrics: MonthlyMetrics,
    pub selected: Vec<SelectedSample>,
    pub labeled_size: usize,
    pub unlabeled_size: usize,
    /// Logical clock at evaluation and at labeling; evaluation comes first.
    pub evaluated_at: u64,
    pub labeled_at: u64,
    pub retrain_final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRun {
    pub seed: u64,
    pub months: Vec<MonthRecord>,
    /// Invariant breaches observed during the run; empty on a healthy run.
    pub violations: Vec<String>,
}

impl StreamRun {
    pub fn metrics(&self) -> impl Iterator<Item = &MonthlyMetrics> + Clone {
        self.months.iter().map(|m| &m.metrics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub label: String,
    pub runs: Vec<StreamRun>,
    /// Over all months of all runs.
    pub aggregate: AggregateMetrics,
}

impl StreamResult {
    pub fn new(label: impl Into<String>, runs: Vec<StreamRun>) -> Self {
        let aggregate = aggregate(runs.iter().flat_map(|r| r.months.iter().map(|m| &m.metrics)).collect::<Vec<_>>());
        StreamResult {
            label: label.into(),
            runs,
            aggregate,
        }
    }

    pub fn mean_f1(&self) -> Option<f64> {
        self.aggregate.f1.mean
    }

    /// F1 summary per month position across runs.
    pub fn monthly_f1(&self) -> Vec<Summary> {
        let n = self.runs.iter().map(|r| r.months.len()).max().unwrap_or(0);
        (0..n)
            .map(|t| Summary::of(self.runs.iter().filter_map(|r| r.months.get(t)).map(|m| m.metrics.f1)))
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        self.runs
            .iter()
            .flat_map(|r| r.violations.iter().map(move |v| format!("seed {}: {v}", r.seed)))
            .collect()
    }

    pub fn report_rows(&self) -> Vec<ReportRow> {
        self.runs
            .iter()
            .flat_map(|r| r.months.iter().map(|m| ReportRow::new(&self.label, r.seed, &m.metrics)))
            .collect()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary::new(&self.label, &self.aggregate)
    }
}

fn retrain_seed(seed: u64, month_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(month_index as u64 + 1)
}

/// Replays `months` once. `labeled` carries the labels the learner believes;
/// `unlabeled` labels are never read.
pub fn run_stream(
    mut model: Classifier,
    labeled: &Dataset,
    unlabeled: &Dataset,
    months: &[Dataset],
    oracle: &Oracle,
    cfg: &StreamConfig,
    seed: u64,
) -> Result<StreamRun> {
    cfg.validate()?;
    for w in months.windows(2) {
        if let (Some(a), Some(b)) = (w[0].records.last(), w[1].records.first()) {
            if a.month >= b.month {
                return Err(Error::Precondition(format!("stream months out of order: {} then {}", a.month, b.month)));
            }
        }
    }
    let mut d_l: Vec<FeatureRecord> = labeled.records.clone();
    let mut d_u: Vec<Hidden> = unlabeled
        .records
        .iter()
        .map(|r| Hidden {
            id: r.id.clone(),
            month: r.month,
            features: r.features.clone(),
            streamed: false,
        })
        .collect();
    let mut total = d_l.len() + d_u.len();
    let mut evicted = 0usize;
    let mut clock = 0u64;
    let mut violations = Vec::new();
    let mut records = Vec::with_capacity(months.len());
    let mut select_rng = RandomSource::substream(seed, 3);

    for (t, month_data) in months.iter().enumerate() {
        let month_label = month_data
            .records
            .first()
            .map(|r| r.month.to_string())
            .unwrap_or_else(|| format!("#{t}"));

        // 1. evaluate before anything from this month is labeled
        clock += 1;
        let evaluated_at = clock;
        let month_ids: HashSet<&str> = month_data.records.iter().map(|r| r.id.as_str()).collect();
        if d_l.iter().any(|r| month_ids.contains(r.id.as_str())) {
            violations.push(format!("{month_label}: month sample labeled before evaluation"));
        }
        let preds = predict_labels(&model, &month_data.features())?;
        let mut metrics = compute_metrics(&preds, &month_data.labels())?;
        if let Some(r) = month_data.records.first() {
            metrics = metrics.with_month(r.month);
        }

        // 2. grow the unlabeled pool
        d_u.extend(month_data.records.iter().map(|r| Hidden {
            id: r.id.clone(),
            month: r.month,
            features: r.features.clone(),
            streamed: true,
        }));
        total += month_data.len();
        if let (Some(w), Some(r)) = (cfg.window_months, month_data.records.first()) {
            let horizon = months
                .get((t + 1).saturating_sub(w))
                .and_then(|d| d.records.first())
                .map(|x| x.month)
                .unwrap_or(r.month);
            let before = d_u.len();
            d_u.retain(|h| !h.streamed || h.month >= horizon);
            evicted += before - d_u.len();
        }

        // 3-4. select, query the oracle, move to the labeled pool
        let mut selected = Vec::new();
        let labeled_before = d_l.len();
        clock += 1;
        let labeled_at = clock;
        if cfg.budget > 0 && !d_u.is_empty() {
            let pool: Vec<&FeatureVector> = d_u.iter().map(|h| &h.features).collect();
            let l_feats: Vec<&FeatureVector> = d_l.iter().map(|r| &r.features).collect();
            let l_emb = embed_all(&model, &l_feats)?;
            let sel = select(&pool, &model, l_emb.view(), &cfg.selector, cfg.budget, &mut select_rng)?;
            let expected = cfg.budget.min(d_u.len());
            let filtering = matches!(cfg.selector.kind, crate::selection::SelectorKind::LowConfidenceOnly)
                || cfg.selector.intersection_quantile.is_some();
            if sel.indices.len() > expected || (!filtering && sel.indices.len() != expected) {
                violations.push(format!(
                    "{month_label}: selected {} samples, expected {expected}",
                    sel.indices.len()
                ));
            }
            let mut take = vec![false; d_u.len()];
            for &i in &sel.indices {
                take[i] = true;
                let h = &d_u[i];
                let label = oracle.label(&h.id)?;
                let s = sel.scores[i];
                selected.push(SelectedSample {
                    id: h.id.clone(),
                    label,
                    margin: s.margin,
                    lp_distance: s.lp_distance,
                    confidence: s.confidence,
                    hybrid: s.hybrid,
                });
                d_l.push(FeatureRecord {
                    id: h.id.clone(),
                    month: h.month,
                    label,
                    features: h.features.clone(),
                    family: None,
                });
            }
            let mut k = 0;
            d_u.retain(|_| {
                k += 1;
                !take[k - 1]
            });
        }
        if d_l.len() - labeled_before != selected.len() {
            violations.push(format!("{month_label}: labeled pool grew by {}", d_l.len() - labeled_before));
        }

        // pool invariants
        if d_l.len() + d_u.len() + evicted != total {
            violations.push(format!(
                "{month_label}: |D_l| + |D_u| = {} + {}, expected {}",
                d_l.len(),
                d_u.len(),
                total - evicted
            ));
        }
        let l_ids: HashSet<&str> = d_l.iter().map(|r| r.id.as_str()).collect();
        if l_ids.len() != d_l.len() {
            violations.push(format!("{month_label}: duplicate ids in labeled pool"));
        }
        if d_u.iter().any(|h| l_ids.contains(h.id.as_str())) {
            violations.push(format!("{month_label}: labeled and unlabeled pools intersect"));
        }
        if evaluated_at >= labeled_at {
            violations.push(format!("{month_label}: evaluation did not precede labeling"));
        }

        // 5. retrain; a zero budget leaves the model untouched
        let mut retrain_final_loss = None;
        if cfg.budget > 0 {
            let mut tcfg = cfg.retrain;
            tcfg.seed = retrain_seed(seed, t);
            if !cfg.warm_start {
                model = Classifier::new(model.architecture().to_vec(), tcfg.seed)?;
            }
            let l_feats: Vec<&FeatureVector> = d_l.iter().map(|r| &r.features).collect();
            let l_labels: Vec<u8> = d_l.iter().map(|r| r.label).collect();
            let u_feats: Vec<&FeatureVector> = d_u.iter().map(|h| &h.features).collect();
            let report = train(&mut model, &l_feats, &l_labels, &u_feats, &tcfg)?;
            retrain_final_loss = report.final_loss();
        }

        records.push(MonthRecord {
            metrics,
            selected,
            labeled_size: d_l.len(),
            unlabeled_size: d_u.len(),
            evaluated_at,
            labeled_at,
            retrain_final_loss,
        });
    }
    Ok(StreamRun {
        seed,
        months: records,
        violations,
    })
}

/// Everything a set of stream runs shares: the training period, the stream
/// months and how the initial model is built.
#[derive(Debug, Clone)]
pub struct StreamSetup {
    pub train: Dataset,
    pub months: Vec<Dataset>,
    pub label_ratio: f64,
    /// Fraction of initial labels flipped; oracle answers stay clean.
    pub noise_rate: f64,
    pub hidden: Vec<usize>,
    pub initial: TrainConfig,
}

impl StreamSetup {
    /// True labels of everything that can sit in the unlabeled pool.
    pub fn oracle(&self) -> Oracle {
        Oracle::from_datasets(std::iter::once(&self.train).chain(&self.months))
    }

    /// Splits the training period, injects label noise and trains the
    /// starting model for one seed.
    pub fn initial_state(&self, seed: u64) -> Result<InitialState> {
        if self.train.is_empty() {
            return Err(Error::data(&self.train.name, "training period is empty"));
        }
        let (labeled, unlabeled) = label_ratio_split(&self.train, self.label_ratio, seed)?;
        let labeled = if self.noise_rate > 0.0 {
            inject_label_noise(&labeled, self.noise_rate, seed ^ 0x6e_6f69_7365)?.dataset
        } else {
            labeled
        };
        let mut model = Classifier::mlp(self.train.feature_dim, &self.hidden, seed)?;
        let mut cfg = self.initial;
        cfg.seed = seed;
        let report = train(&mut model, &labeled.features(), &labeled.labels(), &unlabeled.features(), &cfg)?;
        Ok(InitialState {
            seed,
            model,
            labeled,
            unlabeled,
            report,
        })
    }
}

#[derive(Debug, Clone)]
pub struct InitialState {
    pub seed: u64,
    pub model: Classifier,
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub report: TrainReport,
}

fn run_label(cfg: &StreamConfig) -> String {
    format!("{}/k{}", cfg.selector.kind.name(), cfg.budget)
}

/// Runs the stream from precomputed initial states, one per seed.
pub fn run_from_states(
    states: &[InitialState],
    months: &[Dataset],
    oracle: &Oracle,
    cfg: &StreamConfig,
) -> Result<StreamResult> {
    let runs = states
        .iter()
        .map(|s| run_stream(s.model.clone(), &s.labeled, &s.unlabeled, months, oracle, cfg, s.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(StreamResult::new(run_label(cfg), runs))
}

pub fn initial_states(setup: &StreamSetup, seeds: &[u64]) -> Result<Vec<InitialState>> {
    seeds.iter().map(|&s| setup.initial_state(s)).collect()
}

/// Trains the initial model and replays the stream for every seed.
pub fn run_experiment(setup: &StreamSetup, cfg: &StreamConfig) -> Result<StreamResult> {
    cfg.validate()?;
    let states = initial_states(setup, &cfg.seeds)?;
    run_from_states(&states, &setup.months, &setup.oracle(), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub selector: SelectorConfig,
    pub budget: usize,
    pub result: StreamResult,
}

/// Every selector at every budget, sharing seeds and initial models so that
/// cells are paired.
pub fn run_ablation_suite(
    setup: &StreamSetup,
    base: &StreamConfig,
    selectors: &[SelectorConfig],
    budgets: &[usize],
) -> Result<Vec<AblationCell>> {
    base.validate()?;
    if selectors.is_empty() || budgets.is_empty() {
        return Ok(Vec::new());
    }
    let states = initial_states(setup, &base.seeds)?;
    let oracle = setup.oracle();
    let mut out = Vec::with_capacity(selectors.len() * budgets.len());
    for sel in selectors {
        for &budget in budgets {
            let cfg = StreamConfig {
                budget,
                selector: *sel,
                ..base.clone()
            };
            out.push(AblationCell {
                selector: *sel,
                budget,
                result: run_from_states(&states, &setup.months, &oracle, &cfg)?,
            });
        }
    }
    Ok(out)
}
