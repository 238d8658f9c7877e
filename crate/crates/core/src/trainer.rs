//! Semi-supervised training loop.
//!
//! Each step draws a labeled minibatch and an unlabeled minibatch. The
//! labeled batch contributes cross-entropy and, through its embeddings, the
//! supervised contrastive term. Every unlabeled sample is perturbed twice:
//! the weak view is classified by the current model to obtain a pseudo-label,
//! and the strong view is trained towards that label when the weak view's
//! confidence reaches the threshold. The three terms are combined and a
//! single optimizer step is taken.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{strong_view, weak_view, AugmentConfig, RandomSource};
use crate::error::{Error, Result};
use crate::feature::{to_matrix, FeatureVector};
use crate::losses::{
    consistency_loss, supervised_ce, supervised_contrastive, total_loss, LossBreakdown, LossConfig,
};
use crate::net::{Classifier, OptimizerConfig, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from the base rate to zero over all steps of one call.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub epoch_basis: EpochBasis,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            labeled_batch: 64,
            unlabeled_batch: 64,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            optimizer: OptimizerConfig::default(),
            schedule: LrSchedule::Constant,
            epoch_basis: EpochBasis::Labeled,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be >= 1"));
        }
        if self.labeled_batch == 0 {
            return Err(Error::config("train.labeled_batch", "must be >= 1"));
        }
        if self.unlabeled_batch == 0 {
            return Err(Error::config("train.unlabeled_batch", "must be >= 1"));
        }
        self.loss.validate()?;
        self.augment.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Step-averaged loss terms per epoch.
    pub epochs: Vec<LossBreakdown>,
    /// Fraction of unlabeled samples whose pseudo-label passed the threshold.
    pub confident_fraction: Vec<f64>,
    pub seconds: f64,
    pub seed: u64,
    pub steps: u64,
    /// Analytically counted arithmetic operations.
    pub operations: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|b| b.total)
    }
}

/// Which set one epoch passes over exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EpochBasis {
    /// One step per labeled batch; unlabeled batches cycle alongside.
    #[default]
    Labeled,
    /// One step per unlabeled batch; labeled batches cycle alongside. Falls
    /// back to `Labeled` when there is no unlabeled data.
    Unlabeled,
}

/// A shuffled index order consumed one batch at a time, redrawn whenever
/// fewer than one full batch remain.
#[derive(Debug, Clone)]
struct Cyclic {
    order: Vec<usize>,
    batch: usize,
    cursor: usize,
}

impl Cyclic {
    fn new(n: usize, batch: usize, rng: &mut RandomSource) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Cyclic {
            order,
            batch: batch.min(n),
            cursor: 0,
        }
    }

    fn next(&mut self, rng: &mut RandomSource) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        batch
    }

    fn partition(&mut self, batch: usize, rng: &mut RandomSource) -> Vec<Vec<usize>> {
        self.order.shuffle(rng);
        self.cursor = 0;
        self.order.chunks(batch).map(<[usize]>::to_vec).collect()
    }
}

/// Index batches for one or more epochs.
///
/// The set named by the epoch basis is reshuffled and partitioned every
/// epoch, so each of its samples appears exactly once; the other set is
/// consumed cyclically.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    labeled: Cyclic,
    unlabeled: Cyclic,
    labeled_batch: usize,
    unlabeled_batch: usize,
    basis: EpochBasis,
    rng: RandomSource,
}

impl MinibatchSampler {
    pub fn new(n_labeled: usize, n_unlabeled: usize, labeled_batch: usize, unlabeled_batch: usize, seed: u64) -> Result<Self> {
        Self::with_basis(n_labeled, n_unlabeled, labeled_batch, unlabeled_batch, EpochBasis::Labeled, seed)
    }

    pub fn with_basis(
        n_labeled: usize,
        n_unlabeled: usize,
        labeled_batch: usize,
        unlabeled_batch: usize,
        basis: EpochBasis,
        seed: u64,
    ) -> Result<Self> {
        if n_labeled == 0 {
            return Err(Error::Precondition("labeled set is empty".into()));
        }
        if labeled_batch == 0 || unlabeled_batch == 0 {
            return Err(Error::config("train.batch", "batch sizes must be >= 1"));
        }
        let mut rng = RandomSource::substream(seed, 1);
        let unlabeled = Cyclic::new(n_unlabeled, unlabeled_batch, &mut rng);
        let labeled = Cyclic::new(n_labeled, labeled_batch, &mut rng);
        let basis = if n_unlabeled == 0 { EpochBasis::Labeled } else { basis };
        Ok(MinibatchSampler {
            labeled,
            unlabeled,
            labeled_batch,
            unlabeled_batch,
            basis,
            rng,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        match self.basis {
            EpochBasis::Labeled => self.labeled.order.len().div_ceil(self.labeled_batch),
            EpochBasis::Unlabeled => self.unlabeled.order.len().div_ceil(self.unlabeled_batch),
        }
    }

    /// `(labeled indices, unlabeled indices)` per step of one epoch.
    pub fn epoch(&mut self) -> Vec<(Vec<usize>, Vec<usize>)> {
        match self.basis {
            EpochBasis::Labeled => {
                let chunks = self.labeled.partition(self.labeled_batch, &mut self.rng);
                chunks.into_iter().map(|l| (l, self.unlabeled.next(&mut self.rng))).collect()
            }
            EpochBasis::Unlabeled => {
                let chunks = self.unlabeled.partition(self.unlabeled_batch, &mut self.rng);
                chunks.into_iter().map(|u| (self.labeled.next(&mut self.rng), u)).collect()
            }
        }
    }
}

/// Convenience wrapper for a single epoch of batches.
pub fn sample_minibatches(
    n_labeled: usize,
    n_unlabeled: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    Ok(MinibatchSampler::with_basis(
        n_labeled,
        n_unlabeled,
        cfg.labeled_batch,
        cfg.unlabeled_batch,
        cfg.epoch_basis,
        seed,
    )?
    .epoch())
}

/// Trains `model` in place with a fresh optimizer.
pub fn train(
    model: &mut Classifier,
    labeled: &[&FeatureVector],
    labels: &[u8],
    unlabeled: &[&FeatureVector],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut opt = OptimizerState::new(cfg.optimizer)?;
    train_with_optimizer(model, &mut opt, labeled, labels, unlabeled, cfg)
}

/// Trains `model` in place, continuing from an existing optimizer state.
pub fn train_with_optimizer(
    model: &mut Classifier,
    opt: &mut OptimizerState,
    labeled: &[&FeatureVector],
    labels: &[u8],
    unlabeled: &[&FeatureVector],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::Precondition("labeled set is empty".into()));
    }
    if labels.len() != labeled.len() {
        return Err(Error::Shape(format!("{} labels for {} labeled samples", labels.len(), labeled.len())));
    }
    let dim = model.input_dim();
    if let Some(bad) = labeled.iter().chain(unlabeled).find(|x| x.len() != dim) {
        return Err(Error::Shape(format!("sample has {} features, model expects {dim}", bad.len())));
    }

    let start = Instant::now();
    let mut sampler = MinibatchSampler::with_basis(
        labeled.len(),
        unlabeled.len(),
        cfg.labeled_batch,
        cfg.unlabeled_batch,
        cfg.epoch_basis,
        cfg.seed,
    )?;
    let mut aug_rng = RandomSource::substream(cfg.seed, 2);
    let total_steps = (sampler.steps_per_epoch() * cfg.epochs) as f64;
    let base_lr = cfg.optimizer.learning_rate;
    let loss_cfg = cfg.loss;

    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        confident_fraction: Vec::with_capacity(cfg.epochs),
        seconds: 0.0,
        seed: cfg.seed,
        steps: 0,
        operations: 0,
    };
    let mut step_in_call = 0usize;

    for epoch in 0..cfg.epochs {
        let mut sums = LossBreakdown::default();
        let mut confident = 0usize;
        let mut seen_unlabeled = 0usize;
        let batches = sampler.epoch();
        let n_steps = batches.len();
        for (step, (lb, ub)) in batches.into_iter().enumerate() {
            if cfg.schedule == LrSchedule::Cosine {
                let progress = step_in_call as f64 / total_steps;
                opt.current_lr = 0.5 * base_lr * (1.0 + (std::f64::consts::PI * progress).cos());
            }
            let xl = to_matrix(lb.iter().map(|&i| labeled[i]), dim);
            let yl: Vec<u8> = lb.iter().map(|&i| labels[i]).collect();
            let trace = model.forward_batch(xl)?;
            let sup = supervised_ce(trace.probs.view(), &yl)?;
            report.operations += model.forward_ops(lb.len()) + model.backward_ops(lb.len());

            let mut con_value = 0.0;
            let mut emb_grad = None;
            if loss_cfg.lambda_con > 0.0 && lb.len() >= 2 {
                let con = supervised_contrastive(
                    trace.embeddings(),
                    &yl,
                    loss_cfg.contrastive_temperature,
                    loss_cfg.normalize_embeddings,
                )?;
                con_value = con.value;
                emb_grad = Some(con.grad * loss_cfg.lambda_con);
                let (n, e) = (lb.len() as u64, model.embedding_dim() as u64);
                report.operations += 4 * n * n * e;
            }
            let mut grads = model.backward_batch(&trace, sup.grad.view(), emb_grad.as_ref().map(|g| g.view()))?;

            let mut unsup_value = 0.0;
            let mut step_confident = 0;
            if !ub.is_empty() {
                let mut weak = Vec::with_capacity(ub.len());
                let mut strong = Vec::with_capacity(ub.len());
                for &j in &ub {
                    weak.push(weak_view(unlabeled[j], &cfg.augment, &mut aug_rng)?);
                    strong.push(strong_view(unlabeled[j], &cfg.augment, &mut aug_rng)?);
                }
                let weak_probs = model.predict_rows(to_matrix(&weak, dim).view())?;
                let strong_trace = model.forward_batch(to_matrix(&strong, dim))?;
                let cons = consistency_loss(weak_probs.view(), strong_trace.probs.view(), loss_cfg.confidence_threshold)?;
                unsup_value = cons.value;
                step_confident = cons.confident_count;
                report.operations += 2 * model.forward_ops(ub.len());
                if cons.confident_count > 0 && loss_cfg.lambda_u > 0.0 {
                    let g = model.backward_batch(&strong_trace, (cons.grad * loss_cfg.lambda_u).view(), None)?;
                    grads.add_scaled(&g, 1.0);
                    report.operations += model.backward_ops(ub.len());
                }
                seen_unlabeled += ub.len();
                confident += step_confident;
            }

            let breakdown = total_loss(sup.value, unsup_value, con_value, step_confident, &loss_cfg);
            if !breakdown.total.is_finite() {
                return Err(Error::Numeric {
                    location: format!("loss at epoch {epoch} step {step}"),
                });
            }
            opt.step(model, &grads).map_err(|e| match e {
                Error::Numeric { location } => Error::Numeric {
                    location: format!("{location} at epoch {epoch} step {step}"),
                },
                other => other,
            })?;
            sums.sup += breakdown.sup;
            sums.unsup += breakdown.unsup;
            sums.con += breakdown.con;
            sums.total += breakdown.total;
            sums.confident_count += breakdown.confident_count;
            report.steps += 1;
            step_in_call += 1;
        }
        let k = n_steps as f64;
        report.epochs.push(LossBreakdown {
            sup: sums.sup / k,
            unsup: sums.unsup / k,
            con: sums.con / k,
            total: sums.total / k,
            confident_count: sums.confident_count,
        });
        report.confident_fraction.push(if seen_unlabeled == 0 {
            0.0
        } else {
            confident as f64 / seen_unlabeled as f64
        });
    }
    opt.current_lr = base_lr;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Hard predictions (argmax, ties to benign) for a set of samples.
pub fn predict_labels(model: &Classifier, samples: &[&FeatureVector]) -> Result<Vec<u8>> {
    let x = to_matrix(samples.iter().copied(), model.input_dim());
    Ok(model
        .predict_batch(x.view())?
        .into_iter()
        .map(|p| u8::from(p[1] > p[0]))
        .collect())
}
