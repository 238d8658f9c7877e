//! Informativeness scores and budgeted sample selection.
//!
//! Three per-sample criteria are computed over the unlabeled pool:
//! the margin between the two class probabilities, the distance in embedding
//! space to the nearest labeled sample, and the prediction confidence. Each is
//! min-max normalized over the pool and combined into
//! `alpha * (1 - M) + beta * D + gamma * (1 - C)`; the top-k samples by that
//! score are sent to the oracle.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::augment::RandomSource;
use crate::error::{Error, Result};
use crate::feature::{to_matrix, FeatureVector};
use crate::net::Classifier;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    MultiCriteria,
    MarginOnly,
    LpOnly,
    LowConfidenceOnly,
    Random,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::MultiCriteria,
        SelectorKind::MarginOnly,
        SelectorKind::LpOnly,
        SelectorKind::LowConfidenceOnly,
        SelectorKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::MultiCriteria => "multi_criteria",
            SelectorKind::MarginOnly => "margin_only",
            SelectorKind::LpOnly => "lp_only",
            SelectorKind::LowConfidenceOnly => "low_confidence_only",
            SelectorKind::Random => "random",
        }
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        SelectorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "multi" && *k == SelectorKind::MultiCriteria))
            .ok_or_else(|| Error::config("selector", format!("unknown selector `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub p_norm: f64,
    /// Confidence below which `LowConfidenceOnly` considers a sample.
    pub low_confidence_cutoff: f64,
    /// When set to `q`, only samples in the most informative `q` fraction of
    /// every criterion are eligible for `MultiCriteria`.
    pub intersection_quantile: Option<f64>,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            kind: SelectorKind::MultiCriteria,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            p_norm: 2.0,
            low_confidence_cutoff: 0.75,
            intersection_quantile: None,
        }
    }
}

impl SelectorConfig {
    pub fn of_kind(kind: SelectorKind) -> Self {
        SelectorConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_norm >= 1.0) {
            return Err(Error::config("selector.p_norm", format!("{} < 1", self.p_norm)));
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("selector.{name}"), "must be finite and >= 0"));
            }
        }
        if self.kind == SelectorKind::MultiCriteria && self.alpha + self.beta + self.gamma == 0.0 {
            return Err(Error::config("selector", "alpha, beta and gamma are all zero"));
        }
        if let Some(q) = self.intersection_quantile {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::config("selector.intersection_quantile", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    fn needs_distance(&self) -> bool {
        match self.kind {
            SelectorKind::LpOnly => true,
            SelectorKind::MultiCriteria => self.beta > 0.0 || self.intersection_quantile.is_some(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub margin: f64,
    pub lp_distance: f64,
    pub confidence: f64,
    pub norm_margin: f64,
    pub norm_lp: f64,
    pub norm_confidence: f64,
    pub hybrid: f64,
}

pub fn margin_scores(probs: &[[f64; 2]]) -> Vec<f64> {
    probs.iter().map(|p| (p[0] - p[1]).abs()).collect()
}

pub fn confidence_scores(probs: &[[f64; 2]]) -> Vec<f64> {
    probs.iter().map(|p| p[0].max(p[1])).collect()
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x.abs()
    } else if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

#[inline]
fn root(s: f64, p: f64) -> f64 {
    if p == 1.0 {
        s
    } else if p == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / p)
    }
}

fn lp_norm(v: ArrayView1<'_, f64>, p: f64) -> f64 {
    root(v.iter().map(|&x| pow_abs(x, p)).sum(), p)
}

/// Sum of `|a_i - b_i|^p`, abandoned once it reaches `bound`.
#[inline]
fn partial_power_sum(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, p: f64, bound: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += pow_abs(x - y, p);
        if s >= bound {
            return s;
        }
    }
    s
}

/// Exact nearest-labeled-neighbour distance for every unlabeled embedding.
///
/// Labeled points are visited in order of their norm, outward from the
/// query's norm; the reverse triangle inequality `|‖u‖ - ‖v‖| <= ‖u - v‖`
/// ends the scan once no remaining point can be closer. A small relative
/// slack keeps the bound conservative under rounding, so the result is the
/// same minimum a full scan finds.
pub fn lp_distances(unlabeled: ArrayView2<'_, f64>, labeled: ArrayView2<'_, f64>, p_norm: f64) -> Result<Vec<f64>> {
    if labeled.nrows() == 0 {
        return Err(Error::Precondition("nearest-neighbour distance needs a labeled set".into()));
    }
    if unlabeled.ncols() != labeled.ncols() {
        return Err(Error::Shape(format!(
            "unlabeled embeddings have {} dims, labeled {}",
            unlabeled.ncols(),
            labeled.ncols()
        )));
    }
    if !(p_norm >= 1.0) {
        return Err(Error::config("selector.p_norm", format!("{p_norm} < 1")));
    }
    let mut order: Vec<(f64, usize)> = labeled
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, r)| (lp_norm(r, p_norm), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let norms: Vec<f64> = order.iter().map(|o| o.0).collect();

    Ok(par::map_indices(unlabeled.nrows(), |i| {
        let u = unlabeled.row(i);
        let nu = lp_norm(u, p_norm);
        let start = norms.partition_point(|&n| n < nu);
        let mut best = f64::INFINITY;
        let slack = |d: f64| d * (1.0 + 1e-9) + 1e-12;
        let (mut lo, mut hi) = (start, start);
        let (mut lo_open, mut hi_open) = (lo > 0, hi < norms.len());
        while lo_open || hi_open {
            // advance whichever side has the smaller norm gap
            let take_hi = match (lo_open, hi_open) {
                (true, true) => norms[hi] - nu <= nu - norms[lo - 1],
                (false, true) => true,
                _ => false,
            };
            let (gap, j) = if take_hi {
                let g = norms[hi] - nu;
                hi += 1;
                hi_open = hi < norms.len();
                (g, order[hi - 1].1)
            } else {
                lo -= 1;
                lo_open = lo > 0;
                (nu - norms[lo], order[lo].1)
            };
            if best.is_finite() && gap.max(0.0) > slack(root(best, p_norm)) {
                // the nearer side is already too far, so both sides are
                break;
            }
            let s = partial_power_sum(u, labeled.row(j), p_norm, best);
            if s < best {
                best = s;
            }
        }
        root(best, p_norm)
    }))
}

/// `(v - min) / (max - min)`; an all-equal input maps to 0.5 everywhere.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::Numeric {
            location: "min-max normalization input".into(),
        });
    }
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.5; values.len()]);
    }
    Ok(values.iter().map(|v| (v - min) / range).collect())
}

pub fn hybrid_scores(m: &[f64], d: &[f64], c: &[f64], alpha: f64, beta: f64, gamma: f64) -> Result<Vec<f64>> {
    if m.len() != d.len() || m.len() != c.len() {
        return Err(Error::Shape(format!("criteria lengths {} / {} / {}", m.len(), d.len(), c.len())));
    }
    Ok(m.iter()
        .zip(d)
        .zip(c)
        .map(|((m, d), c)| alpha * (1.0 - m) + beta * d + gamma * (1.0 - c))
        .collect())
}

/// Scores every pool sample from its class probabilities and embeddings.
/// Distances are left at zero when the configured selector does not use them.
pub fn score_pool(
    probs: &[[f64; 2]],
    pool_embeddings: ArrayView2<'_, f64>,
    labeled_embeddings: ArrayView2<'_, f64>,
    cfg: &SelectorConfig,
) -> Result<Vec<SelectionScore>> {
    cfg.validate()?;
    if probs.is_empty() {
        return Ok(Vec::new());
    }
    if pool_embeddings.nrows() != probs.len() {
        return Err(Error::Shape(format!(
            "{} probability rows for {} embeddings",
            probs.len(),
            pool_embeddings.nrows()
        )));
    }
    let margin = margin_scores(probs);
    let confidence = confidence_scores(probs);
    let distance = if cfg.needs_distance() {
        lp_distances(pool_embeddings, labeled_embeddings, cfg.p_norm)?
    } else {
        vec![0.0; probs.len()]
    };
    let nm = minmax_normalize(&margin)?;
    let nd = minmax_normalize(&distance)?;
    let nc = minmax_normalize(&confidence)?;
    let hybrid = hybrid_scores(&nm, &nd, &nc, cfg.alpha, cfg.beta, cfg.gamma)?;
    Ok((0..probs.len())
        .map(|i| SelectionScore {
            margin: margin[i],
            lp_distance: distance[i],
            confidence: confidence[i],
            norm_margin: nm[i],
            norm_lp: nd[i],
            norm_confidence: nc[i],
            hybrid: hybrid[i],
        })
        .collect())
}

/// Indices ordered by `key` descending, ties to the lower index.
fn rank_desc(idx: impl Iterator<Item = usize>, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut v: Vec<usize> = idx.collect();
    v.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    v
}

/// Pool indices in the most informative `q` fraction of all three criteria.
fn intersection_filter(scores: &[SelectionScore], q: f64) -> Vec<bool> {
    let n = scores.len();
    let keep = ((q * n as f64).ceil() as usize).clamp(1, n);
    let mut eligible = vec![0u8; n];
    let rankings = [
        rank_desc(0..n, |i| -scores[i].margin),
        rank_desc(0..n, |i| scores[i].lp_distance),
        rank_desc(0..n, |i| -scores[i].confidence),
    ];
    for r in &rankings {
        for &i in &r[..keep] {
            eligible[i] += 1;
        }
    }
    eligible.into_iter().map(|c| c == 3).collect()
}

/// Chooses up to `budget` pool indices from precomputed scores.
pub fn select_from_scores(
    scores: &[SelectionScore],
    cfg: &SelectorConfig,
    budget: usize,
    rng: &mut RandomSource,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = scores.len();
    let mut chosen = match cfg.kind {
        SelectorKind::MultiCriteria => match cfg.intersection_quantile {
            Some(q) if n > 0 => {
                let ok = intersection_filter(scores, q);
                rank_desc((0..n).filter(|&i| ok[i]), |i| scores[i].hybrid)
            }
            _ => rank_desc(0..n, |i| scores[i].hybrid),
        },
        SelectorKind::MarginOnly => rank_desc(0..n, |i| -scores[i].margin),
        SelectorKind::LpOnly => rank_desc(0..n, |i| scores[i].lp_distance),
        SelectorKind::LowConfidenceOnly => rank_desc(
            (0..n).filter(|&i| scores[i].confidence < cfg.low_confidence_cutoff),
            |i| -scores[i].confidence,
        ),
        SelectorKind::Random => sample(rng, n, budget.min(n)).into_vec(),
    };
    chosen.truncate(budget);
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub scores: Vec<SelectionScore>,
}

/// Scores the pool under `model` and picks up to `budget` samples.
pub fn select(
    pool: &[&FeatureVector],
    model: &Classifier,
    labeled_embeddings: ArrayView2<'_, f64>,
    cfg: &SelectorConfig,
    budget: usize,
    rng: &mut RandomSource,
) -> Result<Selection> {
    if pool.is_empty() || budget == 0 {
        return Ok(Selection {
            indices: Vec::new(),
            scores: Vec::new(),
        });
    }
    let x = to_matrix(pool.iter().copied(), model.input_dim());
    let (probs, emb) = model.score_batch(x.view())?;
    let probs: Vec<[f64; 2]> = probs.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let scores = score_pool(&probs, emb.view(), labeled_embeddings, cfg)?;
    let indices = select_from_scores(&scores, cfg, budget, rng)?;
    Ok(Selection { indices, scores })
}

/// Embeddings of a set of samples, as a matrix.
pub fn embed_all(model: &Classifier, samples: &[&FeatureVector]) -> Result<Array2<f64>> {
    let x = to_matrix(samples.iter().copied(), model.input_dim());
    Ok(model.score_batch(x.view())?.1)
}

/// Writes `index,margin,lp_distance,confidence,hybrid,selected` rows.
pub fn write_scores_csv(path: &Path, scores: &[SelectionScore], selected: &[usize]) -> Result<()> {
    let mut flag = vec![false; scores.len()];
    for &i in selected {
        flag[i] = true;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "margin", "lp_distance", "confidence", "hybrid", "selected"])?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.margin.to_string(),
            s.lp_distance.to_string(),
            s.confidence.to_string(),
            s.hybrid.to_string(),
            u8::from(flag[i]).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
