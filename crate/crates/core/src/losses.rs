//! Training objective: supervised cross-entropy, thresholded pseudo-label
//! consistency, and supervised contrastive loss over embeddings.
//!
//! Every loss returns its value together with the gradient with respect to
//! its differentiable input (logits for the two cross-entropy terms,
//! raw embeddings for the contrastive term), already divided by the batch
//! size so the trainer can backpropagate it directly.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Minimum weak-view confidence for a pseudo-label to count. Values
    /// above 1 switch pseudo-labelling off entirely.
    pub confidence_threshold: f64,
    pub lambda_u: f64,
    pub lambda_con: f64,
    pub contrastive_temperature: f64,
    /// L2-normalize embeddings before taking dot products.
    pub normalize_embeddings: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            confidence_threshold: 0.95,
            lambda_u: 1.0,
            lambda_con: 0.5,
            contrastive_temperature: 0.07,
            normalize_embeddings: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.0) || self.confidence_threshold.is_nan() {
            return Err(Error::config("loss.confidence_threshold", "must be > 0"));
        }
        if !(self.lambda_u >= 0.0 && self.lambda_u.is_finite()) {
            return Err(Error::config("loss.lambda_u", "must be finite and >= 0"));
        }
        if !(self.lambda_con >= 0.0 && self.lambda_con.is_finite()) {
            return Err(Error::config("loss.lambda_con", "must be finite and >= 0"));
        }
        if !(self.contrastive_temperature > 0.0 && self.contrastive_temperature.is_finite()) {
            return Err(Error::config("loss.contrastive_temperature", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub sup: f64,
    pub unsup: f64,
    pub con: f64,
    pub total: f64,
    pub confident_count: usize,
}

/// A scalar loss and its gradient w.r.t. the loss input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyLoss {
    pub value: f64,
    pub confident_count: usize,
    /// Gradient w.r.t. the strong-view logits; pseudo-labels are constants.
    pub grad: Array2<f64>,
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().position(|&y| y > 1) {
        Some(i) => Err(Error::Precondition(format!("label {} at index {i} is not 0/1", labels[i]))),
        None => Ok(()),
    }
}

#[inline]
fn neg_log(p: f64) -> f64 {
    -p.clamp(PROB_FLOOR, 1.0).ln()
}

/// Mean cross-entropy `-log p_y` over a labeled batch.
///
/// `probs` holds softmax outputs `(batch, 2)`; the gradient is w.r.t. the
/// logits that produced them: `(p - onehot(y)) / batch`.
pub fn supervised_ce(probs: ArrayView2<'_, f64>, labels: &[u8]) -> Result<LossGrad> {
    let n = probs.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != n || probs.ncols() != 2 {
        return Err(Error::Shape(format!(
            "{} labels for probabilities of shape {:?}",
            labels.len(),
            probs.dim()
        )));
    }
    check_labels(labels)?;
    let mut value = 0.0;
    let mut grad = probs.to_owned();
    for (i, &y) in labels.iter().enumerate() {
        value += neg_log(probs[(i, y as usize)]);
        grad[(i, y as usize)] -= 1.0;
    }
    grad /= n as f64;
    Ok(LossGrad {
        value: value / n as f64,
        grad,
    })
}

/// Pseudo-label consistency: for each unlabeled sample whose weak-view
/// confidence reaches `threshold`, cross-entropy of the strong view against
/// the weak view's argmax. The sum is divided by the full batch size, not
/// the number of confident samples.
pub fn consistency_loss(
    weak_probs: ArrayView2<'_, f64>,
    strong_probs: ArrayView2<'_, f64>,
    threshold: f64,
) -> Result<ConsistencyLoss> {
    if weak_probs.dim() != strong_probs.dim() || weak_probs.ncols() != 2 {
        return Err(Error::Shape(format!(
            "weak {:?} vs strong {:?}",
            weak_probs.dim(),
            strong_probs.dim()
        )));
    }
    let n = weak_probs.nrows();
    let mut grad = Array2::zeros((n, 2));
    if n == 0 {
        return Ok(ConsistencyLoss {
            value: 0.0,
            confident_count: 0,
            grad,
        });
    }
    let mut value = 0.0;
    let mut confident = 0;
    for i in 0..n {
        let (p0, p1) = (weak_probs[(i, 0)], weak_probs[(i, 1)]);
        if p0.max(p1) < threshold {
            continue;
        }
        // argmax, ties to class 0
        let pseudo = usize::from(p1 > p0);
        confident += 1;
        value += neg_log(strong_probs[(i, pseudo)]);
        grad[(i, 0)] = strong_probs[(i, 0)];
        grad[(i, 1)] = strong_probs[(i, 1)];
        grad[(i, pseudo)] -= 1.0;
    }
    grad /= n as f64;
    Ok(ConsistencyLoss {
        value: value / n as f64,
        confident_count: confident,
        grad,
    })
}

/// Supervised contrastive loss over a labeled batch of embeddings.
///
/// For anchor `i` with positives `P(i)` (same label, excluding `i`):
/// `-(1/|P(i)|) Σ_p log( exp(s_ip) / Σ_{a≠i} exp(s_ia) )` with
/// `s_ij = u_i · u_j / temperature`. The batch loss is the sum over anchors
/// divided by the batch size; anchors without positives contribute zero.
/// With `normalize`, `u = z / ‖z‖`, otherwise `u = z`.
pub fn supervised_contrastive(
    embeddings: ArrayView2<'_, f64>,
    labels: &[u8],
    temperature: f64,
    normalize: bool,
) -> Result<LossGrad> {
    let n = embeddings.nrows();
    if n < 2 {
        return Err(Error::DegenerateBatch(format!(
            "contrastive loss needs at least 2 samples, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} embeddings", labels.len())));
    }
    check_labels(labels)?;
    if !(temperature > 0.0) {
        return Err(Error::config("loss.contrastive_temperature", "must be > 0"));
    }

    let norms: Array1<f64> = if normalize {
        embeddings
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt().max(NORM_FLOOR))
            .collect()
    } else {
        Array1::ones(n)
    };
    let units = &embeddings / &norms.view().insert_axis(Axis(1));
    let sims = units.dot(&units.t()) / temperature;

    // coef[i][j] = dL/ds_ij
    let mut coef = Array2::<f64>::zeros((n, n));
    let mut value = 0.0;
    for i in 0..n {
        let positives = labels
            .iter()
            .enumerate()
            .filter(|&(j, &y)| j != i && y == labels[i])
            .count();
        if positives == 0 {
            continue;
        }
        let max = (0..n)
            .filter(|&a| a != i)
            .map(|a| sims[(i, a)])
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n)
            .filter(|&a| a != i)
            .map(|a| (sims[(i, a)] - max).exp())
            .sum();
        let log_denom = max + denom.ln();
        let inv_p = 1.0 / positives as f64;
        for j in 0..n {
            if j == i {
                continue;
            }
            let q = (sims[(i, j)] - max).exp() / denom;
            let is_pos = labels[j] == labels[i];
            if is_pos {
                value -= inv_p * (sims[(i, j)] - log_denom);
            }
            coef[(i, j)] = q - if is_pos { inv_p } else { 0.0 };
        }
    }
    let scale = 1.0 / n as f64;
    value *= scale;

    // s_ij = u_i·u_j / T  =>  dL/du = (C + Cᵀ) U / T
    let sym = (&coef + &coef.t()) * (scale / temperature);
    let grad_units = sym.dot(&units);
    let grad = if normalize {
        // d(z/‖z‖) = (I - u uᵀ)/‖z‖; below the floor u = z/floor is linear
        let mut g = grad_units;
        for i in 0..n {
            let norm = norms[i];
            let raw_norm = embeddings.row(i).dot(&embeddings.row(i)).sqrt();
            let mut row = g.row_mut(i);
            if raw_norm > NORM_FLOOR {
                let proj = row.dot(&units.row(i));
                row.zip_mut_with(&units.row(i), |gv, &u| *gv -= proj * u);
            }
            row.mapv_inplace(|v| v / norm);
        }
        g
    } else {
        grad_units
    };
    Ok(LossGrad { value, grad })
}

/// `sup + λ_u·unsup + λ_con·con`.
pub fn total_loss(sup: f64, unsup: f64, con: f64, confident_count: usize, cfg: &LossConfig) -> LossBreakdown {
    LossBreakdown {
        sup,
        unsup,
        con,
        total: sup + cfg.lambda_u * unsup + cfg.lambda_con * con,
        confident_count,
    }
}
