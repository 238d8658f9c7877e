//! Dense feed-forward classifier with exact analytic gradients.
//!
//! Layers compute `z = x Wᵀ + b` followed by an element-wise activation.
//! Weight matrices are stored `(out, in)`, batches row-major `(batch, features)`.
//! The final layer always emits two logits which are softmaxed into class
//! probabilities; the output of one designated hidden layer (by default the
//! penultimate) doubles as the sample embedding used by the contrastive loss
//! and the distance criterion.

mod checkpoint;
mod optim;

pub use checkpoint::Checkpoint;
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of classes; the task is benign (0) versus malicious (1).
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::ReLU => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Hidden sizes used when none are configured: 512 then a 128-wide embedding.
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 128];

/// Validates a layer stack: positive dims, consistent chaining, two identity
/// logits at the end.
pub fn validate_architecture(specs: &[LayerSpec]) -> Result<()> {
    let last = specs
        .last()
        .ok_or_else(|| Error::config("architecture", "at least one layer is required"))?;
    for (i, spec) in specs.iter().enumerate() {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::config(
                format!("architecture[{i}]"),
                "layer dimensions must be positive",
            ));
        }
        if i > 0 && specs[i - 1].output_dim != spec.input_dim {
            return Err(Error::config(
                format!("architecture[{i}].input_dim"),
                format!(
                    "expected {} to chain with previous layer, got {}",
                    specs[i - 1].output_dim,
                    spec.input_dim
                ),
            ));
        }
    }
    if last.output_dim != NUM_CLASSES || last.activation != Activation::Identity {
        return Err(Error::config(
            "architecture",
            "final layer must output 2 identity logits",
        ));
    }
    Ok(())
}

/// Builds the layer stack `input -> hidden... -> 2` with ReLU hidden layers.
pub fn mlp_architecture(input_dim: usize, hidden: &[usize]) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &h in hidden {
        specs.push(LayerSpec {
            input_dim: prev,
            output_dim: h,
            activation: Activation::ReLU,
        });
        prev = h;
    }
    specs.push(LayerSpec {
        input_dim: prev,
        output_dim: NUM_CLASSES,
        activation: Activation::Identity,
    });
    specs
}

/// Parameters of the network, and the shape of everything derived from them
/// (gradients, optimizer moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params {
            weights: other.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: other.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.dim() == b.dim())
    }

    /// `self += scale * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(scale, b);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Location of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        for (l, w) in self.weights.iter().enumerate() {
            if let Some(((r, c), _)) = w.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Some(format!("layer {l} weight[{r},{c}]"));
            }
        }
        for (l, b) in self.biases.iter().enumerate() {
            if let Some((i, _)) = b.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Some(format!("layer {l} bias[{i}]"));
            }
        }
        None
    }

    /// Flat read access in a fixed order: every weight (row-major) per layer,
    /// then that layer's biases.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if idx < w.len() {
                return w[(idx / w.ncols(), idx % w.ncols())];
            }
            idx -= w.len();
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Flat write access matching [`Params::get_flat`].
    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if idx < w.len() {
                let cols = w.ncols();
                w[(idx / cols, idx % cols)] = value;
                return;
            }
            idx -= w.len();
            if idx < b.len() {
                b[idx] = value;
                return;
            }
            idx -= b.len();
        }
        panic!("flat parameter index out of range");
    }
}

pub type Gradients = Params;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    architecture: Vec<LayerSpec>,
    params: Params,
    embedding_layer: usize,
}

/// Activations of one forward pass over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTrace {
    pub input: Array2<f64>,
    /// Pre-activation `z` per layer, `(batch, out)`.
    pub pre: Vec<Array2<f64>>,
    /// Post-activation per layer; the last entry holds the logits.
    pub post: Vec<Array2<f64>>,
    pub probs: Array2<f64>,
    embedding_layer: usize,
}

impl BatchTrace {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn logits(&self) -> ArrayView2<'_, f64> {
        self.post.last().expect("non-empty network").view()
    }

    pub fn embeddings(&self) -> ArrayView2<'_, f64> {
        self.post[self.embedding_layer].view()
    }
}

/// Single-sample view of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Array1<f64>,
    pub pre: Vec<Array1<f64>>,
    pub post: Vec<Array1<f64>>,
    pub probabilities: [f64; 2],
    pub embedding: Array1<f64>,
}

impl ForwardTrace {
    fn from_batch(trace: &BatchTrace) -> Self {
        let row = |a: &Array2<f64>| a.row(0).to_owned();
        ForwardTrace {
            input: row(&trace.input),
            pre: trace.pre.iter().map(row).collect(),
            post: trace.post.iter().map(row).collect(),
            probabilities: [trace.probs[(0, 0)], trace.probs[(0, 1)]],
            embedding: row(&trace.post[trace.embedding_layer]),
        }
    }

    fn to_batch(&self, embedding_layer: usize) -> BatchTrace {
        let row = |a: &Array1<f64>| a.clone().insert_axis(Axis(0));
        BatchTrace {
            input: row(&self.input),
            pre: self.pre.iter().map(row).collect(),
            post: self.post.iter().map(row).collect(),
            probs: Array2::from_shape_vec((1, 2), self.probabilities.to_vec())
                .expect("1x2 shape"),
            embedding_layer,
        }
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl Classifier {
    /// Creates a network with Glorot-uniform weights and zero biases.
    pub fn new(architecture: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_architecture(&architecture)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(architecture.len());
        let mut biases = Vec::with_capacity(architecture.len());
        for spec in &architecture {
            let limit = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            let w = Array2::from_shape_fn((spec.output_dim, spec.input_dim), |_| {
                dist.sample(&mut rng)
            });
            weights.push(w);
            biases.push(Array1::zeros(spec.output_dim));
        }
        let embedding_layer = default_embedding_layer(architecture.len());
        Ok(Classifier {
            architecture,
            params: Params { weights, biases },
            embedding_layer,
        })
    }

    /// `input -> hidden... -> 2` with ReLU hidden layers; the last hidden layer
    /// is the embedding.
    pub fn mlp(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::new(mlp_architecture(input_dim, hidden), seed)
    }

    /// Builds a network from explicit parameters.
    pub fn from_parameters(architecture: Vec<LayerSpec>, params: Params) -> Result<Self> {
        validate_architecture(&architecture)?;
        if params.weights.len() != architecture.len() || params.biases.len() != architecture.len()
        {
            return Err(Error::Shape(format!(
                "{} layers in architecture but {} weight / {} bias tensors",
                architecture.len(),
                params.weights.len(),
                params.biases.len()
            )));
        }
        for (i, spec) in architecture.iter().enumerate() {
            if params.weights[i].dim() != (spec.output_dim, spec.input_dim)
                || params.biases[i].len() != spec.output_dim
            {
                return Err(Error::Shape(format!(
                    "layer {i}: expected weight {}x{} and bias {}",
                    spec.output_dim, spec.input_dim, spec.output_dim
                )));
            }
        }
        if let Some(loc) = params.first_non_finite() {
            return Err(Error::Numeric { location: loc });
        }
        let embedding_layer = default_embedding_layer(architecture.len());
        Ok(Classifier {
            architecture,
            params,
            embedding_layer,
        })
    }

    /// A model whose weights and biases are all zero.
    pub fn zeros(architecture: Vec<LayerSpec>) -> Result<Self> {
        validate_architecture(&architecture)?;
        let params = Params {
            weights: architecture
                .iter()
                .map(|s| Array2::zeros((s.output_dim, s.input_dim)))
                .collect(),
            biases: architecture.iter().map(|s| Array1::zeros(s.output_dim)).collect(),
        };
        Self::from_parameters(architecture, params)
    }

    pub fn with_embedding_layer(mut self, layer: usize) -> Result<Self> {
        if layer >= self.architecture.len() {
            return Err(Error::config(
                "embedding_layer",
                format!("index {layer} out of range for {} layers", self.architecture.len()),
            ));
        }
        self.embedding_layer = layer;
        Ok(self)
    }

    pub fn architecture(&self) -> &[LayerSpec] {
        &self.architecture
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn embedding_layer(&self) -> usize {
        self.embedding_layer
    }

    pub fn input_dim(&self) -> usize {
        self.architecture[0].input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.architecture[self.embedding_layer].output_dim
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {cols} features, model expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<ForwardTrace> {
        let batch = x.to_owned().insert_axis(Axis(0));
        let trace = self.forward_batch(batch)?;
        Ok(ForwardTrace::from_batch(&trace))
    }

    pub fn forward_batch(&self, input: Array2<f64>) -> Result<BatchTrace> {
        self.check_input(input.ncols())?;
        let n_layers = self.architecture.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        for (l, spec) in self.architecture.iter().enumerate() {
            let x = if l == 0 { input.view() } else { post[l - 1].view() };
            let mut z = x.dot(&self.params.weights[l].t());
            z += &self.params.biases[l];
            let a = z.mapv(|v| spec.activation.apply(v));
            pre.push(z);
            post.push(a);
        }
        let probs = softmax_rows(post[n_layers - 1].view());
        Ok(BatchTrace {
            input,
            pre,
            post,
            probs,
            embedding_layer: self.embedding_layer,
        })
    }

    /// Probabilities only; skips keeping intermediate activations.
    pub fn predict_rows(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (_, logits) = self.embed_and_logits(input)?;
        Ok(softmax_rows(logits.view()))
    }

    /// Embeddings and logits for a batch without retaining a full trace.
    pub fn embed_and_logits(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_input(input.ncols())?;
        let mut current = input.to_owned();
        let mut embedding = None;
        for (l, spec) in self.architecture.iter().enumerate() {
            let mut z = current.dot(&self.params.weights[l].t());
            z += &self.params.biases[l];
            z.mapv_inplace(|v| spec.activation.apply(v));
            if l == self.embedding_layer {
                embedding = Some(z.clone());
            }
            current = z;
        }
        Ok((embedding.expect("embedding layer in range"), current))
    }

    fn check_trace(&self, trace: &BatchTrace) -> Result<()> {
        let ok = trace.pre.len() == self.architecture.len()
            && trace.post.len() == self.architecture.len()
            && trace.embedding_layer == self.embedding_layer
            && trace.input.ncols() == self.input_dim()
            && self
                .architecture
                .iter()
                .zip(&trace.pre)
                .all(|(s, z)| z.ncols() == s.output_dim && z.nrows() == trace.input.nrows());
        if ok {
            Ok(())
        } else {
            Err(Error::State("trace was not produced by this model".into()))
        }
    }

    /// Backpropagates an upstream gradient w.r.t. the logits of one sample.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: [f64; 2]) -> Result<Gradients> {
        let batch = trace.to_batch(self.embedding_layer);
        let d = Array2::from_shape_vec((1, 2), dlogits.to_vec()).expect("1x2 shape");
        self.backward_batch(&batch, d.view(), None)
    }

    /// Backpropagates upstream gradients through a batch trace.
    ///
    /// `dlogits` is `(batch, 2)`; `dembedding`, when present, is the gradient
    /// w.r.t. the embedding layer's output and is added to whatever flows
    /// back from the logits. Gradients are summed over the batch rows.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        dlogits: ArrayView2<'_, f64>,
        dembedding: Option<ArrayView2<'_, f64>>,
    ) -> Result<Gradients> {
        self.check_trace(trace)?;
        let b = trace.batch_size();
        if dlogits.dim() != (b, NUM_CLASSES) {
            return Err(Error::Shape(format!(
                "logit gradient is {:?}, expected ({b}, 2)",
                dlogits.dim()
            )));
        }
        if let Some(de) = &dembedding {
            if de.dim() != (b, self.embedding_dim()) {
                return Err(Error::Shape(format!(
                    "embedding gradient is {:?}, expected ({b}, {})",
                    de.dim(),
                    self.embedding_dim()
                )));
            }
        }

        let n_layers = self.architecture.len();
        let mut grads = Params::zeros_like(&self.params);
        let mut delta_post = dlogits.to_owned();
        for l in (0..n_layers).rev() {
            if l == self.embedding_layer {
                if let Some(de) = &dembedding {
                    delta_post += de;
                }
            }
            let act = self.architecture[l].activation;
            let mut delta_pre = delta_post;
            Zip::from(&mut delta_pre)
                .and(&trace.pre[l])
                .for_each(|d, &z| *d *= act.derivative(z));
            let layer_input = if l == 0 {
                trace.input.view()
            } else {
                trace.post[l - 1].view()
            };
            grads.weights[l] = delta_pre.t().dot(&layer_input);
            grads.biases[l] = delta_pre.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            delta_post = delta_pre.dot(&self.params.weights[l]);
        }
        Ok(grads)
    }

    /// Class probabilities per row, order-preserving.
    pub fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Vec<[f64; 2]>> {
        self.check_input(xs.ncols())?;
        let chunks = self.map_row_chunks(xs, |m, chunk| m.predict_rows(chunk))?;
        Ok(chunks
            .iter()
            .flat_map(|p| p.rows().into_iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>())
            .collect())
    }

    /// Embeddings per row, order-preserving.
    pub fn embed_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Vec<Array1<f64>>> {
        self.check_input(xs.ncols())?;
        let chunks = self.map_row_chunks(xs, |m, chunk| Ok(m.embed_and_logits(chunk)?.0))?;
        Ok(chunks
            .iter()
            .flat_map(|e| e.rows().into_iter().map(|r| r.to_owned()).collect::<Vec<_>>())
            .collect())
    }

    /// Probabilities and embeddings together, as stacked matrices.
    pub fn score_batch(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_input(xs.ncols())?;
        let chunks = self.map_row_chunks(xs, |m, chunk| {
            let (e, logits) = m.embed_and_logits(chunk)?;
            Ok((softmax_rows(logits.view()), e))
        })?;
        let mut probs = Array2::zeros((xs.nrows(), NUM_CLASSES));
        let mut embs = Array2::zeros((xs.nrows(), self.embedding_dim()));
        let mut row = 0;
        for (p, e) in chunks {
            let n = p.nrows();
            probs.slice_mut(s![row..row + n, ..]).assign(&p);
            embs.slice_mut(s![row..row + n, ..]).assign(&e);
            row += n;
        }
        Ok((probs, embs))
    }

    fn map_row_chunks<T, F>(&self, xs: ArrayView2<'_, f64>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Classifier, ArrayView2<'_, f64>) -> Result<T> + Send + Sync,
    {
        const CHUNK: usize = 256;
        let n_chunks = xs.nrows().div_ceil(CHUNK);
        crate::par::map_indices(n_chunks, |c| {
            let end = ((c + 1) * CHUNK).min(xs.nrows());
            f(self, xs.slice(s![c * CHUNK..end, ..]))
        })
        .into_iter()
        .collect()
    }

    /// Counted operations of one forward pass over `batch` rows:
    /// `batch * (2 * in * out + out)` per layer.
    pub fn forward_ops(&self, batch: usize) -> u64 {
        self.architecture
            .iter()
            .map(|s| dense_forward_ops(batch, s.input_dim, s.output_dim))
            .sum()
    }

    /// Counted operations of one backward pass over `batch` rows.
    pub fn backward_ops(&self, batch: usize) -> u64 {
        self.architecture
            .iter()
            .enumerate()
            .map(|(l, s)| dense_backward_ops(batch, s.input_dim, s.output_dim, l > 0))
            .sum()
    }
}

fn default_embedding_layer(n_layers: usize) -> usize {
    n_layers.saturating_sub(2)
}

/// Multiply-add count of a dense forward pass: `b * (2 * in * out + out)`.
pub fn dense_forward_ops(batch: usize, input_dim: usize, output_dim: usize) -> u64 {
    let (b, i, o) = (batch as u64, input_dim as u64, output_dim as u64);
    b * (2 * i * o + o)
}

/// Weight gradient, bias gradient and (unless first layer) input gradient.
pub fn dense_backward_ops(batch: usize, input_dim: usize, output_dim: usize, propagate: bool) -> u64 {
    let (b, i, o) = (batch as u64, input_dim as u64, output_dim as u64);
    let input_grad = if propagate { 2 * b * i * o } else { 0 };
    2 * b * i * o + b * o + input_grad
}
