//! Differentiable scalar model over an m x D embedding sequence.
//!
//! The reference classifier is mean-pool -> tanh hidden layer -> linear ->
//! softmax, with exact analytic gradients w.r.t. every input embedding entry.
//! A per-token linear head provides start/end position scores so QA-style
//! selectors can be exercised without a full QA model.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

/// A tokenized input: CLS at the front, SEP at the end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanHead {
    Start,
    End,
}

/// Which scalar of the model output the attribution targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSelector {
    ClassProbability { class: usize },
    ClassLogit { class: usize },
    PositionLogit { head: SpanHead, position: usize },
}

/// Scalar model F: R^{m x D} -> R with exact gradients.
pub trait DifferentiableModel {
    fn forward(&self, embeddings: &[Vec<f64>], selector: &TargetSelector) -> Result<f64>;

    /// Gradient of the selected scalar w.r.t. every entry of `embeddings`.
    fn grad_embeddings(
        &self,
        embeddings: &[Vec<f64>],
        selector: &TargetSelector,
    ) -> Result<Vec<Vec<f64>>>;

    fn num_classes(&self) -> usize;

    /// Full softmax distribution over classes.
    fn class_probs(&self, embeddings: &[Vec<f64>]) -> Result<Vec<f64>>;

    fn predicted_class(&self, embeddings: &[Vec<f64>]) -> Result<usize> {
        let probs = self.class_probs(embeddings)?;
        Ok(argmax(&probs))
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Trained parameters of the bundled reference classifier. The embedding
/// matrix is carried along so the store can be rebuilt from the parameter
/// file alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModelParams {
    pub version: u32,
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub tokens: Vec<String>,
    pub embedding: Vec<f64>, // V x D row-major
    pub w_hidden: Vec<f64>,  // D x H row-major
    pub b_hidden: Vec<f64>,  // H
    pub w_out: Vec<f64>,     // H x C row-major
    pub b_out: Vec<f64>,     // C
    pub w_start: Vec<f64>,   // D
    pub b_start: f64,
    pub w_end: Vec<f64>, // D
    pub b_end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: usize,
    pub dim: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 0.1, seed: 7, hidden: 32, dim: 16 }
    }
}

struct ForwardPass {
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl ReferenceModelParams {
    pub fn zeros(tokens: Vec<String>, embedding: Vec<f64>, dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            version: 1,
            dim,
            hidden,
            classes,
            tokens,
            embedding,
            w_hidden: vec![0.0; dim * hidden],
            b_hidden: vec![0.0; hidden],
            w_out: vec![0.0; hidden * classes],
            b_out: vec![0.0; classes],
            w_start: vec![0.0; dim],
            b_start: 0.0,
            w_end: vec![0.0; dim],
            b_end: 0.0,
        }
    }

    /// Seeded uniform initialization in +-1/sqrt(fan_in).
    pub fn init(
        tokens: Vec<String>,
        embedding: Vec<f64>,
        dim: usize,
        hidden: usize,
        classes: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(tokens, embedding, dim, hidden, classes);
        let bound_h = 1.0 / (dim as f64).sqrt();
        for w in &mut params.w_hidden {
            *w = rng.random_range(-bound_h..bound_h);
        }
        let bound_o = 1.0 / (hidden as f64).sqrt();
        for w in &mut params.w_out {
            *w = rng.random_range(-bound_o..bound_o);
        }
        for w in &mut params.w_start {
            *w = rng.random_range(-bound_h..bound_h);
        }
        for w in &mut params.w_end {
            *w = rng.random_range(-bound_h..bound_h);
        }
        params
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Ok(serde_json::from_str(&content)?)
    }

    /// Rebuilds an embedding store from the (possibly training-refined)
    /// embedding matrix carried in the parameters.
    pub fn to_store(&self) -> Result<EmbeddingStore> {
        let rows: Vec<Vec<f64>> = (0..self.tokens.len())
            .map(|i| self.embedding[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect();
        EmbeddingStore::new(self.tokens.clone(), rows)
    }

    pub fn embedding_row(&self, id: usize) -> &[f64] {
        &self.embedding[id * self.dim..(id + 1) * self.dim]
    }

    fn pass(&self, embeddings: &[Vec<f64>]) -> Result<ForwardPass> {
        let m = embeddings.len();
        if m == 0 {
            return Err(Error::Contract("empty embedding sequence".into()));
        }
        for row in embeddings {
            if row.len() != self.dim {
                return Err(Error::Contract(format!(
                    "embedding row dimension {} does not match model dimension {}",
                    row.len(),
                    self.dim
                )));
            }
        }
        let mut pooled = vec![0.0; self.dim];
        for row in embeddings {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        for p in &mut pooled {
            *p /= m as f64;
        }
        let mut hidden = vec![0.0; self.hidden];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = self.b_hidden[j];
            for (d, p) in pooled.iter().enumerate() {
                acc += p * self.w_hidden[d * self.hidden + j];
            }
            *h = acc.tanh();
        }
        let mut logits = vec![0.0; self.classes];
        for (c, l) in logits.iter_mut().enumerate() {
            let mut acc = self.b_out[c];
            for (j, h) in hidden.iter().enumerate() {
                acc += h * self.w_out[j * self.classes + c];
            }
            *l = acc;
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("logits"));
        }
        let probs = softmax(&logits);
        Ok(ForwardPass { pooled, hidden, logits, probs })
    }

    fn position_head(&self, head: SpanHead) -> (&[f64], f64) {
        match head {
            SpanHead::Start => (&self.w_start, self.b_start),
            SpanHead::End => (&self.w_end, self.b_end),
        }
    }

    fn check_selector(&self, m: usize, selector: &TargetSelector) -> Result<()> {
        match selector {
            TargetSelector::ClassProbability { class } | TargetSelector::ClassLogit { class } => {
                if *class >= self.classes {
                    return Err(Error::Contract(format!(
                        "class index {class} out of range (C = {})",
                        self.classes
                    )));
                }
            }
            TargetSelector::PositionLogit { position, .. } => {
                if *position >= m {
                    return Err(Error::Contract(format!(
                        "position index {position} out of range (m = {m})"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl DifferentiableModel for ReferenceModelParams {
    fn forward(&self, embeddings: &[Vec<f64>], selector: &TargetSelector) -> Result<f64> {
        self.check_selector(embeddings.len(), selector)?;
        match selector {
            TargetSelector::PositionLogit { head, position } => {
                let (w, b) = self.position_head(*head);
                let score = b + dot(w, &embeddings[*position]);
                if !score.is_finite() {
                    return Err(Error::Numeric("position logit"));
                }
                Ok(score)
            }
            TargetSelector::ClassProbability { class } => {
                let pass = self.pass(embeddings)?;
                Ok(pass.probs[*class])
            }
            TargetSelector::ClassLogit { class } => {
                let pass = self.pass(embeddings)?;
                Ok(pass.logits[*class])
            }
        }
    }

    fn grad_embeddings(
        &self,
        embeddings: &[Vec<f64>],
        selector: &TargetSelector,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_selector(embeddings.len(), selector)?;
        let m = embeddings.len();
        if let TargetSelector::PositionLogit { head, position } = selector {
            let (w, _) = self.position_head(*head);
            let mut grad = vec![vec![0.0; self.dim]; m];
            grad[*position].copy_from_slice(w);
            return Ok(grad);
        }
        let pass = self.pass(embeddings)?;

        // d(target)/d(logit_c)
        let dlogits: Vec<f64> = match selector {
            TargetSelector::ClassProbability { class } => {
                let pt = pass.probs[*class];
                (0..self.classes)
                    .map(|c| {
                        let indicator = if c == *class { 1.0 } else { 0.0 };
                        pt * (indicator - pass.probs[c])
                    })
                    .collect()
            }
            TargetSelector::ClassLogit { class } => (0..self.classes)
                .map(|c| if c == *class { 1.0 } else { 0.0 })
                .collect(),
            TargetSelector::PositionLogit { .. } => unreachable!(),
        };

        // back through the output layer, tanh, and mean pooling
        let mut dhidden = vec![0.0; self.hidden];
        for (j, dh) in dhidden.iter_mut().enumerate() {
            for (c, dl) in dlogits.iter().enumerate() {
                *dh += dl * self.w_out[j * self.classes + c];
            }
        }
        let mut dpooled = vec![0.0; self.dim];
        for (d, dp) in dpooled.iter_mut().enumerate() {
            for (j, dh) in dhidden.iter().enumerate() {
                let h = pass.hidden[j];
                *dp += dh * (1.0 - h * h) * self.w_hidden[d * self.hidden + j];
            }
        }
        let row: Vec<f64> = dpooled.iter().map(|dp| dp / m as f64).collect();
        Ok(vec![row; m])
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn class_probs(&self, embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.pass(embeddings)?.probs)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gathers embedding rows for a token id sequence from the model's own
/// embedding matrix.
pub fn sequence_embeddings(params: &ReferenceModelParams, ids: &[usize]) -> Vec<Vec<f64>> {
    ids.iter().map(|&id| params.embedding_row(id).to_vec()).collect()
}

/// SGD training with cross-entropy loss over a labeled corpus. Updates the
/// hidden/output layers and the embedding rows of the tokens seen; the
/// position heads keep their initialization. Fully seeded and deterministic.
pub fn train_reference(
    store: &EmbeddingStore,
    corpus: &[(TokenSequence, usize)],
    hp: &Hyperparams,
) -> Result<ReferenceModelParams> {
    if corpus.is_empty() {
        return Err(Error::Training("empty corpus".into()));
    }
    let classes = 2;
    if hp.dim != store.dim() {
        return Err(Error::Training(format!(
            "hyperparameter dim {} does not match store dimension {}",
            hp.dim,
            store.dim()
        )));
    }
    let first_label = corpus[0].1;
    if corpus.iter().all(|(_, l)| *l == first_label) {
        return Err(Error::Training("corpus contains a single class".into()));
    }
    if let Some((_, l)) = corpus.iter().find(|(_, l)| *l >= classes) {
        return Err(Error::Training(format!("label {l} out of range")));
    }

    let mut embedding = Vec::with_capacity(store.len() * store.dim());
    for id in 0..store.len() {
        embedding.extend_from_slice(store.row(id));
    }
    let mut params = ReferenceModelParams::init(
        store.tokens().to_vec(),
        embedding,
        store.dim(),
        hp.hidden,
        classes,
        hp.seed,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let lr = hp.learning_rate;
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let (seq, label) = &corpus[idx];
            let x = sequence_embeddings(&params, &seq.ids);
            let m = x.len();
            let pass = params.pass(&x)?;

            // d(cross-entropy)/d(logit_c) = p_c - 1{c == label}
            let dlogits: Vec<f64> = (0..classes)
                .map(|c| pass.probs[c] - if c == *label { 1.0 } else { 0.0 })
                .collect();

            let mut dhidden = vec![0.0; params.hidden];
            for (j, dh) in dhidden.iter_mut().enumerate() {
                for (c, dl) in dlogits.iter().enumerate() {
                    *dh += dl * params.w_out[j * classes + c];
                }
            }
            let mut dpre = vec![0.0; params.hidden];
            for (j, dp) in dpre.iter_mut().enumerate() {
                let h = pass.hidden[j];
                *dp = dhidden[j] * (1.0 - h * h);
            }
            let mut dpooled = vec![0.0; params.dim];
            for (d, dp) in dpooled.iter_mut().enumerate() {
                for (j, dq) in dpre.iter().enumerate() {
                    *dp += dq * params.w_hidden[d * params.hidden + j];
                }
            }

            // parameter updates
            for (c, dl) in dlogits.iter().enumerate() {
                params.b_out[c] -= lr * dl;
                for (j, h) in pass.hidden.iter().enumerate() {
                    params.w_out[j * classes + c] -= lr * dl * h;
                }
            }
            for (j, dq) in dpre.iter().enumerate() {
                params.b_hidden[j] -= lr * dq;
                for (d, p) in pass.pooled.iter().enumerate() {
                    params.w_hidden[d * params.hidden + j] -= lr * dq * p;
                }
            }
            // embedding rows: mean-pool spreads dpooled / m to every token
            for &id in &seq.ids {
                let base = id * params.dim;
                for (d, dp) in dpooled.iter().enumerate() {
                    params.embedding[base + d] -= lr * dp / m as f64;
                }
            }
        }
    }
    Ok(params)
}

/// Fraction of corpus examples whose predicted class matches the label.
pub fn training_accuracy(
    params: &ReferenceModelParams,
    corpus: &[(TokenSequence, usize)],
) -> Result<f64> {
    let mut correct = 0usize;
    for (seq, label) in corpus {
        let x = sequence_embeddings(params, &seq.ids);
        if params.predicted_class(&x)? == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / corpus.len() as f64)
}

/// Builds `[CLS] t t ... t [SEP]` sequences of each requested content length
/// and reports |F - 1/C| for the class-0 probability, the deviation from the
/// uninformative output.
pub fn measure_baseline_output(
    params: &ReferenceModelParams,
    store: &EmbeddingStore,
    baseline_token: usize,
    lengths: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let specials = store.specials();
    let uniform = 1.0 / params.classes as f64;
    let mut report = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let mut ids = Vec::with_capacity(len + 2);
        ids.push(specials.cls);
        ids.extend(std::iter::repeat(baseline_token).take(len));
        ids.push(specials.sep);
        let x = sequence_embeddings(params, &ids);
        let p = params.forward(&x, &TargetSelector::ClassProbability { class: 0 })?;
        report.push((len, (p - uniform).abs()));
    }
    Ok(report)
}

/// Test-and-calibration surrogate: the class-1 logit is the fully linear
/// score sum c_ij x_ij, class probabilities are softmax over [0, score].
/// Every path method integrates this model exactly.
#[derive(Debug, Clone)]
pub struct LinearSurrogate {
    pub coeffs: Vec<Vec<f64>>, // m x D
}

impl LinearSurrogate {
    fn score(&self, embeddings: &[Vec<f64>]) -> Result<f64> {
        if embeddings.len() != self.coeffs.len() {
            return Err(Error::Contract(format!(
                "surrogate expects {} rows, got {}",
                self.coeffs.len(),
                embeddings.len()
            )));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(embeddings)
            .map(|(c, x)| dot(c, x))
            .sum())
    }
}

impl DifferentiableModel for LinearSurrogate {
    fn forward(&self, embeddings: &[Vec<f64>], selector: &TargetSelector) -> Result<f64> {
        let s = self.score(embeddings)?;
        match selector {
            TargetSelector::ClassLogit { class } => Ok(if *class == 1 { s } else { 0.0 }),
            TargetSelector::ClassProbability { class } => {
                let probs = softmax(&[0.0, s]);
                Ok(probs[*class])
            }
            TargetSelector::PositionLogit { .. } => {
                Err(Error::Contract("surrogate has no position head".into()))
            }
        }
    }

    fn grad_embeddings(
        &self,
        embeddings: &[Vec<f64>],
        selector: &TargetSelector,
    ) -> Result<Vec<Vec<f64>>> {
        let s = self.score(embeddings)?;
        let scale = match selector {
            TargetSelector::ClassLogit { class } => {
                if *class == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            TargetSelector::ClassProbability { class } => {
                let probs = softmax(&[0.0, s]);
                let sign = if *class == 1 { 1.0 } else { -1.0 };
                sign * probs[0] * probs[1]
            }
            TargetSelector::PositionLogit { .. } => {
                return Err(Error::Contract("surrogate has no position head".into()))
            }
        };
        Ok(self
            .coeffs
            .iter()
            .map(|row| row.iter().map(|c| c * scale).collect())
            .collect())
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn class_probs(&self, embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(softmax(&[0.0, self.score(embeddings)?]))
    }
}
