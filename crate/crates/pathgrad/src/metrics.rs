//! Faithfulness metrics (log-odds, comprehensiveness, sufficiency) under
//! top-fraction masking, plus delta-% aggregation and per-phase timings.
//!
//! CLS and SEP are never ablated; additional token ids can be protected via
//! the protocol (the QA-style regime protects SEP explicitly and uses a 0.5
//! top fraction). The ablation replacement is the configured baseline token,
//! keeping the metric consistent with the attribution path's reference point.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, DeltaPercent};
use crate::error::{Error, Result};
use crate::model::{DifferentiableModel, TargetSelector, TokenSequence};
use crate::path::{BaselineKind, PathSpec};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskingProtocol {
    pub top_fraction: f64,
    pub protected_ids: BTreeSet<usize>,
    pub replacement: BaselineKind,
}

impl MaskingProtocol {
    /// Classification default: mask the top 20%.
    pub fn classification() -> Self {
        Self { top_fraction: 0.2, protected_ids: BTreeSet::new(), replacement: BaselineKind::Mask }
    }

    /// QA-style regime: top 50%, SEP never masked.
    pub fn qa_style(sep_id: usize) -> Self {
        Self {
            top_fraction: 0.5,
            protected_ids: [sep_id].into_iter().collect(),
            replacement: BaselineKind::Mask,
        }
    }

    fn replacement_id(&self, store: &EmbeddingStore) -> usize {
        match self.replacement {
            BaselineKind::Pad => store.specials().pad,
            // the zero baseline has no vocabulary row; MASK stands in
            BaselineKind::Mask | BaselineKind::Zero => store.specials().mask,
        }
    }
}

/// One corpus example with its word-level attribution scores.
#[derive(Debug, Clone)]
pub struct ScoredExample {
    pub sequence: TokenSequence,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub log_odds: f64,
    pub comprehensiveness: f64,
    pub sufficiency: f64,
    pub median_delta_percent: f64,
    pub undefined_delta_count: usize,
    pub n_examples: usize,
    pub attribution_seconds: f64,
    pub metric_seconds: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str =
        "method,strategy,K,k,f,baseline,LO,Comp,Suff,median_delta,undefined_deltas,n,seconds";

    pub fn csv_row(&self, spec: &PathSpec) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{:.3}",
            spec.method.name(),
            spec.strategy.name(),
            spec.steps,
            spec.knn_k,
            spec.upsample_factor,
            spec.baseline.name(),
            self.log_odds,
            self.comprehensiveness,
            self.sufficiency,
            self.median_delta_percent,
            self.undefined_delta_count,
            self.n_examples,
            self.attribution_seconds + self.metric_seconds,
        )
    }

    /// Drops wall-clock fields so byte-identical reruns are possible.
    pub fn without_timings(mut self) -> Self {
        self.attribution_seconds = 0.0;
        self.metric_seconds = 0.0;
        self
    }
}

/// Positions eligible for masking: not CLS/SEP, not protected.
pub fn eligible_positions(
    store: &EmbeddingStore,
    sequence: &TokenSequence,
    protocol: &MaskingProtocol,
) -> Vec<usize> {
    let specials = store.specials();
    sequence
        .ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| id != specials.cls && id != specials.sep && !protocol.protected_ids.contains(&id))
        .map(|(i, _)| i)
        .collect()
}

/// Top ceil(fraction * eligible) positions by descending score, ties broken
/// by ascending position index.
pub fn select_top(
    scores: &[f64],
    protocol: &MaskingProtocol,
    store: &EmbeddingStore,
    sequence: &TokenSequence,
) -> Vec<usize> {
    let mut eligible = eligible_positions(store, sequence, protocol);
    if eligible.is_empty() {
        return Vec::new();
    }
    let count = ((protocol.top_fraction * eligible.len() as f64).ceil() as usize).min(eligible.len());
    eligible.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b))
    });
    eligible.truncate(count);
    eligible
}

/// Replaces the listed positions with the protocol's replacement token.
pub fn ablate(
    store: &EmbeddingStore,
    sequence: &TokenSequence,
    positions: &[usize],
    protocol: &MaskingProtocol,
) -> Result<TokenSequence> {
    let specials = store.specials();
    let replacement = protocol.replacement_id(store);
    let mut ids = sequence.ids.clone();
    for &pos in positions {
        if pos >= ids.len() {
            return Err(Error::Contract(format!("ablation position {pos} out of range")));
        }
        let id = ids[pos];
        if id == specials.cls || id == specials.sep || protocol.protected_ids.contains(&id) {
            return Err(Error::Contract(format!(
                "position {pos} holds protected token {:?}",
                store.token(id)
            )));
        }
        ids[pos] = replacement;
    }
    Ok(TokenSequence { ids, text: sequence.text.clone() })
}

fn embed(store: &EmbeddingStore, ids: &[usize]) -> Vec<Vec<f64>> {
    ids.iter().map(|&id| store.row(id).to_vec()).collect()
}

struct MaskedProbs {
    p_orig: f64,
    p_masked: f64,
    p_keep_top: f64,
}

fn masked_probs<M: DifferentiableModel + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    example: &ScoredExample,
    protocol: &MaskingProtocol,
) -> Result<MaskedProbs> {
    let probs = model.class_probs(&embed(store, &example.sequence.ids))?;
    let predicted = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let p_orig = probs[predicted];

    let top = select_top(&example.scores, protocol, store, &example.sequence);
    let masked = ablate(store, &example.sequence, &top, protocol)?;
    let p_masked = model.class_probs(&embed(store, &masked.ids))?[predicted];

    let eligible = eligible_positions(store, &example.sequence, protocol);
    let top_set: BTreeSet<usize> = top.iter().copied().collect();
    let rest: Vec<usize> = eligible.into_iter().filter(|p| !top_set.contains(p)).collect();
    let kept = ablate(store, &example.sequence, &rest, protocol)?;
    let p_keep_top = model.class_probs(&embed(store, &kept.ids))?[predicted];

    Ok(MaskedProbs { p_orig, p_masked, p_keep_top })
}

/// Mean of ln(p_masked / p_orig) over examples after masking the top
/// fraction. Lower is better.
pub fn log_odds<M: DifferentiableModel + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    examples: &[ScoredExample],
    protocol: &MaskingProtocol,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let p = masked_probs(model, store, ex, protocol)?;
        total += (p.p_masked / p.p_orig).ln();
    }
    Ok(total / examples.len() as f64)
}

/// Mean of (p_orig - p_masked). Higher is better.
pub fn comprehensiveness<M: DifferentiableModel + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    examples: &[ScoredExample],
    protocol: &MaskingProtocol,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let p = masked_probs(model, store, ex, protocol)?;
        total += p.p_orig - p.p_masked;
    }
    Ok(total / examples.len() as f64)
}

/// Mean of (p_orig - p_keep_top), keeping only the top fraction. Lower is
/// better.
pub fn sufficiency<M: DifferentiableModel + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    examples: &[ScoredExample],
    protocol: &MaskingProtocol,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let p = masked_probs(model, store, ex, protocol)?;
        total += p.p_orig - p.p_keep_top;
    }
    Ok(total / examples.len() as f64)
}

/// Median over the defined values; NaN if none are defined.
pub fn median_delta(deltas: &[DeltaPercent]) -> (f64, usize) {
    let mut defined: Vec<f64> = deltas.iter().filter_map(|d| d.defined()).collect();
    let undefined = deltas.len() - defined.len();
    if defined.is_empty() {
        return (f64::NAN, undefined);
    }
    defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = defined.len() / 2;
    let median = if defined.len() % 2 == 1 {
        defined[mid]
    } else {
        0.5 * (defined[mid - 1] + defined[mid])
    };
    (median, undefined)
}

/// Attribution scores for each example, computed in parallel but collected
/// in example-index order.
pub fn score_corpus<M: DifferentiableModel + Sync + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    corpus: &[TokenSequence],
    spec: &PathSpec,
) -> Result<(Vec<ScoredExample>, Vec<DeltaPercent>)> {
    let results: Vec<Result<(ScoredExample, DeltaPercent)>> = corpus
        .par_iter()
        .map(|seq| {
            let predicted = model.predicted_class(&embed(store, &seq.ids))?;
            let selector = TargetSelector::ClassProbability { class: predicted };
            let result = attribute(model, store, seq, spec, &selector)?;
            Ok((
                ScoredExample { sequence: seq.clone(), scores: result.word_scores },
                result.delta,
            ))
        })
        .collect();
    let mut scored = Vec::with_capacity(corpus.len());
    let mut deltas = Vec::with_capacity(corpus.len());
    for r in results {
        let (s, d) = r?;
        scored.push(s);
        deltas.push(d);
    }
    Ok((scored, deltas))
}

/// Runs attribution over the corpus with one path spec and aggregates all
/// three faithfulness metrics plus the delta median.
pub fn evaluate_method<M: DifferentiableModel + Sync + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    corpus: &[TokenSequence],
    spec: &PathSpec,
    protocol: &MaskingProtocol,
) -> Result<MetricReport> {
    if corpus.is_empty() {
        return Err(Error::Contract("empty corpus".into()));
    }
    let t0 = Instant::now();
    let (scored, deltas) = score_corpus(model, store, corpus, spec)?;
    let attribution_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let lo = log_odds(model, store, &scored, protocol)?;
    let comp = comprehensiveness(model, store, &scored, protocol)?;
    let suff = sufficiency(model, store, &scored, protocol)?;
    let (median, undefined) = median_delta(&deltas);
    let metric_seconds = t1.elapsed().as_secs_f64();

    Ok(MetricReport {
        log_odds: lo,
        comprehensiveness: comp,
        sufficiency: suff,
        median_delta_percent: median,
        undefined_delta_count: undefined,
        n_examples: corpus.len(),
        attribution_seconds,
        metric_seconds,
    })
}
