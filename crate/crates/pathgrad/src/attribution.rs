//! Gradient accumulation along interpolation paths.
//!
//! All tokens move jointly: at step k every token sits at its own k-th path
//! point and a single gradient evaluation serves the whole sequence. The
//! left-endpoint Riemann rule accumulates grad * forward-difference into the
//! raw m x D attribution matrix, which is then reduced to normalized word
//! scores and a completeness delta.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DifferentiableModel, TargetSelector, TokenSequence};
use crate::path::{
    build_dig_path, build_ig_path, build_udig_path, upsample, BaselineKind, InterpolationPath,
    PathDiagnostics, PathMethod, PathSpec,
};
use crate::store::EmbeddingStore;

/// Denominator guard for the delta-% ratio.
pub const DELTA_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeltaPercent {
    Defined { percent: f64 },
    /// |F(x) - F(x')| fell below the guard; only the absolute error is
    /// meaningful.
    UndefinedSmallDenominator { abs_error: f64 },
}

impl DeltaPercent {
    pub fn defined(&self) -> Option<f64> {
        match self {
            DeltaPercent::Defined { percent } => Some(*percent),
            DeltaPercent::UndefinedSmallDenominator { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributionResult {
    pub raw: Vec<Vec<f64>>,
    pub word_scores: Vec<f64>,
    pub f_input: f64,
    pub f_baseline: f64,
    pub delta: DeltaPercent,
    pub spec: PathSpec,
    pub selector: TargetSelector,
}

/// Eq.-style Riemann accumulation over joint per-token paths. Paths of
/// unequal length are right-padded by repeating their input-side endpoint.
pub fn accumulate<M: DifferentiableModel + ?Sized>(
    model: &M,
    selector: &TargetSelector,
    paths: &[InterpolationPath],
) -> Result<Vec<Vec<f64>>> {
    if paths.is_empty() {
        return Err(Error::Contract("no paths to accumulate".into()));
    }
    let steps = paths.iter().map(|p| p.len()).max().unwrap();
    if steps < 2 {
        return Err(Error::Contract("paths must have at least 2 points".into()));
    }
    let dim = paths[0].points[0].len();
    let m = paths.len();

    let point = |path: &InterpolationPath, k: usize| -> Vec<f64> {
        path.points.get(k).unwrap_or_else(|| path.points.last().unwrap()).clone()
    };

    let mut raw = vec![vec![0.0; dim]; m];
    for k in 0..steps - 1 {
        let current: Vec<Vec<f64>> = paths.iter().map(|p| point(p, k)).collect();
        let grad = model.grad_embeddings(&current, selector)?;
        for (i, path) in paths.iter().enumerate() {
            let next = point(path, k + 1);
            for j in 0..dim {
                raw[i][j] += grad[i][j] * (next[j] - current[i][j]);
            }
        }
    }
    Ok(raw)
}

/// Row sums of the raw matrix, L2-normalized over the m-vector. All-zero raw
/// maps to the zero vector.
pub fn word_scores(raw: &[Vec<f64>]) -> Vec<f64> {
    let sums: Vec<f64> = raw.iter().map(|row| row.iter().sum()).collect();
    let norm: f64 = sums.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm > 0.0 {
        sums.into_iter().map(|s| s / norm).collect()
    } else {
        sums
    }
}

/// Completeness violation: |sum(raw) - (F(x) - F(x'))|, as a percentage of
/// |F(x) - F(x')| when the denominator is large enough.
pub fn delta_percent(raw: &[Vec<f64>], f_input: f64, f_baseline: f64) -> DeltaPercent {
    let total: f64 = raw.iter().flatten().sum();
    let target = f_input - f_baseline;
    let abs_error = (total - target).abs();
    if target.abs() >= DELTA_EPSILON {
        DeltaPercent::Defined { percent: 100.0 * abs_error / target.abs() }
    } else {
        DeltaPercent::UndefinedSmallDenominator { abs_error }
    }
}

/// Per-position baseline embeddings: CLS/SEP keep their own embedding (the
/// model needs the structural frame at the baseline too), every other
/// position is ablated to the configured baseline vector.
pub fn baseline_sequence(
    store: &EmbeddingStore,
    sequence: &TokenSequence,
    kind: BaselineKind,
) -> Vec<Vec<f64>> {
    let specials = store.specials();
    let baseline_vec: Vec<f64> = match kind {
        BaselineKind::Mask => store.row(specials.mask).to_vec(),
        BaselineKind::Pad => store.row(specials.pad).to_vec(),
        BaselineKind::Zero => vec![0.0; store.dim()],
    };
    sequence
        .ids
        .iter()
        .map(|&id| {
            if id == specials.cls || id == specials.sep {
                store.row(id).to_vec()
            } else {
                baseline_vec.clone()
            }
        })
        .collect()
}

fn build_token_path(
    store: &EmbeddingStore,
    token_id: usize,
    token_index: usize,
    baseline: &[f64],
    spec: &PathSpec,
) -> Result<(InterpolationPath, Option<PathDiagnostics>)> {
    let specials = store.specials();
    // structural and special tokens take the straight line; anchoring them
    // to content words is meaningless
    let use_straight_line = spec.method == PathMethod::Ig || specials.contains(token_id);
    if use_straight_line {
        let path = build_ig_path(baseline, store.row(token_id), spec.steps, token_index);
        return Ok((upsample(path, spec.upsample_factor), None));
    }
    let (path, diag) = match spec.method {
        PathMethod::Udig => build_udig_path(store, token_id, token_index, baseline, spec)?,
        PathMethod::Dig => build_dig_path(store, token_id, token_index, baseline, spec)?,
        PathMethod::Ig => unreachable!(),
    };
    Ok((path, Some(diag)))
}

/// Full attribution of one token sequence: builds the baseline, per-token
/// paths, accumulates gradients, and reduces to scores and delta.
pub fn attribute<M: DifferentiableModel + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    sequence: &TokenSequence,
    spec: &PathSpec,
    selector: &TargetSelector,
) -> Result<AttributionResult> {
    Ok(attribute_traced(model, store, sequence, spec, selector)?.0)
}

/// `attribute` plus per-step diagnostics for anchored tokens.
pub fn attribute_traced<M: DifferentiableModel + ?Sized>(
    model: &M,
    store: &EmbeddingStore,
    sequence: &TokenSequence,
    spec: &PathSpec,
    selector: &TargetSelector,
) -> Result<(AttributionResult, Vec<PathDiagnostics>)> {
    if sequence.len() < 2 {
        return Err(Error::Contract("sequence must hold at least CLS and SEP".into()));
    }
    let baseline_rows = baseline_sequence(store, sequence, spec.baseline);
    let input_rows: Vec<Vec<f64>> = sequence.ids.iter().map(|&id| store.row(id).to_vec()).collect();

    let mut paths = Vec::with_capacity(sequence.len());
    let mut diagnostics = Vec::new();
    for (i, &id) in sequence.ids.iter().enumerate() {
        let (path, diag) = build_token_path(store, id, i, &baseline_rows[i], spec)?;
        paths.push(path);
        if let Some(d) = diag {
            diagnostics.push(d);
        }
    }

    let raw = accumulate(model, selector, &paths)?;
    let scores = word_scores(&raw);
    let f_input = model.forward(&input_rows, selector)?;
    let f_baseline = model.forward(&baseline_rows, selector)?;
    let delta = delta_percent(&raw, f_input, f_baseline);
    Ok((
        AttributionResult {
            raw,
            word_scores: scores,
            f_input,
            f_baseline,
            delta,
            spec: *spec,
            selector: *selector,
        },
        diagnostics,
    ))
}

/// JSON document for one attribution result; the raw matrix is included only
/// when requested.
#[derive(Serialize)]
pub struct AttributionDocument<'a> {
    pub tokens: Vec<&'a str>,
    pub word_scores: &'a [f64],
    pub delta: &'a DeltaPercent,
    pub f_input: f64,
    pub f_baseline: f64,
    pub spec: &'a PathSpec,
    pub selector: &'a TargetSelector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<&'a Vec<Vec<f64>>>,
}

impl<'a> AttributionDocument<'a> {
    pub fn new(
        store: &'a EmbeddingStore,
        sequence: &TokenSequence,
        result: &'a AttributionResult,
        emit_raw: bool,
    ) -> Self {
        Self {
            tokens: sequence.ids.iter().map(|&id| store.token(id)).collect(),
            word_scores: &result.word_scores,
            delta: &result.delta,
            f_input: result.f_input,
            f_baseline: result.f_baseline,
            spec: &result.spec,
            selector: &result.selector,
            raw: if emit_raw { Some(&result.raw) } else { None },
        }
    }
}
