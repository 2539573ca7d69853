//! Interpolation path construction.
//!
//! Three strategies share the same invariants (endpoint exactness,
//! boundedness between baseline and input, per-dimension chain monotonicity):
//!
//! - `ig`: the plain straight line.
//! - `dig`: an anchored walk from the input toward the baseline; each step
//!   snaps to a vocabulary word projected into the remaining interval.
//! - `udig`: equidistant line points, each snapped to a nearby vocabulary
//!   word and then projected monotonically, processed from the input side so
//!   the projection interval shrinks toward the baseline.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{euclidean, EmbeddingStore, NeighborSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PathMethod {
    Ig,
    Dig,
    Udig,
}

impl PathMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PathMethod::Ig => "ig",
            PathMethod::Dig => "dig",
            PathMethod::Udig => "udig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    Greedy,
    #[clap(name = "maxcount")]
    #[serde(rename = "maxcount")]
    MaxCount,
}

impl AnchorStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AnchorStrategy::Greedy => "greedy",
            AnchorStrategy::MaxCount => "maxcount",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mask,
    Pad,
    Zero,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Mask => "mask",
            BaselineKind::Pad => "pad",
            BaselineKind::Zero => "zero",
        }
    }
}

/// Full description of how paths are built for one attribution run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSpec {
    pub method: PathMethod,
    pub strategy: AnchorStrategy,
    pub steps: usize,
    pub knn_k: usize,
    pub upsample_factor: usize,
    pub baseline: BaselineKind,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            method: PathMethod::Udig,
            strategy: AnchorStrategy::Greedy,
            steps: 30,
            knn_k: 10,
            upsample_factor: 1,
            baseline: BaselineKind::Mask,
        }
    }
}

/// Ordered points from the baseline embedding (first) to the input embedding
/// (last) for one token position.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPath {
    pub token_index: usize,
    pub points: Vec<Vec<f64>>,
}

impl InterpolationPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-step trace for `--trace-paths` diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub line_point: Vec<f64>,
    pub anchor_token: Option<usize>,
    pub projection_displacement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathDiagnostics {
    pub token_index: usize,
    pub method: PathMethod,
    pub fallback_steps: usize,
    pub steps: Vec<StepTrace>,
}

/// K interior points w0 + (k/(K+1))(w - w0), k = 1..K.
pub fn linear_points(w0: &[f64], w: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let denom = (steps + 1) as f64;
    (1..=steps)
        .map(|k| {
            let t = k as f64 / denom;
            w0.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect()
        })
        .collect()
}

/// Per-dimension clamp of `a` into the closed box spanned by the two
/// reference points. Dimensions already inside are untouched.
pub fn monotonic_projection(a: &[f64], lo_ref: &[f64], hi_ref: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(lo_ref.iter().zip(hi_ref))
        .map(|(x, (lo, hi))| {
            let (lo, hi) = if lo <= hi { (*lo, *hi) } else { (*hi, *lo) };
            x.clamp(lo, hi)
        })
        .collect()
}

/// Dimensions of `a` that already lie inside the closed interval spanned by
/// the baseline and input coordinates.
pub fn monotone_dims(a: &[f64], w0: &[f64], w: &[f64]) -> Vec<usize> {
    a.iter()
        .zip(w0.iter().zip(w))
        .enumerate()
        .filter(|(_, (x, (lo, hi)))| {
            let (lo, hi) = if lo <= hi { (**lo, **hi) } else { (**hi, **lo) };
            **x >= lo && **x <= hi
        })
        .map(|(j, _)| j)
        .collect()
}

/// Picks one anchor from a candidate neighbor set and returns its monotonic
/// projection into [lo_ref, hi_ref].
pub fn select_anchor(
    store: &EmbeddingStore,
    candidates: &NeighborSet,
    line_point: &[f64],
    lo_ref: &[f64],
    hi_ref: &[f64],
    strategy: AnchorStrategy,
) -> Result<(usize, Vec<f64>)> {
    if candidates.entries.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    match strategy {
        AnchorStrategy::Greedy => {
            // minimize distance between the candidate and its own projection;
            // ties (common when several candidates are fully monotone, at
            // distance exactly 0) go to the candidate nearest the line point,
            // then to the smaller token id
            let mut best: Option<(f64, f64, usize, Vec<f64>)> = None;
            for &(id, _) in &candidates.entries {
                let c = store.row(id);
                let proj = monotonic_projection(c, lo_ref, hi_ref);
                let d = euclidean(c, &proj);
                let dl = euclidean(c, line_point);
                let better = match &best {
                    None => true,
                    Some((bd, bdl, bid, _)) => {
                        d < *bd
                            || (d == *bd && dl < *bdl)
                            || (d == *bd && dl == *bdl && id < *bid)
                    }
                };
                if better {
                    best = Some((d, dl, id, proj));
                }
            }
            let (_, _, id, proj) = best.unwrap();
            Ok((id, proj))
        }
        AnchorStrategy::MaxCount => {
            // maximize monotone dimension count, ties by distance to the
            // line point, then by token id
            let mut best: Option<(usize, f64, usize)> = None;
            for &(id, _) in &candidates.entries {
                let c = store.row(id);
                let count = monotone_dims(c, lo_ref, hi_ref).len();
                let d = euclidean(c, line_point);
                let better = match &best {
                    None => true,
                    Some((bc, bd, bid)) => {
                        count > *bc
                            || (count == *bc && d < *bd)
                            || (count == *bc && d == *bd && id < *bid)
                    }
                };
                if better {
                    best = Some((count, d, id));
                }
            }
            let (_, _, id) = best.unwrap();
            let proj = monotonic_projection(store.row(id), lo_ref, hi_ref);
            Ok((id, proj))
        }
    }
}

/// Straight-line path: baseline, K equidistant interior points, input.
pub fn build_ig_path(w0: &[f64], w: &[f64], steps: usize, token_index: usize) -> InterpolationPath {
    let mut points = Vec::with_capacity(steps + 2);
    points.push(w0.to_vec());
    points.extend(linear_points(w0, w, steps));
    points.push(w.to_vec());
    InterpolationPath { token_index, points }
}

fn anchor_exclusions(store: &EmbeddingStore, token_id: usize) -> HashSet<usize> {
    let mut exclude: HashSet<usize> = store.specials().all().into_iter().collect();
    exclude.insert(token_id);
    exclude
}

/// Uniform line points snapped to nearby vocabulary words, projected
/// monotonically from the input side toward the baseline.
pub fn build_udig_path(
    store: &EmbeddingStore,
    token_id: usize,
    token_index: usize,
    baseline: &[f64],
    spec: &PathSpec,
) -> Result<(InterpolationPath, PathDiagnostics)> {
    let w = store.row(token_id);
    let w0 = baseline;
    let line = linear_points(w0, w, spec.steps);
    let exclude = anchor_exclusions(store, token_id);

    let mut diagnostics = PathDiagnostics {
        token_index,
        method: PathMethod::Udig,
        fallback_steps: 0,
        steps: Vec::with_capacity(spec.steps),
    };
    let mut interior = vec![Vec::new(); spec.steps];
    let mut prev: Vec<f64> = w.to_vec();
    for k in (0..spec.steps).rev() {
        let line_point = &line[k];
        let candidates = store.knn(line_point, spec.knn_k, &exclude)?;
        let (anchor, point) = if candidates.entries.is_empty() {
            // fall back to the raw line point, kept inside the shrinking
            // interval so chain monotonicity still holds
            diagnostics.fallback_steps += 1;
            (None, monotonic_projection(line_point, w0, &prev))
        } else {
            let (id, proj) =
                select_anchor(store, &candidates, line_point, w0, &prev, spec.strategy)?;
            (Some(id), proj)
        };
        diagnostics.steps.push(StepTrace {
            step: k + 1,
            line_point: line_point.clone(),
            anchor_token: anchor,
            projection_displacement: euclidean(&point, line_point),
        });
        prev = point.clone();
        interior[k] = point;
    }
    diagnostics.steps.reverse();

    let mut points = Vec::with_capacity(spec.steps + 2);
    points.push(w0.to_vec());
    points.extend(interior);
    points.push(w.to_vec());
    let path = upsample(
        InterpolationPath { token_index, points },
        spec.upsample_factor,
    );
    Ok((path, diagnostics))
}

/// DIG-style comparator: an anchored walk that starts at the input embedding
/// and repeatedly snaps to a neighbor of the current point, projected into
/// the interval between the baseline and the current point. Anchors are not
/// constrained near the straight line, so spacing is non-uniform.
pub fn build_dig_path(
    store: &EmbeddingStore,
    token_id: usize,
    token_index: usize,
    baseline: &[f64],
    spec: &PathSpec,
) -> Result<(InterpolationPath, PathDiagnostics)> {
    let w = store.row(token_id);
    let w0 = baseline;
    let mut exclude = anchor_exclusions(store, token_id);

    let mut diagnostics = PathDiagnostics {
        token_index,
        method: PathMethod::Dig,
        fallback_steps: 0,
        steps: Vec::with_capacity(spec.steps),
    };
    let mut walk: Vec<Vec<f64>> = Vec::with_capacity(spec.steps);
    let mut current: Vec<f64> = w.to_vec();
    for step in 0..spec.steps {
        let candidates = store.knn(&current, spec.knn_k, &exclude)?;
        let (anchor, point) = if candidates.entries.is_empty() {
            diagnostics.fallback_steps += 1;
            (None, current.clone())
        } else {
            let (id, proj) =
                select_anchor(store, &candidates, &current, w0, &current, spec.strategy)?;
            exclude.insert(id);
            (Some(id), proj)
        };
        diagnostics.steps.push(StepTrace {
            step: spec.steps - step,
            line_point: current.clone(),
            anchor_token: anchor,
            projection_displacement: euclidean(&point, &current),
        });
        current = point.clone();
        walk.push(point);
    }
    diagnostics.steps.reverse();

    // walk was generated input-side first; path order is baseline -> input
    let mut points = Vec::with_capacity(spec.steps + 2);
    points.push(w0.to_vec());
    points.extend(walk.into_iter().rev());
    points.push(w.to_vec());
    let path = upsample(
        InterpolationPath { token_index, points },
        spec.upsample_factor,
    );
    Ok((path, diagnostics))
}

/// f rounds of inserting the midpoint between every consecutive pair.
/// Endpoints are unchanged; length goes from L to 2L-1 per round.
pub fn upsample(path: InterpolationPath, factor: usize) -> InterpolationPath {
    let mut points = path.points;
    for _ in 0..factor {
        if points.len() < 2 {
            break;
        }
        let mut dense = Vec::with_capacity(points.len() * 2 - 1);
        for pair in points.windows(2) {
            dense.push(pair[0].clone());
            let mid: Vec<f64> = pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            dense.push(mid);
        }
        dense.push(points.last().unwrap().clone());
        points = dense;
    }
    InterpolationPath { token_index: path.token_index, points }
}

/// Checks the path invariants: exact endpoints, boundedness inside the
/// baseline/input box, per-dimension chain monotonicity. Used by tests and
/// the property suite.
pub fn check_path_invariants(path: &InterpolationPath, w0: &[f64], w: &[f64]) -> std::result::Result<(), String> {
    let points = &path.points;
    if points.len() < 2 {
        return Err("path has fewer than 2 points".into());
    }
    if points.first().unwrap().as_slice() != w0 {
        return Err("first point is not the baseline".into());
    }
    if points.last().unwrap().as_slice() != w {
        return Err("last point is not the input".into());
    }
    for (pi, p) in points.iter().enumerate() {
        for j in 0..w0.len() {
            let (lo, hi) = if w0[j] <= w[j] { (w0[j], w[j]) } else { (w[j], w0[j]) };
            if p[j] < lo || p[j] > hi {
                return Err(format!("point {pi} dim {j} outside [{lo}, {hi}]: {}", p[j]));
            }
        }
    }
    for j in 0..w0.len() {
        let ascending = w0[j] <= w[j];
        for (pi, pair) in points.windows(2).enumerate() {
            let (a, b) = (pair[0][j], pair[1][j]);
            if (ascending && b < a) || (!ascending && b > a) {
                return Err(format!("chain monotonicity broken at step {pi}, dim {j}"));
            }
        }
    }
    Ok(())
}
