//! Acceptance gate: ten checks covering gradient correctness, exactness on a
//! linear model, quadrature convergence, delta orderings across methods,
//! faithfulness against a random-score control, randomized path invariants,
//! byte-level determinism of the CLI, degenerate-case behavior, and the
//! baseline-output report. Each check prints one pass/fail line.

use std::collections::HashSet;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pathgrad::attribution::{attribute, baseline_sequence, DeltaPercent};
use pathgrad::corpus::{generate_corpus, labeled_sequences, seed_embeddings};
use pathgrad::metrics::{
    comprehensiveness, log_odds, median_delta, score_corpus, select_top, sufficiency,
    MaskingProtocol, ScoredExample,
};
use pathgrad::model::{
    measure_baseline_output, train_reference, Hyperparams, LinearSurrogate, ReferenceModelParams,
    TargetSelector, TokenSequence,
};
use pathgrad::path::{
    build_dig_path, build_ig_path, build_udig_path, check_path_invariants, monotone_dims,
    monotonic_projection, select_anchor, upsample, AnchorStrategy, PathMethod, PathSpec,
};
use pathgrad::store::{
    euclidean, EmbeddingStore, NeighborSet, CLS_TOKEN, MASK_TOKEN, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN,
};
use pathgrad::DifferentiableModel;

fn verdict(number: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {number:02} ({name}): {} [{detail}]",
        if pass { "pass" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} ({name}) failed: {detail}");
}

struct Fixture {
    params: ReferenceModelParams,
    store: EmbeddingStore,
    sequences: Vec<TokenSequence>,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let seed_store = seed_embeddings(7, 16);
        let examples = generate_corpus(7, 200).unwrap();
        let labeled = labeled_sequences(&seed_store, &examples);
        let params = train_reference(&seed_store, &labeled, &Hyperparams::default()).unwrap();
        let store = params.to_store().unwrap();
        let sequences = labeled.into_iter().map(|(s, _)| s).collect();
        Fixture { params, store, sequences }
    })
}

fn spec(method: PathMethod, factor: usize) -> PathSpec {
    PathSpec {
        method,
        strategy: AnchorStrategy::Greedy,
        steps: 30,
        knn_k: 10,
        upsample_factor: factor,
        ..Default::default()
    }
}

fn corpus_run(
    cache: &'static OnceLock<(Vec<ScoredExample>, Vec<DeltaPercent>)>,
    method: PathMethod,
    factor: usize,
) -> &'static (Vec<ScoredExample>, Vec<DeltaPercent>) {
    cache.get_or_init(|| {
        let fx = fixture();
        score_corpus(&fx.params, &fx.store, &fx.sequences, &spec(method, factor)).unwrap()
    })
}

fn udig_run() -> &'static (Vec<ScoredExample>, Vec<DeltaPercent>) {
    static CACHE: OnceLock<(Vec<ScoredExample>, Vec<DeltaPercent>)> = OnceLock::new();
    corpus_run(&CACHE, PathMethod::Udig, 1)
}

fn ig_run() -> &'static (Vec<ScoredExample>, Vec<DeltaPercent>) {
    static CACHE: OnceLock<(Vec<ScoredExample>, Vec<DeltaPercent>)> = OnceLock::new();
    corpus_run(&CACHE, PathMethod::Ig, 1)
}

#[test]
fn criterion_01_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_rel: f64 = 0.0;
    for pair in 0..100u64 {
        let dim = 4 + (pair as usize % 3);
        let hidden = 5 + (pair as usize % 4);
        let mut model =
            ReferenceModelParams::init(vec!["t".into()], vec![0.0; dim], dim, hidden, 2, 300 + pair);
        for b in &mut model.b_hidden {
            *b = rng.random_range(-0.5..0.5);
        }
        let m = 2 + pair as usize % 4;
        let x: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let sel = if pair % 2 == 0 {
            TargetSelector::ClassProbability { class: (pair / 2 % 2) as usize }
        } else {
            TargetSelector::ClassLogit { class: (pair / 2 % 2) as usize }
        };
        let analytic = model.grad_embeddings(&x, &sel).unwrap();
        let h = 1e-5;
        let mut work = x.clone();
        for i in 0..m {
            for j in 0..dim {
                let orig = work[i][j];
                work[i][j] = orig + h;
                let fp = model.forward(&work, &sel).unwrap();
                work[i][j] = orig - h;
                let fm = model.forward(&work, &sel).unwrap();
                work[i][j] = orig;
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic[i][j];
                if a.abs() > 1e-8 {
                    max_rel = max_rel.max(((a - numeric) / a).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        "analytic gradients vs finite differences",
        max_rel < 1e-4 && elapsed < 10.0,
        &format!("max relative error {max_rel:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_02_linear_model_is_integrated_exactly() {
    let start = Instant::now();
    let mut tokens: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let dim = 3;
    let mut rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for t in [CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, PAD_TOKEN, UNK_TOKEN] {
        tokens.push(t.to_string());
        rows.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let store = EmbeddingStore::new(tokens, rows).unwrap();
    let specials = store.specials();
    let sequence = TokenSequence {
        ids: vec![specials.cls, 0, 3, 5, specials.sep],
        text: "c0 c3 c5".into(),
    };
    let model = LinearSurrogate {
        coeffs: (0..sequence.len())
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect(),
    };
    let selector = TargetSelector::ClassLogit { class: 1 };

    let mut worst_entry: f64 = 0.0;
    let mut worst_delta: f64 = 0.0;
    for (method, strategy) in [
        (PathMethod::Ig, AnchorStrategy::Greedy),
        (PathMethod::Dig, AnchorStrategy::Greedy),
        (PathMethod::Dig, AnchorStrategy::MaxCount),
        (PathMethod::Udig, AnchorStrategy::Greedy),
        (PathMethod::Udig, AnchorStrategy::MaxCount),
    ] {
        let spec = PathSpec { method, strategy, steps: 7, knn_k: 4, ..Default::default() };
        let result = attribute(&model, &store, &sequence, &spec, &selector).unwrap();
        let baseline = baseline_sequence(&store, &sequence, spec.baseline);
        for (i, &id) in sequence.ids.iter().enumerate() {
            for j in 0..dim {
                let expected = model.coeffs[i][j] * (store.row(id)[j] - baseline[i][j]);
                worst_entry = worst_entry.max((result.raw[i][j] - expected).abs());
            }
        }
        match result.delta {
            DeltaPercent::Defined { percent } => worst_delta = worst_delta.max(percent.abs()),
            DeltaPercent::UndefinedSmallDenominator { abs_error } => {
                worst_delta = worst_delta.max(abs_error)
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        "linear surrogate exactness and zero delta",
        worst_entry < 1e-9 && worst_delta < 1e-9 && elapsed < 1.0,
        &format!("max entry error {worst_entry:.2e}, max delta {worst_delta:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_03_ig_delta_shrinks_with_more_steps() {
    let fx = fixture();
    let run = |steps: usize| {
        let spec = PathSpec { method: PathMethod::Ig, steps, upsample_factor: 0, ..Default::default() };
        score_corpus(&fx.params, &fx.store, &fx.sequences, &spec).unwrap().1
    };
    let coarse = run(32);
    let dense = run(256);
    let mut improved = 0usize;
    for (c, d) in coarse.iter().zip(&dense) {
        if let (Some(c), Some(d)) = (c.defined(), d.defined()) {
            if d < c {
                improved += 1;
            }
        }
    }
    let fraction = improved as f64 / coarse.len() as f64;
    verdict(
        3,
        "straight-line delta decreases from K=32 to K=256",
        fraction >= 0.95,
        &format!("{improved}/{} examples improved", coarse.len()),
    );
}

#[test]
fn criterion_04_upsampling_reduces_udig_delta() {
    let fx = fixture();
    let f0 = score_corpus(&fx.params, &fx.store, &fx.sequences, &spec(PathMethod::Udig, 0))
        .unwrap()
        .1;
    let (median_f0, _) = median_delta(&f0);
    let (median_f1, _) = median_delta(&udig_run().1);
    verdict(
        4,
        "uniform anchored delta: f=1 <= f=0",
        median_f1 <= median_f0,
        &format!("median {median_f1:.2}% (f=1) vs {median_f0:.2}% (f=0)"),
    );
}

#[test]
fn criterion_05_uniform_anchoring_beats_walk_on_delta() {
    let fx = fixture();
    let dig = score_corpus(&fx.params, &fx.store, &fx.sequences, &spec(PathMethod::Dig, 1))
        .unwrap()
        .1;
    let (median_dig, _) = median_delta(&dig);
    let (median_udig, _) = median_delta(&udig_run().1);
    verdict(
        5,
        "median delta: uniform anchored <= anchored walk",
        median_udig <= median_dig,
        &format!("median {median_udig:.2}% vs {median_dig:.2}%"),
    );
}

#[test]
fn criterion_06_faithfulness_beats_random_control() {
    let fx = fixture();
    let protocol = MaskingProtocol::classification();
    let udig = &udig_run().0;
    let lo = log_odds(&fx.params, &fx.store, udig, &protocol).unwrap();
    let comp = comprehensiveness(&fx.params, &fx.store, udig, &protocol).unwrap();
    let suff = sufficiency(&fx.params, &fx.store, udig, &protocol).unwrap();

    let mut wins = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let control: Vec<ScoredExample> = udig
            .iter()
            .map(|ex| {
                let mut scores = ex.scores.clone();
                scores.shuffle(&mut rng);
                ScoredExample { sequence: ex.sequence.clone(), scores }
            })
            .collect();
        let c_lo = log_odds(&fx.params, &fx.store, &control, &protocol).unwrap();
        let c_comp = comprehensiveness(&fx.params, &fx.store, &control, &protocol).unwrap();
        let c_suff = sufficiency(&fx.params, &fx.store, &control, &protocol).unwrap();
        if lo < c_lo && comp > c_comp && suff < c_suff {
            wins += 1;
        }
    }

    let ig_comp = comprehensiveness(&fx.params, &fx.store, &ig_run().0, &protocol).unwrap();
    verdict(
        6,
        "faithfulness vs random-score control",
        wins >= 16 && comp >= ig_comp,
        &format!("{wins}/20 control wins; Comp {comp:.6} vs straight-line {ig_comp:.6}"),
    );
}

#[test]
fn criterion_07_randomized_path_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut cases = 0usize;
    for _ in 0..400 {
        let dim = rng.random_range(2..=5);
        let n_content = rng.random_range(3..=8);
        let mut tokens: Vec<String> = (0..n_content).map(|i| format!("c{i}")).collect();
        let mut rows: Vec<Vec<f64>> = (0..n_content)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        for t in [CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, PAD_TOKEN, UNK_TOKEN] {
            tokens.push(t.to_string());
            rows.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let store = EmbeddingStore::new(tokens, rows).unwrap();

        let token_id = rng.random_range(0..store.len());
        let baseline: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = PathSpec {
            method: PathMethod::Udig,
            strategy: if rng.random_range(0..2) == 0 {
                AnchorStrategy::Greedy
            } else {
                AnchorStrategy::MaxCount
            },
            steps: rng.random_range(1..=8),
            knn_k: rng.random_range(1..=6),
            upsample_factor: rng.random_range(0..=2),
            ..Default::default()
        };
        let w = store.row(token_id).to_vec();

        // boundedness, chain monotonicity, endpoint exactness for every
        // method, plus upsample preservation (factor folded into the spec)
        let ig = upsample(build_ig_path(&baseline, &w, spec.steps, 0), spec.upsample_factor);
        check_path_invariants(&ig, &baseline, &w).unwrap();
        let (udig, _) = build_udig_path(&store, token_id, 0, &baseline, &spec).unwrap();
        check_path_invariants(&udig, &baseline, &w).unwrap();
        let (dig, _) = build_dig_path(&store, token_id, 0, &baseline, &spec).unwrap();
        check_path_invariants(&dig, &baseline, &w).unwrap();
        cases += 3;

        // knn vs full-scan oracle
        let query: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = rng.random_range(1..=store.len());
        let exclude: HashSet<usize> =
            (0..store.len()).filter(|_| rng.random_range(0..4) == 0).collect();
        let got = store.knn(&query, k, &exclude).unwrap();
        let mut oracle: Vec<(f64, usize)> = (0..store.len())
            .filter(|id| !exclude.contains(id))
            .map(|id| (euclidean(&query, store.row(id)), id))
            .collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        oracle.truncate(k);
        assert_eq!(
            got.entries.iter().map(|e| e.0).collect::<Vec<_>>(),
            oracle.iter().map(|e| e.1).collect::<Vec<_>>()
        );
        cases += 1;

        // selection rules vs literal enumeration
        let ids: Vec<usize> = (0..store.len()).filter(|_| rng.random_range(0..2) == 0).collect();
        if !ids.is_empty() {
            let line: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            let lo: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            let hi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            let candidates = NeighborSet {
                entries: ids.iter().map(|&id| (id, euclidean(&line, store.row(id)))).collect(),
            };
            let mut greedy: Vec<(f64, f64, usize)> = ids
                .iter()
                .map(|&id| {
                    let c = store.row(id);
                    let proj = monotonic_projection(c, &lo, &hi);
                    (euclidean(c, &proj), euclidean(c, &line), id)
                })
                .collect();
            greedy.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.partial_cmp(&b.1).unwrap())
                    .then(a.2.cmp(&b.2))
            });
            let (chosen, _) =
                select_anchor(&store, &candidates, &line, &lo, &hi, AnchorStrategy::Greedy)
                    .unwrap();
            assert_eq!(chosen, greedy[0].2);

            let mut counting: Vec<(usize, f64, usize)> = ids
                .iter()
                .map(|&id| {
                    let c = store.row(id);
                    (monotone_dims(c, &lo, &hi).len(), euclidean(c, &line), id)
                })
                .collect();
            counting.sort_by(|a, b| {
                b.0.cmp(&a.0).then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2))
            });
            let (chosen, _) =
                select_anchor(&store, &candidates, &line, &lo, &hi, AnchorStrategy::MaxCount)
                    .unwrap();
            assert_eq!(chosen, counting[0].2);
            cases += 2;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        7,
        "randomized invariants with oracles",
        cases >= 1000 && elapsed < 60.0,
        &format!("{cases} cases, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_08_deterministic_reruns_are_byte_identical() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let run = |args: &[&str], out: &std::path::Path| {
        let result = Command::new(env!("CARGO_BIN_EXE_pathgrad"))
            .args(args)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(
            result.status.code(),
            Some(0),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&result.stderr)
        );
    };
    let shared = base.join("shared");
    run(&["gen-corpus"], &shared);
    let emb = shared.join("embeddings.txt");
    let corpus = shared.join("corpus.jsonl");
    run(
        &[
            "train",
            "--embeddings",
            emb.to_str().unwrap(),
            "--corpus",
            corpus.to_str().unwrap(),
        ],
        &shared,
    );
    let model = shared.join("model.json");

    let compare = |out: &std::path::Path| {
        run(
            &[
                "compare",
                "--deterministic",
                "--model",
                model.to_str().unwrap(),
                "--corpus",
                corpus.to_str().unwrap(),
            ],
            out,
        );
    };
    let out_a = base.join("a");
    let out_b = base.join("b");
    compare(&out_a);
    compare(&out_b);

    let csv_a = std::fs::read(out_a.join("compare.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("compare.csv")).unwrap();
    let json_a = std::fs::read(out_a.join("compare.json")).unwrap();
    let json_b = std::fs::read(out_b.join("compare.json")).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        8,
        "byte-identical deterministic comparison runs",
        csv_a == csv_b && json_a == json_b && elapsed < 600.0,
        &format!("{} csv bytes, {} json bytes, {elapsed:.1}s", csv_a.len(), json_a.len()),
    );
}

#[test]
fn criterion_09_degenerate_input_and_scale_invariance() {
    let fx = fixture();
    let specials = fx.store.specials();
    // a sequence already sitting at its own baseline
    let sequence = TokenSequence {
        ids: vec![specials.cls, specials.mask, specials.mask, specials.sep],
        text: String::new(),
    };
    let selector = TargetSelector::ClassProbability { class: 1 };
    let mut degenerate_ok = true;
    for method in [PathMethod::Ig, PathMethod::Dig, PathMethod::Udig] {
        let result =
            attribute(&fx.params, &fx.store, &sequence, &spec(method, 1), &selector).unwrap();
        degenerate_ok &= result.raw.iter().flatten().all(|v| *v == 0.0);
        degenerate_ok &= result.word_scores.iter().all(|v| *v == 0.0);
    }

    let protocol = MaskingProtocol::classification();
    let mut scaling_ok = true;
    for ex in udig_run().0.iter().take(50) {
        let top = select_top(&ex.scores, &protocol, &fx.store, &ex.sequence);
        for scale in [0.01, 3.7, 1e6] {
            let scaled: Vec<f64> = ex.scores.iter().map(|s| s * scale).collect();
            scaling_ok &= top == select_top(&scaled, &protocol, &fx.store, &ex.sequence);
        }
    }
    verdict(
        9,
        "zero attributions at baseline, scale-invariant top-k",
        degenerate_ok && scaling_ok,
        &format!("degenerate {degenerate_ok}, scaling {scaling_ok}"),
    );
}

#[test]
fn criterion_10_baseline_output_report_is_archived() {
    let fx = fixture();
    let specials = fx.store.specials();
    let lengths = [1usize, 10, 25, 50];
    let mask = measure_baseline_output(&fx.params, &fx.store, specials.mask, &lengths).unwrap();
    let pad = measure_baseline_output(&fx.params, &fx.store, specials.pad, &lengths).unwrap();

    let mut report = String::from("length,mask_deviation,pad_deviation\n");
    for ((len, m), (_, p)) in mask.iter().zip(&pad) {
        report.push_str(&format!("{len},{m:.6},{p:.6}\n"));
    }
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("baseline_output.csv");
    std::fs::write(&path, &report).unwrap();

    let ok = mask.len() == 4
        && pad.len() == 4
        && path.exists()
        && mask.iter().chain(&pad).all(|(_, d)| d.is_finite() && *d >= 0.0);
    verdict(
        10,
        "baseline-output deviation report",
        ok,
        &format!("archived at {}", path.display()),
    );
}
