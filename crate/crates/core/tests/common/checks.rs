//! Independent oracles, each returning a measured worst case so callers can
//! compare against their own tolerance.

use causeway::corpus::{CausalRelation, Corpus, Role, Sentence};
use causeway::crf::{
    log_partition, marginals, nll_and_gradient, score_sequence, viterbi, LabeledSequence,
};
use causeway::eval::{
    classify_match, count_errors, evaluate, fair_role_scores, match_sentence, strict_role_scores,
    EvalMode, MatchCategory, MatchScore, PooledSpan, RoleCounts,
};
use causeway::labeling::{
    canonical_order, decode_stacked, is_valid_layer, repair_layer, stack_layers,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{all_sequences, brute_score, random_instance, random_layer, random_sentence};

#[derive(Debug, Default, Clone, Copy)]
pub struct InferenceWorst {
    pub trials: usize,
    /// |viterbi score − enumerated max|
    pub viterbi: f64,
    /// Viterbi paths whose recomputed score differs from the reported one.
    pub viterbi_bad_paths: usize,
    /// relative |log Z − log Σ exp|
    pub log_partition: f64,
    /// max |unary or pairwise marginal − enumeration|
    pub marginals: f64,
    /// max |score_sequence − re-summation|
    pub score: f64,
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Compares exact inference with exhaustive enumeration on random
/// instances with `L ≤ 6`, `K ≤ 8`, `K^L ≤ 20000`.
pub fn inference_oracle(trials: usize, seed: u64) -> InferenceWorst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = InferenceWorst {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let k = rng.gen_range(1..=8);
        let mut len = rng.gen_range(1..=6);
        while (k as f64).powi(len as i32) > 20000.0 {
            len -= 1;
        }
        let (params, feats) = random_instance(&mut rng, len, k, 2.0);
        let seqs = all_sequences(len, k);
        let scores: Vec<f64> = seqs
            .iter()
            .map(|y| brute_score(&params, &feats, y))
            .collect();
        for (y, s) in seqs.iter().zip(&scores).take(50) {
            let got = score_sequence(&params, &feats, y).unwrap();
            worst.score = worst.score.max((got - s).abs());
        }

        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (path, vs) = viterbi(&params, &feats, None).unwrap();
        worst.viterbi = worst.viterbi.max((vs - best).abs());
        if (brute_score(&params, &feats, &path) - vs).abs() > 1e-9 {
            worst.viterbi_bad_paths += 1;
        }

        let log_z = lse(&scores);
        let got = log_partition(&params, &feats).unwrap();
        worst.log_partition = worst
            .log_partition
            .max((got - log_z).abs() / log_z.abs().max(f64::MIN_POSITIVE));

        let m = marginals(&params, &feats).unwrap();
        let mut unary = vec![0.0; len * k];
        let mut pair = vec![0.0; len.saturating_sub(1) * k * k];
        for (y, s) in seqs.iter().zip(&scores) {
            let p = (s - log_z).exp();
            for t in 0..len {
                unary[t * k + y[t]] += p;
                if t + 1 < len {
                    pair[(t * k + y[t]) * k + y[t + 1]] += p;
                }
            }
        }
        for t in 0..len {
            for a in 0..k {
                worst.marginals = worst
                    .marginals
                    .max((m.unary(t, a) - unary[t * k + a]).abs());
                if t + 1 < len {
                    for b in 0..k {
                        let e = (m.pairwise(t, a, b) - pair[(t * k + a) * k + b]).abs();
                        worst.marginals = worst.marginals.max(e);
                    }
                }
            }
        }
    }
    worst
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradientWorst {
    pub instances: usize,
    pub coordinates: usize,
    /// max over coordinates of |analytic − numeric| / max(|analytic|, |numeric|, floor)
    pub relative: f64,
}

/// Central finite differences with step `h` on random two-sequence batches.
pub fn gradient_check(instances: usize, seed: u64, h: f64, floor: f64) -> GradientWorst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = GradientWorst {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let k = rng.gen_range(2..=4);
        let l2 = [0.0, 1e-4, 0.1][rng.gen_range(0..3)];
        let (mut params, f1) = {
            let n = rng.gen_range(1..=4);
            random_instance(&mut rng, n, k, 1.0)
        };
        let (_, f2) = {
            let n = rng.gen_range(1..=4);
            random_instance(&mut rng, n, k, 1.0)
        };
        let seqs: Vec<LabeledSequence> = [f1, f2]
            .into_iter()
            .map(|features| {
                let labels = (0..features.len()).map(|_| rng.gen_range(0..k)).collect();
                LabeledSequence { features, labels }
            })
            .collect();
        let batch: Vec<&LabeledSequence> = seqs.iter().collect();
        let (_, grad) = nll_and_gradient(&params, &batch, l2).unwrap();
        for (j, &analytic) in grad.iter().enumerate() {
            let w = params.weights[j];
            params.weights[j] = w + h;
            let (up, _) = nll_and_gradient(&params, &batch, l2).unwrap();
            params.weights[j] = w - h;
            let (down, _) = nll_and_gradient(&params, &batch, l2).unwrap();
            params.weights[j] = w;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            worst.relative = worst.relative.max(rel);
            worst.coordinates += 1;
        }
    }
    worst
}

pub fn random_spans<R: Rng>(rng: &mut R, n: usize, len: usize) -> Vec<PooledSpan> {
    let mut v: Vec<PooledSpan> = (0..n)
        .map(|_| {
            let a = rng.gen_range(0..len - 1);
            let b = rng.gen_range(a + 1..=len.min(a + 4));
            PooledSpan::new(Role::ALL[rng.gen_range(0..3)], a, b)
        })
        .collect();
    v.sort();
    v.dedup();
    v
}

fn slot(c: MatchCategory) -> Option<usize> {
    match c {
        MatchCategory::Tp => Some(0),
        MatchCategory::Le => Some(1),
        MatchCategory::Be => Some(2),
        MatchCategory::Lbe => Some(3),
        MatchCategory::NoMatch => None,
    }
}

/// Best lexicographic score over every partial one-to-one assignment.
pub fn brute_best_matching(gold: &[PooledSpan], pred: &[PooledSpan]) -> MatchScore {
    fn go(
        g: usize,
        gold: &[PooledSpan],
        pred: &[PooledSpan],
        used: &mut Vec<bool>,
        acc: MatchScore,
    ) -> MatchScore {
        if g == gold.len() {
            return acc;
        }
        let mut best = go(g + 1, gold, pred, used, acc);
        for p in 0..pred.len() {
            if used[p] {
                continue;
            }
            if let Some(i) = slot(classify_match(&gold[g], &pred[p])) {
                used[p] = true;
                let mut next = acc;
                next[i] += 1;
                best = best.max(go(g + 1, gold, pred, used, next));
                used[p] = false;
            }
        }
        best
    }
    go(0, gold, pred, &mut vec![false; pred.len()], [0; 4])
}

/// Number of random small instances where the matcher is not optimal.
pub fn matching_oracle(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let len = rng.gen_range(3..12);
            let gold = {
                let n = rng.gen_range(0..=6);
                random_spans(&mut rng, n, len)
            };
            let pred = {
                let n = rng.gen_range(0..=6);
                random_spans(&mut rng, n, len)
            };
            match_sentence(&gold, &pred).score() != brute_best_matching(&gold, &pred)
        })
        .count()
}

/// Random span sets (including ones over the exact-search limit) whose
/// counts do not account for every gold and predicted span.
pub fn accounting_violations(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let len = rng.gen_range(3..30);
            let gold = {
                let n = rng.gen_range(0..=12);
                random_spans(&mut rng, n, len)
            };
            let pred = {
                let n = rng.gen_range(0..=12);
                random_spans(&mut rng, n, len)
            };
            let c = count_errors(&gold, &pred);
            Role::ALL.iter().any(|&r| {
                let g = gold.iter().filter(|s| s.role == r).count();
                let p = pred.iter().filter(|s| s.role == r).count();
                c.role(r).gold_total() != g || c.role(r).pred_total() != p
            })
        })
        .count()
}

/// Sentences whose relations do not survive stack → decode unchanged.
pub fn round_trip_failures(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|&i| {
            let k = rng.gen_range(0..=3);
            let mut s = random_sentence(&mut rng, &format!("s{i}"), k);
            canonical_order(&mut s.relations);
            let tags = stack_layers(&s, &s.relations).unwrap();
            decode_stacked(&tags).relations != s.relations
        })
        .count()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RepairOutcome {
    pub sequences: usize,
    pub ungrammatical: usize,
    pub not_idempotent: usize,
}

pub fn repair_check(n: usize, seed: u64) -> RepairOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = RepairOutcome {
        sequences: n,
        ..Default::default()
    };
    for _ in 0..n {
        let len = rng.gen_range(0..=15);
        let layer = random_layer(&mut rng, len);
        let once = repair_layer(&layer);
        if !is_valid_layer(&once) {
            out.ungrammatical += 1;
        }
        if repair_layer(&once) != once {
            out.not_idempotent += 1;
        }
    }
    out
}

fn words(n: usize) -> String {
    vec!["w"; n].join(" ")
}

fn corpus_of(rows: Vec<(&str, Vec<CausalRelation>)>) -> Corpus {
    Corpus::new(
        "fixture",
        rows.into_iter()
            .map(|(id, relations)| {
                let mut s = Sentence::new(id, words(16), !relations.is_empty());
                s.relations = relations;
                s
            })
            .collect(),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

/// Hand-computed evaluation fixtures; returns a description of each mismatch.
pub fn eval_fixture_failures() -> Vec<String> {
    let mut bad = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            bad.push(what.to_string());
        }
    };

    // Gold against itself.
    let gold = corpus_of(vec![
        ("a", vec![CausalRelation::new((0, 2), (3, 5), Some((2, 3)))]),
        (
            "b",
            vec![
                CausalRelation::new((0, 2), (3, 5), None),
                CausalRelation::new((6, 8), (9, 12), Some((8, 9))),
            ],
        ),
    ]);
    for mode in [EvalMode::Fair, EvalMode::Strict] {
        let r = evaluate(&gold, &gold, mode).unwrap();
        for role in Role::ALL {
            expect(
                close(r.overall.role(role).f1, 1.0),
                &format!("{mode:?} self-evaluation {role:?} F1 != 1"),
            );
        }
    }

    // One boundary error only.
    let be = RoleCounts {
        be: 1,
        ..Default::default()
    };
    let f = fair_role_scores(&be);
    expect(
        close(f.precision, 0.5) && close(f.recall, 0.5) && close(f.f1, 0.5),
        "BE-only fair != 0.5",
    );
    let s = strict_role_scores(&be);
    expect(
        s.precision == 0.0 && s.recall == 0.0 && s.f1 == 0.0,
        "BE-only strict != 0",
    );
    let g = corpus_of(vec![(
        "a",
        vec![CausalRelation::new((2, 5), (8, 10), None)],
    )]);
    let p = corpus_of(vec![(
        "a",
        vec![CausalRelation::new((3, 6), (8, 10), None)],
    )]);
    let fair = evaluate(&g, &p, EvalMode::Fair).unwrap();
    let strict = evaluate(&g, &p, EvalMode::Strict).unwrap();
    expect(
        close(fair.overall.cause.f1, 0.5),
        "BE-only corpus fair cause F1 != 0.5",
    );
    expect(
        strict.overall.cause.f1 == 0.0,
        "BE-only corpus strict cause F1 != 0",
    );
    expect(
        close(fair.overall.effect.f1, 1.0),
        "BE-only corpus effect F1 != 1",
    );

    // TP=2, BE=1, FP=1.
    let c = RoleCounts {
        tp: 2,
        be: 1,
        fp: 1,
        ..Default::default()
    };
    let f = fair_role_scores(&c);
    expect(
        close(f.precision, 2.5 / 4.0) && close(f.recall, 2.5 / 3.0),
        "TP2 BE1 FP1 fair P/R",
    );

    // Per role one TP, one BE and one FP over three sentences; the third
    // sentence is not causal in gold, so its prediction is ignored.
    let g = corpus_of(vec![
        (
            "tp",
            vec![CausalRelation::new((0, 2), (3, 5), Some((2, 3)))],
        ),
        (
            "be",
            vec![CausalRelation::new((0, 2), (5, 7), Some((3, 4)))],
        ),
        ("neg", vec![]),
    ]);
    let p = corpus_of(vec![
        (
            "tp",
            vec![
                CausalRelation::new((0, 2), (3, 5), Some((2, 3))),
                CausalRelation::new((8, 9), (10, 11), Some((12, 13))),
            ],
        ),
        (
            "be",
            vec![CausalRelation::new((0, 3), (5, 8), Some((3, 5)))],
        ),
        ("neg", vec![CausalRelation::new((0, 1), (2, 3), None)]),
    ]);
    let want = RoleCounts {
        tp: 1,
        be: 1,
        fp: 1,
        ..Default::default()
    };
    let fair = evaluate(&g, &p, EvalMode::Fair).unwrap();
    let strict = evaluate(&g, &p, EvalMode::Strict).unwrap();
    expect(
        fair.evaluated == 2 && fair.skipped == 1,
        "mixed fixture evaluated/skipped",
    );
    for role in Role::ALL {
        expect(
            *fair.overall.counts.role(role) == want,
            &format!("mixed fixture {role:?} counts"),
        );
        let fr = fair.overall.role(role);
        expect(
            close(fr.precision, 0.5) && close(fr.recall, 0.75) && close(fr.f1, 0.6),
            &format!("mixed fixture {role:?} fair scores"),
        );
        let sr = strict.overall.role(role);
        expect(
            close(sr.precision, 1.0 / 3.0) && close(sr.recall, 0.5) && close(sr.f1, 0.4),
            &format!("mixed fixture {role:?} strict scores"),
        );
    }
    expect(
        close(fair.overall.macro_avg.f1, 0.6),
        "mixed fixture fair macro F1",
    );

    // Label errors: cause and effect ranges swapped, signal shifted onto
    // the effect's range.
    let g = corpus_of(vec![(
        "x",
        vec![CausalRelation::new((0, 2), (3, 5), Some((6, 7)))],
    )]);
    let p = corpus_of(vec![(
        "x",
        vec![CausalRelation::new((3, 5), (0, 2), Some((4, 7)))],
    )]);
    let c = evaluate(&g, &p, EvalMode::Fair).unwrap().overall.counts;
    // gold cause [0,2) ← pred effect: LE. gold effect [3,5) ← pred cause: LE.
    // gold signal [6,7) ← pred signal [4,7): BE.
    let cause = RoleCounts {
        le_gold: 1,
        le_pred: 1,
        ..Default::default()
    };
    let signal = RoleCounts {
        be: 1,
        ..Default::default()
    };
    expect(
        c.cause == cause && c.effect == cause && c.signal == signal,
        "label-error fixture counts",
    );
    bad
}
