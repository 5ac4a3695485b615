//! Generators shared by the integration tests.

#![allow(dead_code)]

pub mod checks;
pub mod scenarios;

use causeway::augment::{synth_templates, SlotLexicons};
use causeway::corpus::{CausalRelation, Corpus, Sentence};
use causeway::crf::{CrfParams, FeatureVector};
use causeway::labeling::LayerTag;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random fully-supported parameters and features for a small instance.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    len: usize,
    k: usize,
    scale: f64,
) -> (CrfParams, Vec<FeatureVector>) {
    let num_features = 5;
    let dense_dim = 2;
    let mut params = CrfParams::zeros_full(num_features, k, dense_dim);
    for w in &mut params.weights {
        *w = rng.gen_range(-scale..scale);
    }
    let feats = (0..len)
        .map(|_| {
            let idx: Vec<u32> = (0..num_features as u32)
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            let mut fv = FeatureVector::sparse(idx);
            fv.dense = Some((0..dense_dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            fv
        })
        .collect();
    (params, feats)
}

/// All `k^len` label sequences in lexicographic order.
pub fn all_sequences(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Direct re-summation of the sequence score.
pub fn brute_score(params: &CrfParams, feats: &[FeatureVector], labels: &[usize]) -> f64 {
    let k = params.num_labels();
    let w = &params.weights;
    let mut s = params.begin()[labels[0]] + params.end()[labels[labels.len() - 1]];
    for (t, (fv, &y)) in feats.iter().zip(labels).enumerate() {
        for &f in &fv.indices {
            s += params.emission_index(f, y).map_or(0.0, |j| w[j]);
        }
        if let Some(x) = &fv.dense {
            for (d, xd) in x.iter().enumerate() {
                s += xd * w[params.dense_offset() + d * k + y];
            }
        }
        if t > 0 {
            s += params.transition(labels[t - 1], y);
        }
    }
    s
}

const WORDS: &[&str] = &[
    "the", "police", "strike", "workers", "protest", "rain", "caused", "led", "to", "after",
    "riots", "farmers", "prices", "rose", "city", "students", "march", "a", "of", "in",
];

fn random_span<R: Rng>(
    rng: &mut R,
    len: usize,
    taken: &[(usize, usize)],
) -> Option<(usize, usize)> {
    for _ in 0..50 {
        let a = rng.gen_range(0..len);
        let b = rng.gen_range(a + 1..=len.min(a + 4));
        if taken.iter().all(|&(s, e)| b <= s || e <= a) {
            return Some((a, b));
        }
    }
    None
}

/// A sentence of random words with `n` relations; spans within a relation
/// never overlap, spans of different relations may.
pub fn random_sentence<R: Rng>(rng: &mut R, id: &str, n: usize) -> Sentence {
    let len = rng.gen_range(8..20);
    let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let mut s = Sentence::new(id, text.join(" "), n > 0);
    while s.relations.len() < n {
        let mut taken = Vec::new();
        let Some(c) = random_span(rng, len, &taken) else {
            continue;
        };
        taken.push(c);
        let Some(e) = random_span(rng, len, &taken) else {
            continue;
        };
        taken.push(e);
        let sig = if rng.gen_bool(0.7) {
            random_span(rng, len, &taken)
        } else {
            None
        };
        let r = CausalRelation::new(c, e, sig);
        if !s.relations.contains(&r) {
            s.relations.push(r);
        }
    }
    s
}

pub fn random_layer<R: Rng>(rng: &mut R, len: usize) -> Vec<LayerTag> {
    let all = LayerTag::all();
    (0..len).map(|_| *all.choose(rng).unwrap()).collect()
}

const FILLER_PREFIX: &[&str] = &[
    "Officials said that",
    "According to local media ,",
    "On Monday ,",
    "Witnesses reported that",
    "In a statement ,",
    "Last week ,",
];

const FILLER_SUFFIX: &[&str] = &[
    ", police said",
    "last year",
    ", residents said",
    "in the capital",
    "on Tuesday",
];

/// Template sentences with random leading and trailing filler clauses.
pub fn noisy_templates<R: Rng>(n: usize, rng: &mut R) -> Corpus {
    let base = synth_templates(n, &SlotLexicons::bundled(), rng).unwrap();
    let sentences = base
        .sentences
        .iter()
        .map(|s| {
            let tagged = causeway::corpus::render_annotated(s, 0).unwrap();
            let body = tagged.trim_end_matches(" .").to_string();
            let mut out = body;
            if rng.gen_bool(0.5) {
                let p = FILLER_PREFIX.choose(rng).unwrap();
                out = format!("{p} {}", lower_first_outside_tag(&out));
            }
            if rng.gen_bool(0.5) {
                out = format!("{out} {}", FILLER_SUFFIX.choose(rng).unwrap());
            }
            out.push_str(" .");
            Sentence::from_tagged(s.id.clone(), &[out]).unwrap()
        })
        .collect();
    Corpus::new("noisy", sentences)
}

fn lower_first_outside_tag(tagged: &str) -> String {
    // "<ARG0>The x" → "<ARG0>the x"
    let i = tagged.find('>').map_or(0, |i| i + 1);
    let mut out = tagged[..i].to_string();
    let mut rest = tagged[i..].chars();
    if let Some(c) = rest.next() {
        out.extend(c.to_lowercase());
    }
    out.extend(rest);
    out
}

/// Noisy template corpus with some two-relation sentences mixed in.
pub fn overfit_corpus<R: Rng>(rng: &mut R) -> Corpus {
    let mut c = noisy_templates(40, rng);
    let extra = [
        (
            "multi0",
            [
                "<ARG1>Three people were killed</ARG1> and 17 injured in <ARG0>the clash</ARG0> over the use of a village field .",
                "Three people were killed and 17 injured in <ARG1>the clash</ARG1> <SIG0>over</SIG0> <ARG0>the use of a village field</ARG0> .",
            ],
        ),
        (
            "multi1",
            [
                "<ARG0>The strike</ARG0> <SIG0>caused</SIG0> <ARG1>delays</ARG1> and the delays led to losses .",
                "The strike caused delays and <ARG0>the delays</ARG0> <SIG0>led to</SIG0> <ARG1>losses</ARG1> .",
            ],
        ),
    ];
    for k in 0..10 {
        let (id, rels) = &extra[k % 2];
        c.sentences
            .push(Sentence::from_tagged(format!("{id}_{k}"), rels.as_slice()).unwrap());
    }
    c.sentences.shuffle(rng);
    c
}

/// Sentence classification data with one positive per three negatives.
/// Positives usually, but not always, contain a connective; a few negatives
/// contain one too.
pub fn skewed_binary<R: Rng>(n_pos: usize, rng: &mut R) -> Corpus {
    let topics = [
        "the strike",
        "heavy rain",
        "the protest",
        "rising prices",
        "the new law",
        "the drought",
        "police",
        "the vote",
        "the factory",
        "students",
        "farmers",
        "the council",
        "the port",
        "the march",
    ];
    let verbs_pos = ["caused", "led to", "sparked", "triggered", "resulted in"];
    let verbs_neg = [
        "was discussed with",
        "was reported near",
        "met",
        "visited",
        "was seen with",
        "joined",
    ];
    let mut sentences = Vec::new();
    for i in 0..n_pos {
        let a = topics.choose(rng).unwrap();
        let b = topics.choose(rng).unwrap();
        let v = if rng.gen_bool(0.75) {
            verbs_pos.choose(rng).unwrap()
        } else {
            verbs_neg.choose(rng).unwrap()
        };
        sentences.push(Sentence::new(
            format!("p{i}"),
            format!("{a} {v} {b} ."),
            true,
        ));
    }
    for i in 0..3 * n_pos {
        let a = topics.choose(rng).unwrap();
        let b = topics.choose(rng).unwrap();
        let v = if rng.gen_bool(0.1) {
            verbs_pos.choose(rng).unwrap()
        } else {
            verbs_neg.choose(rng).unwrap()
        };
        sentences.push(Sentence::new(
            format!("n{i}"),
            format!("{a} {v} {b} ."),
            false,
        ));
    }
    sentences.shuffle(rng);
    Corpus::new("skewed", sentences)
}
