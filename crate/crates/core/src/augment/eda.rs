//! The four EDA token operations.

use rand::seq::index::sample;
use rand::Rng;

use super::{is_tag_marker, StopwordList, SynonymLexicon};

fn count(alpha: f64, of: usize) -> usize {
    ((alpha * of as f64).round() as usize).max(1)
}

fn eligible(tokens: &[String], lexicon: &SynonymLexicon, stopwords: &StopwordList) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            !is_tag_marker(t) && !stopwords.contains(t) && lexicon.synonyms(t).is_some()
        })
        .map(|(i, _)| i)
        .collect()
}

fn pick<'a, R: Rng + ?Sized>(list: &'a [String], rng: &mut R) -> &'a str {
    &list[rng.gen_range(0..list.len())]
}

/// Synonym replacement at `max(1, round(alpha · eligible))` distinct positions.
pub fn eda_sr<R: Rng + ?Sized>(
    tokens: &[String],
    alpha: f64,
    lexicon: &SynonymLexicon,
    stopwords: &StopwordList,
    rng: &mut R,
) -> Vec<String> {
    let positions = eligible(tokens, lexicon, stopwords);
    let mut out = tokens.to_vec();
    if positions.is_empty() {
        return out;
    }
    let n = count(alpha, positions.len()).min(positions.len());
    for k in sample(rng, positions.len(), n).into_vec() {
        let i = positions[k];
        let syns = lexicon.synonyms(&tokens[i]).expect("eligible");
        out[i] = pick(syns, rng).to_string();
    }
    out
}

/// Inserts `max(1, round(alpha · len))` synonyms of random eligible words at
/// random positions. Multi-word synonyms count as one inserted element.
pub fn eda_ri<R: Rng + ?Sized>(
    tokens: &[String],
    alpha: f64,
    lexicon: &SynonymLexicon,
    stopwords: &StopwordList,
    rng: &mut R,
) -> Vec<String> {
    let sources = eligible(tokens, lexicon, stopwords);
    let mut out = tokens.to_vec();
    if sources.is_empty() {
        return out;
    }
    for _ in 0..count(alpha, tokens.len()) {
        let word = &tokens[sources[rng.gen_range(0..sources.len())]];
        let syn = pick(lexicon.synonyms(word).expect("eligible"), rng).to_string();
        let at = rng.gen_range(0..=out.len());
        out.insert(at, syn);
    }
    out
}

/// `max(1, round(alpha · len))` swaps of two distinct positions.
pub fn eda_rs<R: Rng + ?Sized>(tokens: &[String], alpha: f64, rng: &mut R) -> Vec<String> {
    let mut out = tokens.to_vec();
    if out.len() < 2 {
        return out;
    }
    for _ in 0..count(alpha, out.len()) {
        let picked = sample(rng, out.len(), 2);
        out.swap(picked.index(0), picked.index(1));
    }
    out
}

/// Deletes each token with probability `p`, keeping one random token if all
/// would go.
pub fn eda_rd<R: Rng + ?Sized>(tokens: &[String], p: f64, rng: &mut R) -> Vec<String> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let keep: Vec<bool> = tokens
        .iter()
        .map(|_| !rng.gen_bool(p.clamp(0.0, 1.0)))
        .collect();
    if !keep.contains(&true) {
        return vec![tokens[rng.gen_range(0..tokens.len())].clone()];
    }
    tokens
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect()
}
