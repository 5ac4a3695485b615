//! Training-data augmentation: EDA, annotation-aware EDA, multi-relation
//! oversampling and template sentences.

mod eda;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eda::{eda_rd, eda_ri, eda_rs, eda_sr};

use crate::corpus::{render_annotated, tokenize, Corpus, Role, Sentence};

const BUNDLED_SYNONYMS: &str = include_str!("../../data/synonyms.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const BUNDLED_TEMPLATES: &str = include_str!("../../data/templates.json");

const TAG_MARKERS: [&str; 6] = [
    "<ARG0>", "</ARG0>", "<ARG1>", "</ARG1>", "<SIG0>", "</SIG0>",
];

pub fn is_tag_marker(token: &str) -> bool {
    TAG_MARKERS.contains(&token)
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("slot lexicon `{0}` is empty")]
    EmptyLexicon(&'static str),
    #[error("corpus has no sentence with two or more relations")]
    NoMultiRelationInstances,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("bad lexicon line {line}: {detail}")]
    Lexicon { line: usize, detail: String },
    #[error("bad slot lexicon file: {0}")]
    Slots(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercased word → synonyms, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Parses `word<TAB>syn1,syn2,...` lines. Self-references and empty
    /// lists are dropped; a repeated key extends the earlier entry.
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| AugmentError::Lexicon {
                line: n + 1,
                detail: "missing tab".into(),
            })?;
            let word = word.trim().to_lowercase();
            let list = entries.entry(word.clone()).or_default();
            for s in syns.split(',').map(str::trim) {
                if !s.is_empty() && s.to_lowercase() != word && !list.iter().any(|x| x == s) {
                    list.push(s.to_string());
                }
            }
        }
        entries.retain(|_, v| !v.is_empty());
        Ok(SynonymLexicon { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Small lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SYNONYMS).expect("bundled lexicon parses")
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Words EDA never replaces or uses as insertion sources.
#[derive(Debug, Clone, PartialEq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::parse(BUNDLED_STOPWORDS).expect("bundled list is non-empty")
    }
}

impl StopwordList {
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let words: HashSet<String> = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        if words.is_empty() {
            return Err(AugmentError::InvalidConfig("stopword list is empty".into()));
        }
        Ok(StopwordList { words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdaConfig {
    pub alpha_sr: f64,
    pub alpha_ri: f64,
    pub alpha_rs: f64,
    pub p_rd: f64,
    pub n_aug: usize,
    pub seed: u64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self::st1()
    }
}

impl EdaConfig {
    /// Sentence-level defaults: sr 0.4, ri 0.1, rs 0.6, four variants.
    pub fn st1() -> Self {
        EdaConfig {
            alpha_sr: 0.4,
            alpha_ri: 0.1,
            alpha_rs: 0.6,
            p_rd: 0.0,
            n_aug: 4,
            seed: 13,
        }
    }

    /// Span-level defaults: sr 0.4, ri 0.5, one variant.
    pub fn st2() -> Self {
        EdaConfig {
            alpha_sr: 0.4,
            alpha_ri: 0.5,
            alpha_rs: 0.0,
            p_rd: 0.0,
            n_aug: 1,
            seed: 13,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, v) in [
            ("alpha_sr", self.alpha_sr),
            ("alpha_ri", self.alpha_ri),
            ("alpha_rs", self.alpha_rs),
            ("p_rd", self.p_rd),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AugmentError::InvalidConfig(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Independent stream per sentence index, so output does not depend on
/// scheduling.
fn sentence_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Each original followed by `n_aug` sr → ri → rs variants with ids
/// `{id}_eda{k}`. Variants keep the causal label and carry no spans.
pub fn augment_st1(
    corpus: &Corpus,
    config: &EdaConfig,
    lexicon: &SynonymLexicon,
    stopwords: &StopwordList,
) -> Result<Corpus, AugmentError> {
    config.validate()?;
    let groups: Vec<Vec<Sentence>> = corpus
        .sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = sentence_rng(config.seed, i);
            let tokens: Vec<String> = s.token_texts().into_iter().map(String::from).collect();
            let mut group = vec![s.clone()];
            for k in 1..=config.n_aug {
                let t = eda_sr(&tokens, config.alpha_sr, lexicon, stopwords, &mut rng);
                let t = eda_ri(&t, config.alpha_ri, lexicon, stopwords, &mut rng);
                let t = eda_rs(&t, config.alpha_rs, &mut rng);
                group.push(Sentence::new(
                    format!("{}_eda{k}", s.id),
                    t.join(" "),
                    s.is_causal,
                ));
            }
            group
        })
        .collect();
    Ok(Corpus::new(
        corpus.split_name.clone(),
        groups.into_iter().flatten().collect(),
    ))
}

/// Splits a tagged string into atomic markers and tokenizer tokens.
pub fn tagged_tokens(tagged: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = tagged;
    while !rest.is_empty() {
        if let Some(m) = TAG_MARKERS.iter().find(|m| rest.starts_with(**m)) {
            out.push(m.to_string());
            rest = &rest[m.len()..];
            continue;
        }
        let next = TAG_MARKERS
            .iter()
            .filter_map(|m| rest.find(m))
            .min()
            .unwrap_or(rest.len());
        out.extend(tokenize(&rest[..next]).into_iter().map(|t| t.text));
        rest = &rest[next..];
    }
    out
}

/// Inverse of [`tagged_tokens`]: opening markers attach to the next token,
/// closing markers to the previous one.
pub fn join_tagged(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut glue = false;
    for t in tokens {
        let closing = t.starts_with("</") && is_tag_marker(t);
        if !closing && !glue && !out.is_empty() {
            out.push(' ');
        }
        out.push_str(t);
        glue = is_tag_marker(t) && !closing;
    }
    out
}

/// Role sequence ordered by span start, then end.
fn role_layout(s: &Sentence) -> Vec<Role> {
    let mut spans: Vec<_> = s.relations[0].spans().collect();
    spans.sort_by_key(|sp| (sp.start_tok, std::cmp::Reverse(sp.end_tok), sp.role.index()));
    spans.into_iter().map(|sp| sp.role).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct St2Report {
    pub candidates: usize,
    pub added: usize,
    pub discarded: usize,
}

/// One sr → ri variant per single-relation sentence, built on the tagged
/// form with markers protected. Variants that fail to re-parse or change
/// the role layout are discarded.
pub fn augment_st2(
    corpus: &Corpus,
    config: &EdaConfig,
    lexicon: &SynonymLexicon,
    stopwords: &StopwordList,
) -> Result<(Corpus, St2Report), AugmentError> {
    config.validate()?;
    let results: Vec<Option<Vec<Sentence>>> = corpus
        .sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.relations.len() != 1 {
                return None;
            }
            let mut rng = sentence_rng(config.seed, i);
            let tagged = render_annotated(s, 0).expect("relation 0 exists");
            let tokens = tagged_tokens(&tagged);
            let markers: Vec<&String> = tokens.iter().filter(|t| is_tag_marker(t)).collect();
            let layout = role_layout(s);
            let variants = (1..=config.n_aug)
                .filter_map(|k| {
                    let t = eda_sr(&tokens, config.alpha_sr, lexicon, stopwords, &mut rng);
                    let t = eda_ri(&t, config.alpha_ri, lexicon, stopwords, &mut rng);
                    if t.iter()
                        .filter(|x| is_tag_marker(x))
                        .ne(markers.iter().copied())
                    {
                        return None;
                    }
                    let out =
                        Sentence::from_tagged(format!("{}_st2eda{k}", s.id), &[join_tagged(&t)])
                            .ok()?;
                    (out.relations.len() == 1 && role_layout(&out) == layout).then_some(out)
                })
                .collect();
            Some(variants)
        })
        .collect();

    let mut report = St2Report::default();
    let mut extra = Vec::new();
    for variants in results.into_iter().flatten() {
        report.candidates += config.n_aug;
        report.added += variants.len();
        extra.extend(variants);
    }
    report.discarded = report.candidates - report.added;
    if report.discarded > 0 {
        log::info!("discarded {} invalid augmented samples", report.discarded);
    }
    let mut sentences = corpus.sentences.clone();
    sentences.extend(extra);
    Ok((Corpus::new(corpus.split_name.clone(), sentences), report))
}

/// Appends `n` copies drawn uniformly with replacement from sentences with
/// two or more relations. Copies get ids `{id}_os{k}`.
pub fn oversample_multirel<R: Rng + ?Sized>(
    corpus: &Corpus,
    n: usize,
    rng: &mut R,
) -> Result<Corpus, AugmentError> {
    let mut out = corpus.clone();
    if n == 0 {
        return Ok(out);
    }
    let pool: Vec<&Sentence> = corpus
        .sentences
        .iter()
        .filter(|s| s.relations.len() >= 2)
        .collect();
    if pool.is_empty() {
        return Err(AugmentError::NoMultiRelationInstances);
    }
    let mut copies: HashMap<&str, usize> = HashMap::new();
    for _ in 0..n {
        let s = pool[rng.gen_range(0..pool.len())];
        let k = copies.entry(s.id.as_str()).or_default();
        *k += 1;
        let mut c = s.clone();
        c.id = format!("{}_os{k}", s.id);
        out.sentences.push(c);
    }
    Ok(out)
}

/// Phrase lists for [`synth_templates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotLexicons {
    pub cause_phrases: Vec<String>,
    pub effect_phrases: Vec<String>,
    pub signals_forward: Vec<String>,
    pub signals_backward: Vec<String>,
}

impl SlotLexicons {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_TEMPLATES).expect("bundled templates parse")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn validate(&self) -> Result<(), AugmentError> {
        for (name, list) in [
            ("cause_phrases", &self.cause_phrases),
            ("effect_phrases", &self.effect_phrases),
            ("signals_forward", &self.signals_forward),
            ("signals_backward", &self.signals_backward),
        ] {
            if list.iter().all(|p| p.trim().is_empty()) {
                return Err(AugmentError::EmptyLexicon(name));
            }
        }
        Ok(())
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn choose<'a, R: Rng + ?Sized>(list: &'a [String], rng: &mut R) -> &'a str {
    let live: Vec<&String> = list.iter().filter(|p| !p.trim().is_empty()).collect();
    live[rng.gen_range(0..live.len())].trim()
}

/// `n` annotated sentences alternating Cause-Signal-Effect (even index) and
/// Effect-Signal-Cause (odd index), ids `synth{i}`.
pub fn synth_templates<R: Rng + ?Sized>(
    n: usize,
    slots: &SlotLexicons,
    rng: &mut R,
) -> Result<Corpus, AugmentError> {
    slots.validate()?;
    let sentences = (0..n)
        .map(|i| {
            let cause = choose(&slots.cause_phrases, rng);
            let effect = choose(&slots.effect_phrases, rng);
            let tagged = if i % 2 == 0 {
                let signal = choose(&slots.signals_forward, rng);
                format!(
                    "<ARG0>{}</ARG0> <SIG0>{signal}</SIG0> <ARG1>{effect}</ARG1> .",
                    capitalize(cause)
                )
            } else {
                let signal = choose(&slots.signals_backward, rng);
                format!(
                    "<ARG1>{}</ARG1> <SIG0>{signal}</SIG0> <ARG0>{cause}</ARG0> .",
                    capitalize(effect)
                )
            };
            Sentence::from_tagged(format!("synth{i}"), &[tagged]).map_err(|e| {
                AugmentError::InvalidConfig(format!("template phrase does not parse: {e}"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus::new("synth", sentences))
}
