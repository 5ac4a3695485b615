//! Stacked BILOU encoding of causal relations.
//!
//! Every relation of a sentence gets its own tagging layer; the per-token
//! layer tags are joined with `|` into one stacked label, e.g.
//! `L-ARG0|L-ARG1|O` for a token that ends a cause in the first relation and
//! an effect in the second. Three layers are always emitted.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{CausalRelation, Corpus, Role, Sentence, Span};

pub const NUM_LAYERS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("{first} and {second} spans of one relation overlap")]
    Overlap { first: Role, second: Role },
    #[error("span [{start}, {end}) outside sentence of {len} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("{count} relations exceed the {max} tagging layers")]
    TooManyRelations { count: usize, max: usize },
    #[error("tag sequence has {got} tags for {expected} tokens")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cannot parse tag `{0}`")]
    BadTag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerTag {
    O,
    B(Role),
    I(Role),
    L(Role),
    U(Role),
}

impl LayerTag {
    /// All 13 layer tags.
    pub fn all() -> Vec<LayerTag> {
        let mut v = vec![LayerTag::O];
        for role in Role::ALL {
            v.extend([
                LayerTag::B(role),
                LayerTag::I(role),
                LayerTag::L(role),
                LayerTag::U(role),
            ]);
        }
        v
    }

    pub fn role(self) -> Option<Role> {
        match self {
            LayerTag::O => None,
            LayerTag::B(r) | LayerTag::I(r) | LayerTag::L(r) | LayerTag::U(r) => Some(r),
        }
    }

    /// True for tags after which a span is still open.
    pub fn opens(self) -> bool {
        matches!(self, LayerTag::B(_) | LayerTag::I(_))
    }

    /// True for tags that may legally follow `self` in a BILOU layer.
    pub fn may_precede(self, next: LayerTag) -> bool {
        match self {
            LayerTag::B(r) | LayerTag::I(r) => {
                matches!(next, LayerTag::I(x) | LayerTag::L(x) if x == r)
            }
            _ => matches!(next, LayerTag::O | LayerTag::B(_) | LayerTag::U(_)),
        }
    }

    pub fn may_start(self) -> bool {
        matches!(self, LayerTag::O | LayerTag::B(_) | LayerTag::U(_))
    }

    pub fn may_end(self) -> bool {
        matches!(self, LayerTag::O | LayerTag::L(_) | LayerTag::U(_))
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (prefix, role) = match self {
            LayerTag::O => return f.write_str("O"),
            LayerTag::B(r) => ('B', r),
            LayerTag::I(r) => ('I', r),
            LayerTag::L(r) => ('L', r),
            LayerTag::U(r) => ('U', r),
        };
        write!(f, "{prefix}-{}", role.tag())
    }
}

impl FromStr for LayerTag {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(LayerTag::O);
        }
        let bad = || LabelError::BadTag(s.to_string());
        let (prefix, tag) = s.split_once('-').ok_or_else(bad)?;
        let role = Role::from_tag(tag).ok_or_else(bad)?;
        match prefix {
            "B" => Ok(LayerTag::B(role)),
            "I" => Ok(LayerTag::I(role)),
            "L" => Ok(LayerTag::L(role)),
            "U" => Ok(LayerTag::U(role)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StackedTag(pub [LayerTag; NUM_LAYERS]);

impl StackedTag {
    pub const OUTSIDE: StackedTag = StackedTag([LayerTag::O; NUM_LAYERS]);

    pub fn layer(&self, k: usize) -> LayerTag {
        self.0[k]
    }
}

impl fmt::Display for StackedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for StackedTag {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('|').collect();
        if parts.len() != NUM_LAYERS {
            return Err(LabelError::BadTag(s.to_string()));
        }
        Ok(StackedTag([
            parts[0].parse()?,
            parts[1].parse()?,
            parts[2].parse()?,
        ]))
    }
}

impl Serialize for StackedTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StackedTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type StackedTagSequence = Vec<StackedTag>;

/// Checks the per-layer grammar `O* ((B-x I-x* L-x | U-x) O*)*`.
pub fn is_valid_layer(tags: &[LayerTag]) -> bool {
    let (Some(first), Some(last)) = (tags.first(), tags.last()) else {
        return true;
    };
    first.may_start() && last.may_end() && tags.windows(2).all(|w| w[0].may_precede(w[1]))
}

fn check_span(span: &Span, len: usize) -> Result<(), LabelError> {
    if span.start_tok >= span.end_tok || span.end_tok > len {
        return Err(LabelError::SpanOutOfRange {
            start: span.start_tok,
            end: span.end_tok,
            len,
        });
    }
    Ok(())
}

fn write_span(tags: &mut [LayerTag], span: &Span) {
    let r = span.role;
    if span.len() == 1 {
        tags[span.start_tok] = LayerTag::U(r);
        return;
    }
    tags[span.start_tok] = LayerTag::B(r);
    for t in &mut tags[span.start_tok + 1..span.end_tok - 1] {
        *t = LayerTag::I(r);
    }
    tags[span.end_tok - 1] = LayerTag::L(r);
}

/// Encodes non-overlapping spans into one BILOU layer of `len` tokens.
pub fn encode_spans(len: usize, spans: &[Span]) -> Result<Vec<LayerTag>, LabelError> {
    for (i, a) in spans.iter().enumerate() {
        check_span(a, len)?;
        if let Some(b) = spans[..i].iter().find(|b| b.overlaps(a)) {
            return Err(LabelError::Overlap {
                first: b.role,
                second: a.role,
            });
        }
    }
    let mut tags = vec![LayerTag::O; len];
    for span in spans {
        write_span(&mut tags, span);
    }
    Ok(tags)
}

/// One BILOU layer for a single relation.
pub fn encode_relation(
    sentence: &Sentence,
    relation: &CausalRelation,
) -> Result<Vec<LayerTag>, LabelError> {
    let spans: Vec<Span> = relation.spans().collect();
    encode_spans(sentence.len(), &spans)
}

fn canonical_key(r: &CausalRelation) -> (usize, usize, usize) {
    (
        r.cause.start_tok,
        r.effect.start_tok,
        r.signal.map_or(usize::MAX, |s| s.start_tok),
    )
}

/// Sorts by (cause start, effect start, signal start with absent last);
/// the sort is stable so input order breaks remaining ties.
pub fn canonical_order(relations: &mut [CausalRelation]) {
    relations.sort_by_key(canonical_key);
}

/// Stacks canonically ordered relations into three layers, padding with `O`.
pub fn stack_layers(
    sentence: &Sentence,
    relations: &[CausalRelation],
) -> Result<StackedTagSequence, LabelError> {
    if relations.len() > NUM_LAYERS {
        return Err(LabelError::TooManyRelations {
            count: relations.len(),
            max: NUM_LAYERS,
        });
    }
    let mut out = vec![StackedTag::OUTSIDE; sentence.len()];
    for (k, rel) in relations.iter().enumerate() {
        for (tag, layer_tag) in out.iter_mut().zip(encode_relation(sentence, rel)?) {
            tag.0[k] = layer_tag;
        }
    }
    Ok(out)
}

pub fn layer_of(tags: &[StackedTag], k: usize) -> Vec<LayerTag> {
    tags.iter().map(|t| t.0[k]).collect()
}

/// Recorded when relations beyond the third are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncationWarning {
    pub sentence_id: String,
    pub dropped: CausalRelation,
}

/// Orders relations canonically and keeps the first three.
pub fn truncate_relations(sentence: &Sentence) -> (Sentence, Vec<TruncationWarning>) {
    let mut out = sentence.clone();
    canonical_order(&mut out.relations);
    let warnings = if out.relations.len() > NUM_LAYERS {
        out.relations
            .split_off(NUM_LAYERS)
            .into_iter()
            .map(|dropped| TruncationWarning {
                sentence_id: sentence.id.clone(),
                dropped,
            })
            .collect()
    } else {
        Vec::new()
    };
    for w in &warnings {
        log::warn!(
            "{}: dropping relation beyond layer {NUM_LAYERS}",
            w.sentence_id
        );
    }
    (out, warnings)
}

/// Truncates, drops relations that cannot be encoded (overlapping roles),
/// and stacks. Returns the encodable sentence alongside its tags.
pub fn encode_sentence(sentence: &Sentence) -> (Sentence, StackedTagSequence) {
    let (mut s, _) = truncate_relations(sentence);
    let len = s.len();
    let id = s.id.clone();
    s.relations.retain(
        |r| match encode_spans(len, &r.spans().collect::<Vec<_>>()) {
            Ok(_) => true,
            Err(e) => {
                log::warn!("{id}: skipping relation: {e}");
                false
            }
        },
    );
    let tags = stack_layers(&s, &s.relations).expect("relations were truncated and validated");
    (s, tags)
}

/// Extracts spans from one layer, tolerating grammar violations.
///
/// An `I`/`L` without an open span of the same role starts a new span, a
/// role change closes the open span, and a span left open at the end is
/// closed at the last token.
pub fn layer_spans(tags: &[LayerTag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(Role, usize)> = None;
    let close = |open: &mut Option<(Role, usize)>, end: usize, spans: &mut Vec<Span>| {
        if let Some((role, start)) = open.take() {
            spans.push(Span::new(role, start, end));
        }
    };
    for (t, &tag) in tags.iter().enumerate() {
        match tag {
            LayerTag::O => close(&mut open, t, &mut spans),
            LayerTag::B(r) => {
                close(&mut open, t, &mut spans);
                open = Some((r, t));
            }
            LayerTag::I(r) => {
                if !matches!(open, Some((role, _)) if role == r) {
                    close(&mut open, t, &mut spans);
                    open = Some((r, t));
                }
            }
            LayerTag::L(r) => {
                if !matches!(open, Some((role, _)) if role == r) {
                    close(&mut open, t, &mut spans);
                    open = Some((r, t));
                }
                close(&mut open, t + 1, &mut spans);
            }
            LayerTag::U(r) => {
                close(&mut open, t, &mut spans);
                spans.push(Span::new(r, t, t + 1));
            }
        }
    }
    close(&mut open, tags.len(), &mut spans);
    spans
}

/// Rewrites a layer so it satisfies the BILOU grammar. Idempotent.
pub fn repair_layer(tags: &[LayerTag]) -> Vec<LayerTag> {
    let mut out = vec![LayerTag::O; tags.len()];
    for span in layer_spans(tags) {
        write_span(&mut out, &span);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeReport {
    /// Layers that violated the grammar and were ignored.
    pub invalid_layers: Vec<usize>,
    /// Layers holding spans but lacking a cause or an effect.
    pub incomplete_layers: Vec<usize>,
    /// Spans ignored because their layer already had a span of that role.
    pub extra_spans: Vec<(usize, Span)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decoded {
    pub relations: Vec<CausalRelation>,
    pub report: DecodeReport,
}

/// Splits stacked tags into layers and reads one relation from each layer
/// holding at least a cause and an effect.
pub fn decode_stacked(tags: &[StackedTag]) -> Decoded {
    let mut decoded = Decoded::default();
    for k in 0..NUM_LAYERS {
        let layer = layer_of(tags, k);
        if !is_valid_layer(&layer) {
            decoded.report.invalid_layers.push(k);
            continue;
        }
        let mut by_role: [Option<Span>; 3] = [None; 3];
        let spans = layer_spans(&layer);
        for span in &spans {
            let slot = &mut by_role[span.role.index()];
            if slot.is_some() {
                decoded.report.extra_spans.push((k, *span));
            } else {
                *slot = Some(*span);
            }
        }
        match by_role {
            [Some(cause), Some(effect), signal] => decoded.relations.push(CausalRelation {
                cause,
                effect,
                signal,
            }),
            _ if !spans.is_empty() => decoded.report.incomplete_layers.push(k),
            _ => {}
        }
    }
    decoded
}

/// Ordered set of stacked labels observed in training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<StackedTag>,
    index: HashMap<StackedTag, usize>,
}

impl LabelVocabulary {
    /// Builds a vocabulary from tag sequences; labels are sorted by their
    /// canonical string and `O|O|O` is always present.
    pub fn from_sequences<'a, I>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a StackedTagSequence>,
    {
        let mut set: BTreeSet<String> = BTreeSet::new();
        set.insert(StackedTag::OUTSIDE.to_string());
        for seq in sequences {
            set.extend(seq.iter().map(|t| t.to_string()));
        }
        let labels: Vec<StackedTag> = set
            .iter()
            .map(|s| s.parse().expect("canonical tag"))
            .collect();
        Self::from_labels(labels)
    }

    pub fn from_labels(labels: Vec<StackedTag>) -> Self {
        let index = labels.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        LabelVocabulary { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, tag: &StackedTag) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn label(&self, id: usize) -> StackedTag {
        self.labels[id]
    }

    pub fn labels(&self) -> &[StackedTag] {
        &self.labels
    }

    pub fn strings(&self) -> Vec<String> {
        self.labels.iter().map(|t| t.to_string()).collect()
    }
}

/// Filtered label space: every stacked tag seen in the given corpora.
pub fn build_vocabulary(corpora: &[&Corpus]) -> LabelVocabulary {
    let sequences: Vec<StackedTagSequence> = corpora
        .iter()
        .flat_map(|c| c.sentences.iter())
        .map(|s| encode_sentence(s).1)
        .collect();
    LabelVocabulary::from_sequences(&sequences)
}
