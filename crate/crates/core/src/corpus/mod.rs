//! Sentences, causal relations, and the tagged-text format they are
//! exchanged in.
//!
//! A relation is stored as token ranges over a tokenized clean sentence.
//! On disk every relation is one tagged string, e.g.
//! `<ARG0>The lack of rain</ARG0> <SIG0>caused</SIG0> <ARG1>crop failure</ARG1>.`,
//! and a sentence with several relations carries one such string per
//! relation, all stripping down to the same clean text.

mod annotation;
mod io;
mod tokenize;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotation::{
    char_spans_to_token_spans, parse_annotated, render_annotated, Alignment, CharRange,
    ParsedAnnotation, WidenNote,
};
pub use io::{load_corpus, read_corpus, write_corpus, CorpusFormat, LoadReport, RowError};
pub use tokenize::{is_punctuation, tokenize, Token};

/// Upper bound on relations per sentence in the source annotation.
pub const MAX_RELATIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Cause,
    Effect,
    Signal,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Cause, Role::Effect, Role::Signal];

    /// Tag name used in annotated text and BILOU labels.
    pub fn tag(self) -> &'static str {
        match self {
            Role::Cause => "ARG0",
            Role::Effect => "ARG1",
            Role::Signal => "SIG0",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Role> {
        match tag {
            "ARG0" => Some(Role::Cause),
            "ARG1" => Some(Role::Effect),
            "SIG0" => Some(Role::Signal),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Cause => "Cause",
            Role::Effect => "Effect",
            Role::Signal => "Signal",
        })
    }
}

/// Contiguous token range `[start_tok, end_tok)` carrying one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_tok: usize,
    pub end_tok: usize,
    pub role: Role,
}

impl Span {
    pub fn new(role: Role, start_tok: usize, end_tok: usize) -> Self {
        debug_assert!(start_tok < end_tok);
        Span {
            start_tok,
            end_tok,
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.end_tok - self.start_tok
    }

    pub fn is_empty(&self) -> bool {
        self.end_tok <= self.start_tok
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start_tok < other.end_tok && other.start_tok < self.end_tok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CausalRelation {
    pub cause: Span,
    pub effect: Span,
    pub signal: Option<Span>,
}

impl CausalRelation {
    pub fn new(
        cause: (usize, usize),
        effect: (usize, usize),
        signal: Option<(usize, usize)>,
    ) -> Self {
        CausalRelation {
            cause: Span::new(Role::Cause, cause.0, cause.1),
            effect: Span::new(Role::Effect, effect.0, effect.1),
            signal: signal.map(|(s, e)| Span::new(Role::Signal, s, e)),
        }
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        [Some(self.cause), Some(self.effect), self.signal]
            .into_iter()
            .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub relations: Vec<CausalRelation>,
    pub is_causal: bool,
}

impl Sentence {
    /// Tokenizes `text`; the sentence starts with no relations.
    pub fn new(id: impl Into<String>, text: impl Into<String>, is_causal: bool) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Sentence {
            id: id.into(),
            text,
            tokens,
            relations: Vec::new(),
            is_causal,
        }
    }

    /// Builds a sentence from one or more tagged strings that share a clean text.
    pub fn from_tagged<S: AsRef<str>>(
        id: impl Into<String>,
        tagged: &[S],
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let mut sentence: Option<Sentence> = None;
        for t in tagged {
            let parsed = parse_annotated(t.as_ref())?;
            let s = sentence
                .get_or_insert_with(|| Sentence::new(id.clone(), parsed.clean_text.clone(), true));
            if s.text != parsed.clean_text {
                return Err(CorpusError::Consistency {
                    id: id.clone(),
                    detail: "tagged strings disagree on clean text".into(),
                });
            }
            let aligned = char_spans_to_token_spans(&s.tokens, &parsed)?;
            for note in &aligned.notes {
                log::warn!("{id}: {note}");
            }
            s.relations.push(aligned.relation);
        }
        sentence.ok_or_else(|| CorpusError::Format {
            detail: format!("{id}: no tagged strings given"),
        })
    }

    pub fn token_texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Text of a token range joined with the original inter-token characters.
    pub fn span_text(&self, span: &Span) -> String {
        let first = &self.tokens[span.start_tok];
        let last = &self.tokens[span.end_tok - 1];
        self.text
            .chars()
            .skip(first.start_char)
            .take(last.end_char - first.start_char)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub split_name: String,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(split_name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Corpus {
            split_name: split_name.into(),
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Returns the first duplicated sentence id, if any.
    pub fn duplicate_id(&self) -> Option<&str> {
        let mut seen = HashSet::new();
        self.sentences
            .iter()
            .map(|s| s.id.as_str())
            .find(|id| !seen.insert(*id))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed annotation at char {position}: {reason}")]
pub struct MalformedAnnotation {
    pub position: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {detail}")]
    Format { detail: String },
    #[error(transparent)]
    Malformed(#[from] MalformedAnnotation),
    #[error("inconsistent record {id}: {detail}")]
    Consistency { id: String, detail: String },
    #[error("span alignment failed: chars [{start}, {end}) cover no token")]
    SpanAlignment { start: usize, end: usize },
    #[error("sentence {id} has {count} relations, at most {max} allowed")]
    TooManyRelations {
        id: String,
        count: usize,
        max: usize,
    },
    #[error("relation index {index} out of range ({len} relations)")]
    IndexOutOfRange { index: usize, len: usize },
}
