use std::fmt;

use super::tokenize::{char_to_byte_offsets, Token};
use super::{CausalRelation, CorpusError, MalformedAnnotation, Role, Sentence, Span};

/// Half-open character range into clean text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnnotation {
    pub clean_text: String,
    pub cause: CharRange,
    pub effect: CharRange,
    pub signal: Option<CharRange>,
}

impl ParsedAnnotation {
    pub fn range(&self, role: Role) -> Option<CharRange> {
        match role {
            Role::Cause => Some(self.cause),
            Role::Effect => Some(self.effect),
            Role::Signal => self.signal,
        }
    }
}

/// Recorded when a character range starts or ends inside a token and the
/// token span was widened to cover the whole token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidenNote {
    pub role: Role,
    pub chars: CharRange,
    pub widened_to: CharRange,
}

impl fmt::Display for WidenNote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} chars [{}, {}) widened to token boundaries [{}, {})",
            self.role, self.chars.start, self.chars.end, self.widened_to.start, self.widened_to.end
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub relation: CausalRelation,
    pub notes: Vec<WidenNote>,
}

struct TagMatch {
    role: Role,
    closing: bool,
    len: usize,
}

fn match_tag(rest: &[char]) -> Option<TagMatch> {
    if rest.first() != Some(&'<') {
        return None;
    }
    let closing = rest.get(1) == Some(&'/');
    let name_start = if closing { 2 } else { 1 };
    if rest.len() < name_start + 5 || rest[name_start + 4] != '>' {
        return None;
    }
    let name: String = rest[name_start..name_start + 4].iter().collect();
    let role = Role::from_tag(&name)?;
    Some(TagMatch {
        role,
        closing,
        len: name_start + 5,
    })
}

/// Strips `<ARG0>`, `<ARG1>`, `<SIG0>` markers and returns the clean text
/// with the character range each pair enclosed.
///
/// Each role may appear at most once and tags must nest properly. Cause and
/// effect are mandatory; the signal is optional.
pub fn parse_annotated(tagged: &str) -> Result<ParsedAnnotation, MalformedAnnotation> {
    let chars: Vec<char> = tagged.chars().collect();
    let mut clean = String::with_capacity(tagged.len());
    let mut clean_len = 0usize;
    let mut open: Vec<(Role, usize, usize)> = Vec::new();
    let mut ranges: [Option<CharRange>; 3] = [None; 3];
    let mut i = 0;
    while i < chars.len() {
        let Some(tag) = match_tag(&chars[i..]) else {
            clean.push(chars[i]);
            clean_len += 1;
            i += 1;
            continue;
        };
        let err = |reason: String| MalformedAnnotation {
            position: i,
            reason,
        };
        if tag.closing {
            match open.pop() {
                Some((role, start, _)) if role == tag.role => {
                    if start == clean_len {
                        return Err(err(format!("empty {} span", role.tag())));
                    }
                    ranges[role.index()] = Some(CharRange {
                        start,
                        end: clean_len,
                    });
                }
                Some((role, _, at)) => {
                    return Err(err(format!(
                        "</{}> closes <{}> opened at char {at}",
                        tag.role.tag(),
                        role.tag()
                    )))
                }
                None => return Err(err(format!("</{}> without opening tag", tag.role.tag()))),
            }
        } else {
            if ranges[tag.role.index()].is_some() || open.iter().any(|(r, _, _)| *r == tag.role) {
                return Err(err(format!("duplicate <{}>", tag.role.tag())));
            }
            open.push((tag.role, clean_len, i));
        }
        i += tag.len;
    }
    if let Some((role, _, at)) = open.pop() {
        return Err(MalformedAnnotation {
            position: at,
            reason: format!("<{}> is never closed", role.tag()),
        });
    }
    let missing = |role: Role| MalformedAnnotation {
        position: chars.len(),
        reason: format!("missing <{}> span", role.tag()),
    };
    Ok(ParsedAnnotation {
        clean_text: clean,
        cause: ranges[Role::Cause.index()].ok_or_else(|| missing(Role::Cause))?,
        effect: ranges[Role::Effect.index()].ok_or_else(|| missing(Role::Effect))?,
        signal: ranges[Role::Signal.index()],
    })
}

fn align_range(
    tokens: &[Token],
    role: Role,
    range: CharRange,
) -> Result<(Span, Option<WidenNote>), CorpusError> {
    let covered: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.start_char < range.end && range.start < t.end_char)
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (covered.first(), covered.last()) else {
        return Err(CorpusError::SpanAlignment {
            start: range.start,
            end: range.end,
        });
    };
    let widened_to = CharRange {
        start: tokens[first].start_char,
        end: tokens[last].end_char,
    };
    let note =
        (range.start > widened_to.start || range.end < widened_to.end).then_some(WidenNote {
            role,
            chars: range,
            widened_to,
        });
    Ok((Span::new(role, first, last + 1), note))
}

/// Maps character ranges onto the minimal covering token ranges.
///
/// Ranges that cut through a token are widened to the token boundary and
/// reported in `notes`; a range touching no token at all is an error.
pub fn char_spans_to_token_spans(
    tokens: &[Token],
    parsed: &ParsedAnnotation,
) -> Result<Alignment, CorpusError> {
    let mut notes = Vec::new();
    let mut take = |role, range| -> Result<Span, CorpusError> {
        let (span, note) = align_range(tokens, role, range)?;
        notes.extend(note);
        Ok(span)
    };
    let cause = take(Role::Cause, parsed.cause)?;
    let effect = take(Role::Effect, parsed.effect)?;
    let signal = parsed.signal.map(|r| take(Role::Signal, r)).transpose()?;
    Ok(Alignment {
        relation: CausalRelation {
            cause,
            effect,
            signal,
        },
        notes,
    })
}

/// Renders relation `relation_index` of `sentence` back into tagged text.
pub fn render_annotated(sentence: &Sentence, relation_index: usize) -> Result<String, CorpusError> {
    let relation = sentence
        .relations
        .get(relation_index)
        .ok_or(CorpusError::IndexOutOfRange {
            index: relation_index,
            len: sentence.relations.len(),
        })?;
    Ok(render_relation(sentence, relation))
}

pub(crate) fn render_relation(sentence: &Sentence, relation: &CausalRelation) -> String {
    // (char position, is_opening, tie key, tag text)
    let mut inserts: Vec<(usize, bool, i64, String)> = Vec::new();
    for span in relation.spans() {
        let start = sentence.tokens[span.start_tok].start_char;
        let end = sentence.tokens[span.end_tok - 1].end_char;
        // Outer spans open first and close last.
        inserts.push((start, true, -(end as i64), format!("<{}>", span.role.tag())));
        inserts.push((
            end,
            false,
            -(start as i64),
            format!("</{}>", span.role.tag()),
        ));
    }
    // Closings sort before openings at the same position.
    inserts.sort_by_key(|(pos, opening, key, _)| (*pos, *opening, *key));

    let bytes = char_to_byte_offsets(&sentence.text);
    let mut out = String::with_capacity(sentence.text.len() + 48);
    let mut cursor = 0;
    for (pos, _, _, tag) in inserts {
        out.push_str(&sentence.text[bytes[cursor]..bytes[pos]]);
        out.push_str(&tag);
        cursor = pos;
    }
    out.push_str(&sentence.text[bytes[cursor]..]);
    out
}
