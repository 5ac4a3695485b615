use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

/// A word token with character offsets into the clean sentence text.
///
/// Offsets count Unicode scalar values, not bytes, so they agree with
/// `str` indexing in most scripting languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start_char: usize,
    pub end_char: usize,
}

pub fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Splits on whitespace, then peels leading and trailing punctuation
/// characters off each chunk as single-character tokens.
///
/// Inner punctuation stays attached, so `Month-long` and `1.46` are one
/// token each while `clash.` becomes `clash` + `.`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && is_punctuation(chars[lo]) {
        lo += 1;
    }
    while hi > lo && is_punctuation(chars[hi - 1]) {
        hi -= 1;
    }
    let push = |out: &mut Vec<Token>, a: usize, b: usize| {
        out.push(Token {
            text: chars[a..b].iter().collect(),
            start_char: a,
            end_char: b,
        })
    };
    for p in start..lo {
        push(out, p, p + 1);
    }
    if lo < hi {
        push(out, lo, hi);
    }
    for p in hi..end {
        push(out, p, p + 1);
    }
}

/// Maps character offsets to byte offsets for slicing.
pub(crate) fn char_to_byte_offsets(text: &str) -> Vec<usize> {
    let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    offsets.push(text.len());
    offsets
}
