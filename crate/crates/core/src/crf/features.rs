use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dense::DenseStore;
use super::CrfError;
use crate::corpus::{is_punctuation, Sentence};

/// Sparse binary features plus an optional dense embedding for one token.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    /// Strictly increasing feature ids.
    pub indices: Vec<u32>,
    pub dense: Option<Vec<f64>>,
}

impl FeatureVector {
    pub fn sparse(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        FeatureVector {
            indices,
            dense: None,
        }
    }
}

/// Interns feature template strings. Once frozen, unknown strings are dropped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "FeatureMapRepr", into = "FeatureMapRepr")]
pub struct FeatureMap {
    names: Vec<String>,
    index: HashMap<String, u32>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct FeatureMapRepr {
    frozen: bool,
    names: Vec<String>,
}

impl From<FeatureMapRepr> for FeatureMap {
    fn from(r: FeatureMapRepr) -> Self {
        let index = r
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        FeatureMap {
            names: r.names,
            index,
            frozen: r.frozen,
        }
    }
}

impl From<FeatureMap> for FeatureMapRepr {
    fn from(m: FeatureMap) -> Self {
        FeatureMapRepr {
            frozen: m.frozen,
            names: m.names,
        }
    }
}

impl PartialEq for FeatureMap {
    fn eq(&self, other: &Self) -> bool {
        self.frozen == other.frozen && self.names == other.names
    }
}

impl FeatureMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    /// Looks up `name`, assigning the next id when the map is not frozen.
    pub fn intern(&mut self, name: &str) -> Option<u32> {
        if let Some(id) = self.get(name) {
            return Some(id);
        }
        if self.frozen {
            return None;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Some(id)
    }
}

/// `Xxxx`-style shape: uppercase → X, lowercase → x, digit → d, anything
/// else kept verbatim.
pub fn word_shape(word: &str) -> String {
    word.chars()
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_numeric() {
                'd'
            } else {
                c
            }
        })
        .collect()
}

/// Shape with runs of the same class collapsed, e.g. `Xx-x` for `Month-long`.
pub fn short_shape(word: &str) -> String {
    let mut out = String::new();
    for c in word_shape(word).chars() {
        if !out.ends_with(c) {
            out.push(c);
        }
    }
    out
}

fn affix(word: &str, n: usize, prefix: bool) -> Option<String> {
    let chars: Vec<char> = word.chars().collect();
    (chars.len() >= n).then(|| {
        if prefix {
            chars[..n].iter().collect()
        } else {
            chars[chars.len() - n..].iter().collect()
        }
    })
}

/// Feature template strings for the token at `position`.
pub fn feature_strings(words: &[&str], position: usize) -> Vec<String> {
    let word = words[position];
    let lower = word.to_lowercase();
    let mut f = vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("lw={lower}"),
        format!("shape={}", word_shape(word)),
        format!("sshape={}", short_shape(word)),
    ];
    for n in 1..=3 {
        if let Some(p) = affix(&lower, n, true) {
            f.push(format!("p{n}={p}"));
        }
        if let Some(s) = affix(&lower, n, false) {
            f.push(format!("s{n}={s}"));
        }
    }
    if word.chars().all(is_punctuation) {
        f.push("punct".into());
    }
    if position == 0 {
        f.push("first".into());
    }
    if position + 1 == words.len() {
        f.push("last".into());
    }
    for offset in [-2isize, -1, 1, 2] {
        let j = position as isize + offset;
        if j >= 0 && (j as usize) < words.len() {
            f.push(format!(
                "w[{offset:+}]={}",
                words[j as usize].to_lowercase()
            ));
        }
    }
    if position > 0 {
        f.push(format!(
            "bg[-1]={}|{lower}",
            words[position - 1].to_lowercase()
        ));
    }
    if position + 1 < words.len() {
        f.push(format!(
            "bg[+1]={lower}|{}",
            words[position + 1].to_lowercase()
        ));
    }
    f
}

/// Feature vector of one token. With an unfrozen map new templates get ids;
/// a frozen map silently skips templates it has never seen.
pub fn extract_features(
    sentence: &Sentence,
    position: usize,
    map: &mut FeatureMap,
    dense: Option<&DenseStore>,
) -> Result<FeatureVector, CrfError> {
    let words = sentence.token_texts();
    let ids = feature_strings(&words, position)
        .iter()
        .filter_map(|name| map.intern(name))
        .collect();
    let mut fv = FeatureVector::sparse(ids);
    if let Some(store) = dense {
        fv.dense = Some(store.vector(&sentence.id, position, sentence.len())?);
    }
    Ok(fv)
}

/// Features for every token; the map must be frozen.
pub fn sentence_features(
    sentence: &Sentence,
    map: &FeatureMap,
    dense: Option<&DenseStore>,
) -> Result<Vec<FeatureVector>, CrfError> {
    let words = sentence.token_texts();
    (0..sentence.len())
        .map(|t| {
            let ids = feature_strings(&words, t)
                .iter()
                .filter_map(|n| map.get(n))
                .collect();
            let mut fv = FeatureVector::sparse(ids);
            if let Some(store) = dense {
                fv.dense = Some(store.vector(&sentence.id, t, sentence.len())?);
            }
            Ok(fv)
        })
        .collect()
}
