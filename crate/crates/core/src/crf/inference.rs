//! Exact linear-chain inference in log space.

use rayon::prelude::*;

use super::features::FeatureVector;
use super::params::CrfParams;
use super::CrfError;
use crate::labeling::{LabelVocabulary, NUM_LAYERS};

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Admissible label transitions for constrained decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    num_labels: usize,
    allowed: Vec<bool>,
    start: Vec<bool>,
    end: Vec<bool>,
}

impl TransitionMask {
    pub fn allow_all(num_labels: usize) -> Self {
        TransitionMask {
            num_labels,
            allowed: vec![true; num_labels * num_labels],
            start: vec![true; num_labels],
            end: vec![true; num_labels],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        self.allowed[from * self.num_labels + to]
    }

    pub fn set(&mut self, from: usize, to: usize, allowed: bool) {
        self.allowed[from * self.num_labels + to] = allowed;
    }

    pub fn allows_start(&self, label: usize) -> bool {
        self.start[label]
    }

    pub fn allows_end(&self, label: usize) -> bool {
        self.end[label]
    }

    pub fn set_start(&mut self, label: usize, allowed: bool) {
        self.start[label] = allowed;
    }

    pub fn set_end(&mut self, label: usize, allowed: bool) {
        self.end[label] = allowed;
    }
}

/// Hard BILOU constraints applied to every layer independently.
pub fn build_constraint_mask(vocab: &LabelVocabulary) -> TransitionMask {
    let labels = vocab.labels();
    let k = labels.len();
    let mut mask = TransitionMask::allow_all(k);
    for (a, from) in labels.iter().enumerate() {
        mask.set_start(a, (0..NUM_LAYERS).all(|l| from.layer(l).may_start()));
        mask.set_end(a, (0..NUM_LAYERS).all(|l| from.layer(l).may_end()));
        for (b, to) in labels.iter().enumerate() {
            let ok = (0..NUM_LAYERS).all(|l| from.layer(l).may_precede(to.layer(l)));
            mask.set(a, b, ok);
        }
    }
    mask
}

fn check_len(features: &[FeatureVector]) -> Result<(), CrfError> {
    if features.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    Ok(())
}

fn path_score(params: &CrfParams, emit: &[f64], labels: &[usize]) -> f64 {
    let k = params.num_labels();
    let Some((&first, &last)) = labels.first().zip(labels.last()) else {
        return 0.0;
    };
    let mut s = params.begin()[first] + params.end()[last];
    for (t, &y) in labels.iter().enumerate() {
        s += emit[t * k + y];
    }
    for w in labels.windows(2) {
        s += params.transition(w[0], w[1]);
    }
    s
}

fn check_labels(
    params: &CrfParams,
    features: &[FeatureVector],
    labels: &[usize],
) -> Result<(), CrfError> {
    if labels.len() != features.len() {
        return Err(CrfError::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= params.num_labels()) {
        return Err(CrfError::UnknownLabel(bad));
    }
    Ok(())
}

/// `begin[y1] + Σ emission + Σ transition + end[yL]`.
pub fn score_sequence(
    params: &CrfParams,
    features: &[FeatureVector],
    labels: &[usize],
) -> Result<f64, CrfError> {
    check_labels(params, features, labels)?;
    let emit = params.emissions(features)?;
    Ok(path_score(params, &emit, labels))
}

/// Forward log-potentials `alpha[t][y]` and the log-partition.
fn forward(params: &CrfParams, emit: &[f64], len: usize) -> (Vec<f64>, f64) {
    let k = params.num_labels();
    let trans = params.transitions();
    let mut alpha = vec![0.0; len * k];
    for y in 0..k {
        alpha[y] = params.begin()[y] + emit[y];
    }
    for t in 1..len {
        let (prev, cur) = alpha.split_at_mut(t * k);
        let prev = &prev[(t - 1) * k..];
        for b in 0..k {
            let lse = log_sum_exp((0..k).map(|a| prev[a] + trans[a * k + b]));
            cur[b] = lse + emit[t * k + b];
        }
    }
    let last = &alpha[(len - 1) * k..];
    let log_z = log_sum_exp((0..k).map(|y| last[y] + params.end()[y]));
    (alpha, log_z)
}

fn backward(params: &CrfParams, emit: &[f64], len: usize) -> Vec<f64> {
    let k = params.num_labels();
    let trans = params.transitions();
    let mut beta = vec![0.0; len * k];
    beta[(len - 1) * k..].copy_from_slice(params.end());
    for t in (0..len - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * k);
        let next = &next[..k];
        for a in 0..k {
            cur[t * k + a] =
                log_sum_exp((0..k).map(|b| trans[a * k + b] + emit[(t + 1) * k + b] + next[b]));
        }
    }
    beta
}

/// Log of the sum of exp(score) over all label sequences.
pub fn log_partition(params: &CrfParams, features: &[FeatureVector]) -> Result<f64, CrfError> {
    check_len(features)?;
    let emit = params.emissions(features)?;
    Ok(forward(params, &emit, features.len()).1)
}

/// Highest-scoring label sequence among those the mask admits.
///
/// Ties go to the lowest label id, resolved from the last position back.
/// The returned score is recomputed with [`score_sequence`] semantics.
pub fn viterbi(
    params: &CrfParams,
    features: &[FeatureVector],
    mask: Option<&TransitionMask>,
) -> Result<(Vec<usize>, f64), CrfError> {
    check_len(features)?;
    let emit = params.emissions(features)?;
    viterbi_emissions(params, &emit, features.len(), mask)
}

pub(crate) fn viterbi_emissions(
    params: &CrfParams,
    emit: &[f64],
    len: usize,
    mask: Option<&TransitionMask>,
) -> Result<(Vec<usize>, f64), CrfError> {
    let k = params.num_labels();
    let trans = params.transitions();
    let neg = f64::NEG_INFINITY;
    let admitted_start = |y: usize| mask.is_none_or(|m| m.allows_start(y));
    let admitted = |a: usize, b: usize| mask.is_none_or(|m| m.allows(a, b));
    let admitted_end = |y: usize| mask.is_none_or(|m| m.allows_end(y));

    let mut delta = vec![neg; len * k];
    let mut back = vec![0usize; len * k];
    for y in 0..k {
        if admitted_start(y) {
            delta[y] = params.begin()[y] + emit[y];
        }
    }
    for t in 1..len {
        for b in 0..k {
            let mut best = neg;
            let mut arg = 0;
            for a in 0..k {
                let prev = delta[(t - 1) * k + a];
                if prev == neg || !admitted(a, b) {
                    continue;
                }
                let s = prev + trans[a * k + b];
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            if best > neg {
                delta[t * k + b] = best + emit[t * k + b];
                back[t * k + b] = arg;
            }
        }
    }
    let mut best = neg;
    let mut last = None;
    for y in 0..k {
        let d = delta[(len - 1) * k + y];
        if d == neg || !admitted_end(y) {
            continue;
        }
        let s = d + params.end()[y];
        if s > best {
            best = s;
            last = Some(y);
        }
    }
    let mut y = last.ok_or(CrfError::NoFeasiblePath)?;
    let mut path = vec![0; len];
    for t in (0..len).rev() {
        path[t] = y;
        y = back[t * k + y];
    }
    let score = path_score(params, emit, &path);
    Ok((path, score))
}

/// Posterior label probabilities per position and per adjacent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub len: usize,
    pub num_labels: usize,
    /// `len × K`, row-major.
    pub unary: Vec<f64>,
    /// `(len - 1) × K × K`; entry `[t][a][b]` is P(y_t = a, y_{t+1} = b).
    pub pairwise: Vec<f64>,
}

impl Marginals {
    pub fn unary(&self, t: usize, y: usize) -> f64 {
        self.unary[t * self.num_labels + y]
    }

    pub fn pairwise(&self, t: usize, a: usize, b: usize) -> f64 {
        let k = self.num_labels;
        self.pairwise[(t * k + a) * k + b]
    }
}

pub fn marginals(params: &CrfParams, features: &[FeatureVector]) -> Result<Marginals, CrfError> {
    check_len(features)?;
    let k = params.num_labels();
    let len = features.len();
    let emit = params.emissions(features)?;
    let (alpha, log_z) = forward(params, &emit, len);
    let beta = backward(params, &emit, len);
    let unary = (0..len * k)
        .map(|i| (alpha[i] + beta[i] - log_z).exp())
        .collect();
    let trans = params.transitions();
    let mut pairwise = vec![0.0; len.saturating_sub(1) * k * k];
    for t in 0..len.saturating_sub(1) {
        for a in 0..k {
            for b in 0..k {
                pairwise[(t * k + a) * k + b] = (alpha[t * k + a]
                    + trans[a * k + b]
                    + emit[(t + 1) * k + b]
                    + beta[(t + 1) * k + b]
                    - log_z)
                    .exp();
            }
        }
    }
    Ok(Marginals {
        len,
        num_labels: k,
        unary,
        pairwise,
    })
}

/// A token sequence with gold label ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
}

struct SequenceGrad {
    loss: f64,
    /// Emission-block entries.
    sparse: Vec<(usize, f64)>,
    /// Everything from the dense block onward.
    tail: Vec<f64>,
}

fn sequence_grad(params: &CrfParams, seq: &LabeledSequence) -> Result<SequenceGrad, CrfError> {
    check_labels(params, &seq.features, &seq.labels)?;
    let k = params.num_labels();
    let len = seq.features.len();
    let tail_len = params.len() - params.emission_len();
    if len == 0 {
        return Ok(SequenceGrad {
            loss: 0.0,
            sparse: Vec::new(),
            tail: vec![0.0; tail_len],
        });
    }
    let emit = params.emissions(&seq.features)?;
    let (alpha, log_z) = forward(params, &emit, len);
    let beta = backward(params, &emit, len);
    let gold = &seq.labels;
    let loss = log_z - path_score(params, &emit, gold);

    // expected - empirical, per position and label
    let mut resid = vec![0.0; len * k];
    for t in 0..len {
        for y in 0..k {
            resid[t * k + y] = (alpha[t * k + y] + beta[t * k + y] - log_z).exp();
        }
        resid[t * k + gold[t]] -= 1.0;
    }

    let mut sparse = Vec::new();
    for (t, fv) in seq.features.iter().enumerate() {
        for &f in &fv.indices {
            for (j, y) in params.feature_entries(f) {
                sparse.push((j, resid[t * k + y]));
            }
        }
    }

    let mut tail = vec![0.0; tail_len];
    let base = params.emission_len();
    let dense_at = params.dense_offset() - base;
    for (t, fv) in seq.features.iter().enumerate() {
        if let Some(x) = &fv.dense {
            for (d, &xd) in x.iter().enumerate() {
                for y in 0..k {
                    tail[dense_at + d * k + y] += xd * resid[t * k + y];
                }
            }
        }
    }
    let tr_at = params.transition_offset() - base;
    let trans = params.transitions();
    for t in 0..len - 1 {
        for a in 0..k {
            let lead = alpha[t * k + a] - log_z;
            for b in 0..k {
                let p =
                    (lead + trans[a * k + b] + emit[(t + 1) * k + b] + beta[(t + 1) * k + b]).exp();
                tail[tr_at + a * k + b] += p;
            }
        }
        tail[tr_at + gold[t] * k + gold[t + 1]] -= 1.0;
    }
    let begin_at = params.begin_offset() - base;
    let end_at = params.end_offset() - base;
    for y in 0..k {
        tail[begin_at + y] += resid[y];
        tail[end_at + y] += resid[(len - 1) * k + y];
    }
    Ok(SequenceGrad { loss, sparse, tail })
}

/// Negative log-likelihood of a batch plus `(λ/2)‖w‖²`, and its gradient.
///
/// Per-sequence terms are computed in parallel and summed in batch order,
/// so the result does not depend on the thread count.
pub fn nll_and_gradient(
    params: &CrfParams,
    batch: &[&LabeledSequence],
    l2_lambda: f64,
) -> Result<(f64, Vec<f64>), CrfError> {
    let parts: Vec<SequenceGrad> = batch
        .par_iter()
        .map(|seq| sequence_grad(params, seq))
        .collect::<Result<_, _>>()?;
    let mut grad: Vec<f64> = params.weights.iter().map(|w| l2_lambda * w).collect();
    let mut loss = 0.5 * l2_lambda * params.squared_norm();
    let base = params.emission_len();
    for part in parts {
        loss += part.loss;
        for (j, v) in part.sparse {
            grad[j] += v;
        }
        for (g, v) in grad[base..].iter_mut().zip(part.tail) {
            *g += v;
        }
    }
    Ok((loss, grad))
}
