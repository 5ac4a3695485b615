use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::CrfError;

/// CRF weights in one flat vector so the optimizer can treat them uniformly.
///
/// Block layout of `weights`:
/// `[emission pairs | dense (dim × K) | transition (K × K) | begin (K) | end (K)]`.
///
/// Emission weights are stored only for (feature, label) pairs in the
/// support: feature `f` owns entries `offsets[f]..offsets[f + 1]`, each
/// tied to label `labels[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    num_labels: usize,
    dense_dim: usize,
    offsets: Vec<usize>,
    labels: Vec<u32>,
    pub weights: Vec<f64>,
}

impl CrfParams {
    /// Zero weights where every feature may fire with every label.
    pub fn zeros_full(num_features: usize, num_labels: usize, dense_dim: usize) -> Self {
        let support = vec![(0..num_labels as u32).collect::<Vec<_>>(); num_features];
        Self::zeros_with_support(&support, num_labels, dense_dim)
    }

    /// Zero weights with emission pairs limited to `support[f]`, the labels
    /// feature `f` may score. Each list must be sorted and deduplicated.
    pub fn zeros_with_support(support: &[Vec<u32>], num_labels: usize, dense_dim: usize) -> Self {
        let mut offsets = Vec::with_capacity(support.len() + 1);
        let mut labels = Vec::new();
        offsets.push(0);
        for s in support {
            debug_assert!(s.windows(2).all(|w| w[0] < w[1]));
            labels.extend_from_slice(s);
            offsets.push(labels.len());
        }
        let k = num_labels;
        let n = labels.len() + dense_dim * k + k * k + 2 * k;
        CrfParams {
            num_labels,
            dense_dim,
            offsets,
            labels,
            weights: vec![0.0; n],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn dense_dim(&self) -> usize {
        self.dense_dim
    }

    pub fn num_features(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn emission_len(&self) -> usize {
        self.labels.len()
    }

    pub fn dense_offset(&self) -> usize {
        self.labels.len()
    }

    pub fn transition_offset(&self) -> usize {
        self.dense_offset() + self.dense_dim * self.num_labels
    }

    pub fn begin_offset(&self) -> usize {
        self.transition_offset() + self.num_labels * self.num_labels
    }

    pub fn end_offset(&self) -> usize {
        self.begin_offset() + self.num_labels
    }

    /// Index range into `weights` and the label of each entry for feature `f`.
    pub fn feature_entries(&self, f: u32) -> impl Iterator<Item = (usize, usize)> + '_ {
        let f = f as usize;
        let range = if f < self.num_features() {
            self.offsets[f]..self.offsets[f + 1]
        } else {
            0..0
        };
        range.map(move |j| (j, self.labels[j] as usize))
    }

    /// Index into `weights` for emission pair (feature, label), if supported.
    pub fn emission_index(&self, feature: u32, label: usize) -> Option<usize> {
        self.feature_entries(feature)
            .find(|&(_, y)| y == label)
            .map(|(j, _)| j)
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.weights[self.transition_offset() + from * self.num_labels + to]
    }

    pub fn transitions(&self) -> &[f64] {
        let o = self.transition_offset();
        &self.weights[o..o + self.num_labels * self.num_labels]
    }

    pub fn begin(&self) -> &[f64] {
        let o = self.begin_offset();
        &self.weights[o..o + self.num_labels]
    }

    pub fn end(&self) -> &[f64] {
        let o = self.end_offset();
        &self.weights[o..o + self.num_labels]
    }

    pub fn check_features(&self, features: &[FeatureVector]) -> Result<(), CrfError> {
        for fv in features {
            let got = fv.dense.as_ref().map_or(0, Vec::len);
            if got != self.dense_dim {
                return Err(CrfError::DimensionMismatch {
                    expected: self.dense_dim,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Per-token label scores, row-major `L × K`.
    pub fn emissions(&self, features: &[FeatureVector]) -> Result<Vec<f64>, CrfError> {
        self.check_features(features)?;
        let k = self.num_labels;
        let mut out = vec![0.0; features.len() * k];
        let dense_w = &self.weights[self.dense_offset()..self.transition_offset()];
        for (t, fv) in features.iter().enumerate() {
            let row = &mut out[t * k..(t + 1) * k];
            for &f in &fv.indices {
                for (j, y) in self.feature_entries(f) {
                    row[y] += self.weights[j];
                }
            }
            if let Some(x) = &fv.dense {
                for (d, &xd) in x.iter().enumerate() {
                    for (y, r) in row.iter_mut().enumerate() {
                        *r += xd * dense_w[d * k + y];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}
