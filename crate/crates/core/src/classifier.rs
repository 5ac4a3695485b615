//! Sentence-level causality detection with a class-weighted logistic model.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Sentence};
use crate::crf::FeatureMap;
use crate::model_file::{read_model, write_model, ModelFileError};
use crate::optim::{Adam, EarlyStopping, StopDecision};

pub const BINARY_MODEL_KIND: &str = "binary";

const DEFAULT_SIGNALS: &str = include_str!("../data/signals.txt");

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training corpus has only {0} examples; both classes are required")]
    SingleClassCorpus(&'static str),
    #[error("{0} corpus is empty")]
    EmptyCorpus(String),
    #[error("gold has {gold} labels but prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("training diverged in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelFileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassWeights {
    pub positive_weight: f64,
    pub negative_weight: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            positive_weight: 1.5,
            negative_weight: 1.0,
        }
    }
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            positive_weight: 1.0,
            negative_weight: 1.0,
        }
    }

    pub fn weight(&self, positive: bool) -> f64 {
        if positive {
            self.positive_weight
        } else {
            self.negative_weight
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        let ok = |w: f64| w > 0.0 && w.is_finite();
        if ok(self.positive_weight) && ok(self.negative_weight) {
            Ok(())
        } else {
            Err(ClassifierError::InvalidConfig(
                "class weights must be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for BinaryConfig {
    fn default() -> Self {
        BinaryConfig {
            l2_lambda: 1e-4,
            learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            seed: 13,
        }
    }
}

impl BinaryConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.into()));
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be a finite value >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad("patience must be in 1..=max_epochs");
        }
        Ok(())
    }
}

/// Sparse real-valued row: `(feature id, value)` pairs.
pub type SparseRow = Vec<(u32, f64)>;

/// Weights and bias of a logistic model over sparse rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticWeights {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticWeights {
    pub fn logit(&self, row: &[(u32, f64)]) -> f64 {
        self.bias
            + row
                .iter()
                .filter_map(|&(f, v)| self.weights.get(f as usize).map(|w| w * v))
                .sum::<f64>()
    }

    pub fn score(&self, row: &[(u32, f64)]) -> f64 {
        sigmoid(self.logit(row))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Labeled rows for [`fit_logistic`].
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub rows: &'a [SparseRow],
    pub labels: &'a [bool],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub epochs: Vec<BinaryEpoch>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub stopped_early: bool,
    pub num_features: usize,
}

/// Weighted cross-entropy with L2 on the weights (not the bias), trained by
/// mini-batch Adam with early stopping on dev positive-class F1.
pub fn fit_logistic(
    train: Dataset<'_>,
    dev: Dataset<'_>,
    num_features: usize,
    class_weights: ClassWeights,
    config: &BinaryConfig,
) -> Result<(LogisticWeights, BinaryReport), ClassifierError> {
    config.validate()?;
    class_weights.validate()?;
    if train.rows.is_empty() {
        return Err(ClassifierError::EmptyCorpus("train".into()));
    }
    if !train.labels.contains(&true) {
        return Err(ClassifierError::SingleClassCorpus("negative"));
    }
    if !train.labels.contains(&false) {
        return Err(ClassifierError::SingleClassCorpus("positive"));
    }

    let mut model = LogisticWeights {
        weights: vec![0.0; num_features],
        bias: 0.0,
    };
    let mut flat = vec![0.0; num_features + 1];
    let mut adam = Adam::new(num_features + 1, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.rows.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            // (loss, dlogit) per row, in batch order.
            let parts: Vec<(f64, f64)> = chunk
                .par_iter()
                .map(|&i| {
                    let y = train.labels[i];
                    let w = class_weights.weight(y);
                    let z = model.logit(&train.rows[i]);
                    let loss = if y { softplus(-z) } else { softplus(z) };
                    (w * loss, w * (sigmoid(z) - f64::from(u8::from(y))))
                })
                .collect();
            let mut grad: Vec<f64> = model.weights.iter().map(|w| config.l2_lambda * w).collect();
            grad.push(0.0);
            let mut loss =
                0.5 * config.l2_lambda * model.weights.iter().map(|w| w * w).sum::<f64>();
            for (&i, &(l, d)) in chunk.iter().zip(&parts) {
                loss += l;
                for &(f, v) in &train.rows[i] {
                    grad[f as usize] += d * v;
                }
                grad[num_features] += d;
            }
            if !loss.is_finite() {
                return Err(ClassifierError::Divergence { epoch });
            }
            epoch_loss += loss;
            flat[..num_features].copy_from_slice(&model.weights);
            flat[num_features] = model.bias;
            adam.step(&mut flat, &grad);
            model.weights.copy_from_slice(&flat[..num_features]);
            model.bias = flat[num_features];
        }

        let predicted: Vec<bool> = dev.rows.par_iter().map(|r| model.score(r) >= 0.5).collect();
        let dev_f1 = binary_metrics(dev.labels, &predicted)?.f1;
        epochs.push(BinaryEpoch {
            epoch,
            train_loss: epoch_loss,
            dev_f1,
        });
        log::info!("epoch {epoch}: loss {epoch_loss:.4} dev F1 {dev_f1:.4}");
        match stopper.observe(epoch, dev_f1) {
            StopDecision::Improved => best.clone_from(&model),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let report = BinaryReport {
        epochs,
        best_epoch: stopper.best_epoch,
        best_dev_f1: stopper.best_score,
        stopped_early,
        num_features,
    };
    Ok((best, report))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn load_signals(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
        .collect()
}

/// Bag features of a sentence: lowercased unigrams, adjacent bigrams and
/// counts of connective phrases from `signals`.
pub fn bag_features(tokens: &[&str], signals: &[Vec<String>]) -> Vec<(String, f64)> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out: Vec<(String, f64)> = Vec::new();
    for w in &lower {
        out.push((format!("u={w}"), 1.0));
    }
    for pair in lower.windows(2) {
        out.push((format!("b={}|{}", pair[0], pair[1]), 1.0));
    }
    for phrase in signals {
        let hits = lower
            .windows(phrase.len())
            .filter(|w| *w == phrase.as_slice())
            .count();
        if hits > 0 {
            out.push((format!("sig={}", phrase.join(" ")), hits as f64));
        }
    }
    if out.iter().any(|(n, _)| n.starts_with("sig=")) {
        out.push(("has_signal".into(), 1.0));
    }
    out
}

/// A trained sentence classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    features: FeatureMap,
    signals: Vec<Vec<String>>,
    model: LogisticWeights,
}

impl BinaryModel {
    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    pub fn weights(&self) -> &LogisticWeights {
        &self.model
    }

    pub fn row(&self, sentence: &Sentence) -> SparseRow {
        to_row(&sentence.token_texts(), &self.signals, &self.features)
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), ClassifierError> {
        Ok(write_model(writer, BINARY_MODEL_KIND, self)?)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, ClassifierError> {
        let model: BinaryModel = read_model(reader, BINARY_MODEL_KIND)?;
        if model.model.weights.len() != model.features.len() {
            return Err(
                ModelFileError::Format("weight count does not match feature map".into()).into(),
            );
        }
        Ok(model)
    }
}

fn to_row(tokens: &[&str], signals: &[Vec<String>], map: &FeatureMap) -> SparseRow {
    let mut row: SparseRow = bag_features(tokens, signals)
        .into_iter()
        .filter_map(|(n, v)| map.get(&n).map(|f| (f, v)))
        .collect();
    row.sort_by_key(|&(f, _)| f);
    // Repeated unigrams/bigrams accumulate into counts.
    row.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    row
}

/// Trains on `train`, early-stopping on `dev`, with the bundled connective list.
pub fn train_binary(
    train: &Corpus,
    dev: &Corpus,
    class_weights: ClassWeights,
    config: &BinaryConfig,
) -> Result<(BinaryModel, BinaryReport), ClassifierError> {
    let signals = load_signals(DEFAULT_SIGNALS);
    let mut features = FeatureMap::new();
    for s in &train.sentences {
        for (name, _) in bag_features(&s.token_texts(), &signals) {
            features.intern(&name);
        }
    }
    features.freeze();
    let rows = |c: &Corpus| -> Vec<SparseRow> {
        c.sentences
            .par_iter()
            .map(|s| to_row(&s.token_texts(), &signals, &features))
            .collect()
    };
    let labels = |c: &Corpus| -> Vec<bool> { c.sentences.iter().map(|s| s.is_causal).collect() };
    let (train_rows, dev_rows) = (rows(train), rows(dev));
    let (train_labels, dev_labels) = (labels(train), labels(dev));
    let (model, report) = fit_logistic(
        Dataset {
            rows: &train_rows,
            labels: &train_labels,
        },
        Dataset {
            rows: &dev_rows,
            labels: &dev_labels,
        },
        features.len(),
        class_weights,
        config,
    )
    .map_err(|e| match e {
        ClassifierError::EmptyCorpus(_) => ClassifierError::EmptyCorpus(train.split_name.clone()),
        e => e,
    })?;
    Ok((
        BinaryModel {
            features,
            signals,
            model,
        },
        report,
    ))
}

/// `(label, score)` with `label = score >= 0.5`.
pub fn predict_binary(model: &BinaryModel, sentence: &Sentence) -> (bool, f64) {
    let score = model.model.score(&model.row(sentence));
    (score >= 0.5, score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// Metrics whose denominator was zero and were set to 0.
    pub undefined: Vec<String>,
}

/// Positive-class precision, recall, F1 and overall accuracy.
pub fn binary_metrics(gold: &[bool], pred: &[bool]) -> Result<BinaryMetrics, ClassifierError> {
    if gold.len() != pred.len() {
        return Err(ClassifierError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&g, &p) in gold.iter().zip(pred) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut undefined = Vec::new();
    let mut ratio = |num: usize, den: usize, name: &str| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fn_, "recall");
    let accuracy = ratio(tp + tn, gold.len(), "accuracy");
    let f1 = if precision + recall == 0.0 {
        undefined.push("f1".into());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryMetrics {
        precision,
        recall,
        f1,
        accuracy,
        tp,
        fp,
        fn_,
        tn,
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Corpus {
        let pos = [
            "Rain caused floods .",
            "The strike led to delays .",
            "Prices rose due to shortages .",
            "Protests sparked clashes .",
        ];
        let neg = [
            "The sky is blue .",
            "Workers met on Monday .",
            "The report was published .",
            "Officials visited the site .",
        ];
        let mut s = Vec::new();
        for (i, t) in pos.iter().enumerate() {
            s.push(Sentence::new(format!("p{i}"), *t, true));
        }
        for (i, t) in neg.iter().enumerate() {
            s.push(Sentence::new(format!("n{i}"), *t, false));
        }
        Corpus::new("toy", s)
    }

    #[test]
    fn separable_toy_set() {
        let c = toy();
        let config = BinaryConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let (model, _) = train_binary(&c, &c, ClassWeights::uniform(), &config).unwrap();
        for s in &c.sentences {
            assert_eq!(predict_binary(&model, s).0, s.is_causal, "{}", s.text);
        }
        let unknown = Sentence::new("u", "zzz qqq", false);
        let (_, score) = predict_binary(&model, &unknown);
        assert_eq!(score, sigmoid(model.weights().bias));
        assert_eq!(
            predict_binary(&model, &unknown),
            predict_binary(&model, &unknown)
        );

        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        assert_eq!(BinaryModel::load(buf.as_slice()).unwrap(), model);
    }

    #[test]
    fn single_class_rejected() {
        let c = toy();
        let neg = Corpus::new(
            "neg",
            c.sentences
                .iter()
                .filter(|s| !s.is_causal)
                .cloned()
                .collect(),
        );
        assert!(matches!(
            train_binary(
                &neg,
                &neg,
                ClassWeights::default(),
                &BinaryConfig::default()
            ),
            Err(ClassifierError::SingleClassCorpus(_))
        ));
    }

    #[test]
    fn metrics_hand_values() {
        // TP=3 FP=1 FN=2
        let gold = [true, true, true, true, true, false];
        let pred = [true, true, true, false, false, true];
        let m = binary_metrics(&gold, &pred).unwrap();
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);

        let none = binary_metrics(&[true, false], &[false, false]).unwrap();
        assert_eq!(none.recall, 0.0);
        assert!(none.undefined.contains(&"precision".to_string()));
        assert!(matches!(
            binary_metrics(&[true], &[]),
            Err(ClassifierError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn signal_counts() {
        let signals = load_signals(DEFAULT_SIGNALS);
        let f = bag_features(
            &["It", "led", "to", "riots", "that", "led", "to", "arrests"],
            &signals,
        );
        assert!(f.contains(&("sig=led to".to_string(), 2.0)));
        assert!(f.contains(&("has_signal".to_string(), 1.0)));
    }
}
