use std::io::{Read, Write};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dense::DenseStore;
use super::features::{feature_strings, sentence_features, FeatureMap, FeatureVector};
use super::inference::{
    build_constraint_mask, nll_and_gradient, viterbi, LabeledSequence, TransitionMask,
};
use super::params::CrfParams;
use super::CrfError;
use crate::corpus::{CausalRelation, Corpus, Sentence};
use crate::eval::{evaluate, EvalMode};
use crate::labeling::{
    decode_stacked, encode_sentence, layer_of, repair_layer, LabelVocabulary, StackedTag,
    StackedTagSequence, NUM_LAYERS,
};
use crate::model_file::{read_model, write_model};
use crate::optim::{Adam, EarlyStopping, StopDecision};

pub const CRF_MODEL_KIND: &str = "crf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub hard_constraints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1e-4,
            learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            seed: 13,
            hard_constraints: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CrfError> {
        let bad = |m: &str| Err(CrfError::InvalidConfig(m.to_string()));
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be a finite value >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad("patience must be in 1..=max_epochs");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_fair_f1: f64,
    pub dev_strict_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub stopped_early: bool,
    pub num_labels: usize,
    pub num_features: usize,
    pub num_weights: usize,
}

/// A trained tagger: label vocabulary, frozen feature map and weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrfModel {
    labels: Vec<StackedTag>,
    features: FeatureMap,
    params: CrfParams,
    hard_constraints: bool,
    #[serde(skip)]
    vocab: OnceLock<LabelVocabulary>,
    #[serde(skip)]
    mask: OnceLock<TransitionMask>,
}

impl PartialEq for CrfModel {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.features == other.features
            && self.params == other.params
            && self.hard_constraints == other.hard_constraints
    }
}

impl CrfModel {
    pub fn new(
        vocab: LabelVocabulary,
        features: FeatureMap,
        params: CrfParams,
        hard_constraints: bool,
    ) -> Self {
        CrfModel {
            labels: vocab.labels().to_vec(),
            features,
            params,
            hard_constraints,
            vocab: OnceLock::from(vocab),
            mask: OnceLock::new(),
        }
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        self.vocab
            .get_or_init(|| LabelVocabulary::from_labels(self.labels.clone()))
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    pub fn params(&self) -> &CrfParams {
        &self.params
    }

    pub fn hard_constraints(&self) -> bool {
        self.hard_constraints
    }

    fn mask(&self) -> Option<&TransitionMask> {
        self.hard_constraints.then(|| {
            self.mask
                .get_or_init(|| build_constraint_mask(self.vocabulary()))
        })
    }

    pub fn features_for(
        &self,
        sentence: &Sentence,
        dense: Option<&DenseStore>,
    ) -> Result<Vec<FeatureVector>, CrfError> {
        let mut feats = sentence_features(sentence, &self.features, dense)?;
        if dense.is_none() && self.params.dense_dim() > 0 {
            for fv in &mut feats {
                fv.dense = Some(vec![0.0; self.params.dense_dim()]);
            }
        }
        Ok(feats)
    }

    /// Repaired stacked tags for one sentence.
    pub fn predict_tags(
        &self,
        sentence: &Sentence,
        dense: Option<&DenseStore>,
    ) -> Result<StackedTagSequence, CrfError> {
        if sentence.is_empty() {
            return Ok(Vec::new());
        }
        let feats = self.features_for(sentence, dense)?;
        decode_tags(&self.params, self.vocabulary(), self.mask(), &feats)
    }

    /// Relations for one sentence. A model with a dense channel sees zero
    /// vectors here; use [`CrfModel::predict_with_dense`] to supply them.
    pub fn predict(&self, sentence: &Sentence) -> Vec<CausalRelation> {
        self.predict_with_dense(sentence, None)
            .expect("features without a dense store always match the model")
    }

    pub fn predict_with_dense(
        &self,
        sentence: &Sentence,
        dense: Option<&DenseStore>,
    ) -> Result<Vec<CausalRelation>, CrfError> {
        let tags = self.predict_tags(sentence, dense)?;
        Ok(decode_stacked(&tags).relations)
    }

    /// Predicts every sentence in parallel, preserving order.
    pub fn predict_corpus(
        &self,
        corpus: &Corpus,
        dense: Option<&DenseStore>,
    ) -> Result<Corpus, CrfError> {
        let sentences = corpus
            .sentences
            .par_iter()
            .map(|s| {
                let relations = self.predict_with_dense(s, dense)?;
                Ok(with_relations(s, relations))
            })
            .collect::<Result<Vec<_>, CrfError>>()?;
        Ok(Corpus::new(corpus.split_name.clone(), sentences))
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), CrfError> {
        Ok(write_model(writer, CRF_MODEL_KIND, self)?)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, CrfError> {
        let model: CrfModel = read_model(reader, CRF_MODEL_KIND)?;
        if model.params.num_labels() != model.labels.len()
            || model.params.num_features() != model.features.len()
        {
            return Err(CrfError::Format(
                "parameter blocks do not match vocabulary or feature map".into(),
            ));
        }
        Ok(model)
    }
}

fn with_relations(s: &Sentence, relations: Vec<CausalRelation>) -> Sentence {
    let mut out = s.clone();
    out.is_causal = !relations.is_empty();
    out.relations = relations;
    out
}

fn decode_tags(
    params: &CrfParams,
    vocab: &LabelVocabulary,
    mask: Option<&TransitionMask>,
    feats: &[FeatureVector],
) -> Result<StackedTagSequence, CrfError> {
    let (path, _) = viterbi(params, feats, mask)?;
    let tags: Vec<StackedTag> = path.into_iter().map(|y| vocab.label(y)).collect();
    let layers: Vec<_> = (0..NUM_LAYERS)
        .map(|k| repair_layer(&layer_of(&tags, k)))
        .collect();
    Ok((0..tags.len())
        .map(|t| StackedTag([layers[0][t], layers[1][t], layers[2][t]]))
        .collect())
}

/// Trains a tagger with mini-batch Adam on the penalized NLL and keeps the
/// weights of the epoch with the best dev fair macro F1.
pub fn train(
    train: &Corpus,
    dev: &Corpus,
    config: &TrainConfig,
    dense: Option<&DenseStore>,
) -> Result<(CrfModel, TrainReport), CrfError> {
    config.validate()?;
    let encoded: Vec<(Sentence, StackedTagSequence)> = train
        .sentences
        .par_iter()
        .filter(|s| !s.is_empty())
        .map(encode_sentence)
        .collect();
    if encoded.is_empty() {
        return Err(CrfError::EmptyCorpus(train.split_name.clone()));
    }
    let dev_tags: Vec<StackedTagSequence> = dev
        .sentences
        .par_iter()
        .map(|s| encode_sentence(s).1)
        .collect();
    let vocab =
        LabelVocabulary::from_sequences(encoded.iter().map(|(_, t)| t).chain(dev_tags.iter()));

    let strings: Vec<Vec<String>> = encoded
        .par_iter()
        .map(|(s, _)| {
            let words = s.token_texts();
            (0..words.len())
                .flat_map(|t| feature_strings(&words, t))
                .collect()
        })
        .collect();
    let mut map = FeatureMap::new();
    for name in strings.iter().flatten() {
        map.intern(name);
    }
    map.freeze();
    drop(strings);

    let sequences: Vec<LabeledSequence> = encoded
        .par_iter()
        .map(|(s, tags)| {
            let features = sentence_features(s, &map, dense)?;
            let labels = tags
                .iter()
                .map(|t| vocab.id(t).expect("label in vocabulary"))
                .collect();
            Ok(LabeledSequence { features, labels })
        })
        .collect::<Result<_, CrfError>>()?;

    let mut support = vec![Vec::<u32>::new(); map.len()];
    for seq in &sequences {
        for (fv, &y) in seq.features.iter().zip(&seq.labels) {
            for &f in &fv.indices {
                support[f as usize].push(y as u32);
            }
        }
    }
    for s in &mut support {
        s.sort_unstable();
        s.dedup();
    }
    let dense_dim = dense.map_or(0, DenseStore::dim);
    let mut params = CrfParams::zeros_with_support(&support, vocab.len(), dense_dim);
    drop(support);

    let dev_causal: Vec<&Sentence> = dev
        .sentences
        .iter()
        .filter(|s| !s.relations.is_empty() && !s.is_empty())
        .collect();
    let dev_feats: Vec<Vec<FeatureVector>> = dev_causal
        .par_iter()
        .map(|s| sentence_features(s, &map, dense))
        .collect::<Result<_, _>>()?;
    let mask = config
        .hard_constraints
        .then(|| build_constraint_mask(&vocab));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &sequences[i]).collect();
            let (loss, grad) = nll_and_gradient(&params, &batch, config.l2_lambda)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(CrfError::Divergence { epoch });
            }
            epoch_loss += loss;
            adam.step(&mut params.weights, &grad);
            if !params.all_finite() {
                return Err(CrfError::Divergence { epoch });
            }
        }

        let predicted = dev_causal
            .par_iter()
            .zip(&dev_feats)
            .map(|(s, f)| {
                let tags = decode_tags(&params, &vocab, mask.as_ref(), f)?;
                Ok(with_relations(s, decode_stacked(&tags).relations))
            })
            .collect::<Result<Vec<_>, CrfError>>()?;
        let gold = Corpus::new("dev", dev_causal.iter().map(|s| (*s).clone()).collect());
        let pred = Corpus::new("dev", predicted);
        let fair = evaluate(&gold, &pred, EvalMode::Fair).expect("ids come from gold");
        let strict = evaluate(&gold, &pred, EvalMode::Strict).expect("ids come from gold");
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss,
            dev_fair_f1: fair.overall.macro_avg.f1,
            dev_strict_f1: strict.overall.macro_avg.f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} dev fair F1 {:.4} strict F1 {:.4}",
            record.train_loss,
            record.dev_fair_f1,
            record.dev_strict_f1
        );
        let decision = stopper.observe(epoch, record.dev_fair_f1);
        epochs.push(record);
        match decision {
            StopDecision::Improved => best.weights.clone_from(&params.weights),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    let report = TrainReport {
        epochs,
        best_epoch: stopper.best_epoch,
        best_dev_f1: stopper.best_score,
        stopped_early,
        num_labels: vocab.len(),
        num_features: map.len(),
        num_weights: best.len(),
    };
    Ok((
        CrfModel::new(vocab, map, best, config.hard_constraints),
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Corpus {
        let rows = [
            (
                "a",
                "<ARG0>Rain</ARG0> <SIG0>caused</SIG0> <ARG1>floods</ARG1> .",
            ),
            (
                "b",
                "<ARG1>Floods</ARG1> <SIG0>followed</SIG0> <ARG0>storms</ARG0> .",
            ),
            (
                "c",
                "<ARG0>Heat</ARG0> <SIG0>caused</SIG0> <ARG1>fires</ARG1> .",
            ),
        ];
        let mut sentences: Vec<Sentence> = rows
            .iter()
            .map(|(id, t)| Sentence::from_tagged(*id, &[*t]).unwrap())
            .collect();
        sentences.push(Sentence::new("d", "Nothing happened here .", false));
        Corpus::new("toy", sentences)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            patience: 60,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(CrfError::InvalidConfig(_))));
    }

    #[test]
    fn empty_train_corpus() {
        let empty = Corpus::new("train", vec![]);
        assert!(matches!(
            train(&empty, &empty, &TrainConfig::default(), None),
            Err(CrfError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn fits_toy_corpus_and_round_trips() {
        let c = corpus();
        let config = TrainConfig {
            max_epochs: 30,
            learning_rate: 0.1,
            ..Default::default()
        };
        let (model, report) = train(&c, &c, &config, None).unwrap();
        assert!(report.best_dev_f1 > 0.99, "{report:?}");
        assert_eq!(model.predict(&c.sentences[0]), c.sentences[0].relations);
        assert!(model.predict(&c.sentences[3]).is_empty());

        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let back = CrfModel::load(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&c.sentences[1]), c.sentences[1].relations);
    }

    #[test]
    fn wrong_kind_rejected() {
        let mut buf = Vec::new();
        write_model(&mut buf, "binary", &1u32).unwrap();
        assert!(matches!(
            CrfModel::load(buf.as_slice()),
            Err(CrfError::Model(_))
        ));
    }
}
