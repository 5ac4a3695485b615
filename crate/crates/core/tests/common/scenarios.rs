//! Training-level scenarios shared by the integration tests and the
//! acceptance report.

use causeway::augment::{
    augment_st1, augment_st2, oversample_multirel, EdaConfig, StopwordList, SynonymLexicon,
};
use causeway::classifier::{
    binary_metrics, predict_binary, train_binary, BinaryConfig, ClassWeights,
};
use causeway::corpus::{render_annotated, write_corpus, Corpus, CorpusFormat, Sentence};
use causeway::crf::{train, CrfModel, TrainConfig};
use causeway::eval::{evaluate, EvalMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{noisy_templates, overfit_corpus, skewed_binary};

pub fn split(c: &Corpus, sizes: &[usize]) -> Vec<Corpus> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&n| {
            let part = c.sentences[start..start + n].to_vec();
            start += n;
            Corpus::new(c.split_name.clone(), part)
        })
        .collect()
}

pub fn macro_f1(model: &CrfModel, gold: &Corpus, mode: EvalMode) -> f64 {
    let pred = model.predict_corpus(gold, None).unwrap();
    evaluate(gold, &pred, mode).unwrap().overall.macro_avg.f1
}

#[derive(Debug, Clone, Copy)]
pub struct Overfit {
    pub sentences: usize,
    pub epochs_run: usize,
    pub strict_f1: f64,
}

/// Fits a 50-sentence corpus within 50 epochs and scores it on itself.
pub fn overfit(seed: u64) -> Overfit {
    let corpus = overfit_corpus(&mut ChaCha8Rng::seed_from_u64(seed));
    let config = TrainConfig {
        learning_rate: 0.05,
        batch_size: 8,
        max_epochs: 50,
        patience: 50,
        seed,
        ..Default::default()
    };
    let (model, report) = train(&corpus, &corpus, &config, None).unwrap();
    Overfit {
        sentences: corpus.len(),
        epochs_run: report.epochs.len(),
        strict_f1: macro_f1(&model, &corpus, EvalMode::Strict),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EndToEnd {
    pub base_f1: f64,
    pub augmented_f1: f64,
    pub added: usize,
}

/// 800/100/100 split of noisy templates; test fair macro F1 with and
/// without span-level EDA on the training split.
pub fn end_to_end(seed: u64) -> EndToEnd {
    let corpus = noisy_templates(1000, &mut ChaCha8Rng::seed_from_u64(seed));
    let parts = split(&corpus, &[800, 100, 100]);
    let (tr, dev, test) = (&parts[0], &parts[1], &parts[2]);
    let config = TrainConfig {
        seed,
        ..Default::default()
    };
    let (base, _) = train(tr, dev, &config, None).unwrap();
    let eda = EdaConfig {
        seed,
        ..EdaConfig::st2()
    };
    let (augmented, report) = augment_st2(
        tr,
        &eda,
        &SynonymLexicon::bundled(),
        &StopwordList::default(),
    )
    .unwrap();
    let (aug, _) = train(&augmented, dev, &config, None).unwrap();
    EndToEnd {
        base_f1: macro_f1(&base, test, EvalMode::Fair),
        augmented_f1: macro_f1(&aug, test, EvalMode::Fair),
        added: report.added,
    }
}

/// Positive-class test recall with (weighted, uniform) loss on a 1:3 set.
pub fn weighted_recall(seed: u64) -> (f64, f64) {
    let data = skewed_binary(500, &mut ChaCha8Rng::seed_from_u64(seed));
    let parts = split(&data, &[1200, 400, 400]);
    let config = BinaryConfig {
        seed,
        ..Default::default()
    };
    let recall = |weights: ClassWeights| {
        let (model, _) = train_binary(&parts[0], &parts[1], weights, &config).unwrap();
        let gold: Vec<bool> = parts[2].sentences.iter().map(|s| s.is_causal).collect();
        let pred: Vec<bool> = parts[2]
            .sentences
            .iter()
            .map(|s| predict_binary(&model, s).0)
            .collect();
        binary_metrics(&gold, &pred).unwrap().recall
    };
    (
        recall(ClassWeights::default()),
        recall(ClassWeights::uniform()),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct Sizing {
    pub st1_in: usize,
    pub st1_out: usize,
    pub oversample_in: usize,
    pub oversample_out: usize,
    pub st2_added: usize,
    pub st2_reparse_failures: usize,
}

fn reparses(s: &Sentence) -> bool {
    let Ok(tagged) = render_annotated(s, 0) else {
        return false;
    };
    matches!(Sentence::from_tagged(s.id.clone(), &[tagged]), Ok(back) if back.text == s.text && back.relations == s.relations)
}

pub fn augmentation_sizing(seed: u64) -> Sizing {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = noisy_templates(60, &mut rng);
    for i in 0..20 {
        base.sentences.push(Sentence::new(
            format!("neg{i}"),
            "The council met on Tuesday to discuss the budget .",
            false,
        ));
    }
    let lexicon = SynonymLexicon::bundled();
    let stopwords = StopwordList::default();
    let st1 = augment_st1(
        &base,
        &EdaConfig {
            seed,
            ..EdaConfig::st1()
        },
        &lexicon,
        &stopwords,
    )
    .unwrap();

    let multi = overfit_corpus(&mut rng);
    let over = oversample_multirel(&multi, 400, &mut rng).unwrap();

    let (st2, report) = augment_st2(
        &base,
        &EdaConfig {
            seed,
            ..EdaConfig::st2()
        },
        &lexicon,
        &stopwords,
    )
    .unwrap();
    let added = &st2.sentences[base.len()..];
    Sizing {
        st1_in: base.len(),
        st1_out: st1.len(),
        oversample_in: multi.len(),
        oversample_out: over.len(),
        st2_added: report.added,
        st2_reparse_failures: added.iter().filter(|s| !reparses(s)).count()
            + report.added.abs_diff(added.len()),
    }
}

/// Trains and predicts twice with one config; returns whether every
/// model and prediction file matched byte for byte.
pub fn deterministic_runs(seed: u64) -> bool {
    let run = || {
        let corpus = noisy_templates(120, &mut ChaCha8Rng::seed_from_u64(seed));
        let parts = split(&corpus, &[80, 20, 20]);
        let config = TrainConfig {
            max_epochs: 5,
            seed,
            ..Default::default()
        };
        let (model, _) = train(&parts[0], &parts[1], &config, None).unwrap();
        let mut model_bytes = Vec::new();
        model.save(&mut model_bytes).unwrap();
        let mut pred_bytes = Vec::new();
        write_corpus(
            &mut pred_bytes,
            &model.predict_corpus(&parts[2], None).unwrap(),
            CorpusFormat::Jsonl,
        )
        .unwrap();

        let data = skewed_binary(40, &mut ChaCha8Rng::seed_from_u64(seed));
        let bparts = split(&data, &[120, 40]);
        let bconfig = BinaryConfig {
            seed,
            max_epochs: 5,
            ..Default::default()
        };
        let (bmodel, _) =
            train_binary(&bparts[0], &bparts[1], ClassWeights::default(), &bconfig).unwrap();
        let mut bmodel_bytes = Vec::new();
        bmodel.save(&mut bmodel_bytes).unwrap();
        let scores: Vec<u64> = bparts[1]
            .sentences
            .iter()
            .map(|s| predict_binary(&bmodel, s).1.to_bits())
            .collect();
        (model_bytes, pred_bytes, bmodel_bytes, scores)
    };
    let a = run();
    let b = run();
    !a.0.is_empty() && a == b
}
