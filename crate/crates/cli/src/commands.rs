use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use causeway::augment::{
    augment_st1, augment_st2, oversample_multirel, synth_templates, EdaConfig, SlotLexicons,
    StopwordList, SynonymLexicon,
};
use causeway::classifier::{binary_metrics, predict_binary, train_binary, BinaryModel};
use causeway::corpus::{load_corpus, write_corpus, Corpus, CorpusFormat};
use causeway::crf::{self, load_dense_store, CrfModel, DenseStore};
use causeway::eval::{evaluate, EvalMode};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{existing, sidecar, write_json, RunConfig};
use crate::failure::Failure;
use crate::{AugmentMode, Format, Mode, PredictArgs, TrainArgs};

fn corpus_format(explicit: Option<Format>, path: &Path) -> CorpusFormat {
    match explicit {
        Some(Format::Jsonl) => CorpusFormat::Jsonl,
        Some(Format::Csv) => CorpusFormat::Csv,
        None => CorpusFormat::from_path(path),
    }
}

/// Loads a corpus, reporting rejected rows; they are fatal unless lenient.
fn load(path: &Path, format: CorpusFormat, lenient: bool) -> Result<Corpus, Failure> {
    let (corpus, report) = load_corpus(path, format)?;
    for r in &report.rejected {
        eprintln!(
            "{}: row {}{}: {}",
            path.display(),
            r.row,
            r.id.as_deref()
                .map(|id| format!(" ({id})"))
                .unwrap_or_default(),
            r.error
        );
    }
    if !report.rejected.is_empty() && !lenient {
        return Err(Failure::Data(format!(
            "{} of {} rows in {} rejected (use --lenient to skip them)",
            report.rejected.len(),
            report.rows,
            path.display()
        )));
    }
    Ok(corpus)
}

fn save_corpus(path: &Path, corpus: &Corpus, format: CorpusFormat) -> Result<(), Failure> {
    write_corpus(File::create(path)?, corpus, format)?;
    Ok(())
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    args: serde_json::Value,
    config: &'a RunConfig,
}

fn echo(
    path: &Path,
    command: &str,
    args: serde_json::Value,
    cfg: &RunConfig,
) -> Result<(), Failure> {
    write_json(
        path,
        &Echo {
            command,
            args,
            config: cfg,
        },
    )
}

pub fn convert(
    cfg: &RunConfig,
    input: &Path,
    output: &Path,
    from: Option<Format>,
    to: Option<Format>,
) -> Result<(), Failure> {
    let corpus = load(input, corpus_format(from, input), cfg.lenient)?;
    save_corpus(output, &corpus, corpus_format(to, output))?;
    log::info!("wrote {} sentences to {}", corpus.len(), output.display());
    Ok(())
}

struct TrainInputs {
    train: Corpus,
    dev: Corpus,
    out_dir: std::path::PathBuf,
    dense: Option<DenseStore>,
}

fn train_inputs(cfg: &mut RunConfig, args: &TrainArgs) -> Result<TrainInputs, Failure> {
    let train = existing(args.train.as_deref().or(cfg.train.as_deref()), "train")?;
    let dev = existing(args.dev.as_deref().or(cfg.dev.as_deref()), "dev")?;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Failure::Config("`out_dir` is not set".into()))?;
    let embeddings = match args.embeddings.as_deref().or(cfg.embeddings.as_deref()) {
        Some(p) => Some(existing(Some(p), "embeddings")?),
        None => None,
    };
    cfg.train = Some(train.clone());
    cfg.dev = Some(dev.clone());
    cfg.out_dir = Some(out_dir.clone());
    cfg.embeddings = embeddings.clone();
    let dense = embeddings.map(load_dense_store).transpose()?;
    Ok(TrainInputs {
        train: load(&train, CorpusFormat::from_path(&train), cfg.lenient)?,
        dev: load(&dev, CorpusFormat::from_path(&dev), cfg.lenient)?,
        out_dir,
        dense,
    })
}

pub fn train_st1(mut cfg: RunConfig, args: &TrainArgs) -> Result<(), Failure> {
    let inputs = train_inputs(&mut cfg, args)?;
    let (model, report) = train_binary(
        &inputs.train,
        &inputs.dev,
        cfg.class_weights,
        &cfg.classifier,
    )?;
    let gold: Vec<bool> = inputs.dev.sentences.iter().map(|s| s.is_causal).collect();
    let pred: Vec<bool> = inputs
        .dev
        .sentences
        .par_iter()
        .map(|s| predict_binary(&model, s).0)
        .collect();
    let dev = binary_metrics(&gold, &pred)?;

    std::fs::create_dir_all(&inputs.out_dir)?;
    model.save(BufWriter::new(File::create(
        inputs.out_dir.join("model.json"),
    )?))?;
    write_json(
        &inputs.out_dir.join("metrics.json"),
        &json!({ "training": report, "dev": dev }),
    )?;
    echo(
        &inputs.out_dir.join("config.json"),
        "train-st1",
        json!({}),
        &cfg,
    )?;
    eprintln!(
        "best epoch {} of {}: dev F1 {:.4}",
        report.best_epoch,
        report.epochs.len(),
        report.best_dev_f1
    );
    Ok(())
}

pub fn train_st2(mut cfg: RunConfig, args: &TrainArgs) -> Result<(), Failure> {
    let inputs = train_inputs(&mut cfg, args)?;
    let (model, report) = crf::train(&inputs.train, &inputs.dev, &cfg.crf, inputs.dense.as_ref())?;
    std::fs::create_dir_all(&inputs.out_dir)?;
    model.save(BufWriter::new(File::create(
        inputs.out_dir.join("model.json"),
    )?))?;
    write_json(
        &inputs.out_dir.join("metrics.json"),
        &json!({ "training": report }),
    )?;
    echo(
        &inputs.out_dir.join("config.json"),
        "train-st2",
        json!({}),
        &cfg,
    )?;
    eprintln!(
        "best epoch {} of {}: dev fair macro F1 {:.4}",
        report.best_epoch,
        report.epochs.len(),
        report.best_dev_f1
    );
    Ok(())
}

fn open_model(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

pub fn predict_st1(cfg: &RunConfig, args: &PredictArgs) -> Result<(), Failure> {
    let model = BinaryModel::load(open_model(&args.model)?)?;
    let corpus = load(
        &args.input,
        CorpusFormat::from_path(&args.input),
        cfg.lenient,
    )?;
    let scored: Vec<(bool, f64)> = corpus
        .sentences
        .par_iter()
        .map(|s| predict_binary(&model, s))
        .collect();
    let mut w = BufWriter::new(File::create(&args.output)?);
    for (s, (label, score)) in corpus.sentences.iter().zip(scored) {
        let rec = json!({ "id": s.id, "causal": label, "score": score });
        writeln!(w, "{rec}")?;
    }
    w.flush()?;
    echo(
        &sidecar(&args.output),
        "predict-st1",
        predict_echo(args),
        cfg,
    )
}

pub fn predict_st2(cfg: &RunConfig, args: &PredictArgs) -> Result<(), Failure> {
    let model = CrfModel::load(open_model(&args.model)?)?;
    let corpus = load(
        &args.input,
        CorpusFormat::from_path(&args.input),
        cfg.lenient,
    )?;
    let dense = args
        .embeddings
        .as_deref()
        .map(load_dense_store)
        .transpose()?;
    let predicted = model.predict_corpus(&corpus, dense.as_ref())?;
    save_corpus(&args.output, &predicted, CorpusFormat::Jsonl)?;
    echo(
        &sidecar(&args.output),
        "predict-st2",
        predict_echo(args),
        cfg,
    )
}

fn predict_echo(args: &PredictArgs) -> serde_json::Value {
    json!({
        "model": args.model,
        "input": args.input,
        "output": args.output,
        "embeddings": args.embeddings,
    })
}

pub fn eval(
    cfg: &RunConfig,
    gold: &Path,
    pred: &Path,
    mode: Mode,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let gold_c = load(gold, CorpusFormat::from_path(gold), cfg.lenient)?;
    let pred_c = load(pred, CorpusFormat::from_path(pred), cfg.lenient)?;
    let mode = match mode {
        Mode::Fair => EvalMode::Fair,
        Mode::Strict => EvalMode::Strict,
    };
    let report = evaluate(&gold_c, &pred_c, mode)?;
    for id in &report.missing_predictions {
        eprintln!("missing prediction for {id}; its gold spans count as FN");
    }
    print!("{report}");
    if let Some(path) = report_path {
        write_json(path, &report)?;
        echo(
            &sidecar(path),
            "eval",
            json!({ "gold": gold, "pred": pred, "mode": format!("{mode:?}").to_lowercase() }),
            cfg,
        )?;
    }
    Ok(())
}

fn resources(cfg: &RunConfig) -> Result<(SynonymLexicon, StopwordList), Failure> {
    let lexicon = match &cfg.lexicon {
        Some(p) => SynonymLexicon::load(existing(Some(p), "lexicon")?)?,
        None => SynonymLexicon::bundled(),
    };
    let stopwords = match &cfg.stopwords {
        Some(p) => StopwordList::load(existing(Some(p), "stopwords")?)?,
        None => StopwordList::default(),
    };
    Ok((lexicon, stopwords))
}

pub fn augment(
    mut cfg: RunConfig,
    mode: AugmentMode,
    input: Option<&Path>,
    output: &Path,
    n: Option<usize>,
    n_aug: Option<usize>,
) -> Result<(), Failure> {
    let seed = cfg.seed();
    let read_input = |cfg: &RunConfig| -> Result<Corpus, Failure> {
        let path =
            input.ok_or_else(|| Failure::Config("--input is required for this mode".into()))?;
        load(path, CorpusFormat::from_path(path), cfg.lenient)
    };
    let out = match mode {
        AugmentMode::St1Eda | AugmentMode::St2Eda => {
            let st1 = mode == AugmentMode::St1Eda;
            let mut eda = cfg.eda.clone().unwrap_or_else(|| {
                if st1 {
                    EdaConfig::st1()
                } else {
                    EdaConfig::st2()
                }
            });
            eda.seed = seed;
            if let Some(k) = n_aug {
                eda.n_aug = k;
            }
            cfg.eda = Some(eda.clone());
            let corpus = read_input(&cfg)?;
            let (lexicon, stopwords) = resources(&cfg)?;
            if st1 {
                augment_st1(&corpus, &eda, &lexicon, &stopwords)?
            } else {
                let (out, report) = augment_st2(&corpus, &eda, &lexicon, &stopwords)?;
                eprintln!(
                    "added {} of {} candidates, discarded {}",
                    report.added, report.candidates, report.discarded
                );
                out
            }
        }
        AugmentMode::Oversample => {
            let n = n.or(cfg.n).unwrap_or(400);
            cfg.n = Some(n);
            let corpus = read_input(&cfg)?;
            oversample_multirel(&corpus, n, &mut ChaCha8Rng::seed_from_u64(seed))?
        }
        AugmentMode::Synth => {
            let n = n.or(cfg.n).unwrap_or(100);
            cfg.n = Some(n);
            let slots = match &cfg.slots {
                Some(p) => SlotLexicons::load(existing(Some(p), "slots")?)?,
                None => SlotLexicons::bundled(),
            };
            synth_templates(n, &slots, &mut ChaCha8Rng::seed_from_u64(seed))?
        }
    };
    save_corpus(output, &out, CorpusFormat::from_path(output))?;
    let mode_name = match mode {
        AugmentMode::St1Eda => "st1-eda",
        AugmentMode::St2Eda => "st2-eda",
        AugmentMode::Oversample => "oversample",
        AugmentMode::Synth => "synth",
    };
    echo(
        &sidecar(output),
        "augment",
        json!({ "mode": mode_name, "input": input, "output": output, "records": out.len() }),
        &cfg,
    )
}
