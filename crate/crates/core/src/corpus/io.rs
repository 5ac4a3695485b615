use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotation::render_relation;
use super::{
    char_spans_to_token_spans, parse_annotated, Corpus, CorpusError, Sentence, WidenNote,
    MAX_RELATIONS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Debug)]
pub struct RowError {
    /// 1-based data row (header excluded for CSV).
    pub row: usize,
    pub id: Option<String>,
    pub error: CorpusError,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub rows: usize,
    pub accepted: usize,
    pub rejected: Vec<RowError>,
    pub notes: Vec<(String, WidenNote)>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.rejected.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    causal: Option<bool>,
    #[serde(default)]
    relations: Vec<String>,
}

struct RawRow {
    id: String,
    text: Option<String>,
    causal: Option<bool>,
    relations: Vec<String>,
}

struct ParsedRow {
    sentence: Sentence,
    notes: Vec<WidenNote>,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_row(raw: RawRow) -> Result<ParsedRow, CorpusError> {
    if raw.relations.len() > MAX_RELATIONS {
        return Err(CorpusError::TooManyRelations {
            id: raw.id,
            count: raw.relations.len(),
            max: MAX_RELATIONS,
        });
    }
    let mut notes = Vec::new();
    let mut sentence: Option<Sentence> = None;
    for tagged in &raw.relations {
        let parsed = parse_annotated(tagged)?;
        let s = sentence
            .get_or_insert_with(|| Sentence::new(raw.id.clone(), parsed.clean_text.clone(), true));
        if s.text != parsed.clean_text {
            return Err(CorpusError::Consistency {
                id: raw.id,
                detail: "relation strings disagree on clean text".into(),
            });
        }
        let aligned = char_spans_to_token_spans(&s.tokens, &parsed)?;
        notes.extend(aligned.notes);
        s.relations.push(aligned.relation);
    }
    let mut sentence = match (sentence, raw.text) {
        (Some(s), Some(text))
            if !text.trim().is_empty() && normalize_ws(&text) != normalize_ws(&s.text) =>
        {
            return Err(CorpusError::Consistency {
                id: raw.id,
                detail: "text column differs from tagged clean text".into(),
            })
        }
        (Some(s), _) => s,
        (None, Some(text)) if !text.trim().is_empty() => Sentence::new(raw.id.clone(), text, false),
        (None, _) => {
            return Err(CorpusError::Format {
                detail: format!("record {} has neither text nor relations", raw.id),
            })
        }
    };
    sentence.is_causal = raw.causal.unwrap_or(!sentence.relations.is_empty());
    Ok(ParsedRow { sentence, notes })
}

fn parse_causal(cell: &str) -> Result<Option<bool>, CorpusError> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" => Ok(Some(true)),
        "0" | "false" | "no" => Ok(Some(false)),
        other => Err(CorpusError::Format {
            detail: format!("bad causal value `{other}`"),
        }),
    }
}

fn read_jsonl_rows<R: BufRead>(reader: R) -> Result<Vec<Result<RawRow, CorpusError>>, CorpusError> {
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str::<JsonRecord>(&line)
                .map(|r| RawRow {
                    id: r.id,
                    text: r.text,
                    causal: r.causal,
                    relations: r.relations,
                })
                .map_err(|e| CorpusError::Format {
                    detail: e.to_string(),
                }),
        );
    }
    Ok(rows)
}

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<Result<RawRow, CorpusError>>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Format {
            detail: e.to_string(),
        })?
        .clone();
    // An empty file has no header row and yields an empty corpus.
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_col), Some(text_col), Some(causal_col)) = (col("id"), col("text"), col("causal"))
    else {
        return Err(CorpusError::Format {
            detail: "CSV header must contain id, text and causal columns".into(),
        });
    };
    let rel_cols: Vec<usize> = (1..=MAX_RELATIONS)
        .filter_map(|k| col(&format!("rel{k}")))
        .collect();

    let mut rows = Vec::new();
    for record in rdr.records() {
        let row = record
            .map_err(|e| CorpusError::Format {
                detail: e.to_string(),
            })
            .and_then(|rec| {
                let get = |i: usize| rec.get(i).unwrap_or("").to_string();
                Ok(RawRow {
                    id: get(id_col),
                    text: Some(get(text_col)),
                    causal: parse_causal(&get(causal_col))?,
                    relations: rel_cols
                        .iter()
                        .map(|&c| get(c))
                        .filter(|r| !r.trim().is_empty())
                        .collect(),
                })
            });
        rows.push(row);
    }
    Ok(rows)
}

/// Parses corpus records from a reader.
///
/// Rows are parsed independently; malformed rows are collected in the
/// report and skipped. Rows sharing an id are merged into one sentence.
pub fn read_corpus<R: Read>(
    reader: R,
    format: CorpusFormat,
    split_name: &str,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let raw = match format {
        CorpusFormat::Jsonl => read_jsonl_rows(BufReader::new(reader))?,
        CorpusFormat::Csv => read_csv_rows(reader)?,
    };
    let parsed: Vec<(Option<String>, Result<ParsedRow, CorpusError>)> = raw
        .into_par_iter()
        .map(|r| match r {
            Ok(raw) => (Some(raw.id.clone()), parse_row(raw)),
            Err(e) => (None, Err(e)),
        })
        .collect();

    let mut report = LoadReport {
        rows: parsed.len(),
        ..LoadReport::default()
    };
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (row_idx, (id, result)) in parsed.into_iter().enumerate() {
        let row = row_idx + 1;
        let merged = result.and_then(|p| merge_row(&mut sentences, &mut by_id, p, &mut report));
        match merged {
            Ok(()) => report.accepted += 1,
            Err(error) => report.rejected.push(RowError { row, id, error }),
        }
    }
    Ok((Corpus::new(split_name, sentences), report))
}

fn merge_row(
    sentences: &mut Vec<Sentence>,
    by_id: &mut HashMap<String, usize>,
    row: ParsedRow,
    report: &mut LoadReport,
) -> Result<(), CorpusError> {
    let ParsedRow { sentence, notes } = row;
    match by_id.get(&sentence.id) {
        None => {
            by_id.insert(sentence.id.clone(), sentences.len());
            report
                .notes
                .extend(notes.into_iter().map(|n| (sentence.id.clone(), n)));
            sentences.push(sentence);
        }
        Some(&idx) => {
            let existing = &mut sentences[idx];
            if existing.text != sentence.text {
                return Err(CorpusError::Consistency {
                    id: sentence.id,
                    detail: "rows sharing an id disagree on clean text".into(),
                });
            }
            let count = existing.relations.len() + sentence.relations.len();
            if count > MAX_RELATIONS {
                return Err(CorpusError::TooManyRelations {
                    id: sentence.id,
                    count,
                    max: MAX_RELATIONS,
                });
            }
            existing.relations.extend(sentence.relations);
            existing.is_causal |= sentence.is_causal;
            report
                .notes
                .extend(notes.into_iter().map(|n| (existing.id.clone(), n)));
        }
    }
    Ok(())
}

/// Loads a corpus file; the split name is the file stem.
pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let split = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    let (corpus, report) = read_corpus(file, format, &split)?;
    for (id, note) in &report.notes {
        log::warn!("{}: {id}: {note}", path.display());
    }
    Ok((corpus, report))
}

fn tagged_relations(s: &Sentence) -> Vec<String> {
    s.relations.iter().map(|r| render_relation(s, r)).collect()
}

pub fn write_corpus<W: Write>(
    writer: W,
    corpus: &Corpus,
    format: CorpusFormat,
) -> Result<(), CorpusError> {
    match format {
        CorpusFormat::Jsonl => {
            let mut w = BufWriter::new(writer);
            for s in &corpus.sentences {
                let rec = JsonRecord {
                    id: s.id.clone(),
                    text: Some(s.text.clone()),
                    causal: Some(s.is_causal),
                    relations: tagged_relations(s),
                };
                serde_json::to_writer(&mut w, &rec).map_err(|e| CorpusError::Format {
                    detail: e.to_string(),
                })?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        CorpusFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            let to_err = |e: csv::Error| CorpusError::Format {
                detail: e.to_string(),
            };
            w.write_record(["id", "text", "causal", "rel1", "rel2", "rel3", "rel4"])
                .map_err(to_err)?;
            for s in &corpus.sentences {
                let mut rels = tagged_relations(s);
                if rels.len() > MAX_RELATIONS {
                    return Err(CorpusError::TooManyRelations {
                        id: s.id.clone(),
                        count: rels.len(),
                        max: MAX_RELATIONS,
                    });
                }
                rels.resize(MAX_RELATIONS, String::new());
                let causal = if s.is_causal { "1" } else { "0" };
                let mut record = vec![s.id.as_str(), s.text.as_str(), causal];
                record.extend(rels.iter().map(String::as_str));
                w.write_record(&record).map_err(to_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
