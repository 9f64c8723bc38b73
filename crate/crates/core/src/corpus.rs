//! Data model and file I/O for documents, vocabularies, and outcomes.
//!
//! The on-disk corpus format is JSON Lines: an optional vocabulary header
//! `{"vocabulary":["geneA",...]}` followed by one document record per line,
//! `{"id":"p1","words":["geneA","platinum"],"time":12.5,"event":true}`.
//! `time`/`event` are omitted for documents without follow-up data. Without
//! a header the vocabulary is the union of words in order of first
//! appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of unique word strings with O(1) word→index lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (v, term) in terms.iter().enumerate() {
            if term.is_empty() {
                return Err(Error::validation("vocabulary contains an empty string"));
            }
            if index.insert(term.clone(), v).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate vocabulary term {term:?}"
                )));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    /// Builds a vocabulary from words in order of first appearance.
    pub fn from_union<'a>(words: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut terms: Vec<String> = Vec::new();
        let mut seen = HashMap::new();
        for w in words {
            if !seen.contains_key(w) {
                seen.insert(w.to_owned(), terms.len());
                terms.push(w.to_owned());
            }
        }
        Vocabulary::new(terms)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn term(&self, v: usize) -> &str {
        &self.terms[v]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Observed follow-up for one patient: time on study and whether the
/// event (death) was observed (`event = false` means censored).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub time: f64,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::Validation(format!(
                "survival time must be positive and finite, got {time}"
            )));
        }
        Ok(SurvivalOutcome { time, event })
    }
}

/// One patient's bag of words, stored as vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<usize>,
    pub outcome: Option<SurvivalOutcome>,
}

impl Document {
    /// Number of word tokens N_i.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(vocabulary: Vocabulary, documents: Vec<Document>) -> Result<Self> {
        let corpus = Corpus {
            vocabulary,
            documents,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocabulary.len();
        let mut ids = HashMap::new();
        for doc in &self.documents {
            if ids.insert(doc.id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate document id {:?}",
                    doc.id
                )));
            }
            if let Some(&bad) = doc.tokens.iter().find(|&&t| t >= v) {
                return Err(Error::Validation(format!(
                    "document {:?} has token index {bad} out of range (V={v})",
                    doc.id
                )));
            }
            if let Some(o) = &doc.outcome {
                SurvivalOutcome::new(o.time, o.event)?;
            }
        }
        Ok(())
    }

    pub fn n_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.len()).sum()
    }

    /// True when every document carries an outcome.
    pub fn fully_observed(&self) -> bool {
        self.documents.iter().all(|d| d.outcome.is_some())
    }
}

#[derive(Serialize, Deserialize)]
struct VocabHeader {
    vocabulary: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    words: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    event: Option<bool>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);

    let mut explicit_vocab: Option<Vocabulary> = None;
    let mut records: Vec<(usize, DocRecord)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            if let Ok(h) = serde_json::from_str::<VocabHeader>(&line) {
                explicit_vocab = Some(Vocabulary::new(h.vocabulary)?);
                continue;
            }
        }
        let rec: DocRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.time.is_some() != rec.event.is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "time and event must appear together".into(),
            });
        }
        records.push((lineno, rec));
    }

    let vocabulary = match explicit_vocab {
        Some(v) => v,
        None => Vocabulary::from_union(
            records
                .iter()
                .flat_map(|(_, r)| r.words.iter().map(String::as_str)),
        )?,
    };

    let mut documents = Vec::with_capacity(records.len());
    for (lineno, rec) in records {
        let mut tokens = Vec::with_capacity(rec.words.len());
        for w in &rec.words {
            match vocabulary.index_of(w) {
                Some(v) => tokens.push(v),
                None => {
                    return Err(Error::Validation(format!(
                        "line {lineno}: word {w:?} not in the declared vocabulary"
                    )))
                }
            }
        }
        let outcome = match (rec.time, rec.event) {
            (Some(t), Some(e)) => Some(SurvivalOutcome::new(t, e)?),
            _ => None,
        };
        documents.push(Document {
            id: rec.id,
            tokens,
            outcome,
        });
    }

    Corpus::new(vocabulary, documents)
}

/// Writes the corpus in the JSON-Lines format, always with a vocabulary
/// header so the word order is preserved. Output bytes are a pure function
/// of the corpus.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    corpus.validate()?;
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let header = VocabHeader {
        vocabulary: corpus.vocabulary.terms.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(io_from_json)?;
    w.write_all(b"\n")?;
    for doc in &corpus.documents {
        let rec = DocRecord {
            id: doc.id.clone(),
            words: doc
                .tokens
                .iter()
                .map(|&t| corpus.vocabulary.term(t).to_owned())
                .collect(),
            time: doc.outcome.map(|o| o.time),
            event: doc.outcome.map(|o| o.event),
        };
        serde_json::to_writer(&mut w, &rec).map_err(io_from_json)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn io_from_json(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
