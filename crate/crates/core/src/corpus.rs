//! Documents, word tokens, subword alignment and anomaly labels.
//!
//! Words are whitespace-delimited; punctuation stays attached to its word.
//! Labels are optional so the same types carry unlabeled inference corpora
//! and labeled evaluation corpora.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::atomic_write;

/// Binary anomaly flag. Serialized as the integers 0 and 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }

    pub fn as_bool(self) -> bool {
        self.is_anomalous()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Anomalous),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }
}

impl From<bool> for Label {
    fn from(anomalous: bool) -> Self {
        if anomalous {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordToken {
    pub text: String,
    pub label: Option<Label>,
}

impl WordToken {
    pub fn new(text: impl Into<String>) -> Self {
        WordToken {
            text: text.into(),
            label: None,
        }
    }

    pub fn labeled(text: impl Into<String>, label: Label) -> Self {
        WordToken {
            text: text.into(),
            label: Some(label),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub words: Vec<WordToken>,
    pub label: Option<Label>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, words: Vec<WordToken>, label: Option<Label>) -> Self {
        Document {
            doc_id: doc_id.into(),
            words,
            label,
        }
    }

    /// Splits `text` on whitespace into unlabeled words.
    pub fn from_text(doc_id: impl Into<String>, text: &str) -> Self {
        let words = text.split_whitespace().map(WordToken::new).collect();
        Document::new(doc_id, words, None)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// True when the document or any of its words is labeled anomalous.
    pub fn has_anomaly(&self) -> bool {
        self.label.is_some_and(Label::is_anomalous)
            || self
                .words
                .iter()
                .any(|w| w.label.is_some_and(Label::is_anomalous))
    }

    /// Word labels, if every word carries one.
    pub fn word_labels(&self) -> Option<Vec<Label>> {
        self.words.iter().map(|w| w.label).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Self {
        Corpus {
            name: name.into(),
            documents,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn n_words(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_corpus(self)
    }
}

/// Half-open range of subword rows owned by one word, local to its document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubwordSpan {
    pub word_index: usize,
    pub start: usize,
    pub end: usize,
}

impl SubwordSpan {
    pub fn new(word_index: usize, start: usize, end: usize) -> Self {
        SubwordSpan {
            word_index,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One span per word: `[i, i+1)`.
pub fn identity_spans(n_words: usize) -> Vec<SubwordSpan> {
    (0..n_words)
        .map(|i| SubwordSpan::new(i, i, i + 1))
        .collect()
}

/// Checks that `spans` partition `0..n_rows` contiguously, one span per word
/// in word order, each non-empty.
pub fn check_spans(spans: &[SubwordSpan], n_words: usize, n_rows: usize) -> Result<()> {
    if spans.len() != n_words {
        return Err(Error::schema(format!(
            "{} spans for {} words",
            spans.len(),
            n_words
        )));
    }
    let mut cursor = 0;
    for (i, span) in spans.iter().enumerate() {
        if span.word_index != i {
            return Err(Error::schema(format!(
                "span {i} has word_index {}",
                span.word_index
            )));
        }
        if span.is_empty() {
            return Err(Error::schema(format!(
                "span {i} [{}, {}) is empty",
                span.start, span.end
            )));
        }
        if span.start != cursor {
            return Err(Error::schema(format!(
                "span {i} starts at {} but previous span ended at {cursor}",
                span.start
            )));
        }
        cursor = span.end;
    }
    if cursor != n_rows {
        return Err(Error::schema(format!(
            "spans cover {cursor} rows, document has {n_rows}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateDocId {
        doc_id: String,
    },
    /// A word is labeled anomalous but the document is labeled normal.
    LabelInconsistency {
        doc_id: String,
    },
    EmptyWord {
        doc_id: String,
        word_index: usize,
    },
    WhitespaceInWord {
        doc_id: String,
        word_index: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateDocId { doc_id } => write!(f, "duplicate doc_id {doc_id:?}"),
            Violation::LabelInconsistency { doc_id } => write!(
                f,
                "document {doc_id:?} is labeled normal but contains an anomalous word"
            ),
            Violation::EmptyWord { doc_id, word_index } => {
                write!(f, "document {doc_id:?} word {word_index} is empty")
            }
            Violation::WhitespaceInWord { doc_id, word_index } => {
                write!(
                    f,
                    "document {doc_id:?} word {word_index} contains whitespace"
                )
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::schema(format!(
                "{} corpus violation(s), first: {v}",
                self.violations.len()
            ))),
        }
    }
}

/// Lists every invariant violation in `corpus`. Never fails.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for doc in &corpus.documents {
        if !seen.insert(doc.doc_id.as_str()) {
            violations.push(Violation::DuplicateDocId {
                doc_id: doc.doc_id.clone(),
            });
        }
        let word_anomaly = doc
            .words
            .iter()
            .any(|w| w.label.is_some_and(Label::is_anomalous));
        if word_anomaly && doc.label == Some(Label::Normal) {
            violations.push(Violation::LabelInconsistency {
                doc_id: doc.doc_id.clone(),
            });
        }
        for (i, w) in doc.words.iter().enumerate() {
            if w.text.is_empty() {
                violations.push(Violation::EmptyWord {
                    doc_id: doc.doc_id.clone(),
                    word_index: i,
                });
            } else if w.text.chars().any(char::is_whitespace) {
                violations.push(Violation::WhitespaceInWord {
                    doc_id: doc.doc_id.clone(),
                    word_index: i,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// JSONL line shape shared by corpus files and archive metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct DocRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_labels: Option<Vec<Label>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<[usize; 2]>>,
}

impl DocRecord {
    pub(crate) fn from_document(doc: &Document) -> Self {
        DocRecord {
            doc_id: doc.doc_id.clone(),
            words: Some(doc.words.iter().map(|w| w.text.clone()).collect()),
            text: None,
            label: doc.label,
            word_labels: doc.word_labels(),
            spans: None,
        }
    }

    pub(crate) fn into_document(self) -> Result<Document> {
        let texts: Vec<String> = match (self.words, self.text) {
            (Some(words), _) => words,
            (None, Some(text)) => text.split_whitespace().map(str::to_owned).collect(),
            (None, None) => {
                return Err(Error::schema(format!(
                    "document {:?} has neither `words` nor `text`",
                    self.doc_id
                )))
            }
        };
        let words = match self.word_labels {
            Some(labels) => {
                if labels.len() != texts.len() {
                    return Err(Error::schema(format!(
                        "document {:?}: {} word labels for {} words",
                        self.doc_id,
                        labels.len(),
                        texts.len()
                    )));
                }
                texts
                    .into_iter()
                    .zip(labels)
                    .map(|(t, l)| WordToken::labeled(t, l))
                    .collect()
            }
            None => texts.into_iter().map(WordToken::new).collect(),
        };
        Ok(Document::new(self.doc_id, words, self.label))
    }
}

/// Reads a corpus from JSONL, one document per line. Each line carries
/// `doc_id`, either `words` or whitespace-split `text`, and optional `label`
/// and `word_labels`.
pub fn read_corpus_jsonl(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path)?;
    let mut documents = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocRecord = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        documents.push(record.into_document()?);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let corpus = Corpus::new(name, documents);
    validate_corpus(&corpus).into_result()?;
    Ok(corpus)
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        serde_json::to_writer(&mut out, &DocRecord::from_document(doc))
            .expect("serializing plain records cannot fail");
        out.push(b'\n');
    }
    out
}

pub fn write_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let bytes = corpus_to_jsonl(corpus);
    atomic_write(path, |w| w.write_all(&bytes))
}
