//! Documents, tokenization and word-vector lookup.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Graph, Shape, ValueRef};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed json at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing field {field} at line {line}")]
    MissingField { field: &'static str, line: usize },
    #[error("empty text at line {line}")]
    EmptyText { line: usize },
    #[error("duplicate id {id:?} at lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("document {doc_id:?} reduces to empty token sequence")]
    EmptyTokens { doc_id: String },
    #[error("inconsistent dimension at line {line}: expected {expected}, got {actual}")]
    Dimension { line: usize, expected: usize, actual: usize },
    #[error("non-numeric field {field:?} at line {line}")]
    NonNumeric { line: usize, field: String },
    #[error("word without vector at line {line}")]
    MissingVector { line: usize },
    #[error("duplicate word at line {line}")]
    DuplicateWord { line: usize },
    #[error("non-finite vector entry at line {line}")]
    NonFiniteVector { line: usize },
    #[error("every token of document {doc_id:?} is out of vocabulary")]
    AllOutOfVocabulary { doc_id: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// One word instance. Repeated words stay separate instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub word: String,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub doc_id: String,
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    /// Tokens joined by single spaces.
    pub fn render(&self) -> String {
        self.tokens.iter().map(|t| t.word.as_str()).collect::<Vec<_>>().join(" ")
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Load a JSON-Lines corpus with `id`, `text` and optional `label` fields.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    parse_corpus(&read(path.as_ref())?)
}

pub fn parse_corpus(content: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| CorpusError::Malformed { line, message: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| CorpusError::Malformed { line, message: "expected a json object".into() })?;
        let field = |name: &'static str| -> Result<Option<String>, CorpusError> {
            match obj.get(name) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(other) => Err(CorpusError::Malformed { line, message: format!("field {name} must be a string, got {other}") }),
            }
        };
        let id = field("id")?.ok_or(CorpusError::MissingField { field: "id", line })?;
        let text = field("text")?.ok_or(CorpusError::MissingField { field: "text", line })?;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { line });
        }
        let label = field("label")?;
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(CorpusError::DuplicateId { id, first, second: line });
        }
        docs.push(Document { id, text, label });
    }
    Ok(docs)
}

/// Load a stopword list, one word per line.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>, CorpusError> {
    Ok(read(path.as_ref())?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Lowercase, split on non-alphanumeric runs, drop tokens shorter than two
/// characters and any stopwords, then number the survivors from zero.
pub fn tokenize(doc: &Document, stopwords: Option<&HashSet<String>>) -> Result<TokenSequence, CorpusError> {
    let lowered = doc.text.to_lowercase();
    let tokens: Vec<Token> = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 2)
        .filter(|w| stopwords.map_or(true, |s| !s.contains(*w)))
        .enumerate()
        .map(|(position, w)| Token { word: w.to_string(), position })
        .collect();
    if tokens.is_empty() {
        return Err(CorpusError::EmptyTokens { doc_id: doc.id.clone() });
    }
    Ok(TokenSequence { doc_id: doc.id.clone(), tokens })
}

/// Word vectors of a fixed dimension, keyed by lowercase word.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "word vectors need a positive dimension");
        Self { dim, words: Vec::new(), index: HashMap::new(), data: Vec::new() }
    }

    /// Add a word; returns false if it is already present.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> bool {
        assert_eq!(vector.len(), self.dim, "vector dimension mismatch");
        let word = word.to_lowercase();
        if self.index.contains_key(&word) {
            return false;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectorTable, CorpusError> {
    parse_word_vectors(&read(path.as_ref())?)
}

/// Parse `word v1 ... ve` lines; `e` comes from the first entry.
pub fn parse_word_vectors(content: &str) -> Result<WordVectorTable, CorpusError> {
    let mut table: Option<WordVectorTable> = None;
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        let mut fields = raw.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| CorpusError::NonNumeric { line, field: f.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(CorpusError::MissingVector { line });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::NonFiniteVector { line });
        }
        let table = table.get_or_insert_with(|| WordVectorTable::new(values.len()));
        if values.len() != table.dim() {
            return Err(CorpusError::Dimension { line, expected: table.dim(), actual: values.len() });
        }
        if !table.insert(word, &values) {
            return Err(CorpusError::DuplicateWord { line });
        }
    }
    // An empty file has no dimension to infer; treat it as a one-dimensional empty table.
    Ok(table.unwrap_or_else(|| WordVectorTable::new(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    #[default]
    Skip,
    ZeroVector,
}

/// A document's surviving tokens and their word vectors as graph leaves.
#[derive(Debug, Clone)]
pub struct ResolvedDoc {
    pub doc_id: String,
    /// Tokens backing each row of `leaves`; positions refer to the full sequence.
    pub tokens: Vec<Token>,
    /// matrix(d, e), one row per surviving token.
    pub leaves: ValueRef,
}

impl ResolvedDoc {
    /// Row index to original token position.
    pub fn alignment(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.position).collect()
    }
}

/// Look up each token and register the rows as differentiable leaves.
pub fn resolve(
    seq: &TokenSequence,
    table: &WordVectorTable,
    policy: OovPolicy,
    graph: &mut Graph,
) -> Result<ResolvedDoc, CorpusError> {
    let dim = table.dim();
    let mut tokens = Vec::with_capacity(seq.tokens.len());
    let mut values = Vec::with_capacity(seq.tokens.len() * dim);
    for tok in &seq.tokens {
        match (table.vector(&tok.word), policy) {
            (Some(v), _) => values.extend_from_slice(v),
            (None, OovPolicy::Skip) => continue,
            (None, OovPolicy::ZeroVector) => values.extend(std::iter::repeat(0.0).take(dim)),
        }
        tokens.push(tok.clone());
    }
    if tokens.is_empty() {
        return Err(CorpusError::AllOutOfVocabulary { doc_id: seq.doc_id.clone() });
    }
    let leaves = graph.leaf(values, Shape::Matrix(tokens.len(), dim))?;
    Ok(ResolvedDoc { doc_id: seq.doc_id.clone(), tokens, leaves })
}
