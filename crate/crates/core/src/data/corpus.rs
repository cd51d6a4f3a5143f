use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use crate::error::{NerError, Result};

pub const OUTSIDE: &str = "O";

/// `O`, or `B-TYPE` / `I-TYPE` with TYPE in `[A-Z_]+`.
pub fn is_valid_label(label: &str) -> bool {
    if label == OUTSIDE {
        return true;
    }
    match label.split_once('-') {
        Some(("B" | "I", ty)) => !ty.is_empty() && ty.bytes().all(|b| b.is_ascii_uppercase() || b == b'_'),
        _ => false,
    }
}

/// Splits a BIO label into (prefix, type); `None` for `O`.
pub fn split_label(label: &str) -> Option<(char, &str)> {
    if label == OUTSIDE {
        return None;
    }
    let (prefix, ty) = label.split_once('-')?;
    Some((prefix.chars().next()?, ty))
}

/// Canonical label order: `O` first, then by entity type, `B-` before `I-`.
pub fn label_order(a: &str, b: &str) -> Ordering {
    match (split_label(a), split_label(b)) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some((pa, ta)), Some((pb, tb))) => ta.cmp(tb).then(pa.cmp(&pb)),
    }
}

pub fn sort_labels(labels: &mut [String]) {
    labels.sort_by(|a, b| label_order(a, b));
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenAnn {
    pub surface: String,
    pub label: String,
}

impl TokenAnn {
    pub fn new(surface: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        let surface = surface.into();
        let label = label.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(NerError::contract(format!("invalid token surface {surface:?}")));
        }
        if !is_valid_label(&label) {
            return Err(NerError::contract(format!("invalid BIO label {label:?}")));
        }
        Ok(TokenAnn { surface, label })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<TokenAnn>,
}

impl Sentence {
    pub fn new(tokens: Vec<TokenAnn>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(NerError::contract("empty sentence"));
        }
        Ok(Sentence { tokens })
    }

    /// Convenience constructor from `(surface, label)` pairs.
    pub fn from_pairs<S: AsRef<str>, L: AsRef<str>>(pairs: &[(S, L)]) -> Result<Self> {
        let tokens = pairs
            .iter()
            .map(|(s, l)| TokenAnn::new(s.as_ref(), l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Sentence::new(tokens)
    }

    pub fn tokens(&self) -> &[TokenAnn] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    pub fn labels(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.label.clone()).collect()
    }

    /// Same surfaces with `labels` substituted.
    pub fn with_labels(&self, labels: &[String]) -> Result<Sentence> {
        if labels.len() != self.tokens.len() {
            return Err(NerError::contract("label count does not match sentence length"));
        }
        let tokens = self
            .tokens
            .iter()
            .zip(labels)
            .map(|(t, l)| TokenAnn::new(t.surface.clone(), l.clone()))
            .collect::<Result<Vec<_>>>()?;
        Sentence::new(tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

/// Documents plus the label inventory they are annotated with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    inventory: Vec<String>,
}

impl Corpus {
    /// Builds a corpus whose inventory is exactly the labels observed.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let observed: BTreeSet<String> = documents
            .iter()
            .flat_map(|d| &d.sentences)
            .flat_map(|s| s.tokens())
            .map(|t| t.label.clone())
            .collect();
        Self::with_inventory(documents, observed.into_iter().collect())
    }

    /// Builds a corpus over a declared inventory, which may contain labels
    /// that no sentence uses.
    pub fn with_inventory(documents: Vec<Document>, inventory: Vec<String>) -> Result<Self> {
        let mut inventory: Vec<String> = inventory
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(bad) = inventory.iter().find(|l| !is_valid_label(l)) {
            return Err(NerError::contract(format!("invalid label {bad:?} in inventory")));
        }
        sort_labels(&mut inventory);
        let known: HashSet<&str> = inventory.iter().map(String::as_str).collect();
        for t in documents.iter().flat_map(|d| &d.sentences).flat_map(|s| s.tokens()) {
            if !known.contains(t.label.as_str()) {
                return Err(NerError::contract(format!(
                    "label {:?} missing from the inventory",
                    t.label
                )));
            }
        }
        let mut ids = HashSet::new();
        if let Some(dup) = documents.iter().find(|d| !ids.insert(d.id.as_str())) {
            return Err(NerError::contract(format!("duplicate note id {:?}", dup.id)));
        }
        Ok(Corpus {
            documents,
            inventory,
        })
    }

    pub fn empty() -> Self {
        Corpus {
            documents: Vec::new(),
            inventory: Vec::new(),
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    /// Label inventory in canonical order.
    pub fn inventory(&self) -> &[String] {
        &self.inventory
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| &d.sentences)
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences().map(Sentence::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Per-sentence label sequences, in corpus order.
    pub fn label_sequences(&self) -> Vec<Vec<String>> {
        self.sentences().map(Sentence::labels).collect()
    }

    /// Keeps only the documents at `indices` (in the order given).
    pub fn select(&self, indices: &[usize]) -> Result<Corpus> {
        let docs = indices
            .iter()
            .map(|&i| {
                self.documents
                    .get(i)
                    .cloned()
                    .ok_or_else(|| NerError::contract(format!("document index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::with_inventory(docs, self.inventory.clone())
    }

    /// Concatenation with a merged inventory.
    pub fn concat(parts: &[&Corpus]) -> Result<Corpus> {
        let docs = parts.iter().flat_map(|c| c.documents.iter().cloned()).collect();
        let inv = parts.iter().flat_map(|c| c.inventory.iter().cloned()).collect();
        Corpus::with_inventory(docs, inv)
    }

    /// Same documents, inventory widened by `extra`.
    pub fn widen_inventory(&self, extra: &[String]) -> Result<Corpus> {
        let inv = self.inventory.iter().chain(extra).cloned().collect();
        Corpus::with_inventory(self.documents.clone(), inv)
    }

    /// Replaces every sentence's labels, preserving surfaces and structure.
    pub fn relabel(&self, labels: &[Vec<String>]) -> Result<Corpus> {
        if labels.len() != self.num_sentences() {
            return Err(NerError::contract("relabel: sentence count mismatch"));
        }
        let mut it = labels.iter();
        let mut docs = Vec::with_capacity(self.documents.len());
        for d in &self.documents {
            let sentences = d
                .sentences
                .iter()
                .map(|s| s.with_labels(it.next().expect("counted above")))
                .collect::<Result<Vec<_>>>()?;
            docs.push(Document {
                id: d.id.clone(),
                sentences,
            });
        }
        let inv = self
            .inventory
            .iter()
            .cloned()
            .chain(labels.iter().flatten().cloned())
            .collect();
        Corpus::with_inventory(docs, inv)
    }
}
