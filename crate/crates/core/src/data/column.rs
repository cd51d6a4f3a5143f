//! Column format: one `surface label` pair per line separated by a single
//! space, a blank line after each sentence, and `-DOCSTART- O` opening each
//! document. UTF-8.

use std::fs;
use std::path::Path;

use super::corpus::{is_valid_label, Corpus, Document, Sentence, TokenAnn};
use crate::error::{NerError, Result};

pub const DOCSTART: &str = "-DOCSTART- O";

fn doc_id(index: usize) -> String {
    format!("doc{:05}", index + 1)
}

pub fn parse_column(text: &str) -> Result<Corpus> {
    let mut docs: Vec<Document> = Vec::new();
    let mut current: Option<Vec<Sentence>> = None;
    let mut pending: Vec<TokenAnn> = Vec::new();

    fn flush(pending: &mut Vec<TokenAnn>, current: &mut Option<Vec<Sentence>>) {
        if !pending.is_empty() {
            let sentence = Sentence::new(std::mem::take(pending)).expect("nonempty");
            current.get_or_insert_with(Vec::new).push(sentence);
        }
    }

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            flush(&mut pending, &mut current);
            continue;
        }
        if line == DOCSTART {
            flush(&mut pending, &mut current);
            if let Some(sentences) = current.take() {
                docs.push(Document {
                    id: doc_id(docs.len()),
                    sentences,
                });
            }
            current = Some(Vec::new());
            continue;
        }
        let mut parts = line.split(' ');
        let (surface, label) = match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(l), None) if !s.is_empty() && !l.is_empty() => (s, l),
            _ => {
                return Err(NerError::Parse {
                    line: line_no,
                    message: format!("expected `surface label`, found {line:?}"),
                })
            }
        };
        if surface.chars().any(char::is_whitespace) {
            return Err(NerError::Parse {
                line: line_no,
                message: format!("token {surface:?} contains whitespace"),
            });
        }
        if !is_valid_label(label) {
            return Err(NerError::Parse {
                line: line_no,
                message: format!("invalid BIO label {label:?}"),
            });
        }
        pending.push(TokenAnn {
            surface: surface.to_string(),
            label: label.to_string(),
        });
    }
    flush(&mut pending, &mut current);
    if let Some(sentences) = current.take() {
        docs.push(Document {
            id: doc_id(docs.len()),
            sentences,
        });
    }
    Corpus::new(docs)
}

pub fn format_column(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in corpus.documents() {
        out.push_str(DOCSTART);
        out.push_str("\n\n");
        for s in &doc.sentences {
            for t in s.tokens() {
                out.push_str(&t.surface);
                out.push(' ');
                out.push_str(&t.label);
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_column_file(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NerError::io(path, e))?;
    parse_column(&text)
}

pub fn write_column_file(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_column(corpus)).map_err(|e| NerError::io(path, e))
}
