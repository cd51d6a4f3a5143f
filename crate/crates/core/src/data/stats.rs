use std::collections::HashSet;

use super::corpus::Corpus;
use crate::error::{NerError, Result};
use crate::eval::extract_spans;

/// Dataset overview counts. A PHI instance is a maximal B/I span (orphan
/// `I-` tags open a new span), a PHI token any non-`O` token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusStats {
    pub vocabulary_size: usize,
    pub num_notes: usize,
    pub num_tokens: usize,
    pub num_phi_instances: usize,
    pub num_phi_tokens: usize,
}

pub fn corpus_stats(c: &Corpus) -> CorpusStats {
    let mut surfaces = HashSet::new();
    let mut stats = CorpusStats {
        vocabulary_size: 0,
        num_notes: c.documents().len(),
        num_tokens: 0,
        num_phi_instances: 0,
        num_phi_tokens: 0,
    };
    for s in c.sentences() {
        let labels = s.labels();
        stats.num_tokens += s.len();
        stats.num_phi_tokens += labels.iter().filter(|l| *l != "O").count();
        stats.num_phi_instances += extract_spans(&labels).len();
        surfaces.extend(s.surfaces());
    }
    stats.vocabulary_size = surfaces.len();
    stats
}

impl CorpusStats {
    pub fn to_key_values(&self) -> String {
        format!(
            "vocabulary_size={}\nnum_notes={}\nnum_tokens={}\nnum_phi_instances={}\nnum_phi_tokens={}\n",
            self.vocabulary_size, self.num_notes, self.num_tokens, self.num_phi_instances, self.num_phi_tokens
        )
    }

    pub fn parse_key_values(text: &str) -> Result<Self> {
        let mut vals = [None; 5];
        const KEYS: [&str; 5] = [
            "vocabulary_size",
            "num_notes",
            "num_tokens",
            "num_phi_instances",
            "num_phi_tokens",
        ];
        for e in crate::config::parse_key_values(text)? {
            let slot = KEYS
                .iter()
                .position(|k| *k == e.key)
                .ok_or_else(|| e.unknown())?;
            vals[slot] = Some(e.parse::<usize>()?);
        }
        let get = |i: usize| vals[i].ok_or_else(|| NerError::Config(format!("missing `{}`", KEYS[i])));
        Ok(CorpusStats {
            vocabulary_size: get(0)?,
            num_notes: get(1)?,
            num_tokens: get(2)?,
            num_phi_instances: get(3)?,
            num_phi_tokens: get(4)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_column;

    #[test]
    fn examples() {
        let s = corpus_stats(&parse_column("John B-NAME\nsmiled O\n").unwrap());
        assert_eq!((s.num_tokens, s.num_phi_instances, s.num_phi_tokens), (2, 1, 1));
        let s = corpus_stats(&parse_column("John B-NAME\nSmith I-NAME\n").unwrap());
        assert_eq!((s.num_phi_instances, s.num_phi_tokens), (1, 2));
        let s = corpus_stats(&parse_column("x I-DATE\ny I-DATE\nz B-DATE\n").unwrap());
        assert_eq!((s.num_phi_instances, s.num_phi_tokens), (2, 3));
        assert_eq!(s.vocabulary_size, 3);
    }

    #[test]
    fn key_value_round_trip() {
        let s = corpus_stats(&parse_column("-DOCSTART- O\n\nJohn B-NAME\nSmith I-NAME\nJohn O\n").unwrap());
        assert_eq!(CorpusStats::parse_key_values(&s.to_key_values()).unwrap(), s);
        assert_eq!(s.vocabulary_size, 2);
        assert_eq!(s.num_notes, 1);
    }
}
