use std::collections::{BTreeSet, HashMap};

use super::corpus::{sort_labels, Corpus, Sentence};
use crate::error::{NerError, Result};
use crate::layers::UNK_ID;
use crate::math::SeededRng;
use crate::Mode;

pub const PAD_SYMBOL: &str = "<PAD>";
pub const UNK_SYMBOL: &str = "<UNK>";
/// Train-time probability of replacing a singleton token by UNK.
pub const SINGLETON_UNK_PROB: f64 = 0.5;

/// Token, character and label id maps. Ids 0 and 1 of the token and
/// character maps are PAD and UNK; labels have no UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_ids: HashMap<String, usize>,
    chars: Vec<String>,
    char_ids: HashMap<char, usize>,
    labels: Vec<String>,
    label_ids: HashMap<String, usize>,
    min_token_freq: usize,
    singletons: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub token_ids: Vec<usize>,
    pub char_ids: Vec<Vec<usize>>,
    pub label_ids: Option<Vec<usize>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its serialized parts. `tokens` and `chars`
    /// exclude the two reserved entries.
    pub fn from_parts(
        tokens: Vec<String>,
        chars: Vec<char>,
        labels: Vec<String>,
        min_token_freq: usize,
        singletons: &[String],
    ) -> Result<Self> {
        let mut token_list = vec![PAD_SYMBOL.to_string(), UNK_SYMBOL.to_string()];
        let mut token_ids = HashMap::new();
        for t in tokens {
            if token_ids.insert(t.clone(), token_list.len()).is_some() {
                return Err(NerError::contract(format!("duplicate token {t:?}")));
            }
            token_list.push(t);
        }
        let mut char_list = vec![PAD_SYMBOL.to_string(), UNK_SYMBOL.to_string()];
        let mut char_ids = HashMap::new();
        for c in chars {
            if char_ids.insert(c, char_list.len()).is_some() {
                return Err(NerError::contract(format!("duplicate character {c:?}")));
            }
            char_list.push(c.to_string());
        }
        if labels.first().map(String::as_str) != Some(super::corpus::OUTSIDE) {
            return Err(NerError::contract("label 0 must be \"O\""));
        }
        let mut label_ids = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if label_ids.insert(l.clone(), i).is_some() {
                return Err(NerError::contract(format!("duplicate label {l:?}")));
            }
        }
        let singletons = singletons
            .iter()
            .map(|s| {
                token_ids
                    .get(s)
                    .copied()
                    .ok_or_else(|| NerError::contract(format!("singleton {s:?} not in vocabulary")))
            })
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(Vocabulary {
            tokens: token_list,
            token_ids,
            chars: char_list,
            char_ids,
            labels,
            label_ids,
            min_token_freq,
            singletons,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn min_token_freq(&self) -> usize {
        self.min_token_freq
    }

    /// Token strings by id, reserved entries included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Character strings by id, reserved entries included.
    pub fn chars(&self) -> &[String] {
        &self.chars
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn singletons(&self) -> impl Iterator<Item = &str> {
        self.singletons.iter().map(|&i| self.tokens[i].as_str())
    }

    pub fn is_singleton(&self, id: usize) -> bool {
        self.singletons.contains(&id)
    }

    pub fn token_id(&self, surface: &str) -> usize {
        self.token_ids.get(surface).copied().unwrap_or(UNK_ID)
    }

    /// Id of `surface` without the UNK fallback; reserved rows are never returned.
    pub fn lookup_token(&self, surface: &str) -> Option<usize> {
        self.token_ids.get(surface).copied()
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_ids.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn lookup_char(&self, c: &str) -> Option<usize> {
        let mut it = c.chars();
        match (it.next(), it.next()) {
            (Some(ch), None) => self.char_ids.get(&ch).copied(),
            _ => None,
        }
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.label_ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    /// Train-time UNK replacement: each singleton id independently becomes
    /// UNK with probability `SINGLETON_UNK_PROB`. One draw per singleton, in order.
    pub fn replace_singletons(&self, token_ids: &mut [usize], rng: &mut SeededRng) {
        for id in token_ids.iter_mut() {
            if self.is_singleton(*id) && rng.bernoulli(SINGLETON_UNK_PROB) {
                *id = UNK_ID;
            }
        }
    }

    pub fn encode_sentence(
        &self,
        s: &Sentence,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<EncodedSentence> {
        let mut token_ids = Vec::with_capacity(s.len());
        let mut char_ids = Vec::with_capacity(s.len());
        for t in s.tokens() {
            token_ids.push(self.token_id(&t.surface));
            char_ids.push(t.surface.chars().map(|c| self.char_id(c)).collect());
        }
        if mode == Mode::Train {
            self.replace_singletons(&mut token_ids, rng);
        }
        let label_ids: Option<Vec<usize>> = s.tokens().iter().map(|t| self.label_id(&t.label)).collect();
        if mode == Mode::Train && label_ids.is_none() {
            let unknown = s
                .tokens()
                .iter()
                .find(|t| self.label_id(&t.label).is_none())
                .map(|t| t.label.clone())
                .unwrap_or_default();
            return Err(NerError::contract(format!("unknown label {unknown:?} at train time")));
        }
        Ok(EncodedSentence {
            token_ids,
            char_ids,
            label_ids,
        })
    }
}

/// Vocabulary over `train`. Tokens rarer than `min_token_freq` are left to
/// UNK; every observed character gets an id; labels come from the corpus
/// inventory in canonical order with `O` at id 0.
pub fn build_vocabulary(train: &Corpus, min_token_freq: usize) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(NerError::contract("cannot build a vocabulary from an empty corpus"));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    let mut chars: Vec<char> = Vec::new();
    let mut seen_chars = std::collections::HashSet::new();
    for s in train.sentences() {
        for t in s.tokens() {
            let f = freq.entry(t.surface.as_str()).or_insert(0);
            if *f == 0 {
                order.push(t.surface.as_str());
            }
            *f += 1;
            for c in t.surface.chars() {
                if seen_chars.insert(c) {
                    chars.push(c);
                }
            }
        }
    }
    let kept: Vec<String> = order
        .iter()
        .filter(|t| freq[*t] >= min_token_freq)
        .map(|t| t.to_string())
        .collect();
    let singletons: Vec<String> = kept.iter().filter(|t| freq[t.as_str()] == 1).cloned().collect();
    let mut labels: Vec<String> = train.inventory().to_vec();
    if !labels.iter().any(|l| l == super::corpus::OUTSIDE) {
        labels.push(super::corpus::OUTSIDE.to_string());
    }
    sort_labels(&mut labels);
    Vocabulary::from_parts(kept, chars, labels, min_token_freq, &singletons)
}
