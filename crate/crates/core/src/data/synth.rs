//! Template-based synthetic de-identification corpora.
//!
//! Sentences are drawn from carrier templates whose `{TYPE}` slots are filled
//! from per-type lexicons, so BIO tags are correct by construction. The
//! target corpus shares the PHI schema with the source; `lexical_shift` is
//! the fraction of lexicon entries and templates swapped for entries from a
//! disjoint replacement pool.

use std::collections::BTreeMap;
use std::path::Path;

use super::corpus::{sort_labels, Corpus, Document, Sentence, TokenAnn, OUTSIDE};
use super::split::SplitCorpus;
use crate::config::{parse_key_values, ConfigEntry};
use crate::error::{NerError, Result};
use crate::math::SeededRng;

/// Slot filled with a random number labeled `O`.
pub const NUMBER_SLOT: &str = "NUM";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_notes: usize,
    pub target_notes: usize,
    pub sentences_per_note: (usize, usize),
    pub phi_types: Vec<String>,
    pub lexicons: BTreeMap<String, Vec<String>>,
    pub shift_lexicons: BTreeMap<String, Vec<String>>,
    pub templates: Vec<String>,
    pub shift_templates: Vec<String>,
    pub lexical_shift: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpora {
    pub source: SplitCorpus,
    pub target: SplitCorpus,
}

pub const DEFAULT_PHI_TYPES: [&str; 7] = ["NAME", "DATE", "PHONE", "ID", "ADDRESS", "HOSPITAL", "AGE"];

const FIRST_NAMES: &[&str] = &[
    "John", "Mary", "Robert", "Linda", "James", "Susan", "Michael", "Karen", "William", "Nancy",
    "David", "Lisa", "Richard", "Betty", "Joseph", "Helen", "Thomas", "Sandra", "Charles", "Donna",
    "Daniel", "Carol", "Matthew", "Ruth", "Anthony", "Sharon", "Mark", "Laura", "Paul", "Sarah",
];
const LAST_NAMES: &[&str] = &[
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Miller", "Davis", "Wilson", "Anderson", "Taylor",
    "Thomas", "Moore", "Martin", "Jackson", "Thompson", "White", "Harris", "Clark", "Lewis", "Walker",
    "Hall", "Allen", "Young", "King", "Wright", "Scott", "Green", "Baker", "Adams", "Nelson",
];
const SHIFT_FIRST_NAMES: &[&str] = &[
    "Aurelio", "Bettina", "Casimir", "Delphine", "Evander", "Fenella", "Gaspard", "Honora", "Ignatius",
    "Jolanda", "Kasimir", "Leocadia", "Marcellus", "Norberta", "Octavian", "Philippa", "Quirino",
    "Rosalind", "Severin", "Theodora",
];
const SHIFT_LAST_NAMES: &[&str] = &[
    "Abernathy", "Blackwood", "Castellanos", "Dunmore", "Eriksen", "Fairweather", "Galloway", "Hargrove",
    "Iverson", "Jablonski", "Kowalczyk", "Lindqvist", "Montgomery", "Nakamura", "Okonkwo", "Pemberton",
    "Quennell", "Rasmussen", "Szymanski", "Thorvaldsen",
];
const MONTHS: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];
const STREETS: &[&str] = &[
    "Elm", "Oak", "Maple", "Pine", "Cedar", "Main", "Washington", "Lake", "Hill", "Park", "Church",
    "River", "Spring", "Walnut", "Highland",
];
const SHIFT_STREETS: &[&str] = &[
    "Juniper", "Sycamore", "Magnolia", "Beacon", "Harbor", "Quarry", "Orchard", "Meadowbrook",
    "Foxglove", "Tamarack",
];
const HOSPITAL_NAMES: &[&str] = &[
    "Mercy", "Riverside", "Lakeview", "Memorial", "Central", "Northside", "Saint Mary", "Good Samaritan",
    "Fairview", "Valley",
];
const SHIFT_HOSPITAL_NAMES: &[&str] = &[
    "Brookhaven", "Windermere", "Ashford", "Kingsbridge", "Thornbury", "Westmoor", "Greystone",
    "Redcliffe",
];

const TEMPLATES: &[&str] = &[
    "Patient {NAME} was admitted to {HOSPITAL} on {DATE} .",
    "{NAME} is a {AGE} year old man with a history of hypertension .",
    "{NAME} is a {AGE} year old woman with diabetes .",
    "Seen by Dr. {NAME} in clinic today .",
    "Please follow up with Dr. {NAME} at {PHONE} .",
    "MRN : {ID}",
    "He lives at {ADDRESS} with his wife .",
    "She lives at {ADDRESS} alone .",
    "Discharged home on {DATE} in stable condition .",
    "Potassium {NUM} , creatinine {NUM} , glucose {NUM} .",
    "No acute distress , lungs clear to auscultation .",
    "Blood pressure {NUM} over {NUM} , heart rate {NUM} .",
    "Transferred from {HOSPITAL} for further management .",
    "Call {PHONE} with any questions .",
    "Age {AGE} , admitted {DATE} .",
    "Contact : {NAME} , {PHONE}",
    "Medical record number {ID} .",
    "Started on aspirin {NUM} mg daily .",
    "Last seen at {HOSPITAL} on {DATE} by Dr. {NAME} .",
    "Wife {NAME} can be reached at {PHONE} .",
    "Follow up in {NUM} weeks .",
    "Chest x-ray on {DATE} showed no infiltrate .",
    "The patient is {AGE} years old .",
    "Unit number {ID} , room {NUM} .",
    "Mother {NAME} accompanied the patient .",
];

const SHIFT_TEMPLATES: &[&str] = &[
    "Pt {NAME} presented to the ED at {HOSPITAL} {DATE} .",
    "Phone {PHONE}",
    "Address : {ADDRESS}",
    "{AGE} yo F with chest pain since {DATE} .",
    "Attending : {NAME}",
    "Acct # {ID}",
    "Labs notable for sodium {NUM} and WBC {NUM} .",
    "Referred by {NAME} of {HOSPITAL} .",
    "Home : {ADDRESS} ; tel {PHONE} .",
    "DOB {DATE} , age {AGE} .",
    "Denies fever or chills .",
    "Pt will return on {DATE} for suture removal .",
    "Daughter {NAME} is the health care proxy .",
    "Encounter ID {ID} .",
    "Weight {NUM} kg , temperature {NUM} .",
];

fn default_lexicon(kind: &str, shifted: bool) -> Vec<String> {
    let mut out = Vec::new();
    match kind {
        "NAME" => {
            let (firsts, lasts) = if shifted {
                (SHIFT_FIRST_NAMES, SHIFT_LAST_NAMES)
            } else {
                (FIRST_NAMES, LAST_NAMES)
            };
            for (i, f) in firsts.iter().enumerate() {
                for (j, l) in lasts.iter().enumerate() {
                    if (i + 2 * j) % 3 == 0 {
                        out.push(format!("{f} {l}"));
                    }
                }
            }
            out.extend(lasts.iter().map(|l| l.to_string()));
        }
        "DATE" => {
            for i in 0..60usize {
                let month = 1 + (i * 7) % 12;
                let day = 1 + (i * 11) % 28;
                let year = 2080 + (i * 3) % 20;
                out.push(match (shifted, i % 3) {
                    (false, 0) => format!("{month}/{day}/{year}"),
                    (false, 1) => format!("{} {day}", MONTHS[month - 1]),
                    (false, _) => format!("{month}/{day}"),
                    (true, 0) => format!("{year}-{month:02}-{day:02}"),
                    (true, 1) => format!("{day} {} {year}", &MONTHS[month - 1][..3]),
                    (true, _) => format!("{day}.{month}.{year}"),
                });
            }
        }
        "PHONE" => {
            for i in 0..40usize {
                let line = 1000 + (i * 379) % 9000;
                out.push(if shifted {
                    format!("{}.555.{line}", 200 + (i * 37) % 700)
                } else {
                    format!("({}) 555-{line}", 600 + (i * 13) % 100)
                });
            }
        }
        "ID" => {
            for i in 0..50usize {
                let n = 1_000_000 + (i * 7_919_333) % 9_000_000;
                out.push(if shifted {
                    format!("AB-{}", n % 100_000)
                } else {
                    n.to_string()
                });
            }
        }
        "ADDRESS" => {
            let streets = if shifted { SHIFT_STREETS } else { STREETS };
            let suffixes: &[&str] = if shifted { &["Road", "Lane"] } else { &["Street", "Avenue"] };
            for (i, s) in streets.iter().enumerate() {
                for (j, suffix) in suffixes.iter().enumerate() {
                    out.push(format!("{} {s} {suffix}", 10 + (i * 17 + j * 31) % 900));
                }
            }
        }
        "HOSPITAL" => {
            let names = if shifted { SHIFT_HOSPITAL_NAMES } else { HOSPITAL_NAMES };
            for n in names {
                out.push(format!("{n} General Hospital"));
                out.push(format!("{n} Medical Center"));
            }
        }
        "AGE" => {
            let range = if shifted { 85..100 } else { 20..80 };
            out.extend(range.map(|a| a.to_string()));
        }
        _ => {}
    }
    out
}

impl Default for SynthSpec {
    fn default() -> Self {
        let phi_types: Vec<String> = DEFAULT_PHI_TYPES.iter().map(|s| s.to_string()).collect();
        let lexicons = phi_types.iter().map(|t| (t.clone(), default_lexicon(t, false))).collect();
        let shift_lexicons = phi_types.iter().map(|t| (t.clone(), default_lexicon(t, true))).collect();
        SynthSpec {
            num_notes: 100,
            target_notes: 100,
            sentences_per_note: (2, 5),
            phi_types,
            lexicons,
            shift_lexicons,
            templates: TEMPLATES.iter().map(|s| s.to_string()).collect(),
            shift_templates: SHIFT_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            lexical_shift: 0.0,
            seed: 1,
        }
    }
}

fn split_entries(value: &str) -> Vec<String> {
    value
        .split('|')
        .map(|e| e.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|e| !e.is_empty())
        .collect()
}

impl SynthSpec {
    /// Parses a `key = value` spec on top of the defaults. Recognized keys:
    /// `seed`, `num_notes`, `target_notes`, `sentences_min`, `sentences_max`,
    /// `lexical_shift`, `phi_types` (comma list), `lexicon.TYPE` and
    /// `shift_lexicon.TYPE` (`|`-separated entries), and repeatable
    /// `template` / `shift_template` lines (the first one replaces the
    /// built-in list).
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        let mut templates: Option<Vec<String>> = None;
        let mut shift_templates: Option<Vec<String>> = None;
        for e in parse_key_values(text)? {
            spec.apply(&e, &mut templates, &mut shift_templates)?;
        }
        if let Some(t) = templates {
            spec.templates = t;
        }
        if let Some(t) = shift_templates {
            spec.shift_templates = t;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NerError::io(path, e))?;
        Self::parse(&text)
    }

    fn apply(
        &mut self,
        e: &ConfigEntry,
        templates: &mut Option<Vec<String>>,
        shift_templates: &mut Option<Vec<String>>,
    ) -> Result<()> {
        match e.key.as_str() {
            "seed" => self.seed = e.parse()?,
            "num_notes" => self.num_notes = e.parse()?,
            "target_notes" => self.target_notes = e.parse()?,
            "sentences_min" => self.sentences_per_note.0 = e.parse()?,
            "sentences_max" => self.sentences_per_note.1 = e.parse()?,
            "lexical_shift" => self.lexical_shift = e.parse()?,
            "phi_types" => self.phi_types = e.parse_list()?,
            "template" => templates.get_or_insert_with(Vec::new).push(e.value.clone()),
            "shift_template" => shift_templates.get_or_insert_with(Vec::new).push(e.value.clone()),
            key => {
                if let Some(kind) = key.strip_prefix("lexicon.") {
                    self.lexicons.insert(kind.to_string(), split_entries(&e.value));
                } else if let Some(kind) = key.strip_prefix("shift_lexicon.") {
                    self.shift_lexicons.insert(kind.to_string(), split_entries(&e.value));
                } else {
                    return Err(e.unknown());
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lexical_shift) {
            return Err(NerError::contract(format!(
                "lexical_shift {} outside [0, 1]",
                self.lexical_shift
            )));
        }
        let (lo, hi) = self.sentences_per_note;
        if lo == 0 || hi < lo {
            return Err(NerError::contract(format!("bad sentences_per_note range {lo}..{hi}")));
        }
        if self.templates.is_empty() {
            return Err(NerError::contract("no templates"));
        }
        for kind in &self.phi_types {
            if !super::corpus::is_valid_label(&format!("B-{kind}")) {
                return Err(NerError::contract(format!("invalid PHI type {kind:?}")));
            }
            if self.lexicons.get(kind).map_or(true, Vec::is_empty) {
                return Err(NerError::contract(format!("empty lexicon for {kind}")));
            }
            if self.lexical_shift > 0.0 && self.shift_lexicons.get(kind).map_or(true, Vec::is_empty) {
                return Err(NerError::contract(format!("empty replacement lexicon for {kind}")));
            }
        }
        if self.lexical_shift > 0.0 && self.shift_templates.is_empty() {
            return Err(NerError::contract("no replacement templates"));
        }
        let shift_templates: &[String] = if self.lexical_shift > 0.0 { &self.shift_templates } else { &[] };
        for t in self.templates.iter().chain(shift_templates) {
            for slot in slots(t) {
                if slot != NUMBER_SLOT && !self.phi_types.iter().any(|k| k == slot) {
                    return Err(NerError::contract(format!("template slot {{{slot}}} has no lexicon")));
                }
            }
        }
        Ok(())
    }

    /// Full label schema: `O` plus B/I for every PHI type, canonical order.
    pub fn label_inventory(&self) -> Vec<String> {
        let mut labels = vec![OUTSIDE.to_string()];
        for k in &self.phi_types {
            labels.push(format!("B-{k}"));
            labels.push(format!("I-{k}"));
        }
        sort_labels(&mut labels);
        labels
    }
}

fn slots(template: &str) -> impl Iterator<Item = &str> {
    template
        .split_whitespace()
        .filter_map(|w| w.strip_prefix('{').and_then(|w| w.strip_suffix('}')))
}

/// Lexicons and templates actually sampled from for one corpus.
struct Distribution {
    lexicons: BTreeMap<String, Vec<String>>,
    templates: Vec<String>,
}

/// Replaces `round(shift · n)` seeded-chosen items of `base` with distinct
/// items from `pool`, cycling the pool only if it is smaller than needed.
fn resample(base: &[String], pool: &[String], shift: f64, rng: &mut SeededRng) -> Vec<String> {
    let n_replace = (shift * base.len() as f64).round() as usize;
    if n_replace == 0 || pool.is_empty() {
        return base.to_vec();
    }
    let mut positions: Vec<usize> = (0..base.len()).collect();
    rng.shuffle(&mut positions);
    let mut fresh: Vec<&String> = pool.iter().collect();
    rng.shuffle(&mut fresh);
    let mut out = base.to_vec();
    for (k, &pos) in positions[..n_replace].iter().enumerate() {
        out[pos] = fresh[k % fresh.len()].clone();
    }
    out
}

fn target_distribution(spec: &SynthSpec, rng: &SeededRng) -> Distribution {
    let mut lexicons = BTreeMap::new();
    for kind in &spec.phi_types {
        let base = &spec.lexicons[kind];
        let pool = spec.shift_lexicons.get(kind).map(Vec::as_slice).unwrap_or(&[]);
        let mut r = rng.fork(&format!("shift/lexicon/{kind}"));
        lexicons.insert(kind.clone(), resample(base, pool, spec.lexical_shift, &mut r));
    }
    let mut r = rng.fork("shift/templates");
    let templates = resample(&spec.templates, &spec.shift_templates, spec.lexical_shift, &mut r);
    Distribution { lexicons, templates }
}

fn number(rng: &mut SeededRng) -> String {
    match rng.below(3) {
        0 => rng.below(200).to_string(),
        1 => format!("{}.{}", rng.below(10), rng.below(10)),
        _ => (10 + rng.below(140)).to_string(),
    }
}

fn sentence(dist: &Distribution, rng: &mut SeededRng) -> Result<Sentence> {
    let template = &dist.templates[rng.below(dist.templates.len())];
    let mut tokens = Vec::new();
    for word in template.split_whitespace() {
        match word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
            Some(NUMBER_SLOT) => tokens.push(TokenAnn::new(number(rng), OUTSIDE)?),
            Some(kind) => {
                let lex = &dist.lexicons[kind];
                let entry = &lex[rng.below(lex.len())];
                for (i, piece) in entry.split_whitespace().enumerate() {
                    let prefix = if i == 0 { "B" } else { "I" };
                    tokens.push(TokenAnn::new(piece, format!("{prefix}-{kind}"))?);
                }
            }
            None => tokens.push(TokenAnn::new(word, OUTSIDE)?),
        }
    }
    Sentence::new(tokens)
}

fn generate_corpus(
    spec: &SynthSpec,
    dist: &Distribution,
    prefix: &str,
    notes: usize,
    rng: &SeededRng,
) -> Result<Corpus> {
    let (lo, hi) = spec.sentences_per_note;
    let mut docs = Vec::with_capacity(notes);
    for i in 0..notes {
        let mut r = rng.fork(&format!("{prefix}/note/{i}"));
        let count = lo + r.below(hi - lo + 1);
        let sentences = (0..count).map(|_| sentence(dist, &mut r)).collect::<Result<Vec<_>>>()?;
        docs.push(Document {
            id: format!("{prefix}-{:05}", i + 1),
            sentences,
        });
    }
    Corpus::with_inventory(docs, spec.label_inventory())
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticCorpora> {
    spec.validate()?;
    let rng = SeededRng::new(spec.seed);
    let source_dist = Distribution {
        lexicons: spec
            .phi_types
            .iter()
            .map(|k| (k.clone(), spec.lexicons[k].clone()))
            .collect(),
        templates: spec.templates.clone(),
    };
    let target_dist = target_distribution(spec, &rng);
    let source = generate_corpus(spec, &source_dist, "source", spec.num_notes, &rng)?;
    let target = generate_corpus(spec, &target_dist, "target", spec.target_notes, &rng)?;
    Ok(SyntheticCorpora {
        source: SplitCorpus::from_corpus(&source)?,
        target: SplitCorpus::from_corpus(&target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::extract_spans;
    use std::collections::HashSet;

    fn fillers(c: &Corpus) -> HashSet<String> {
        let mut out = HashSet::new();
        for s in c.sentences() {
            let labels = s.labels();
            let surf: Vec<&str> = s.surfaces().collect();
            for span in extract_spans(&labels) {
                out.insert(surf[span.start..span.end].join(" "));
            }
        }
        out
    }

    fn token_set(c: &Corpus) -> HashSet<String> {
        c.sentences().flat_map(|s| s.surfaces().map(str::to_string)).collect()
    }

    #[test]
    fn default_lexicons_nonempty_and_disjoint() {
        let spec = SynthSpec::default();
        spec.validate().unwrap();
        for k in &spec.phi_types {
            let a: HashSet<_> = spec.lexicons[k].iter().collect();
            let b: HashSet<_> = spec.shift_lexicons[k].iter().collect();
            assert!(!a.is_empty() && !b.is_empty());
            assert!(a.is_disjoint(&b), "{k}");
        }
    }

    #[test]
    fn note_counts_and_splits() {
        let c = generate_synthetic(&SynthSpec::default()).unwrap();
        let n = |x: &Corpus| x.documents().len();
        assert_eq!((n(&c.source.train), n(&c.source.dev), n(&c.source.test)), (60, 20, 20));
        assert_eq!(n(&c.target.whole().unwrap()), 100);
        let ids: HashSet<_> = c.source.train.documents().iter().map(|d| d.id.clone()).collect();
        assert!(c.source.test.documents().iter().all(|d| !ids.contains(&d.id)));
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec {
            lexical_shift: 0.4,
            ..SynthSpec::default()
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn no_shift_means_same_distribution() {
        let spec = SynthSpec {
            num_notes: 500,
            target_notes: 500,
            ..SynthSpec::default()
        };
        let c = generate_synthetic(&spec).unwrap();
        let a = token_set(&c.source.whole().unwrap());
        let b = token_set(&c.target.whole().unwrap());
        let jaccard = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
        assert!(jaccard > 0.9, "jaccard {jaccard}");
    }

    #[test]
    fn full_shift_gives_disjoint_fillers() {
        let spec = SynthSpec {
            lexical_shift: 1.0,
            ..SynthSpec::default()
        };
        let c = generate_synthetic(&spec).unwrap();
        let a = fillers(&c.source.whole().unwrap());
        let b = fillers(&c.target.whole().unwrap());
        assert!(!a.is_empty() && !b.is_empty());
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn parse_overrides() {
        let spec = SynthSpec::parse(
            "seed = 9\nnum_notes = 10\nphi_types = NAME\nlexicon.NAME = Ann Lee | Bo\ntemplate = Hi {NAME} .\n",
        )
        .unwrap();
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.lexicons["NAME"], vec!["Ann Lee", "Bo"]);
        assert_eq!(spec.templates, vec!["Hi {NAME} ."]);
        let c = generate_synthetic(&spec).unwrap();
        assert_eq!(c.source.whole().unwrap().documents().len(), 10);
        assert!(SynthSpec::parse("bogus = 1").is_err());
        assert!(SynthSpec::parse("lexicon.NAME = \n").is_err());
        assert!(SynthSpec::parse("lexical_shift = 1.5").is_err());
    }
}
