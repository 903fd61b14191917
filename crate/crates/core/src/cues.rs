//! Surface cues: lexical, character-level, magnitude and variation measures.
//!
//! Every cue value is stored as `ln(raw + 1)`. Because of this, a weighted
//! sum of log counts can express any ratio between counts (for instance
//! `ln((W+1)/(S+1)) = ln(W+1) - ln(S+1)`), so ratios never need to be
//! registered as cues of their own.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document};

pub const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.tsv");

#[derive(Debug, Error)]
pub enum CueError {
    #[error("count must be non-negative, got {0}")]
    NegativeCount(f64),
    #[error("document length must be at least one word")]
    EmptyDocument,
    #[error("cannot read registry {path}: {message}")]
    RegistryIo { path: String, message: String },
    #[error("registry line {line}: {message}")]
    RegistryParse { line: usize, message: String },
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("duplicate cue name {0}")]
    DuplicateCue(String),
    #[error("feature matrix: {0}")]
    Matrix(String),
}

/// `ln(count + 1)`.
pub fn log_transform(count: f64) -> Result<f64, CueError> {
    if count < 0.0 || count.is_nan() {
        return Err(CueError::NegativeCount(count));
    }
    Ok(count.ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueKind {
    Count,
    Variation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Magnitude {
    Words,
    Sentences,
    Characters,
    Types,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extractor {
    /// Occurrences of any of the listed characters in the raw text.
    Chars(Vec<char>),
    /// Non-overlapping occurrences of any listed literal in the raw text.
    Substrings(Vec<String>),
    /// Tokens equal (case-insensitively) to a listed word; a leading `*`
    /// turns the entry into a token-suffix match.
    Words(Vec<String>),
    /// Tokens equal to a listed word, case-sensitively.
    CasedWords(Vec<String>),
    /// Sentence-initial tokens equal (case-insensitively) to a listed word.
    SentenceInitial(Vec<String>),
    /// Alphabetic tokens ending in a listed suffix with at least two letters before it.
    Suffixes(Vec<String>),
    /// Tokens with an internal apostrophe ending in a listed clitic.
    Contractions(Vec<String>),
    Hyphenated,
    DigitTokens,
    /// Capitalized tokens that do not open a sentence.
    MidCapitalized,
    /// All-uppercase alphabetic tokens of length two or more.
    Acronyms,
    Magnitude(Magnitude),
    SentenceLengthSd,
    WordLengthSd,
}

impl Extractor {
    pub fn kind(&self) -> CueKind {
        match self {
            Extractor::SentenceLengthSd | Extractor::WordLengthSd => CueKind::Variation,
            _ => CueKind::Count,
        }
    }

    fn parse(name: &str, params: &str, line: usize) -> Result<Self, CueError> {
        let list = |lower: bool| -> Vec<String> {
            params
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    let s = s.replace('\u{2019}', "'");
                    if lower {
                        s.to_lowercase()
                    } else {
                        s
                    }
                })
                .collect()
        };
        let need_params = |v: Vec<String>| {
            if v.is_empty() {
                Err(CueError::RegistryParse {
                    line,
                    message: format!("extractor {name} needs parameters"),
                })
            } else {
                Ok(v)
            }
        };
        Ok(match name {
            "chars" => {
                let set: Vec<char> = params.chars().collect();
                if set.is_empty() {
                    return Err(CueError::RegistryParse {
                        line,
                        message: "extractor chars needs parameters".into(),
                    });
                }
                Extractor::Chars(set)
            }
            "substrings" => Extractor::Substrings(need_params(list(false))?),
            "words" => Extractor::Words(need_params(list(true))?),
            "cased_words" => Extractor::CasedWords(need_params(list(false))?),
            "sentence_initial" => Extractor::SentenceInitial(need_params(list(true))?),
            "suffixes" => Extractor::Suffixes(need_params(list(true))?),
            "contractions" => Extractor::Contractions(need_params(list(true))?),
            "hyphenated" => Extractor::Hyphenated,
            "digit_tokens" => Extractor::DigitTokens,
            "mid_capitalized" => Extractor::MidCapitalized,
            "acronyms" => Extractor::Acronyms,
            "magnitude" => Extractor::Magnitude(match params.trim() {
                "W" => Magnitude::Words,
                "S" => Magnitude::Sentences,
                "C" => Magnitude::Characters,
                "T" => Magnitude::Types,
                other => {
                    return Err(CueError::RegistryParse {
                        line,
                        message: format!("unknown magnitude {other:?}, expected W, S, C or T"),
                    })
                }
            }),
            "sentence_length_sd" => Extractor::SentenceLengthSd,
            "word_length_sd" => Extractor::WordLengthSd,
            other => {
                return Err(CueError::RegistryParse {
                    line,
                    message: format!("unknown extractor {other:?}"),
                })
            }
        })
    }

    /// Extractor name and parameter field as written in a registry file.
    pub fn to_fields(&self) -> (&'static str, String) {
        match self {
            Extractor::Chars(set) => ("chars", set.iter().collect()),
            Extractor::Substrings(v) => ("substrings", v.join(",")),
            Extractor::Words(v) => ("words", v.join(",")),
            Extractor::CasedWords(v) => ("cased_words", v.join(",")),
            Extractor::SentenceInitial(v) => ("sentence_initial", v.join(",")),
            Extractor::Suffixes(v) => ("suffixes", v.join(",")),
            Extractor::Contractions(v) => ("contractions", v.join(",")),
            Extractor::Hyphenated => ("hyphenated", String::new()),
            Extractor::DigitTokens => ("digit_tokens", String::new()),
            Extractor::MidCapitalized => ("mid_capitalized", String::new()),
            Extractor::Acronyms => ("acronyms", String::new()),
            Extractor::Magnitude(m) => (
                "magnitude",
                match m {
                    Magnitude::Words => "W",
                    Magnitude::Sentences => "S",
                    Magnitude::Characters => "C",
                    Magnitude::Types => "T",
                }
                .into(),
            ),
            Extractor::SentenceLengthSd => ("sentence_length_sd", String::new()),
            Extractor::WordLengthSd => ("word_length_sd", String::new()),
        }
    }

    fn raw(&self, view: &DocView<'_>) -> f64 {
        let words = &view.doc.words;
        let count = |pred: &dyn Fn(usize) -> bool| (0..words.len()).filter(|&i| pred(i)).count() as f64;
        match self {
            Extractor::Chars(set) => view.doc.text.chars().filter(|c| set.contains(c)).count() as f64,
            Extractor::Substrings(lits) => lits
                .iter()
                .map(|l| view.doc.text.matches(l.as_str()).count())
                .sum::<usize>() as f64,
            Extractor::Words(set) => count(&|i| {
                let w = view.lower[i].as_str();
                set.iter().any(|e| match e.strip_prefix('*') {
                    Some(suffix) => w.len() > suffix.len() && w.ends_with(suffix),
                    None => w == e,
                })
            }),
            Extractor::CasedWords(set) => count(&|i| set.iter().any(|e| *e == words[i])),
            Extractor::SentenceInitial(set) => view
                .doc
                .sentences
                .iter()
                .filter(|s| set.iter().any(|e| *e == view.lower[s.start]))
                .count() as f64,
            Extractor::Suffixes(set) => count(&|i| {
                let w = view.lower[i].as_str();
                w.chars().all(char::is_alphabetic)
                    && set.iter().any(|s| {
                        w.ends_with(s.as_str()) && w[..w.len() - s.len()].chars().count() >= 2
                    })
            }),
            Extractor::Contractions(set) => count(&|i| {
                let w = view.lower[i].as_str();
                w.chars().skip(1).any(|c| c == '\'') && set.iter().any(|s| w.len() > s.len() && w.ends_with(s.as_str()))
            }),
            Extractor::Hyphenated => count(&|i| words[i].contains('-')),
            Extractor::DigitTokens => count(&|i| words[i].chars().any(|c| c.is_ascii_digit())),
            Extractor::MidCapitalized => count(&|i| {
                !view.initial[i] && words[i].chars().next().is_some_and(char::is_uppercase)
            }),
            Extractor::Acronyms => count(&|i| {
                let w = &words[i];
                w.chars().count() >= 2 && w.chars().all(|c| c.is_alphabetic() && c.is_uppercase())
            }),
            Extractor::Magnitude(m) => {
                let s = &view.summary;
                (match m {
                    Magnitude::Words => s.words,
                    Magnitude::Sentences => s.sentences,
                    Magnitude::Characters => s.characters,
                    Magnitude::Types => s.types,
                }) as f64
            }
            Extractor::SentenceLengthSd => {
                population_sd(view.doc.sentences.iter().map(|s| s.len() as f64))
            }
            Extractor::WordLengthSd => {
                population_sd(words.iter().map(|w| w.chars().count() as f64))
            }
        }
    }
}

/// Population standard deviation (divides by n); 0 for fewer than two values.
pub fn population_sd(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSpec {
    pub name: String,
    pub extractor: Extractor,
}

impl CueSpec {
    pub fn kind(&self) -> CueKind {
        self.extractor.kind()
    }
}

/// Ordered cue definitions; feature `i` is always produced by `specs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CueRegistry {
    specs: Vec<CueSpec>,
    names: Arc<[String]>,
}

impl CueRegistry {
    pub fn new(specs: Vec<CueSpec>) -> Result<Self, CueError> {
        if specs.is_empty() {
            return Err(CueError::EmptyRegistry);
        }
        let mut seen = HashSet::new();
        for s in &specs {
            if !seen.insert(s.name.as_str()) {
                return Err(CueError::DuplicateCue(s.name.clone()));
            }
        }
        let names: Arc<[String]> = specs.iter().map(|s| s.name.clone()).collect();
        Ok(CueRegistry { specs, names })
    }

    /// The built-in 55-cue registry.
    pub fn default_registry() -> Self {
        Self::parse(DEFAULT_REGISTRY).expect("built-in registry is valid")
    }

    /// Parses `name<TAB>extractor<TAB>params` lines; `#` starts a comment line.
    pub fn parse(contents: &str) -> Result<Self, CueError> {
        let mut specs = Vec::new();
        for (idx, raw) in contents.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut fields = raw.splitn(3, '\t');
            let name = fields.next().unwrap_or("").trim();
            let extractor = fields.next().map(str::trim).ok_or_else(|| CueError::RegistryParse {
                line,
                message: "expected name<TAB>extractor<TAB>params".into(),
            })?;
            if name.is_empty() {
                return Err(CueError::RegistryParse {
                    line,
                    message: "empty cue name".into(),
                });
            }
            let params = fields.next().unwrap_or("");
            specs.push(CueSpec {
                name: name.to_string(),
                extractor: Extractor::parse(extractor, params, line)?,
            });
        }
        Self::new(specs)
    }

    pub fn load(path: &Path) -> Result<Self, CueError> {
        let contents = fs::read_to_string(path).map_err(|e| CueError::RegistryIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&contents)
    }

    pub fn specs(&self) -> &[CueSpec] {
        &self.specs
    }

    pub fn names(&self) -> &Arc<[String]> {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Registry file contents that parse back to this registry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for spec in &self.specs {
            let (extractor, params) = spec.extractor.to_fields();
            out.push_str(&format!("{}\t{extractor}\t{params}\n", spec.name));
        }
        out
    }

    /// A registry holding only the named cues, in this registry's order.
    pub fn restrict(&self, keep: &[String]) -> Result<Self, CueError> {
        Self::new(
            self.specs
                .iter()
                .filter(|s| keep.contains(&s.name))
                .cloned()
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountSummary {
    pub words: usize,
    pub sentences: usize,
    pub characters: usize,
    pub types: usize,
}

impl CountSummary {
    fn logs(&self) -> [f64; 4] {
        [self.words, self.sentences, self.characters, self.types].map(|v| (v as f64).ln_1p())
    }

    /// `α·ln((W+1)/(S+1)) + β·ln((C+1)/(W+1)) + γ·ln((W+1)/(T+1))`.
    pub fn weighted_log_ratios(&self, alpha: f64, beta: f64, gamma: f64) -> f64 {
        let [w, s, c, t] = [self.words, self.sentences, self.characters, self.types].map(|v| v as f64 + 1.0);
        alpha * (w / s).ln() + beta * (c / w).ln() + gamma * (w / t).ln()
    }

    /// The same quantity as a weighted sum of log-transformed counts.
    pub fn weighted_log_sum(&self, alpha: f64, beta: f64, gamma: f64) -> f64 {
        let [w, s, c, t] = self.logs();
        (alpha - beta + gamma) * w - alpha * s + beta * c - gamma * t
    }
}

/// W, S, C and T for a tokenized document. C counts non-whitespace
/// characters; T counts distinct lowercased tokens.
pub fn count_summary(doc: &Document) -> CountSummary {
    let types: HashSet<String> = doc.words.iter().map(|w| w.to_lowercase()).collect();
    CountSummary {
        words: doc.words.len(),
        sentences: doc.sentences.len(),
        characters: doc.text.chars().filter(|c| !c.is_whitespace()).count(),
        types: types.len(),
    }
}

struct DocView<'a> {
    doc: &'a Document,
    lower: Vec<String>,
    initial: Vec<bool>,
    summary: CountSummary,
}

impl<'a> DocView<'a> {
    fn new(doc: &'a Document) -> Self {
        let mut initial = vec![false; doc.words.len()];
        for s in &doc.sentences {
            initial[s.start] = true;
        }
        DocView {
            doc,
            lower: doc.words.iter().map(|w| w.to_lowercase().replace('\u{2019}', "'")).collect(),
            initial,
            summary: count_summary(doc),
        }
    }
}

/// Log-transformed cue values for one document, aligned to a registry.
#[derive(Debug, Clone, PartialEq)]
pub struct CueVector {
    pub doc_id: String,
    pub names: Arc<[String]>,
    pub values: Vec<f64>,
    pub raw: Vec<f64>,
}

impl CueVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn raw_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.raw[i])
    }
}

pub fn extract(doc: &Document, registry: &CueRegistry) -> CueVector {
    let view = DocView::new(doc);
    let raw: Vec<f64> = registry.specs.iter().map(|s| s.extractor.raw(&view)).collect();
    let values = raw.iter().map(|&r| r.ln_1p()).collect();
    CueVector {
        doc_id: doc.id.clone(),
        names: registry.names.clone(),
        values,
        raw,
    }
}

/// Length-averages externally computed counts, then applies `ln(x + 1)`.
pub fn import_external_counts(
    doc_len_words: usize,
    counts: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, CueError> {
    if doc_len_words == 0 {
        return Err(CueError::EmptyDocument);
    }
    counts
        .iter()
        .map(|(k, &v)| {
            if v < 0.0 {
                return Err(CueError::NegativeCount(v));
            }
            Ok((k.clone(), log_transform(v / doc_len_words as f64)?))
        })
        .collect()
}

/// One row of cue values per document.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub cue_names: Vec<String>,
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn extract(corpus: &Corpus, registry: &CueRegistry) -> Self {
        let rows = corpus
            .documents
            .par_iter()
            .map(|d| extract(d, registry).values)
            .collect();
        FeatureMatrix {
            cue_names: registry.names().to_vec(),
            doc_ids: corpus.documents.iter().map(|d| d.id.clone()).collect(),
            rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Column indices for `names`, or the first name this matrix lacks.
    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>, String> {
        names
            .iter()
            .map(|n| self.cue_names.iter().position(|c| c == n).ok_or_else(|| n.clone()))
            .collect()
    }

    /// Rows restricted to the given columns.
    pub fn select_columns(&self, columns: &[usize]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| columns.iter().map(|&c| r[c]).collect())
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doc_id");
        for n in &self.cue_names {
            out.push('\t');
            out.push_str(n);
        }
        out.push('\n');
        for (id, row) in self.doc_ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                write!(out, "\t{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(contents: &str) -> Result<Self, CueError> {
        let mut lines = contents.lines();
        let header = lines.next().ok_or_else(|| CueError::Matrix("empty file".into()))?;
        let mut cols = header.split('\t');
        if cols.next() != Some("doc_id") {
            return Err(CueError::Matrix("header must start with doc_id".into()));
        }
        let cue_names: Vec<String> = cols.map(str::to_string).collect();
        let mut doc_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut fields = line.split('\t');
            doc_ids.push(fields.next().unwrap_or("").to_string());
            let row: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CueError::Matrix(format!("row {}: {e}", i + 2)))?;
            if row.len() != cue_names.len() {
                return Err(CueError::Matrix(format!(
                    "row {} has {} values, expected {}",
                    i + 2,
                    row.len(),
                    cue_names.len()
                )));
            }
            rows.push(row);
        }
        Ok(FeatureMatrix {
            cue_names,
            doc_ids,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str, cue: &str) -> f64 {
        let reg = CueRegistry::default_registry();
        extract(&Document::new("d", text), &reg).raw_of(cue).unwrap()
    }

    #[test]
    fn default_registry_has_55_cues() {
        let reg = CueRegistry::default_registry();
        assert_eq!(reg.len(), 55);
        let variation = reg.specs().iter().filter(|s| s.kind() == CueKind::Variation).count();
        assert_eq!(variation, 2);
    }

    #[test]
    fn empty_document_is_all_zero() {
        let reg = CueRegistry::default_registry();
        let v = extract(&Document::new("e", ""), &reg);
        assert_eq!(v.values.len(), 55);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn punctuation_and_magnitudes() {
        let t = "Why? Why!";
        assert_eq!(raw(t, "question-marks"), 1.0);
        assert_eq!(raw(t, "exclamation-marks"), 1.0);
        assert_eq!(raw(t, "word-tokens"), 2.0);
        assert_eq!(raw(t, "word-types"), 1.0);
        assert_eq!(raw(t, "sentences"), 2.0);
    }

    #[test]
    fn address_dates_and_capitals() {
        let t = "Mr. Smith arrived on Monday.";
        assert_eq!(raw(t, "terms-of-address"), 1.0);
        assert_eq!(raw(t, "weekday-names"), 1.0);
        assert_eq!(raw(t, "mid-sentence-capitalized"), 2.0);
    }

    #[test]
    fn lexical_extractors() {
        assert_eq!(raw("They don't know. I can't.", "negations"), 2.0);
        assert_eq!(raw("They don't know. It's John's.", "contractions"), 3.0);
        assert_eq!(raw("The nation's station and a lion", "suffix-tion"), 1.0);
        assert_eq!(raw("red bed walked talked", "suffix-ed"), 2.0);
        assert_eq!(raw("The NASA and FBI met a U.S. agent. I agree", "acronyms"), 2.0);
        assert_eq!(raw("And then. But also. and so", "sentence-initial-conjunctions"), 2.0);
        assert_eq!(raw("We may go in May.", "month-names"), 1.0);
        assert_eq!(raw("We may go in May.", "modals"), 2.0);
        assert_eq!(raw("a well-known 3rd-rate 1990 act", "hyphenated-words"), 2.0);
        assert_eq!(raw("a well-known 3rd-rate 1990 act", "digit-tokens"), 2.0);
        assert_eq!(raw("Wait -- then \u{2014} go... now\u{2026}", "dashes"), 2.0);
        assert_eq!(raw("Wait -- then \u{2014} go... now\u{2026}", "ellipses"), 2.0);
    }

    #[test]
    fn variation_uses_population_sd() {
        // Sentence lengths 1 and 3: mean 2, population sd 1.
        assert!((raw("Go. Then we left.", "sentence-length-sd") - 1.0).abs() < 1e-15);
        assert_eq!(raw("One sentence only here.", "sentence-length-sd"), 0.0);
        // Word lengths 1 and 3.
        assert!((raw("a bcd", "word-length-sd") - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_transform_values() {
        assert_eq!(log_transform(0.0).unwrap(), 0.0);
        assert!((log_transform(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        let ratio = log_transform(99.0).unwrap() - log_transform(9.0).unwrap();
        assert!((ratio - 10f64.ln()).abs() < 1e-12);
        assert!((ratio - (100.0f64 / 10.0).ln()).abs() < 1e-12);
        assert!(matches!(log_transform(-1.0), Err(CueError::NegativeCount(_))));
    }

    #[test]
    fn count_summaries() {
        assert_eq!(count_summary(&Document::new("a", "")), CountSummary::default());
        // Non-whitespace characters: Y e s y e s . = 7
        let s = count_summary(&Document::new("b", "Yes yes."));
        assert_eq!((s.words, s.sentences, s.characters, s.types), (2, 1, 7, 1));
        let s = count_summary(&Document::new("c", "A b. C d."));
        assert_eq!((s.words, s.sentences, s.types), (4, 2, 4));
    }

    #[test]
    fn external_counts_are_averaged_then_logged() {
        let mut c = BTreeMap::new();
        c.insert("x".to_string(), 50.0);
        let out = import_external_counts(100, &c).unwrap();
        assert!((out["x"] - 1.5f64.ln()).abs() < 1e-15);
        let mut c = BTreeMap::new();
        c.insert("a".to_string(), 10.0);
        c.insert("b".to_string(), 20.0);
        c.insert("z".to_string(), 0.0);
        let out = import_external_counts(10, &c).unwrap();
        assert!((out["a"] - 2f64.ln()).abs() < 1e-15);
        assert!((out["b"] - 3f64.ln()).abs() < 1e-15);
        assert_eq!(out["z"], 0.0);
        assert!(matches!(import_external_counts(0, &c), Err(CueError::EmptyDocument)));
        c.insert("neg".to_string(), -1.0);
        assert!(import_external_counts(5, &c).is_err());
    }

    #[test]
    fn registry_round_trips_through_tsv() {
        let r = CueRegistry::default_registry();
        assert_eq!(CueRegistry::parse(&r.to_tsv()).unwrap(), r);
    }

    #[test]
    fn registry_parse_errors() {
        assert!(matches!(CueRegistry::parse("# only comments\n"), Err(CueError::EmptyRegistry)));
        assert!(matches!(
            CueRegistry::parse("a\tchars\t?\na\tchars\t!\n"),
            Err(CueError::DuplicateCue(_))
        ));
        let e = CueRegistry::parse("a\tchars\t?\nb\tbogus\tx\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
        assert!(CueRegistry::parse("a\tmagnitude\tQ\n").is_err());
        assert!(CueRegistry::parse("a\twords\t\n").is_err());
        assert!(CueRegistry::parse("lonely\n").is_err());
    }

    #[test]
    fn single_cue_registries_align_with_default() {
        let reg = CueRegistry::default_registry();
        let doc = Document::new(
            "d",
            "Mr. Jones said the 3 men won't go. \"Why?\" asked Dr. Lee -- twice!",
        );
        let full = extract(&doc, &reg);
        for (i, spec) in reg.specs().iter().enumerate() {
            let single = CueRegistry::new(vec![spec.clone()]).unwrap();
            let v = extract(&doc, &single);
            assert_eq!(v.values, vec![full.values[i]], "cue {}", spec.name);
        }
    }

    #[test]
    fn feature_matrix_tsv_shape() {
        let reg = CueRegistry::parse("q\tchars\t?\nw\tmagnitude\tW\n").unwrap();
        let corpus = Corpus::new(
            vec![Document::new("a", "Why? Yes."), Document::new("b", "")],
            BTreeMap::new(),
        )
        .unwrap();
        let m = FeatureMatrix::extract(&corpus, &reg);
        let tsv = m.to_tsv();
        assert_eq!(tsv.lines().next().unwrap(), "doc_id\tq\tw");
        assert_eq!(tsv.lines().nth(1).unwrap(), "a\t0.693147\t1.098612");
        let back = FeatureMatrix::from_tsv(&tsv).unwrap();
        assert_eq!(back.doc_ids, m.doc_ids);
        assert!(back
            .rows
            .iter()
            .flatten()
            .zip(m.rows.iter().flatten())
            .all(|(a, b)| (a - b).abs() < 5e-7));
    }
}
