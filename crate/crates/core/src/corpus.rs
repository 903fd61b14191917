//! Documents, facet labels, tokenization and stratified train/evaluation splits.
//!
//! A corpus on disk is a directory holding `labels.tsv` and a `texts/`
//! subdirectory with one `<id>.txt` file per document.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("labels.tsv line {line}: {message}")]
    Label { line: usize, message: String },
    #[error("missing text file for labeled document {id}")]
    MissingText { id: String },
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("document {0} has no facet labels")]
    Unlabeled(String),
    #[error("label refers to unknown document {0}")]
    UnknownDocument(String),
    #[error("per_cell must be at least 1")]
    InvalidPerCell,
}

/// Abbreviations after which a period never ends a sentence (compared lowercased).
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sen", "rep", "st", "vs", "etc", "e.g", "i.e",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub words: Vec<String>,
    /// Word index ranges, contiguous and covering `0..words.len()`.
    pub sentences: Vec<Range<usize>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let (words, sentences) = tokenize(&text);
        Document {
            id: id.into(),
            text,
            words,
            sentences,
        }
    }

    /// True when word `index` opens a sentence.
    pub fn is_sentence_initial(&self, index: usize) -> bool {
        self.sentences.iter().any(|s| s.start == index)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_joiner(c)
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Splits text into word tokens and sentence ranges.
///
/// A word is a maximal run of letters, digits, apostrophes and hyphens with
/// leading/trailing apostrophes and hyphens trimmed; runs without a letter or
/// digit are dropped. A sentence ends at `.`, `!` or `?` (optionally followed
/// by closing quotes or brackets) when the next visible character is a
/// capital letter (optionally after an opening quote/bracket) or the text
/// ends. A period after one of [`ABBREVIATIONS`] never ends a sentence.
pub fn tokenize(text: &str) -> (Vec<String>, Vec<Range<usize>>) {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut words: Vec<String> = Vec::new();
    // Number of words seen before each sentence boundary.
    let mut boundaries: Vec<usize> = Vec::new();

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i].1) {
                i += 1;
            }
            let run: String = chars[start..i].iter().map(|&(_, c)| c).collect();
            let trimmed = run.trim_matches(is_joiner);
            if trimmed.chars().any(char::is_alphanumeric) {
                words.push(trimmed.to_string());
            }
            continue;
        }
        if is_terminator(c) {
            let term_start = i;
            while i < chars.len() && is_terminator(chars[i].1) {
                i += 1;
            }
            let mut j = i;
            while j < chars.len() && is_closer(chars[j].1) {
                j += 1;
            }
            let ends_here = if j == chars.len() {
                true
            } else if chars[j].1.is_whitespace() {
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                while k < chars.len() && is_opener(chars[k].1) {
                    k += 1;
                }
                k == chars.len() || chars[k].1.is_uppercase()
            } else {
                false
            };
            let single_period = chars[term_start].1 == '.' && i - term_start == 1;
            if ends_here && !(single_period && follows_abbreviation(text, chars[term_start].0)) {
                boundaries.push(words.len());
            }
            continue;
        }
        i += 1;
    }

    let mut sentences = Vec::new();
    let mut start = 0;
    for b in boundaries.into_iter().chain(std::iter::once(words.len())) {
        if b > start {
            sentences.push(start..b);
            start = b;
        }
    }
    (words, sentences)
}

/// Checks the whitespace-delimited chunk ending just before byte `period`.
fn follows_abbreviation(text: &str, period: usize) -> bool {
    let before = &text[..period];
    let chunk = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&chunk.as_str())
}

/// A categorical facet with a closed, ordered set of levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Genre,
    Brow,
    Narrative,
}

pub const GENRE_LEVELS: &[&str] = &[
    "reportage",
    "editorial",
    "scitech",
    "legal",
    "nonfiction",
    "fiction",
];
pub const BROW_LEVELS: &[&str] = &["popular", "middle", "uppermiddle", "high"];
pub const NARRATIVE_LEVELS: &[&str] = &["no", "yes"];

impl Facet {
    pub const ALL: [Facet; 3] = [Facet::Narrative, Facet::Genre, Facet::Brow];

    /// Levels in declaration order.
    pub fn levels(self) -> &'static [&'static str] {
        match self {
            Facet::Genre => GENRE_LEVELS,
            Facet::Brow => BROW_LEVELS,
            Facet::Narrative => NARRATIVE_LEVELS,
        }
    }

    pub fn is_binary(self) -> bool {
        self.levels().len() == 2
    }

    pub fn level_index(self, level: &str) -> Option<usize> {
        self.levels().iter().position(|l| *l == level)
    }

    pub fn name(self) -> &'static str {
        match self {
            Facet::Genre => "genre",
            Facet::Brow => "brow",
            Facet::Narrative => "narrative",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Facet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "genre" => Ok(Facet::Genre),
            "brow" => Ok(Facet::Brow),
            "narrative" => Ok(Facet::Narrative),
            other => Err(format!("unknown facet {other:?}")),
        }
    }
}

/// Facet levels for one document, stored as indices into [`Facet::levels`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FacetLabels {
    pub genre: Option<u8>,
    pub brow: Option<u8>,
    pub narrative: Option<bool>,
}

impl FacetLabels {
    pub fn level(&self, facet: Facet) -> Option<usize> {
        match facet {
            Facet::Genre => self.genre.map(usize::from),
            Facet::Brow => self.brow.map(usize::from),
            Facet::Narrative => self.narrative.map(usize::from),
        }
    }

    pub fn level_name(&self, facet: Facet) -> Option<&'static str> {
        self.level(facet).map(|i| facet.levels()[i])
    }

    pub fn set(&mut self, facet: Facet, level: usize) {
        assert!(level < facet.levels().len(), "level index out of range");
        match facet {
            Facet::Genre => self.genre = Some(level as u8),
            Facet::Brow => self.brow = Some(level as u8),
            Facet::Narrative => self.narrative = Some(level == 1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.genre.is_none() && self.brow.is_none() && self.narrative.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub labels: BTreeMap<String, FacetLabels>,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and label references.
    pub fn new(
        documents: Vec<Document>,
        labels: BTreeMap<String, FacetLabels>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        if let Some(id) = labels.keys().find(|id| !seen.contains(id.as_str())) {
            return Err(CorpusError::UnknownDocument(id.clone()));
        }
        Ok(Corpus { documents, labels })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels_of(&self, id: &str) -> Option<&FacetLabels> {
        self.labels.get(id)
    }

    /// Level index of every document for `facet`, or the first document lacking one.
    pub fn facet_levels(&self, facet: Facet) -> Result<Vec<usize>, String> {
        self.documents
            .iter()
            .map(|d| {
                self.labels
                    .get(&d.id)
                    .and_then(|l| l.level(facet))
                    .ok_or_else(|| d.id.clone())
            })
            .collect()
    }

    fn subset(&self, keep: &BTreeSet<usize>) -> Corpus {
        let documents: Vec<Document> = keep.iter().map(|&i| self.documents[i].clone()).collect();
        let labels = documents
            .iter()
            .filter_map(|d| self.labels.get(&d.id).map(|l| (d.id.clone(), *l)))
            .collect();
        Corpus { documents, labels }
    }

    /// Writes `<root>/labels.tsv` and `<root>/texts/<id>.txt`.
    pub fn save(&self, root: &Path) -> Result<(), CorpusError> {
        let texts = root.join("texts");
        fs::create_dir_all(&texts).map_err(|source| CorpusError::Io {
            path: texts.clone(),
            source,
        })?;
        let mut tsv = String::from("id\tgenre\tbrow\tnarrative\n");
        for doc in &self.documents {
            let path = texts.join(format!("{}.txt", doc.id));
            fs::write(&path, &doc.text).map_err(|source| CorpusError::Io { path, source })?;
            if let Some(l) = self.labels.get(&doc.id) {
                let narrative = match l.narrative {
                    Some(true) => "yes",
                    Some(false) => "no",
                    None => "-",
                };
                tsv.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    doc.id,
                    l.level_name(Facet::Genre).unwrap_or("-"),
                    l.level_name(Facet::Brow).unwrap_or("-"),
                    narrative
                ));
            }
        }
        let path = root.join("labels.tsv");
        fs::write(&path, tsv).map_err(|source| CorpusError::Io { path, source })
    }
}

fn parse_level(facet: Facet, value: &str, line: usize) -> Result<Option<usize>, CorpusError> {
    if value.is_empty() || value == "-" {
        return Ok(None);
    }
    let found = if facet == Facet::Narrative {
        match value {
            "yes" => Some(1),
            "no" => Some(0),
            _ => None,
        }
    } else {
        facet.level_index(value)
    };
    found.map(Some).ok_or_else(|| CorpusError::Label {
        line,
        message: format!("unknown {facet} level {value:?}"),
    })
}

/// Parses the contents of a `labels.tsv` file. Empty or `-` cells mean "unlabeled".
pub fn parse_labels(contents: &str) -> Result<Vec<(String, FacetLabels)>, CorpusError> {
    let mut rows = Vec::new();
    let mut lines = contents.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "id\tgenre\tbrow\tnarrative" => {}
        _ => {
            return Err(CorpusError::Label {
                line: 1,
                message: "expected header id<TAB>genre<TAB>brow<TAB>narrative".into(),
            })
        }
    }
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(CorpusError::Label {
                line,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(CorpusError::Label {
                line,
                message: "empty document id".into(),
            });
        }
        let mut labels = FacetLabels::default();
        for (facet, value) in [
            (Facet::Genre, fields[1]),
            (Facet::Brow, fields[2]),
            (Facet::Narrative, fields[3]),
        ] {
            if let Some(level) = parse_level(facet, value, line)? {
                labels.set(facet, level);
            }
        }
        rows.push((fields[0].to_string(), labels));
    }
    Ok(rows)
}

/// Loads a corpus directory: one document per labeled id.
pub fn load_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    let labels_path = root.join("labels.tsv");
    let contents = fs::read_to_string(&labels_path).map_err(|source| CorpusError::Io {
        path: labels_path,
        source,
    })?;
    let rows = parse_labels(&contents)?;
    let mut documents = Vec::with_capacity(rows.len());
    let mut labels = BTreeMap::new();
    for (id, l) in rows {
        let path = root.join("texts").join(format!("{id}.txt"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CorpusError::MissingText { id })
            }
            Err(source) => return Err(CorpusError::Io { path, source }),
        };
        if labels.insert(id.clone(), l).is_some() {
            return Err(CorpusError::DuplicateId(id));
        }
        documents.push(Document::new(id, text));
    }
    Corpus::new(documents, labels)
}

/// Splits a labeled corpus into (train, eval).
///
/// Documents are grouped by their full label combination. Each occupied cell
/// sends `min(per_cell, size - 1)` documents to eval so that no training cell
/// is emptied. Cells are visited in label order; within a cell documents are
/// shuffled by a ChaCha8 generator seeded with `seed`.
pub fn split_stratified(
    corpus: &Corpus,
    per_cell: usize,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    if per_cell == 0 {
        return Err(CorpusError::InvalidPerCell);
    }
    let mut cells: BTreeMap<FacetLabels, Vec<usize>> = BTreeMap::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        match corpus.labels.get(&doc.id) {
            Some(l) if !l.is_empty() => cells.entry(*l).or_default().push(i),
            _ => return Err(CorpusError::Unlabeled(doc.id.clone())),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = BTreeSet::new();
    for members in cells.values_mut() {
        members.shuffle(&mut rng);
        let take = per_cell.min(members.len() - 1);
        eval.extend(members[..take].iter().copied());
    }
    let train: BTreeSet<usize> = (0..corpus.len()).filter(|i| !eval.contains(i)).collect();
    Ok((corpus.subset(&train), corpus.subset(&eval)))
}
