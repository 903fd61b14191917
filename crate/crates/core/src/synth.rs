//! Seeded synthetic corpora with planted per-level cue frequencies.
//!
//! A [`SynthSpec`] gives, for each level of one facet, the expected number of
//! trigger occurrences per 100 words for named cues of the default registry.
//! Documents are filler prose from a vocabulary that fires no cue, with
//! trigger forms inserted at Poisson-distributed rates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, Facet, FacetLabels};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no trigger is known for cue {0}")]
    UnknownTrigger(String),
    #[error("unknown {facet} level {level}")]
    UnknownLevel { facet: Facet, level: String },
    #[error("rate for {cue} must be finite and non-negative, got {rate}")]
    Rate { cue: String, rate: f64 },
    #[error("spec must request at least one document and one word per document")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub facet: Facet,
    pub docs_per_level: usize,
    pub words_per_doc: usize,
    /// Level name → cue name → expected occurrences per 100 filler words.
    pub levels: BTreeMap<String, BTreeMap<String, f64>>,
}

const FILLER: &[&str] = &[
    "tree", "house", "river", "stone", "cloud", "bread", "chair", "lamp", "door", "book", "road",
    "hill", "garden", "window", "table", "field", "boat", "letter", "market", "bridge", "paper",
    "coffee", "music", "water", "winter", "summer", "color", "friend", "cat", "dog", "bird",
    "fish", "horse", "apple", "green", "blue", "big", "small", "old", "new", "warm", "cold",
    "dark", "see", "take", "make", "give", "find", "hold", "walk", "sit", "stand", "run", "open",
    "keep", "build", "glass", "salt", "rain", "snow", "wood", "milk",
];

#[derive(Debug, Clone, Copy)]
enum Form {
    /// A standalone token placed anywhere in a sentence.
    Word(&'static [&'static str]),
    /// Punctuation glued to the end of a non-final word.
    Attach(&'static str),
    /// Replaces a sentence's closing period.
    End(&'static str),
    /// A token that opens a sentence.
    Initial(&'static [&'static str]),
}

fn trigger(cue: &str) -> Option<Form> {
    use Form::*;
    Some(match cue {
        "question-marks" => End("?"),
        "exclamation-marks" => End("!"),
        "periods" => Attach("."),
        "commas" => Attach(","),
        "semicolons" => Attach(";"),
        "colons" => Attach(":"),
        "dashes" => Word(&["--"]),
        "open-parens" => Word(&["(aside)"]),
        "brackets" => Word(&["[sic]"]),
        "quotation-marks" => Word(&["\"so-called\""]),
        "apostrophes" => Word(&["o'clock"]),
        "ellipses" => Attach("..."),
        "dollar-signs" => Word(&["$5", "$20"]),
        "percent-signs" => Word(&["5%", "12%"]),
        "mid-sentence-capitalized" => Word(&["Boston", "Helen", "Paris", "Victor"]),
        "acronyms" => Word(&["NASA", "FBI", "UN"]),
        "hyphenated-words" => Word(&["well-known", "long-term", "part-time"]),
        "digit-tokens" => Word(&["1990", "42", "7"]),
        "terms-of-address" => Word(&["Mr.", "Mrs.", "Dr."]),
        "month-names" => Word(&["January", "March", "October"]),
        "weekday-names" => Word(&["Monday", "Friday", "Sunday"]),
        "we" => Word(&["we"]),
        "you" => Word(&["you"]),
        "i" => Word(&["I"]),
        "it" => Word(&["it"]),
        "third-singular-pronouns" => Word(&["he", "she", "his", "her"]),
        "third-plural-pronouns" => Word(&["they", "them", "their"]),
        "contractions" => Word(&["we're", "they've", "you'll"]),
        "negations" => Word(&["not", "never", "no"]),
        "modals" => Word(&["can", "could", "would", "should", "must"]),
        "suffix-tion" => Word(&["nation", "station", "motion"]),
        "suffix-ity" => Word(&["quality", "unity", "clarity"]),
        "suffix-ment" => Word(&["moment", "payment", "statement"]),
        "suffix-ence" => Word(&["silence", "distance", "evidence"]),
        "suffix-ize" => Word(&["realize", "organize", "civilization"]),
        "suffix-ed" => Word(&["walked", "talked", "jumped", "opened"]),
        "suffix-ing" => Word(&["walking", "singing", "reading"]),
        "suffix-ly" => Word(&["quickly", "slowly", "gently"]),
        "suffix-est" => Word(&["largest", "oldest", "smallest"]),
        "sentence-initial-conjunctions" => Initial(&["And", "But", "So"]),
        "subordinators" => Word(&["because", "although", "while"]),
        "which" => Word(&["which"]),
        "that" => Word(&["that"]),
        "the" => Word(&["the"]),
        "a-an" => Word(&["a", "an"]),
        "prepositions" => Word(&["of", "in", "with", "from"]),
        "numerals" => Word(&["one", "two", "three", "hundred"]),
        "hedges" => Word(&["very", "quite", "rather"]),
        "said" => Word(&["said"]),
        _ => return None,
    })
}

/// True when [`synth_corpus`] can plant occurrences of `cue`.
pub fn has_trigger(cue: &str) -> bool {
    trigger(cue).is_some()
}

/// A short sentence holding exactly one planted occurrence of `cue`.
pub fn trigger_sentence(cue: &str) -> Option<String> {
    Some(match trigger(cue)? {
        Form::Word(options) => format!("Tree {} house.", options[0]),
        Form::Attach(p) => format!("Tree house{p} river."),
        Form::End(p) => format!("Tree house{p}"),
        Form::Initial(options) => format!("{} tree house.", options[0]),
    })
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.docs_per_level == 0 || self.words_per_doc == 0 {
            return Err(SynthError::Empty);
        }
        for (level, rates) in &self.levels {
            if self.facet.level_index(level).is_none() {
                return Err(SynthError::UnknownLevel {
                    facet: self.facet,
                    level: level.clone(),
                });
            }
            for (cue, &rate) in rates {
                if trigger(cue).is_none() {
                    return Err(SynthError::UnknownTrigger(cue.clone()));
                }
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(SynthError::Rate { cue: cue.clone(), rate });
                }
            }
        }
        Ok(())
    }
}

fn generate_text(rng: &mut ChaCha8Rng, words: usize, rates: &BTreeMap<String, f64>) -> String {
    let mut tokens: Vec<String> = (0..words)
        .map(|_| FILLER.choose(rng).unwrap().to_string())
        .collect();
    let mut attach = Vec::new();
    let mut ends = Vec::new();
    let mut initials = Vec::new();
    for (cue, &rate) in rates {
        let lambda = rate * words as f64 / 100.0;
        let count = if lambda > 0.0 {
            Poisson::new(lambda).unwrap().sample(rng) as usize
        } else {
            0
        };
        let form = trigger(cue).expect("validated");
        for _ in 0..count {
            match form {
                Form::Word(options) => {
                    let at = rng.gen_range(0..=tokens.len());
                    tokens.insert(at, options.choose(rng).unwrap().to_string());
                }
                Form::Attach(p) => attach.push(p),
                Form::End(p) => ends.push(p),
                Form::Initial(options) => initials.push(*options.choose(rng).unwrap()),
            }
        }
    }

    let mut sentences: Vec<(Vec<String>, &str)> = Vec::new();
    let mut rest = tokens.as_slice();
    while !rest.is_empty() {
        let len = rng.gen_range(6..=14).min(rest.len());
        sentences.push((rest[..len].to_vec(), "."));
        rest = &rest[len..];
    }
    if sentences.is_empty() {
        sentences.push((vec![FILLER[0].to_string()], "."));
    }
    let n = sentences.len();
    for word in initials {
        sentences[rng.gen_range(0..n)].0.insert(0, word.to_string());
    }
    for p in ends {
        sentences[rng.gen_range(0..n)].1 = p;
    }
    for p in attach {
        let s = &mut sentences[rng.gen_range(0..n)].0;
        let at = rng.gen_range(0..s.len());
        s[at].push_str(p);
    }

    sentences
        .into_iter()
        .map(|(mut words, end)| {
            let first = &mut words[0];
            let mut c = first.chars();
            if let Some(f) = c.next() {
                *first = f.to_uppercase().chain(c).collect();
            }
            format!("{}{}", words.join(" "), end)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds a labeled corpus realizing `spec`; identical `(spec, seed)` pairs
/// give identical corpora. Only `spec.facet` is labeled.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut documents = Vec::new();
    let mut labels = BTreeMap::new();
    for (level_idx, level) in spec.facet.levels().iter().enumerate() {
        let Some(rates) = spec.levels.get(*level) else {
            continue;
        };
        for i in 0..spec.docs_per_level {
            let id = format!("{level}-{i:04}");
            let text = generate_text(&mut rng, spec.words_per_doc, rates);
            let mut l = FacetLabels::default();
            l.set(spec.facet, level_idx);
            labels.insert(id.clone(), l);
            documents.push(Document::new(id, text));
        }
    }
    Ok(Corpus::new(documents, labels).expect("generated ids are unique"))
}
