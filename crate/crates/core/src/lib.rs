//! Genre facet classification from surface cues.
//!
//! The pipeline runs corpus loading and tokenization ([`corpus`]), cue
//! extraction ([`cues`]), per-level logistic regression with backward AIC
//! selection ([`glm`]) or perceptrons with cross-validated elimination
//! ([`neural`]), and scoring against gold labels ([`eval`]).

pub mod corpus;
pub mod cues;
mod error;
pub mod eval;
pub mod glm;
pub mod neural;
pub mod pipeline;
pub mod synth;

pub use corpus::{load_corpus, split_stratified, tokenize, Corpus, Document, Facet, FacetLabels};
pub use cues::{extract, CueRegistry, CueVector, FeatureMatrix};
pub use error::{Error, Result};
pub use eval::{binomial_cdf, binomial_tail, evaluate_facet, EvalReport};
pub use glm::{backward_select, fit_logistic, fit_one_vs_rest, LRModel, OneVsRestModel};
pub use neural::{cross_entropy, cv_eliminate, train, MLPConfig, MLPModel};
pub use pipeline::{Classifier, Method, TrainOptions};
pub use synth::{synth_corpus, SynthSpec};
