use thiserror::Error;

use crate::corpus::CorpusError;
use crate::cues::CueError;
use crate::eval::EvalError;
use crate::glm::GlmError;
use crate::neural::NeuralError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("model file: {0}")]
    Model(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
