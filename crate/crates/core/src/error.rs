use thiserror::Error;

use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::prp::PrpError;
use crate::sampling::SamplingError;
use crate::student::StudentError;
use crate::teacher::TeacherError;

/// Any failure raised by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Prp(#[from] PrpError),
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
