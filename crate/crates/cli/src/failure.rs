use std::fmt;

use causeway::augment::AugmentError;
use causeway::classifier::ClassifierError;
use causeway::corpus::CorpusError;
use causeway::crf::CrfError;
use causeway::eval::EvalError;
use causeway::model_file::ModelFileError;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Io(String),
    Data(String),
    Config(String),
    Divergence(String),
    Version(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Data(_) => 2,
            Failure::Config(_) => 3,
            Failure::Divergence(_) => 4,
            Failure::Version(_) => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Io(m) => write!(f, "io error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Divergence(m) => write!(f, "training diverged: {m}"),
            Failure::Version(m) => write!(f, "incompatible model: {m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

impl From<ModelFileError> for Failure {
    fn from(e: ModelFileError) -> Self {
        match e {
            ModelFileError::Io(e) => Failure::Io(e.to_string()),
            e @ ModelFileError::Version { .. } => Failure::Version(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

impl From<CrfError> for Failure {
    fn from(e: CrfError) -> Self {
        match e {
            CrfError::Io(e) => Failure::Io(e.to_string()),
            CrfError::Model(e) => e.into(),
            e @ CrfError::Divergence { .. } => Failure::Divergence(e.to_string()),
            e @ CrfError::InvalidConfig(_) => Failure::Config(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Model(e) => e.into(),
            e @ ClassifierError::Divergence { .. } => Failure::Divergence(e.to_string()),
            e @ ClassifierError::InvalidConfig(_) => Failure::Config(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Io(e) => Failure::Io(e.to_string()),
            e @ AugmentError::NoMultiRelationInstances => Failure::Data(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Data(e.to_string())
    }
}
