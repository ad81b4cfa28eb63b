use serde::Serialize;
use thiserror::Error;

/// Process exit status. The numeric values are a stable contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass = 0,
    VerdictFail = 1,
    AuditFail = 2,
    Resource = 3,
    Input = 4,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Status for an error raised by the library. Failed hypotheses and
    /// constructions that cannot be carried out count as audit failures.
    pub fn of_core(e: &cfiblur::Error) -> Status {
        use cfiblur::Error as E;
        match e {
            E::Argument(_) | E::Decode(_) | E::Validation(_) => Status::Input,
            E::Resource(_) | E::GenerationFailed { .. } => Status::Resource,
            E::Audit(_) | E::Construction { .. } | E::NotFound(_) => Status::AuditFail,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("input error: {0}")]
    Input(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error(transparent)]
    Core(#[from] cfiblur::Error),
}

impl HarnessError {
    pub fn status(&self) -> Status {
        match self {
            HarnessError::Input(_) => Status::Input,
            HarnessError::Resource(_) => Status::Resource,
            HarnessError::Core(e) => Status::of_core(e),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Input(e.to_string())
    }
}
