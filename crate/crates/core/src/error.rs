use thiserror::Error;

use crate::basegraph::BaseGraph;
use crate::blurer::Violation;
use crate::similarity::AuditReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("graph generation failed after {attempts} attempts (best girth {best_girth:?})")]
    GenerationFailed { attempts: usize, best_girth: Option<usize>, best: Option<Box<BaseGraph>> },
    #[error("blurer construction failed at {step}: {violation}")]
    Construction { step: String, violation: Violation },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("hypothesis audit failed: {0}")]
    Audit(Box<AuditReport>),
}
