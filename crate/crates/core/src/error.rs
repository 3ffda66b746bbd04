use thiserror::Error;

use crate::theory::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input:\n{}", render(.0))]
    Input(Vec<Diagnostic>),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("theory is not xor-linear: {0}")]
    NotXorLinear(String),
    #[error("not dominated by the given set: {0}")]
    NotDominated(String),
    #[error("closure of a set with {size} elements exceeds the cap of {cap}")]
    ClosureCap { size: usize, cap: usize },
    #[error("names reserved by the ProVerif output: {0}")]
    ReservedName(String),
    #[error("unknown corpus entry `{0}`")]
    UnknownCorpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
