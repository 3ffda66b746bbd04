//! Reduction of Horn theories over XOR to XOR-free theories, plus a bounded
//! derivation engine used to check the result.

pub mod corpus;
pub mod domination;
pub mod emit;
pub mod engine;
pub mod error;
pub mod normal;
pub mod parser;
pub mod reduction;
pub mod subst;
pub mod term;
pub mod theory;

pub use domination::{compute_c_set, CSet};
pub use error::{Error, Result};
pub use reduction::{build_t_plus, ReducedTheory};
pub use parser::{parse_atom, parse_term, parse_theory, ParsedTheory};
pub use subst::Substitution;
pub use term::{xor_reduce, Sym, Term};
pub use theory::{Atom, Diagnostic, DiagnosticKind, HornClause, Query, Role, Theory};
