//! Atoms, Horn clauses, theories and queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::subst::Substitution;
use crate::term::{xor_reduce, Sym, Term};

/// Name of the intruder-knowledge predicate.
pub const INTRUDER: &str = "I";

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Sym,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Self {
        Atom { pred: Arc::from(pred), args }
    }

    /// `I(t)`.
    pub fn intruder(t: Term) -> Self {
        Atom::new(INTRUDER, vec![t])
    }

    pub fn is_intruder(&self) -> bool {
        &*self.pred == INTRUDER && self.args.len() == 1
    }

    pub fn apply(&self, s: &Substitution) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(|a| s.apply(a)).collect() }
    }

    pub fn map_args(&self, f: impl Fn(&Term) -> Term) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(f).collect() }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.args.iter().for_each(|a| a.collect_vars(&mut out));
        out
    }

    pub fn size(&self) -> usize {
        self.args.iter().map(Term::size).sum()
    }

    /// Argument-wise equality modulo XOR.
    pub fn equiv_mod_xor(&self, other: &Atom) -> bool {
        self.pred == other.pred
            && self.args.len() == other.args.len()
            && self.args.iter().zip(&other.args).all(|(a, b)| a == b || xor_reduce(a) == xor_reduce(b))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    IntruderFact,
    IntruderRule,
    ProtocolRule,
    EventRule,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::IntruderFact => "fact",
            Role::IntruderRule => "intruder",
            Role::ProtocolRule => "protocol",
            Role::EventRule => "event",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Role> {
        Some(match tag {
            "fact" => Role::IntruderFact,
            "intruder" => Role::IntruderRule,
            "protocol" => Role::ProtocolRule,
            "event" => Role::EventRule,
            _ => return None,
        })
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HornClause {
    pub premises: Vec<Atom>,
    pub conclusion: Atom,
    pub role: Role,
    /// Variables allowed in the conclusion without occurring in a premise
    /// (session identifiers).
    pub exempt_vars: BTreeSet<Sym>,
}

impl HornClause {
    pub fn new(premises: Vec<Atom>, conclusion: Atom, role: Role) -> Self {
        HornClause { premises, conclusion, role, exempt_vars: BTreeSet::new() }
    }

    pub fn fact(conclusion: Atom) -> Self {
        HornClause::new(Vec::new(), conclusion, Role::IntruderFact)
    }

    pub fn is_fact(&self) -> bool {
        self.premises.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.conclusion).chain(self.premises.iter())
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.atoms().flat_map(|a| a.args.iter())
    }

    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.terms().for_each(|t| t.collect_vars(&mut out));
        out
    }

    pub fn premise_vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.premises.iter().flat_map(|a| a.args.iter()).for_each(|t| t.collect_vars(&mut out));
        out
    }

    /// Conclusion variables that neither occur in a premise nor are exempt.
    pub fn unbound_conclusion_vars(&self) -> Vec<Sym> {
        let bound = self.premise_vars();
        self.conclusion
            .vars()
            .into_iter()
            .filter(|v| !bound.contains(v) && !self.exempt_vars.contains(v))
            .collect()
    }

    pub fn map_terms(&self, f: impl Fn(&Term) -> Term) -> HornClause {
        HornClause {
            premises: self.premises.iter().map(|a| a.map_args(&f)).collect(),
            conclusion: self.conclusion.map_args(&f),
            role: self.role,
            exempt_vars: self.exempt_vars.clone(),
        }
    }
}

impl fmt::Display for HornClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.premises.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        if !self.premises.is_empty() {
            write!(f, " ")?;
        }
        write!(f, "-> {}", self.conclusion)
    }
}

impl fmt::Debug for HornClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {self}", self.role.tag())
    }
}

/// A finite set of Horn clauses over a declared signature. When
/// `xor_rule_implicit` is set the theory additionally contains
/// `I(x), I(y) -> I(x ⊕ y)`, which is never stored as a clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    pub functions: BTreeMap<Sym, usize>,
    pub predicates: BTreeMap<Sym, usize>,
    pub clauses: Vec<HornClause>,
    pub xor_rule_implicit: bool,
}

impl Default for Theory {
    fn default() -> Self {
        Theory::new()
    }
}

impl Theory {
    pub fn new() -> Self {
        let mut predicates = BTreeMap::new();
        predicates.insert(Arc::from(INTRUDER), 1);
        Theory { functions: BTreeMap::new(), predicates, clauses: Vec::new(), xor_rule_implicit: true }
    }

    pub fn declare_fun(&mut self, name: &str, arity: usize) {
        self.functions.insert(Arc::from(name), arity);
    }

    pub fn declare_pred(&mut self, name: &str, arity: usize) {
        self.predicates.insert(Arc::from(name), arity);
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.clauses.iter().flat_map(HornClause::terms)
    }

    /// Adds every symbol used by the clauses to the signature, keeping
    /// existing declarations.
    pub fn declare_used_symbols(&mut self) {
        let mut funs = Vec::new();
        let mut preds = Vec::new();
        for c in &self.clauses {
            for a in c.atoms() {
                preds.push((a.pred.clone(), a.args.len()));
                for t in &a.args {
                    t.walk(&mut |s| {
                        if let Term::App(f, args) = s {
                            funs.push((f.clone(), args.len()));
                        }
                    });
                }
            }
        }
        for (f, n) in funs {
            self.functions.entry(f).or_insert(n);
        }
        for (p, n) in preds {
            self.predicates.entry(p).or_insert(n);
        }
    }
}

/// Textual rendering in the input format; `parse_theory` reads it back.
impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, arity) in &self.functions {
            if *arity == 0 {
                writeln!(f, "const {name}.")?;
            } else {
                writeln!(f, "fun {name}/{arity}.")?;
            }
        }
        for (name, arity) in &self.predicates {
            if &**name != INTRUDER || *arity != 1 {
                writeln!(f, "pred {name}/{arity}.")?;
            }
        }
        for c in &self.clauses {
            if !c.exempt_vars.is_empty() {
                let names: Vec<&str> = c.exempt_vars.iter().map(|v| &**v).collect();
                writeln!(f, "exempt {}.", names.join(", "))?;
            }
            writeln!(f, "[{}] {c}.", c.role.tag())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Secrecy {
        goal: Atom,
    },
    Correspondence {
        end: Atom,
        begin: Atom,
        fixed_begins: Vec<Atom>,
        goal: Atom,
    },
}

impl Query {
    pub fn goal(&self) -> &Atom {
        match self {
            Query::Secrecy { goal } | Query::Correspondence { goal, .. } => goal,
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Secrecy { goal } if goal.is_intruder() => write!(f, "query secret {}.", goal.args[0]),
            Query::Secrecy { goal } => write!(f, "query secret {goal}."),
            Query::Correspondence { end, begin, fixed_begins, goal } => {
                write!(f, "query corresp {end} ~> {begin} given {{")?;
                for (i, b) in fixed_begins.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, " {b}")?;
                }
                if !fixed_begins.is_empty() {
                    write!(f, " ")?;
                }
                write!(f, "}} goal {goal}.")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    Syntax,
    UnknownSymbol,
    Arity,
    VariableCondition,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::UnknownSymbol => "unknown symbol",
            DiagnosticKind::Arity => "arity mismatch",
            DiagnosticKind::VariableCondition => "variable condition",
        };
        write!(f, "{}:{}: {kind}: {}", self.line, self.column, self.message)
    }
}

/// Checks the clause invariants of a theory. Diagnostics produced here carry
/// no source position (line and column are 0) unless `positions` supplies the
/// starting position of each clause.
pub fn validate(theory: &Theory) -> Vec<Diagnostic> {
    validate_with_positions(theory, &[])
}

pub(crate) fn validate_with_positions(theory: &Theory, positions: &[(usize, usize)]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, c) in theory.clauses.iter().enumerate() {
        let (line, column) = positions.get(i).copied().unwrap_or((0, 0));
        let mut push = |kind, message: String| out.push(Diagnostic { line, column, kind, message });
        for a in c.atoms() {
            match theory.predicates.get(&a.pred) {
                None => push(DiagnosticKind::UnknownSymbol, format!("predicate `{}` is not declared", a.pred)),
                Some(&n) if n != a.args.len() => push(
                    DiagnosticKind::Arity,
                    format!("predicate `{}` declared with arity {n}, used with {}", a.pred, a.args.len()),
                ),
                _ => {}
            }
            for t in &a.args {
                t.walk(&mut |s| {
                    if let Term::App(f, args) = s {
                        match theory.functions.get(f) {
                            None => push(DiagnosticKind::UnknownSymbol, format!("function `{f}` is not declared")),
                            Some(&n) if n != args.len() => push(
                                DiagnosticKind::Arity,
                                format!("function `{f}` declared with arity {n}, used with {}", args.len()),
                            ),
                            _ => {}
                        }
                    }
                });
            }
        }
        let unbound = c.unbound_conclusion_vars();
        if !unbound.is_empty() {
            let names: Vec<&str> = unbound.iter().map(|v| &**v).collect();
            push(
                DiagnosticKind::VariableCondition,
                format!("conclusion variable(s) {} do not occur in a premise and are not exempt", names.join(", ")),
            );
        }
    }
    out
}
