//! Construction of the XOR-free theory `T⁺`.

use std::collections::HashSet;
use std::fmt;

use crate::domination::{theory_domination_witness, CSet};
use crate::error::{Error, Result};
use crate::normal::{fsub_terms, normal_form};
use crate::subst::Substitution;
use crate::term::Term;
use crate::theory::{Atom, HornClause, Role, Theory};

/// Where a clause of `T⁺` comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Family (1): instance of source clause `clause` under `sigma`.
    Source { clause: usize, sigma: Substitution },
    /// Families (2) to (5). `c2` is `0` for family (3).
    Family { family: u8, c: Term, c2: Term },
}

impl Origin {
    pub fn family(&self) -> u8 {
        match self {
            Origin::Source { .. } => 1,
            Origin::Family { family, .. } => *family,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Source { clause, sigma } => write!(f, "(1) source #{clause} with {sigma}"),
            Origin::Family { family, c, c2 } => write!(f, "({family}) c = {c}, c' = {c2}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReducedTheory {
    /// `T⁺` itself; the implicit xor rule is switched off.
    pub theory: Theory,
    /// One entry per clause of `theory`.
    pub origins: Vec<Origin>,
    pub c_set: CSet,
    /// Size of the substitution family for each source clause.
    pub fanout: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReduceStats {
    /// Clause counts for families (1) to (5).
    pub clauses_per_family: [usize; 5],
    pub closure_size: usize,
    pub source_clause_fanout: Vec<usize>,
}

impl ReducedTheory {
    pub fn clauses_of_family(&self, family: u8) -> impl Iterator<Item = (usize, &HornClause)> {
        self.theory
            .clauses
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.origins[*i].family() == family)
    }
}

pub fn reduce_stats(rt: &ReducedTheory) -> ReduceStats {
    let mut per = [0usize; 5];
    for o in &rt.origins {
        per[o.family() as usize - 1] += 1;
    }
    ReduceStats {
        clauses_per_family: per,
        closure_size: rt.c_set.closure_norm().map(|c| c.len()).unwrap_or(0),
        source_clause_fanout: rt.fanout.clone(),
    }
}

pub const XOR_VAR: &str = "X";

/// `c ⊕ x`, reading `0 ⊕ x` as `x`.
fn plus(c: &Term, x: &Term) -> Term {
    if *c == Term::Zero {
        x.clone()
    } else {
        Term::xor(c.clone(), x.clone())
    }
}

struct Builder {
    clauses: Vec<HornClause>,
    origins: Vec<Origin>,
    seen: HashSet<(Vec<Atom>, Atom)>,
}

impl Builder {
    fn push(&mut self, clause: HornClause, origin: Origin) {
        if clause.premises.contains(&clause.conclusion) {
            return;
        }
        if self.seen.insert((clause.premises.clone(), clause.conclusion.clone())) {
            self.clauses.push(clause);
            self.origins.push(origin);
        }
    }
}

/// Builds `T⁺` from a `C`-dominated theory.
pub fn build_t_plus(theory: &Theory, c: &CSet) -> Result<ReducedTheory> {
    if let Some(w) = theory_domination_witness(theory, c) {
        return Err(Error::NotDominated(w.to_string()));
    }
    let closure = c.closure_norm()?.to_vec();
    let mut b = Builder { clauses: Vec::new(), origins: Vec::new(), seen: HashSet::new() };
    let mut fanout = Vec::with_capacity(theory.clauses.len());
    for (i, clause) in theory.clauses.iter().enumerate() {
        let tuple: Vec<Term> = clause.terms().cloned().collect();
        let family = fsub_terms(&tuple, c, &clause.exempt_vars)?;
        fanout.push(family.len());
        for sigma in family {
            let inst = clause.map_terms(|t| normal_form(&sigma.apply(t), c));
            b.push(inst, Origin::Source { clause: i, sigma });
        }
    }

    let x = Term::var(XOR_VAR);
    let i = |t: Term| Atom::intruder(t);
    let rule = |prem: Vec<Atom>, concl: Atom| HornClause::new(prem, concl, Role::IntruderRule);
    let sum = |p: &Term, q: &Term| normal_form(&Term::xor(p.clone(), q.clone()), c);
    for c1 in &closure {
        for c2 in &closure {
            b.push(
                rule(vec![i(c1.clone()), i(c2.clone())], i(sum(c1, c2))),
                Origin::Family { family: 2, c: c1.clone(), c2: c2.clone() },
            );
        }
    }
    for c1 in &closure {
        b.push(
            rule(vec![i(c1.clone()), i(x.clone())], i(plus(c1, &x))),
            Origin::Family { family: 3, c: c1.clone(), c2: Term::Zero },
        );
    }
    for c1 in &closure {
        for c2 in &closure {
            b.push(
                rule(vec![i(c1.clone()), i(plus(c2, &x))], i(plus(&sum(c1, c2), &x))),
                Origin::Family { family: 4, c: c1.clone(), c2: c2.clone() },
            );
        }
    }
    for c1 in &closure {
        for c2 in &closure {
            b.push(
                rule(vec![i(plus(c1, &x)), i(plus(c2, &x))], i(sum(c1, c2))),
                Origin::Family { family: 5, c: c1.clone(), c2: c2.clone() },
            );
        }
    }

    let mut out = theory.clone();
    out.xor_rule_implicit = false;
    out.clauses = b.clauses;
    Ok(ReducedTheory { theory: out, origins: b.origins, c_set: c.clone(), fanout })
}
