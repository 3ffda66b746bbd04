//! XOR-linearity, dominating sets and their closures.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::normal::normal_form;
use crate::term::{xor_reduce, Term};
use crate::theory::{HornClause, Theory};

pub const DEFAULT_CLOSURE_CAP: usize = 12;

/// Ordered set `C` of standard, xor-reduced ground terms. List position is
/// the order used when building normal forms.
#[derive(Clone)]
pub struct CSet {
    elements: Vec<Term>,
    normalized: Vec<Term>,
    index: HashMap<Term, usize>,
    cap: usize,
    closure: OnceLock<Vec<Term>>,
}

impl CSet {
    /// Builds a set from the given terms, reducing each and dropping later
    /// duplicates modulo XOR. Fails on non-ground or non-standard elements.
    pub fn new(elements: Vec<Term>) -> Result<CSet> {
        let mut kept: Vec<Term> = Vec::new();
        for e in elements {
            let r = xor_reduce(&e);
            if !r.is_ground() || !r.is_standard() {
                return Err(Error::Precondition(format!("`{e}` is not a standard ground term")));
            }
            if !kept.contains(&r) {
                kept.push(r);
            }
        }
        let n = kept.len();
        let mut set = CSet {
            elements: kept,
            normalized: vec![Term::Zero; n],
            index: HashMap::new(),
            cap: DEFAULT_CLOSURE_CAP,
            closure: OnceLock::new(),
        };
        // A proper subterm is strictly smaller than its host, so normalizing
        // in size order only ever consults entries that are already present.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| set.elements[i].size());
        for i in order {
            let nf = normal_form(&set.elements[i], &set);
            set.index.insert(nf.clone(), i);
            set.normalized[i] = nf;
        }
        Ok(set)
    }

    pub fn empty() -> CSet {
        CSet::new(Vec::new()).expect("empty set is valid")
    }

    pub fn with_cap(mut self, cap: usize) -> CSet {
        self.cap = cap;
        self.closure = OnceLock::new();
        self
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Term] {
        &self.elements
    }

    /// `⌈c⌉` for each element, in order.
    pub fn normalized_elements(&self) -> &[Term] {
        &self.normalized
    }

    /// Position of a normalized standard term among the elements.
    pub fn position(&self, normalized: &Term) -> Option<usize> {
        self.index.get(normalized).copied()
    }

    /// Normalized sum of the elements selected by `mask`.
    pub fn chain(&self, mask: u64) -> Term {
        Term::xor_chain(
            (0..self.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| self.normalized[i].clone())
                .collect(),
        )
    }

    /// For a term in normal form, the element mask if it lies in the closure.
    pub fn mask_of(&self, normalized: &Term) -> Option<u64> {
        let mut mask = 0u64;
        for s in normalized.summands() {
            let i = self.position(s)?;
            mask ^= 1 << i;
        }
        Some(mask)
    }

    /// `⌈C⊕⌉`, ordered by element mask (so `0` comes first).
    pub fn closure_norm(&self) -> Result<&[Term]> {
        if self.len() > self.cap || self.len() >= 63 {
            return Err(Error::ClosureCap { size: self.len(), cap: self.cap });
        }
        Ok(self.closure.get_or_init(|| (0..1u64 << self.len()).map(|m| self.chain(m)).collect()))
    }
}

impl PartialEq for CSet {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl Eq for CSet {}

impl fmt::Display for CSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.elements.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for CSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CSet{self}")
    }
}

/// `enumerate_cc_norm`: the normalized closure as an owned list.
pub fn enumerate_cc_norm(c: &CSet) -> Result<Vec<Term>> {
    c.closure_norm().map(<[Term]>::to_vec)
}

/// Offending subterm, with the clause it came from when checking a theory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub clause: Option<usize>,
    pub term: Term,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.clause {
            Some(i) => write!(f, "clause #{i}: {}", self.term),
            None => write!(f, "{}", self.term),
        }
    }
}

fn first_xor_node(t: &Term, bad: &impl Fn(&Term, &Term) -> bool) -> Option<Term> {
    let mut found = None;
    t.walk(&mut |s| {
        if found.is_none() {
            if let Term::Xor(l, r) = s {
                if bad(l, r) {
                    found = Some(s.clone());
                }
            }
        }
    });
    found
}

pub fn linearity_witness(t: &Term) -> Option<Term> {
    first_xor_node(t, &|l, r| !l.is_ground() && !r.is_ground())
}

pub fn is_xor_linear(t: &Term) -> bool {
    linearity_witness(t).is_none()
}

pub fn clause_linearity_witness(clause: &HornClause) -> Option<Term> {
    clause.terms().find_map(linearity_witness)
}

/// The implicit xor rule is never stored, so every clause is checked.
pub fn theory_linearity_witness(theory: &Theory) -> Option<Witness> {
    theory.clauses.iter().enumerate().find_map(|(i, cl)| {
        clause_linearity_witness(cl).map(|term| Witness { clause: Some(i), term })
    })
}

pub fn in_xor_closure(t: &Term, c: &CSet) -> bool {
    matches!(t, Term::Zero) || c.mask_of(&normal_form(t, c)).is_some()
}

/// Standard summands of the normal form that are neither in `C~` nor
/// cancelled. Variables count as such summands.
fn foreign_summands(t: &Term, c: &CSet) -> usize {
    normal_form(t, c).summands().into_iter().filter(|s| c.position(s).is_none()).count()
}

pub fn is_bad(t: &Term, c: &CSet) -> bool {
    !t.is_standard() && foreign_summands(t, c) > 1
}

pub fn domination_witness(t: &Term, c: &CSet) -> Option<Term> {
    first_xor_node(t, &|l, r| !in_xor_closure(l, c) && !in_xor_closure(r, c))
}

pub fn is_c_dominated(t: &Term, c: &CSet) -> bool {
    domination_witness(t, c).is_none()
}

pub fn clause_domination_witness(clause: &HornClause, c: &CSet) -> Option<Term> {
    clause.terms().find_map(|t| domination_witness(t, c))
}

pub fn is_clause_dominated(clause: &HornClause, c: &CSet) -> bool {
    clause_domination_witness(clause, c).is_none()
}

pub fn theory_domination_witness(theory: &Theory, c: &CSet) -> Option<Witness> {
    theory.clauses.iter().enumerate().find_map(|(i, cl)| {
        clause_domination_witness(cl, c).map(|term| Witness { clause: Some(i), term })
    })
}

pub fn is_theory_dominated(theory: &Theory, c: &CSet) -> bool {
    theory_domination_witness(theory, c).is_none()
}

/// Candidate elements: for every `⊕` node, the reduced summands of a ground
/// side (the smaller one when both are ground).
fn candidates(t: &Term, out: &mut BTreeSet<Term>) {
    t.walk(&mut |s| {
        if let Term::Xor(l, r) = s {
            let side = match (l.is_ground(), r.is_ground()) {
                (true, true) if r.size() < l.size() => Some(r),
                (true, _) => Some(l),
                (false, true) => Some(r),
                (false, false) => None,
            };
            if let Some(side) = side {
                out.extend(xor_reduce(side).summands().into_iter().cloned());
            }
        }
    });
}

/// A dominating set for an xor-linear theory, with elements greedily dropped
/// while domination still holds. The order is the canonical term order.
pub fn compute_c_set(theory: &Theory) -> Result<CSet> {
    if let Some(w) = theory_linearity_witness(theory) {
        return Err(Error::NotXorLinear(w.to_string()));
    }
    let mut pool = BTreeSet::new();
    for t in theory.terms() {
        candidates(t, &mut pool);
    }
    let mut elems: Vec<Term> = pool.into_iter().collect();
    let mut i = elems.len();
    while i > 0 {
        i -= 1;
        let mut trial = elems.clone();
        trial.remove(i);
        if is_theory_dominated(theory, &CSet::new(trial.clone())?) {
            elems = trial;
        }
    }
    let c = CSet::new(elems)?;
    debug_assert!(is_theory_dominated(theory, &c));
    Ok(c)
}

/// Like [`compute_c_set`] but for a single term.
pub fn compute_c_set_for_term(t: &Term) -> Result<CSet> {
    let mut theory = Theory::new();
    theory.clauses.push(HornClause::fact(crate::theory::Atom::intruder(t.clone())));
    compute_c_set(&theory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(n: &str) -> Term {
        Term::constant(n)
    }

    fn pair(a: Term, b: Term) -> Term {
        Term::app("pair", vec![a, b])
    }

    fn cs(names: &[&str]) -> CSet {
        CSet::new(names.iter().map(|n| k(n)).collect()).unwrap()
    }

    fn t1() -> Term {
        // ⟨a, a ⊕ ⟨x, y⟩⟩
        pair(k("a"), Term::xor(k("a"), pair(Term::var("X"), Term::var("Y"))))
    }

    fn t2() -> Term {
        // ⟨a, a ⊕ ⟨x, y⟩ ⊕ z⟩
        pair(k("a"), Term::xor(Term::xor(k("a"), pair(Term::var("X"), Term::var("Y"))), Term::var("Z")))
    }

    #[test]
    fn linearity_examples() {
        assert!(is_xor_linear(&t1()));
        let w = linearity_witness(&t2()).unwrap();
        assert_eq!(w, Term::xor(Term::xor(k("a"), pair(Term::var("X"), Term::var("Y"))), Term::var("Z")));
        assert!(is_xor_linear(&pair(Term::var("X"), k("a"))));
    }

    #[test]
    fn domination_examples() {
        assert!(is_c_dominated(&t1(), &cs(&["a"])));
        assert!(!is_c_dominated(&t1(), &cs(&["b"])));
        assert!(!is_c_dominated(&t2(), &cs(&["a"])));
    }

    #[test]
    fn closure_membership() {
        let c = cs(&["a", "b"]);
        assert!(in_xor_closure(&Term::Zero, &c));
        assert!(in_xor_closure(&Term::xor(k("a"), k("b")), &c));
        assert!(!in_xor_closure(&Term::xor(k("a"), k("m")), &c));
        assert!(in_xor_closure(&Term::xor(Term::xor(k("b"), k("a")), k("a")), &c));
        assert!(in_xor_closure(&Term::Zero, &CSet::empty()));
    }

    #[test]
    fn badness() {
        let c = cs(&["a", "b"]);
        assert!(is_bad(&Term::xor(k("m1"), k("m2")), &c));
        assert!(!is_bad(&Term::xor(k("a"), k("m")), &c));
        assert!(!is_bad(&Term::xor(k("a"), k("b")), &c));
        assert!(is_bad(&Term::xor(Term::var("X"), Term::var("Y")), &c));
        assert!(!is_bad(&k("m"), &c));
    }

    #[test]
    fn closure_enumeration() {
        let c = cs(&["a", "b"]);
        let cl = enumerate_cc_norm(&c).unwrap();
        assert_eq!(
            cl,
            vec![Term::Zero, k("a"), k("b"), Term::xor(k("a"), k("b"))]
        );
        assert_eq!(enumerate_cc_norm(&CSet::empty()).unwrap(), vec![Term::Zero]);
        assert_eq!(enumerate_cc_norm(&cs(&["a", "b", "c"])).unwrap().len(), 8);
        let capped = cs(&["a", "b", "c"]).with_cap(2);
        assert!(matches!(capped.closure_norm(), Err(Error::ClosureCap { size: 3, cap: 2 })));
    }

    #[test]
    fn duplicates_and_invalid_elements() {
        let c = CSet::new(vec![k("a"), Term::xor(Term::xor(k("a"), k("b")), k("b"))]).unwrap();
        assert_eq!(c.len(), 1);
        assert!(CSet::new(vec![Term::var("X")]).is_err());
        assert!(CSet::new(vec![Term::xor(k("a"), k("b"))]).is_err());
    }

    #[test]
    fn compute_for_terms() {
        assert_eq!(compute_c_set_for_term(&t1()).unwrap(), cs(&["a"]));
        assert!(compute_c_set_for_term(&t2()).is_err());
        assert!(compute_c_set_for_term(&pair(k("a"), Term::var("X"))).unwrap().is_empty());
        // x ⊕ a ⊕ a: the inner node still needs `a`
        let t = Term::xor(Term::xor(Term::var("X"), k("a")), k("a"));
        let c = compute_c_set_for_term(&t).unwrap();
        assert!(is_c_dominated(&t, &c));
    }
}
