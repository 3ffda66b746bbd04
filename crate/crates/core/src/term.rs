//! Terms over a free signature extended with binary `⊕` and the constant `0`.
//!
//! Terms are immutable and cheap to clone: argument lists and `⊕` children are
//! reference counted, so substitution and normalization share unchanged
//! subtrees.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Interned-ish symbol name. Cloning is a reference-count bump.
pub type Sym = Arc<str>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Sym),
    Zero,
    Xor(Arc<Term>, Arc<Term>),
    App(Sym, Arc<[Term]>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Arc::from(name))
    }

    pub fn constant(name: &str) -> Term {
        Term::App(Arc::from(name), Arc::from(Vec::new()))
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(Arc::from(name), Arc::from(args))
    }

    pub fn app_sym(sym: Sym, args: Vec<Term>) -> Term {
        Term::App(sym, Arc::from(args))
    }

    pub fn xor(left: Term, right: Term) -> Term {
        Term::Xor(Arc::new(left), Arc::new(right))
    }

    /// Right-associated sum `t1 ⊕ (t2 ⊕ (… ⊕ tn))`; `0` for an empty list.
    pub fn xor_chain(mut summands: Vec<Term>) -> Term {
        let mut acc = match summands.pop() {
            None => return Term::Zero,
            Some(last) => last,
        };
        while let Some(next) = summands.pop() {
            acc = Term::xor(next, acc);
        }
        acc
    }

    /// A term is standard when its top symbol is not `⊕`. `0` counts as
    /// non-standard: it only ever arises as the empty sum.
    pub fn is_standard(&self) -> bool {
        !matches!(self, Term::Xor(..) | Term::Zero)
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Zero => true,
            Term::Xor(l, r) => l.is_ground() && r.is_ground(),
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Sym>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Zero => {}
            Term::Xor(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Term::Var(v) => &**v == name,
            Term::Zero => false,
            Term::Xor(l, r) => l.contains_var(name) || r.contains_var(name),
            Term::App(_, args) => args.iter().any(|a| a.contains_var(name)),
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Zero => 1,
            Term::Xor(l, r) => 1 + l.size() + r.size(),
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }

    pub fn has_xor(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Zero | Term::Xor(..) => true,
            Term::App(_, args) => args.iter().any(Term::has_xor),
        }
    }

    /// All subterm occurrences in pre-order, the term itself first.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        self.walk(&mut |t| out.push(t));
        out
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        match self {
            Term::Var(_) | Term::Zero => {}
            Term::Xor(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Term::App(_, args) => args.iter().for_each(|a| a.walk(f)),
        }
    }

    /// Flattens nested `⊕` nodes into their summands (syntactically, without
    /// cancellation). `0` contributes nothing; a standard term is its own
    /// single summand.
    pub fn summands(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        self.push_summands(&mut out);
        out
    }

    fn push_summands<'a>(&'a self, out: &mut Vec<&'a Term>) {
        match self {
            Term::Zero => {}
            Term::Xor(l, r) => {
                l.push_summands(out);
                r.push_summands(out);
            }
            other => out.push(other),
        }
    }

    /// Complete non-standard subterms: the term itself if it is a sum, plus
    /// every sum occurring as a direct argument of a standard term.
    pub fn complete_nonstandard_subterms(&self) -> BTreeSet<Term> {
        fn go(t: &Term, complete: bool, out: &mut BTreeSet<Term>) {
            match t {
                Term::Var(_) => {}
                Term::Zero => {
                    if complete {
                        out.insert(t.clone());
                    }
                }
                Term::Xor(l, r) => {
                    if complete {
                        out.insert(t.clone());
                    }
                    go(l, false, out);
                    go(r, false, out);
                }
                Term::App(_, args) => args.iter().for_each(|a| go(a, true, out)),
            }
        }
        let mut out = BTreeSet::new();
        go(self, true, &mut out);
        out
    }

    fn rank(&self) -> u8 {
        match self {
            Term::Zero => 0,
            Term::Var(_) => 1,
            Term::App(..) => 2,
            Term::Xor(..) => 3,
        }
    }
}

/// Fixed total order: `0` < variables < applications < sums. Applications
/// compare by symbol name, then arity, then arguments left to right.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Term::Zero, Term::Zero) => Ordering::Equal,
            (Term::Var(a), Term::Var(b)) => a.cmp(b),
            (Term::App(f, xs), Term::App(g, ys)) => f
                .cmp(g)
                .then(xs.len().cmp(&ys.len()))
                .then_with(|| xs.iter().cmp(ys.iter())),
            (Term::Xor(l1, r1), Term::Xor(l2, r2)) => l1.cmp(l2).then_with(|| r1.cmp(r2)),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Zero => write!(f, "0"),
            Term::Xor(l, r) => {
                write_xor_side(f, l)?;
                write!(f, " + ")?;
                write_xor_side(f, r)
            }
            Term::App(name, args) => {
                write!(f, "{name}")?;
                if !args.is_empty() {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

fn write_xor_side(f: &mut fmt::Formatter<'_>, t: &Term) -> fmt::Result {
    if matches!(t, Term::Xor(..)) {
        write!(f, "({t})")
    } else {
        write!(f, "{t}")
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// The xor-reduced form of `t`: summands are recursively reduced, cancelled
/// pairwise, sorted by the total term order and right-associated. Two terms
/// are equal modulo XOR exactly when their reduced forms are identical.
pub fn xor_reduce(t: &Term) -> Term {
    match t {
        Term::Var(_) | Term::Zero => t.clone(),
        Term::App(f, args) => {
            if !t.has_xor() {
                return t.clone();
            }
            Term::App(f.clone(), args.iter().map(xor_reduce).collect())
        }
        Term::Xor(..) => {
            let reduced: Vec<Term> = t.summands().into_iter().map(xor_reduce).collect();
            Term::xor_chain(cancel_pairs(flatten_owned(reduced)))
        }
    }
}

/// Flattens already-reduced summands (a reduced summand may itself be a sum
/// or `0` after cancellation inside it).
pub(crate) fn flatten_owned(terms: Vec<Term>) -> Vec<Term> {
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        match t {
            Term::Zero => {}
            Term::Xor(..) => out.extend(t.summands().into_iter().cloned()),
            other => out.push(other),
        }
    }
    out
}

/// Sorts and removes equal pairs (`x ⊕ x = 0`).
pub(crate) fn cancel_pairs(mut terms: Vec<Term>) -> Vec<Term> {
    terms.sort();
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        if out.last() == Some(&t) {
            out.pop();
        } else {
            out.push(t);
        }
    }
    out
}

pub fn equiv_mod_xor(t: &Term, s: &Term) -> bool {
    t == s || xor_reduce(t) == xor_reduce(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n: &str) -> Term {
        Term::constant(n)
    }

    #[test]
    fn running_example_reduction() {
        // a ⊕ b ⊕ enc(k,0) ⊕ b ⊕ enc(k, c ⊕ c) ~ a
        let enc0 = Term::app("enc", vec![c("k"), Term::Zero]);
        let enccc = Term::app("enc", vec![c("k"), Term::xor(c("c"), c("c"))]);
        let t = Term::xor(
            Term::xor(Term::xor(Term::xor(c("a"), c("b")), enc0), c("b")),
            enccc,
        );
        assert_eq!(xor_reduce(&t), c("a"));
        assert!(equiv_mod_xor(&t, &c("a")));
    }

    #[test]
    fn zero_unit_and_ordering() {
        let x = Term::var("X");
        assert_eq!(xor_reduce(&Term::xor(x.clone(), Term::Zero)), x);
        let t = Term::xor(Term::xor(c("a"), c("b")), Term::xor(c("b"), c("c")));
        assert_eq!(xor_reduce(&t), Term::xor(c("a"), c("c")));
        assert!(equiv_mod_xor(&Term::xor(c("a"), c("b")), &Term::xor(c("b"), c("a"))));
        assert!(!equiv_mod_xor(&Term::xor(c("a"), c("b")), &c("a")));
    }

    #[test]
    fn standardness() {
        let pair = Term::app("pair", vec![c("a"), Term::xor(c("b"), c("a"))]);
        assert!(pair.is_standard());
        assert!(!Term::xor(c("b"), c("a")).is_standard());
        assert!(Term::var("X").is_standard());
        assert!(!Term::Zero.is_standard());
    }

    #[test]
    fn complete_nonstandard() {
        // <a ⊕ enc((x⊕y)⊕z, y), b>
        let (x, y, z) = (Term::var("X"), Term::var("Y"), Term::var("Z"));
        let inner = Term::xor(Term::xor(x, y.clone()), z);
        let e = Term::app("enc", vec![inner.clone(), y]);
        let s = Term::xor(c("a"), e);
        let t = Term::app("pair", vec![s.clone(), c("b")]);
        let got = t.complete_nonstandard_subterms();
        assert_eq!(got, [s, inner].into_iter().collect());
        assert!(Term::app("f", vec![c("a")]).complete_nonstandard_subterms().is_empty());
        let ab = Term::xor(c("a"), c("b"));
        assert_eq!(ab.complete_nonstandard_subterms(), [ab.clone()].into_iter().collect());
    }

    #[test]
    fn vars_and_ground() {
        let t = Term::app("pair", vec![Term::var("X"), Term::xor(c("a"), Term::var("Y"))]);
        let vs: Vec<String> = t.vars().iter().map(|s| s.to_string()).collect();
        assert_eq!(vs, vec!["X", "Y"]);
        assert!(Term::xor(c("a"), c("b")).is_ground());
        assert!(!t.is_ground());
    }
}
