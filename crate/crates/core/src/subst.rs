use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::term::{Sym, Term};

/// Finite map from variables to terms. Application is simultaneous.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    bindings: BTreeMap<Sym, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(var: Sym, value: Term) -> Self {
        let mut s = Self::new();
        s.bindings.insert(var, value);
        s
    }

    pub fn from_pairs<I: IntoIterator<Item = (Sym, Term)>>(pairs: I) -> Self {
        Self { bindings: pairs.into_iter().collect() }
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    pub fn insert(&mut self, var: Sym, value: Term) {
        self.bindings.insert(var, value);
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Sym> {
        self.bindings.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &Term)> {
        self.bindings.iter()
    }

    pub fn apply(&self, t: &Term) -> Term {
        if self.bindings.is_empty() {
            return t.clone();
        }
        match t {
            Term::Var(v) => self.bindings.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Zero => Term::Zero,
            Term::Xor(l, r) => Term::xor(self.apply(l), self.apply(r)),
            Term::App(f, args) => {
                if args.is_empty() {
                    return t.clone();
                }
                Term::App(f.clone(), args.iter().map(|a| self.apply(a)).collect::<Arc<[Term]>>())
            }
        }
    }

    /// `self` followed by `other`: `x ↦ (self(x))other`, plus the bindings of
    /// `other` for variables outside `dom(self)`.
    pub fn then(&self, other: &Substitution) -> Substitution {
        let mut out = other.clone();
        for (v, t) in &self.bindings {
            out.bindings.insert(v.clone(), other.apply(t));
        }
        out
    }

    /// The `⊔` merge: union when the two agree on their common domain.
    pub fn merge(&self, other: &Substitution) -> Option<Substitution> {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        let mut out = large.clone();
        for (v, t) in &small.bindings {
            match out.bindings.get(v) {
                Some(existing) if existing != t => return None,
                Some(_) => {}
                None => {
                    out.bindings.insert(v.clone(), t.clone());
                }
            }
        }
        Some(out)
    }

    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a Sym>) -> Substitution {
        let mut out = Substitution::new();
        for v in vars {
            if let Some(t) = self.bindings.get(v) {
                out.bindings.insert(v.clone(), t.clone());
            }
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(&Term) -> Term) -> Substitution {
        Substitution {
            bindings: self.bindings.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
        }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v} -> {t}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_is_simultaneous() {
        // c ⊕ X with X ↦ d ⊕ m
        let x = Term::var("X");
        let t = Term::xor(Term::constant("c"), x);
        let s = Substitution::singleton(
            Arc::from("X"),
            Term::xor(Term::constant("d"), Term::constant("m")),
        );
        assert_eq!(
            s.apply(&t),
            Term::xor(Term::constant("c"), Term::xor(Term::constant("d"), Term::constant("m")))
        );
        let swap = Substitution::from_pairs([
            (Arc::from("X"), Term::var("Y")),
            (Arc::from("Y"), Term::var("X")),
        ]);
        let p = Term::app("pair", vec![Term::var("X"), Term::var("Y")]);
        assert_eq!(swap.apply(&p), Term::app("pair", vec![Term::var("Y"), Term::var("X")]));
    }

    #[test]
    fn merge_conflict() {
        let a = Substitution::singleton(Arc::from("X"), Term::constant("a"));
        let b = Substitution::singleton(Arc::from("X"), Term::constant("b"));
        assert!(a.merge(&b).is_none());
        assert_eq!(a.merge(&a), Some(a.clone()));
    }
}
