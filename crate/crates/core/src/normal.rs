//! Normal forms relative to a dominating set, matching modulo XOR, fragile
//! subterms and the finite substitution family used by the reduction.

use std::collections::BTreeSet;

use crate::domination::{in_xor_closure, CSet};
use crate::error::Result;
use crate::subst::Substitution;
use crate::term::{cancel_pairs, Sym, Term};

/// `⌈t⌉`. Summands are normalized and cancelled; the members of `C~` are
/// chained in set order and come first, the remaining summands follow in the
/// global term order. Total on all terms and canonical: two terms get the
/// same normal form exactly when they are equal modulo XOR.
pub fn normal_form(t: &Term, c: &CSet) -> Term {
    match t {
        Term::Var(_) | Term::Zero => t.clone(),
        Term::App(f, args) => {
            if !t.has_xor() {
                return t.clone();
            }
            Term::App(f.clone(), args.iter().map(|a| normal_form(a, c)).collect())
        }
        Term::Xor(..) => {
            let leaves: Vec<Term> = t.summands().into_iter().map(|s| normal_form(s, c)).collect();
            let leaves = cancel_pairs(leaves);
            let mut cpart: Vec<(usize, Term)> = Vec::new();
            let mut rest: Vec<Term> = Vec::new();
            for leaf in leaves {
                match c.position(&leaf) {
                    Some(i) => cpart.push((i, leaf)),
                    None => rest.push(leaf),
                }
            }
            cpart.sort_by_key(|(i, _)| *i);
            let cp = Term::xor_chain(cpart.into_iter().map(|(_, t)| t).collect());
            let rp = Term::xor_chain(rest);
            match (cp, rp) {
                (Term::Zero, r) => r,
                (l, Term::Zero) => l,
                (l, r) => Term::xor(l, r),
            }
        }
    }
}

pub fn is_normal(t: &Term, c: &CSet) -> bool {
    normal_form(t, c) == *t
}

/// The matcher of `pattern` against ground `target` modulo XOR, in normal
/// form. Complete and unique for patterns where every sum has at most one
/// non-ground summand; returns `None` on other sums.
pub fn match_mod_xor(pattern: &Term, target: &Term, c: &CSet) -> Option<Substitution> {
    let s = normal_form(pattern, c);
    let t = normal_form(target, c);
    match_normal(&s, &t, c)
}

/// Same as [`match_mod_xor`] for arguments already in normal form.
pub fn match_normal(s: &Term, t: &Term, c: &CSet) -> Option<Substitution> {
    match s {
        Term::Var(x) => Some(Substitution::singleton(x.clone(), t.clone())),
        _ if s.is_ground() => (s == t).then(Substitution::new),
        Term::Xor(..) => {
            let (ground, open): (Vec<&Term>, Vec<&Term>) = s.summands().into_iter().partition(|x| x.is_ground());
            if open.len() != 1 {
                return None;
            }
            let g = Term::xor_chain(ground.into_iter().cloned().collect());
            let shifted = normal_form(&Term::xor(g, t.clone()), c);
            match_normal(open[0], &shifted, c)
        }
        Term::App(f, args) => match t {
            Term::App(g, targs) if f == g && args.len() == targs.len() => {
                let mut acc = Substitution::new();
                for (a, b) in args.iter().zip(targs.iter()) {
                    acc = acc.merge(&match_normal(a, b, c)?)?;
                }
                Some(acc)
            }
            _ => None,
        },
        Term::Zero => unreachable!("zero is ground"),
    }
}

/// Outcome of [`match_all`]: every matcher found, and whether the list is
/// known to be complete.
#[derive(Clone, Debug, Default)]
pub struct Matches {
    pub substitutions: Vec<Substitution>,
    pub complete: bool,
}

/// Matchers of a pattern that may contain sums with several non-ground
/// summands. Such sums are matched by splitting the target's summands among
/// the open summands, which only finds matchers that do not introduce fresh
/// cancelling material; the result is then flagged incomplete. At most
/// `cap` matchers are returned.
pub fn match_all(pattern: &Term, target: &Term, c: &CSet, cap: usize) -> Matches {
    let s = normal_form(pattern, c);
    let t = normal_form(target, c);
    let mut out = Matches { substitutions: Vec::new(), complete: true };
    let mut seen = BTreeSet::new();
    for m in match_all_normal(&s, &t, c, cap, &mut out.complete) {
        if seen.insert(m.clone()) {
            out.substitutions.push(m);
        }
    }
    if out.substitutions.len() > cap {
        out.substitutions.truncate(cap);
        out.complete = false;
    }
    out
}

fn match_all_normal(s: &Term, t: &Term, c: &CSet, cap: usize, complete: &mut bool) -> Vec<Substitution> {
    match s {
        Term::Var(_) => match_normal(s, t, c).into_iter().collect(),
        _ if s.is_ground() => match_normal(s, t, c).into_iter().collect(),
        Term::Xor(..) => {
            let (ground, open): (Vec<&Term>, Vec<&Term>) = s.summands().into_iter().partition(|x| x.is_ground());
            let g = Term::xor_chain(ground.into_iter().cloned().collect());
            let shifted = normal_form(&Term::xor(g, t.clone()), c);
            if open.len() == 1 {
                return match_all_normal(open[0], &shifted, c, cap, complete);
            }
            *complete = false;
            let leaves: Vec<Term> = shifted.summands().into_iter().cloned().collect();
            let k = open.len();
            let total = (k as u128).checked_pow(leaves.len() as u32).unwrap_or(u128::MAX);
            let mut results = Vec::new();
            let mut assignment = vec![0usize; leaves.len()];
            let mut counter: u128 = 0;
            while counter < total && results.len() <= cap {
                let mut groups: Vec<Vec<Term>> = vec![Vec::new(); k];
                for (leaf, &g) in leaves.iter().zip(assignment.iter()) {
                    groups[g].push(leaf.clone());
                }
                let mut partial = vec![Substitution::new()];
                for (pat, group) in open.iter().zip(groups) {
                    let target = normal_form(&Term::xor_chain(group), c);
                    let ms = match_all_normal(pat, &target, c, cap, complete);
                    let mut next = Vec::new();
                    for p in &partial {
                        for m in &ms {
                            if let Some(merged) = p.merge(m) {
                                next.push(merged);
                            }
                        }
                    }
                    partial = next;
                    if partial.is_empty() {
                        break;
                    }
                }
                results.extend(partial);
                counter += 1;
                for slot in assignment.iter_mut() {
                    *slot += 1;
                    if *slot < k {
                        break;
                    }
                    *slot = 0;
                }
            }
            if counter < total {
                *complete = false;
            }
            results
        }
        Term::App(f, args) => match t {
            Term::App(g, targs) if f == g && args.len() == targs.len() => {
                let mut partial = vec![Substitution::new()];
                for (a, b) in args.iter().zip(targs.iter()) {
                    let ms = match_all_normal(a, b, c, cap, complete);
                    let mut next = Vec::new();
                    for p in &partial {
                        for m in &ms {
                            if let Some(merged) = p.merge(m) {
                                next.push(merged);
                            }
                        }
                    }
                    partial = next;
                    if partial.is_empty() {
                        break;
                    }
                    if partial.len() > cap {
                        partial.truncate(cap);
                        *complete = false;
                    }
                }
                partial
            }
            _ => Vec::new(),
        },
        Term::Zero => unreachable!("zero is ground"),
    }
}

fn is_open(t: &Term, exempt: &BTreeSet<Sym>) -> bool {
    let mut open = false;
    t.walk(&mut |s| {
        if let Term::Var(v) = s {
            if !exempt.contains(v) {
                open = true;
            }
        }
    });
    open
}

/// `frag(t)`: non-ground standard terms occurring directly under a `⊕`.
/// Exempt variables count as ground.
pub fn fragile_subterms(t: &Term, exempt: &BTreeSet<Sym>) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    t.walk(&mut |s| {
        if let Term::Xor(l, r) = s {
            for side in [l, r] {
                if side.is_standard() && is_open(side, exempt) {
                    out.insert((**side).clone());
                }
            }
        }
    });
    out
}

fn fragile_of_all<'a>(terms: impl IntoIterator<Item = &'a Term>, exempt: &BTreeSet<Sym>) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    for t in terms {
        out.extend(fragile_subterms(t, exempt));
    }
    out
}

fn fsub_domain(frag: &BTreeSet<Term>, exempt: &BTreeSet<Sym>) -> Vec<Sym> {
    let mut dom = BTreeSet::new();
    for s in frag {
        s.collect_vars(&mut dom);
    }
    dom.into_iter().filter(|v| !exempt.contains(v)).collect()
}

/// `FSub(t)`.
pub fn fsub(t: &Term, c: &CSet) -> Result<Vec<Substitution>> {
    fsub_terms(std::slice::from_ref(t), c, &BTreeSet::new())
}

/// `FSub(⟨t1, …, tn⟩)` for the tuple of `terms`, with exempt variables
/// treated as opaque constants.
pub fn fsub_terms(terms: &[Term], c: &CSet, exempt: &BTreeSet<Sym>) -> Result<Vec<Substitution>> {
    let closure = c.closure_norm()?;
    let frag = fragile_of_all(terms, exempt);
    let dom = fsub_domain(&frag, exempt);
    let mut per_var: Vec<BTreeSet<Term>> = Vec::with_capacity(dom.len());
    for x in &dom {
        let xv = Term::Var(x.clone());
        let mut cands = BTreeSet::new();
        cands.insert(xv.clone());
        if frag.contains(&xv) {
            for cc in closure.iter().filter(|cc| **cc != Term::Zero) {
                cands.insert(Term::xor(cc.clone(), xv.clone()));
            }
        }
        for s in frag.iter().filter(|s| s.contains_var(x)) {
            if s.vars().iter().any(|v| exempt.contains(v)) {
                continue;
            }
            for cc in closure {
                if let Some(theta) = match_mod_xor(s, cc, c) {
                    if let Some(v) = theta.get(x) {
                        cands.insert(v.clone());
                    }
                }
            }
        }
        per_var.push(cands);
    }
    let mut out: Vec<Substitution> = vec![Substitution::new()];
    for (x, cands) in dom.iter().zip(per_var) {
        let mut next = Vec::with_capacity(out.len() * cands.len());
        for partial in &out {
            for v in &cands {
                let mut s = partial.clone();
                s.insert(x.clone(), v.clone());
                next.push(s);
            }
        }
        out = next;
    }
    let uniq: BTreeSet<Substitution> = out.into_iter().collect();
    Ok(uniq.into_iter().collect())
}

/// `σ(t, θ)` together with the residual `θ′` satisfying `θ = σθ′`.
pub fn sigma_of(t: &Term, theta: &Substitution, c: &CSet) -> (Substitution, Substitution) {
    sigma_of_terms(std::slice::from_ref(t), theta, c, &BTreeSet::new())
}

pub fn sigma_of_terms(
    terms: &[Term],
    theta: &Substitution,
    c: &CSet,
    exempt: &BTreeSet<Sym>,
) -> (Substitution, Substitution) {
    let frag = fragile_of_all(terms, exempt);
    let dom = fsub_domain(&frag, exempt);
    let mut sigma = Substitution::new();
    let mut rest = Substitution::new();
    for (v, val) in theta.iter() {
        if !dom.contains(v) {
            rest.insert(v.clone(), val.clone());
        }
    }
    for x in &dom {
        let xv = Term::Var(x.clone());
        let Some(val) = theta.get(x).cloned() else {
            sigma.insert(x.clone(), xv);
            continue;
        };
        let case_a = frag
            .iter()
            .filter(|s| s.contains_var(x))
            .any(|s| in_xor_closure(&theta.apply(s), c));
        if case_a {
            sigma.insert(x.clone(), val.clone());
            rest.insert(x.clone(), val);
            continue;
        }
        if frag.contains(&xv) {
            if let Term::Xor(l, r) = &val {
                if r.is_standard() && c.position(r).is_none() && matches!(c.mask_of(l), Some(m) if m != 0) {
                    sigma.insert(x.clone(), Term::xor((**l).clone(), xv));
                    rest.insert(x.clone(), (**r).clone());
                    continue;
                }
            }
        }
        sigma.insert(x.clone(), xv);
        rest.insert(x.clone(), val);
    }
    (sigma, rest)
}
