//! Independent oracles, generators and harness loops shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xorhorn::domination::{is_c_dominated, is_theory_dominated, is_xor_linear};
use xorhorn::engine::{derive_mod_xor, derive_syntactic, replay_to_source, verify_derivation, Mode, SearchOptions, Verdict};
use xorhorn::normal::{fsub, normal_form, sigma_of};
use xorhorn::{build_t_plus, Atom, CSet, HornClause, Role, Substitution, Term, Theory};

// ---------------------------------------------------------------------------
// free boolean group model: a term denotes a finite set of standard atoms

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum O {
    Var(String),
    App(String, Vec<O>),
    Sum(BTreeSet<O>),
}

fn summands(o: O) -> BTreeSet<O> {
    match o {
        O::Sum(s) => s,
        x => BTreeSet::from([x]),
    }
}

fn from_summands(s: BTreeSet<O>) -> O {
    if s.len() == 1 {
        s.into_iter().next().unwrap()
    } else {
        O::Sum(s)
    }
}

/// Value of `t` in the free model of the XOR equations.
pub fn eval(t: &Term) -> O {
    match t {
        Term::Var(v) => O::Var(v.to_string()),
        Term::Zero => O::Sum(BTreeSet::new()),
        Term::App(f, args) => O::App(f.to_string(), args.iter().map(eval).collect()),
        Term::Xor(l, r) => {
            let a = summands(eval(l));
            let b = summands(eval(r));
            from_summands(a.symmetric_difference(&b).cloned().collect())
        }
    }
}

pub fn equiv(t: &Term, s: &Term) -> bool {
    eval(t) == eval(s)
}

/// No cancellation applies anywhere in `t` (modulo AC).
pub fn is_xor_reduced(t: &Term) -> bool {
    fn flat<'a>(t: &'a Term, out: &mut Vec<&'a Term>) {
        match t {
            Term::Xor(l, r) => {
                flat(l, out);
                flat(r, out);
            }
            _ => out.push(t),
        }
    }
    match t {
        Term::Var(_) => true,
        Term::Zero => true,
        Term::App(_, args) => args.iter().all(is_xor_reduced),
        Term::Xor(..) => {
            let mut leaves = Vec::new();
            flat(t, &mut leaves);
            if leaves.iter().any(|l| matches!(l, Term::Zero)) {
                return false;
            }
            let vals: BTreeSet<O> = leaves.iter().map(|l| eval(l)).collect();
            vals.len() == leaves.len() && leaves.iter().all(|l| is_xor_reduced(l))
        }
    }
}

/// Values of the ⊕-closure of `c`.
pub fn closure_values(c: &[Term]) -> BTreeSet<O> {
    let mut out = BTreeSet::new();
    for mask in 0..1u32 << c.len() {
        let mut acc = Term::Zero;
        for (i, e) in c.iter().enumerate() {
            if mask >> i & 1 == 1 {
                acc = Term::xor(acc, e.clone());
            }
        }
        out.insert(eval(&acc));
    }
    out
}

/// `t ~ c ⊕ t1 ⊕ … ⊕ tn` with `c ∈ C⊕`, standard `ti ∉ C~` and `n > 1`.
pub fn oracle_bad(t: &Term, c: &[Term]) -> bool {
    let cvals: BTreeSet<O> = c.iter().map(eval).collect();
    let s = summands(eval(t));
    s.iter().filter(|x| !cvals.contains(x)).count() > 1
}

/// Every ⊕ node has a side in `C⊕` (by definition, on the given bracketing).
pub fn oracle_dominated(t: &Term, c: &[Term]) -> bool {
    let cl = closure_values(c);
    let mut ok = true;
    walk(t, &mut |s| {
        if let Term::Xor(l, r) = s {
            if !l.is_ground() && !r.is_ground() {
                ok = false;
            }
            let in_cl = |x: &Term| x.is_ground() && cl.contains(&eval(x));
            if !in_cl(l) && !in_cl(r) {
                ok = false;
            }
        }
    });
    ok
}

pub fn walk<'a>(t: &'a Term, f: &mut impl FnMut(&'a Term)) {
    f(t);
    match t {
        Term::App(_, args) => args.iter().for_each(|a| walk(a, f)),
        Term::Xor(l, r) => {
            walk(l, f);
            walk(r, f);
        }
        _ => {}
    }
}

/// Maximal ⊕-rooted subterms: the whole term or direct children of a
/// standard node.
pub fn complete_nonstandard(t: &Term) -> Vec<&Term> {
    let mut out = Vec::new();
    fn go<'a>(t: &'a Term, top: bool, out: &mut Vec<&'a Term>) {
        match t {
            Term::Xor(l, r) => {
                if top {
                    out.push(t);
                }
                go(l, false, out);
                go(r, false, out);
            }
            Term::App(_, args) => args.iter().for_each(|a| go(a, true, out)),
            _ => {}
        }
    }
    go(t, true, &mut out);
    out
}

// ---------------------------------------------------------------------------
// enumeration

pub struct Sig {
    pub leaves: Vec<Term>,
    pub unary: Vec<&'static str>,
    pub binary: Vec<&'static str>,
    pub xor: bool,
}

/// All terms with exactly `n` nodes, for n = 1..=max; index n-1.
pub fn enumerate(sig: &Sig, max: usize) -> Vec<Vec<Term>> {
    let mut by: Vec<Vec<Term>> = Vec::new();
    for n in 1..=max {
        let mut v = Vec::new();
        if n == 1 {
            v.extend(sig.leaves.iter().cloned());
        } else {
            for f in &sig.unary {
                for t in &by[n - 2] {
                    v.push(Term::app(f, vec![t.clone()]));
                }
            }
            for k in 1..n - 1 {
                let (ls, rs) = (&by[k - 1], &by[n - 2 - k]);
                for l in ls {
                    for r in rs {
                        for g in &sig.binary {
                            v.push(Term::app(g, vec![l.clone(), r.clone()]));
                        }
                        if sig.xor {
                            v.push(Term::xor(l.clone(), r.clone()));
                        }
                    }
                }
            }
        }
        by.push(v);
    }
    by
}

pub fn k(n: &str) -> Term {
    Term::constant(n)
}

pub fn cset(names: &[&str]) -> CSet {
    CSet::new(names.iter().map(|n| k(n)).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// random generation

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const CONSTS: &[&str] = &["a", "b", "c"];
const VARS: &[&str] = &["X", "Y"];

/// Random term with at most `budget` nodes; sums always have a side in
/// the closure of `c` so the result is dominated.
pub fn rand_term(r: &mut ChaCha8Rng, c: &[Term], vars: &[&str], budget: usize) -> Term {
    let leaf = |r: &mut ChaCha8Rng| {
        if !vars.is_empty() && r.gen_bool(0.5) {
            Term::var(vars.choose(r).unwrap())
        } else {
            k(CONSTS.choose(r).unwrap())
        }
    };
    if budget < 2 {
        return leaf(r);
    }
    match r.gen_range(0..6) {
        0 | 1 => leaf(r),
        2 => Term::app("f", vec![rand_term(r, c, vars, budget - 1)]),
        3 if budget >= 3 => {
            let left = r.gen_range(1..budget - 1);
            let right = r.gen_range(1..=budget - 1 - left);
            Term::app("g", vec![rand_term(r, c, vars, left), rand_term(r, c, vars, right)])
        }
        4 | 5 if budget >= 3 && !c.is_empty() => {
            let ce = c.choose(r).unwrap().clone();
            let other = rand_term(r, c, vars, budget - 2);
            if r.gen_bool(0.5) {
                Term::xor(ce, other)
            } else {
                Term::xor(other, ce)
            }
        }
        _ => Term::app("f", vec![leaf(r)]),
    }
}

pub fn rand_c(r: &mut ChaCha8Rng) -> Vec<Term> {
    match r.gen_range(0..4) {
        0 => vec![],
        1 => vec![k("a")],
        2 => vec![k("b")],
        _ => vec![k("a"), k("b")],
    }
}

fn signature(t: &mut Theory) {
    for c in CONSTS {
        t.declare_fun(c, 0);
    }
    t.declare_fun("f", 1);
    t.declare_fun("g", 2);
    t.declare_pred("q", 1);
}

/// Small random theory that is dominated by `c`: at most 6 clauses over
/// terms of at most 3 nodes, premises on `I` and one extra predicate `q`.
pub fn rand_theory(r: &mut ChaCha8Rng, c: &[Term]) -> Theory {
    let mut t = Theory::new();
    signature(&mut t);
    let n = r.gen_range(1..=6);
    let pred = |r: &mut ChaCha8Rng| if r.gen_bool(0.8) { "I" } else { "q" };
    let mut facts = 0;
    while t.clauses.len() < n {
        let np = if facts == 0 { 0 } else { r.gen_range(0..=2) };
        let vars: &[&str] = if np == 0 { &[] } else { VARS };
        let premises: Vec<Atom> =
            (0..np).map(|_| Atom::new(pred(r), vec![rand_term(r, c, vars, 3)])).collect();
        let bound: BTreeSet<String> =
            premises.iter().flat_map(|a| a.vars()).map(|v| v.to_string()).collect();
        let bound: Vec<&str> = VARS.iter().copied().filter(|v| bound.contains(*v)).collect();
        let concl = Atom::new(pred(r), vec![rand_term(r, c, &bound, 3)]);
        let role = if np == 0 { Role::IntruderFact } else { Role::ProtocolRule };
        t.clauses.push(HornClause::new(premises, concl, role));
        if np == 0 {
            facts += 1;
        }
    }
    t
}

pub fn rand_ground(r: &mut ChaCha8Rng, c: &[Term], budget: usize) -> Term {
    rand_term(r, c, &[], budget)
}

// ---------------------------------------------------------------------------
// harness loops

#[derive(Default, Debug)]
pub struct Report {
    pub cases: usize,
    pub checked: usize,
    /// Positive outcomes among the checked cases.
    pub positive: usize,
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn small_opts(c: &CSet, guided: bool) -> SearchOptions {
    let mut o = SearchOptions { c_set: Some(c.clone()), guided, ..Default::default() };
    o.bounds.max_depth = 8;
    o.bounds.max_term_size = 9;
    o.bounds.max_facts = 4000;
    o.bounds.timeout = Duration::from_secs(5);
    o
}

fn verdict_bit(v: &Verdict) -> Option<bool> {
    match v {
        Verdict::Found(_) => Some(true),
        Verdict::Saturated => Some(false),
        _ => None,
    }
}

/// Random theories: conclusive verdicts of the search modulo XOR on `T` and
/// the syntactic search on `T⁺` must agree. Every `T⁺` derivation must
/// replay modulo XOR against `T`.
pub fn reduction_agreement(seed: u64, n: usize) -> Report {
    let mut r = rng(seed);
    let mut rep = Report::default();
    while rep.cases < n {
        let cv = rand_c(&mut r);
        let t = rand_theory(&mut r, &cv);
        let c = CSet::new(cv.clone()).unwrap();
        if !is_theory_dominated(&t, &c) {
            continue;
        }
        rep.cases += 1;
        let goal = Atom::intruder(rand_ground(&mut r, &cv, 3));
        let ngoal = goal.map_args(|x| normal_form(x, &c));
        let rt = build_t_plus(&t, &c).unwrap();
        let opts = small_opts(&c, false);
        let a = derive_mod_xor(&t, &goal, &opts).unwrap();
        let b = derive_syntactic(&rt.theory, &ngoal, &opts).unwrap();
        if let Some(d) = a.verdict.found() {
            if !verify_derivation(&t, d, Mode::Xor) {
                rep.failures.push(format!("xor derivation does not replay\n{t}\n{goal}"));
            }
        }
        if let Some(d) = b.verdict.found() {
            let src = replay_to_source(&rt, d);
            if !verify_derivation(&rt.theory, d, Mode::Syntactic) || !verify_derivation(&t, &src, Mode::Xor) {
                rep.failures.push(format!("T+ derivation does not replay\n{t}\n{goal}"));
            }
        }
        // same search without pruning to dominated facts
        let free = derive_mod_xor(&t, &goal, &SearchOptions { c_set: None, ..opts.clone() }).unwrap();
        if let (Some(x), Some(y)) = (verdict_bit(&a.verdict), verdict_bit(&free.verdict)) {
            if x != y {
                rep.failures.push(format!("pruning changes the verdict ({x} with C, {y} without)\n{t}\ngoal {goal}"));
            }
        }
        if let (Some(x), Some(y)) = (verdict_bit(&a.verdict), verdict_bit(&b.verdict)) {
            rep.checked += 1;
            rep.positive += x as usize;
            if x != y {
                rep.failures.push(format!("verdicts differ (xor {x}, T+ {y})\n{t}\ngoal {goal}"));
            }
        }
    }
    rep
}

fn subterms(t: &Term) -> Vec<&Term> {
    let mut v = Vec::new();
    walk(t, &mut |s| v.push(s));
    v
}

/// `⌈t′θ⌉ = ⌈t′σ⌉θ′` for every subterm `t′`, with `(σ, θ′) = sigma_of(t, θ)`;
/// also `σ ∈ FSub(t)`.
pub fn sigma_factorisation(seed: u64, n: usize) -> Report {
    let mut r = rng(seed);
    let mut rep = Report::default();
    while rep.cases < n {
        let cv = match r.gen_range(0..3) {
            0 => vec![k("a")],
            1 => vec![k("a"), k("b")],
            _ => vec![k("a"), k("b"), k("c")],
        };
        let c = CSet::new(cv.clone()).unwrap();
        let budget = r.gen_range(3..=7);
        let t = rand_term(&mut r, &cv, VARS, budget);
        if !is_xor_linear(&t) || !is_c_dominated(&t, &c) || t.is_ground() {
            continue;
        }
        let mut theta = Substitution::new();
        for v in t.vars() {
            let val = loop {
                let size = r.gen_range(1..=5);
                let g = rand_ground(&mut r, &cv, size);
                if is_c_dominated(&g, &c) {
                    break normal_form(&g, &c);
                }
            };
            theta.insert(v, val);
        }
        rep.cases += 1;
        let (sigma, rest) = sigma_of(&t, &theta, &c);
        for s in subterms(&t) {
            let lhs = normal_form(&theta.apply(s), &c);
            let rhs = rest.apply(&normal_form(&sigma.apply(s), &c));
            rep.checked += 1;
            if lhs != rhs {
                rep.failures.push(format!("t = {t}, θ = {theta}, subterm {s}: {lhs} vs {rhs} (σ = {sigma})"));
            }
        }
        let fam = fsub(&t, &c).unwrap();
        if !fam.contains(&sigma) {
            rep.failures.push(format!("σ = {sigma} not in FSub({t})"));
        }
    }
    rep
}

/// Matcher against exhaustive search over a finite universe of ground
/// values.
pub fn matcher(max_nodes: usize) -> Report {
    let mut rep = Report::default();
    let ground_sig = Sig { leaves: vec![k("a"), k("b")], unary: vec!["f"], binary: vec!["g"], xor: true };
    let ground: Vec<Term> = enumerate(&ground_sig, max_nodes).into_iter().flatten().collect();
    // one representative per class, smallest first
    let mut classes: BTreeMap<O, Term> = BTreeMap::new();
    for g in &ground {
        classes.entry(eval(g)).or_insert_with(|| g.clone());
    }
    let mut universe: Vec<Term> = classes.values().cloned().collect();
    universe.push(Term::Zero);
    let pat_sig = Sig {
        leaves: vec![k("a"), k("b"), Term::var("X"), Term::var("Y")],
        unary: vec!["f"],
        binary: vec!["g"],
        xor: true,
    };
    let patterns: Vec<Term> =
        enumerate(&pat_sig, max_nodes).into_iter().flatten().filter(|p| !p.is_ground()).collect();
    for names in [&["a"][..], &["a", "b"][..], &[][..]] {
        let c = cset(names);
        let targets: Vec<&Term> = ground.iter().filter(|g| is_c_dominated(g, &c)).collect();
        for p in patterns.iter().filter(|p| is_xor_linear(p) && is_c_dominated(p, &c)) {
            let vars: Vec<_> = p.vars().into_iter().collect();
            // value of p under each assignment, grouped by class
            let mut by_class: BTreeMap<O, Vec<Vec<&Term>>> = BTreeMap::new();
            let mut assign = vec![0usize; vars.len()];
            loop {
                let s = Substitution::from_pairs(vars.iter().cloned().zip(assign.iter().map(|&i| universe[i].clone())));
                by_class.entry(eval(&s.apply(p))).or_default().push(assign.iter().map(|&i| &universe[i]).collect());
                let mut j = 0;
                while j < assign.len() {
                    assign[j] += 1;
                    if assign[j] < universe.len() {
                        break;
                    }
                    assign[j] = 0;
                    j += 1;
                }
                if j == assign.len() {
                    break;
                }
            }
            for t in &targets {
                rep.cases += 1;
                let got = xorhorn::normal::match_mod_xor(p, t, &c);
                let brute = by_class.get(&eval(t));
                rep.checked += 1;
                if let Some(m) = &got {
                    if !equiv(&m.apply(p), t) {
                        rep.failures.push(format!("unsound matcher {m} for {p} against {t}"));
                        continue;
                    }
                }
                match (got, brute) {
                    (None, None) => {}
                    (Some(m), None) => {
                        // fine if a binding lies outside the enumerated universe
                        let outside = vars.iter().any(|v| {
                            let val = m.get(v).unwrap();
                            !classes.contains_key(&eval(val)) && eval(val) != O::Sum(BTreeSet::new())
                        });
                        if !outside {
                            rep.failures.push(format!("matcher {m} for {p} against {t}, exhaustive search found none"));
                        }
                    }
                    (None, Some(sols)) => {
                        rep.failures.push(format!("no matcher for {p} against {t}, but e.g. {:?}", sols[0]));
                    }
                    (Some(m), Some(sols)) => {
                        rep.positive += 1;
                        for sol in sols {
                            for (v, val) in vars.iter().zip(sol) {
                                if !equiv(m.get(v).unwrap(), val) {
                                    rep.failures.push(format!(
                                        "matcher {m} for {p} against {t} differs from solution {v} = {val}"
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep
}

/// All xor-reduced ground terms up to `max_nodes` over {a, b, f}, C = {a}:
/// dominated exactly when no complete non-standard subterm is bad.
pub fn domination_vs_bad(max_nodes: usize) -> Report {
    let mut rep = Report::default();
    let sig = Sig { leaves: vec![k("a"), k("b")], unary: vec!["f"], binary: vec![], xor: true };
    let c = cset(&["a"]);
    let cv = [k("a")];
    for t in enumerate(&sig, max_nodes).into_iter().flatten() {
        if !is_xor_reduced(&t) {
            continue;
        }
        rep.cases += 1;
        let dominated = is_c_dominated(&t, &c);
        rep.positive += dominated as usize;
        let no_bad = complete_nonstandard(&t).into_iter().all(|s| !oracle_bad(s, &cv));
        let lib_no_bad = complete_nonstandard(&t).into_iter().all(|s| !xorhorn::domination::is_bad(s, &c));
        if dominated != no_bad || lib_no_bad != no_bad || dominated != oracle_dominated(&t, &cv) {
            rep.failures.push(format!(
                "{t}: dominated {dominated}, by definition {}, no bad subterm {no_bad} (library {lib_no_bad})",
                oracle_dominated(&t, &cv)
            ));
        }
        rep.checked += 1;
    }
    rep
}
