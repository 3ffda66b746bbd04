//! Bounded forward-chaining search, syntactically or modulo XOR.
//!
//! Facts are saturated round by round (semi-naive: every new fact in round
//! `r` uses at least one fact from round `r - 1`). Facts are stored in a
//! canonical form so equal facts are merged; the first justification wins.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::domination::{is_c_dominated, CSet};
use crate::error::{Error, Result};
use crate::normal::{match_all, match_mod_xor, normal_form};
use crate::reduction::{Origin, ReducedTheory};
use crate::subst::Substitution;
use crate::term::{Sym, Term};
use crate::theory::{Atom, HornClause, Query, Role, Theory};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Syntactic,
    Xor,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Syntactic => "syntactic",
            Mode::Xor => "xor",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchBounds {
    /// Maximum derivation height of a fact.
    pub max_depth: usize,
    /// Maximum node count of any fact argument.
    pub max_term_size: usize,
    pub max_facts: usize,
    pub timeout: Duration,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { max_depth: 12, max_term_size: 24, max_facts: 200_000, timeout: Duration::from_secs(60) }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub bounds: SearchBounds,
    /// In XOR mode: canonical forms are taken w.r.t. this set and the xor
    /// rule only keeps dominated results. In syntactic mode: facts that are
    /// not dominated normal forms are discarded.
    pub c_set: Option<CSet>,
    /// Instantiate composition rules only towards subterms of the goal, and
    /// let protocol premises be met by compositions built on demand.
    /// Incomplete: a `Saturated` result is then reported as `Exhausted`.
    pub guided: bool,
    /// Number of constants `sid1 … sidN` substituted for exempt variables.
    pub sid_pool: usize,
    /// Cap on matchers per premise for patterns with open sums.
    pub match_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { bounds: SearchBounds::default(), c_set: None, guided: true, sid_pool: 2, match_cap: 64 }
    }
}

pub fn sid_constant(i: usize) -> Term {
    Term::constant(&format!("sid{i}"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Justification {
    Initial,
    Clause { clause: usize, bindings: Substitution, premises: Vec<usize> },
    Xor { left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub atom: Atom,
    pub just: Justification,
}

/// Steps in dependency order; the last step is the derived goal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Derivation {
    pub steps: Vec<Step>,
}

impl Derivation {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&Atom> {
        self.steps.last().map(|s| &s.atom)
    }

    pub fn concludes(&self, goal: &Atom, mode: Mode) -> bool {
        self.steps.iter().any(|s| atoms_agree(&s.atom, goal, mode))
    }

    pub fn to_json(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| match &s.just {
                Justification::Initial => json!({"step": k + 1, "atom": s.atom.to_string(), "just": "initial"}),
                Justification::Clause { clause, bindings, premises } => json!({
                    "step": k + 1,
                    "atom": s.atom.to_string(),
                    "just": "clause",
                    "clause": clause,
                    "bindings": bindings.iter().map(|(v, t)| (v.to_string(), Value::String(t.to_string()))).collect::<serde_json::Map<_, _>>(),
                    "premises": premises.iter().map(|p| p + 1).collect::<Vec<_>>(),
                }),
                Justification::Xor { left, right } => json!({
                    "step": k + 1,
                    "atom": s.atom.to_string(),
                    "just": "xor",
                    "left": left + 1,
                    "right": right + 1,
                }),
            })
            .collect();
        Value::Array(steps)
    }
}

/// One line per step: `step k: <atom>  by clause <id> with {bindings}` or
/// `by xor(i,j)`. Step numbers start at 1.
impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.steps.iter().enumerate() {
            write!(f, "step {}: {}  by ", k + 1, s.atom)?;
            match &s.just {
                Justification::Initial => writeln!(f, "initial")?,
                Justification::Clause { clause, bindings, .. } => writeln!(f, "clause {clause} with {bindings}")?,
                Justification::Xor { left, right } => writeln!(f, "xor({},{})", left + 1, right + 1)?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Found(Derivation),
    /// No new facts and nothing was discarded incompletely: the goal is not
    /// derivable.
    Saturated,
    /// Depth, size, fact-count, guidance or matcher caps were hit.
    Exhausted(String),
    Timeout,
}

impl Verdict {
    pub fn is_conclusive(&self) -> bool {
        matches!(self, Verdict::Found(_) | Verdict::Saturated)
    }

    pub fn found(&self) -> Option<&Derivation> {
        match self {
            Verdict::Found(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SearchStats {
    /// Facts taken from the queue and joined against the processed set.
    pub processed: usize,
    pub facts: usize,
    pub dropped_by_depth: usize,
    pub dropped_by_size: usize,
    pub dropped_by_guidance: usize,
    pub incomplete_matching: bool,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub stats: SearchStats,
}

fn atoms_agree(a: &Atom, b: &Atom, mode: Mode) -> bool {
    match mode {
        Mode::Syntactic => a == b,
        Mode::Xor => a.equiv_mod_xor(b),
    }
}

/// Syntactic matching of `p` against ground `t`, extending `s`.
pub fn match_syntactic(p: &Term, t: &Term, s: &mut Substitution) -> bool {
    match (p, t) {
        (Term::Var(v), _) => match s.get(v) {
            Some(bound) => bound == t,
            None => {
                s.insert(v.clone(), t.clone());
                true
            }
        },
        (Term::Zero, Term::Zero) => true,
        (Term::Xor(a, b), Term::Xor(c, d)) => match_syntactic(a, c, s) && match_syntactic(b, d, s),
        (Term::App(f, xs), Term::App(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| match_syntactic(x, y, s))
        }
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Head {
    App(Sym, usize),
    Xor,
    Zero,
}

fn head(t: &Term) -> Option<Head> {
    match t {
        Term::App(f, a) => Some(Head::App(f.clone(), a.len())),
        Term::Xor(..) => Some(Head::Xor),
        Term::Zero => Some(Head::Zero),
        Term::Var(_) => None,
    }
}

/// Clause instantiated for the sid pool, with bookkeeping for the search.
struct Rule {
    id: usize,
    clause: HornClause,
    /// Applied to the source clause before the search binding (sid choice or
    /// guidance specialisation).
    pre: Substitution,
    /// Variables of the source clause, for reporting bindings.
    source_vars: BTreeSet<Sym>,
    compositional: bool,
    simple: bool,
    /// Generic compositional rule whose conclusions must pass `wanted`.
    filtered: bool,
    /// Set for unfolded variants: how the source premises are composed
    /// from the variant's premises.
    plan: Option<Rc<Plan>>,
}

/// Where a premise of the source clause comes from in an unfolded variant.
#[derive(Clone, Copy, Debug)]
enum Input {
    Premise(usize),
    Step(usize),
}

/// A composition performed when an unfolded variant fires.
struct CompStep {
    id: usize,
    conclusion: Atom,
    inputs: Vec<Input>,
    /// Maps the composition rule's source variables to variant terms.
    pre: Substitution,
    source_vars: BTreeSet<Sym>,
}

struct Plan {
    steps: Vec<CompStep>,
    original: Vec<Input>,
}

#[derive(Clone)]
enum Node {
    Leaf(Atom),
    Comp { rule: usize, rho: Substitution, conclusion: Atom, children: Vec<Node> },
}

const UNFOLD_DEPTH: usize = 3;
const UNFOLD_CAP: usize = 256;

struct Unfolder<'r> {
    comps: &'r [Rule],
    mode: Mode,
    fresh: usize,
}

impl Unfolder<'_> {
    fn atom(&mut self, p: &Atom, th: &Substitution, depth: usize) -> Vec<(Substitution, Node)> {
        let mut out = vec![(th.clone(), Node::Leaf(p.clone()))];
        if depth == 0 || !p.is_intruder() {
            return out;
        }
        let arg = solved(th).apply(&p.args[0]);
        if arg.is_var() || arg.is_ground() {
            return out;
        }
        for ci in 0..self.comps.len() {
            self.fresh += 1;
            let cr = &self.comps[ci].clause;
            let rho = Substitution::from_pairs(
                cr.vars().into_iter().map(|v| (v.clone(), Term::var(&format!("_u{}{v}", self.fresh)))),
            );
            let cl = cr.map_terms(|t| rho.apply(t));
            let mut th2 = th.clone();
            if let Unify::Yes = unify(&cl.conclusion.args[0], &arg, &mut th2, self.mode) {
                for (th3, children) in self.list(&cl.premises, &th2, depth - 1) {
                    let node = Node::Comp { rule: ci, rho: rho.clone(), conclusion: cl.conclusion.clone(), children };
                    out.push((th3, node));
                }
            }
        }
        out
    }

    fn list(&mut self, ps: &[Atom], th: &Substitution, depth: usize) -> Vec<(Substitution, Vec<Node>)> {
        let mut acc = vec![(th.clone(), Vec::new())];
        for p in ps {
            let mut next = Vec::new();
            'outer: for (t, nodes) in acc {
                for (t2, n) in self.atom(p, &t, depth) {
                    let mut nodes2 = nodes.clone();
                    nodes2.push(n);
                    next.push((t2, nodes2));
                    if next.len() >= UNFOLD_CAP {
                        break 'outer;
                    }
                }
            }
            acc = next;
        }
        acc
    }
}

enum Unify {
    Yes,
    No,
    Unknown,
}

fn resolve(t: &Term, s: &Substitution) -> Term {
    let mut cur = t.clone();
    while let Term::Var(v) = &cur {
        match s.get(v) {
            Some(n) => cur = n.clone(),
            None => break,
        }
    }
    cur
}

fn occurs(v: &str, t: &Term, s: &Substitution) -> bool {
    match resolve(t, s) {
        Term::Var(w) => &*w == v,
        Term::Zero => false,
        Term::Xor(l, r) => occurs(v, &l, s) || occurs(v, &r, s),
        Term::App(_, args) => args.iter().any(|a| occurs(v, a, s)),
    }
}

/// Syntactic unification into the triangular substitution `s`. In XOR mode a
/// sum meeting anything but a variable is reported as `Unknown`.
fn unify(a: &Term, b: &Term, s: &mut Substitution, mode: Mode) -> Unify {
    let a = resolve(a, s);
    let b = resolve(b, s);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => Unify::Yes,
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if occurs(x, t, s) {
                return Unify::No;
            }
            s.insert(x.clone(), t.clone());
            Unify::Yes
        }
        (Term::Zero, Term::Zero) => Unify::Yes,
        (Term::App(f, xs), Term::App(g, ys)) => {
            if f != g || xs.len() != ys.len() {
                return Unify::No;
            }
            let mut unknown = false;
            for (x, y) in xs.iter().zip(ys.iter()) {
                match unify(x, y, s, mode) {
                    Unify::No => return Unify::No,
                    Unify::Unknown => unknown = true,
                    Unify::Yes => {}
                }
            }
            if unknown {
                Unify::Unknown
            } else {
                Unify::Yes
            }
        }
        _ if mode == Mode::Xor && (matches!(a, Term::Xor(..)) || matches!(b, Term::Xor(..))) => Unify::Unknown,
        (Term::Xor(l1, r1), Term::Xor(l2, r2)) => match unify(l1, l2, s, mode) {
            Unify::Yes => unify(r1, r2, s, mode),
            other => other,
        },
        _ => Unify::No,
    }
}

fn solved(s: &Substitution) -> Substitution {
    let mut out = s.clone();
    loop {
        let next = out.map_values(|t| s.apply(t));
        if next == out {
            return out;
        }
        out = next;
    }
}

/// Every premise is an intruder atom whose argument is a proper subterm of
/// the (intruder) conclusion.
fn is_compositional(c: &HornClause) -> bool {
    if c.premises.is_empty() || !c.conclusion.is_intruder() {
        return false;
    }
    let concl = &c.conclusion.args[0];
    let subs: Vec<&Term> = concl.subterms();
    c.premises.iter().all(|p| p.is_intruder() && &p.args[0] != concl && subs.contains(&&p.args[0]))
}

/// Every sum has at most one non-ground summand.
fn is_simple(t: &Term) -> bool {
    let mut ok = true;
    t.walk(&mut |s| {
        if let Term::Xor(..) = s {
            if s.summands().into_iter().filter(|x| !x.is_ground()).count() > 1 {
                ok = false;
            }
        }
    });
    ok
}

fn expand_sids(theory: &Theory, pool: usize) -> Vec<Rule> {
    let mut out = Vec::new();
    for (id, cl) in theory.clauses.iter().enumerate() {
        let ex: Vec<Sym> = cl.exempt_vars.iter().filter(|v| cl.vars().contains(*v)).cloned().collect();
        let mut bindings = vec![Substitution::new()];
        for v in &ex {
            let mut next = Vec::new();
            for b in &bindings {
                for i in 1..=pool.max(1) {
                    let mut b2 = b.clone();
                    b2.insert(v.clone(), sid_constant(i));
                    next.push(b2);
                }
            }
            bindings = next;
        }
        let compositional = is_compositional(cl);
        let simple = cl.premises.iter().flat_map(|p| p.args.iter()).all(is_simple);
        let source_vars = cl.vars();
        for b in bindings {
            let clause = if b.is_empty() { cl.clone() } else { cl.map_terms(|t| b.apply(t)) };
            out.push(Rule {
                id,
                clause,
                pre: b,
                source_vars: source_vars.clone(),
                compositional,
                simple,
                filtered: false,
                plan: None,
            });
        }
    }
    out
}

struct Fact {
    atom: Atom,
    just: Justification,
    height: usize,
    /// For intruder facts in XOR mode with a set: closure mask and the single
    /// foreign summand, when the fact is dominated.
    split: Option<(u64, Option<Term>)>,
}

struct Guidance {
    goal_subterms: BTreeSet<Term>,
}

struct Search<'a> {
    mode: Mode,
    opts: &'a SearchOptions,
    canon: CSet,
    prune: Option<CSet>,
    xor_rule: bool,
    rules: Vec<Rule>,
    facts: Vec<Fact>,
    index: HashMap<Atom, usize>,
    by_pred: HashMap<Sym, Vec<usize>>,
    by_head: HashMap<(Sym, Head), Vec<usize>>,
    intruder: Vec<usize>,
    by_rest: HashMap<Option<Term>, Vec<usize>>,
    /// Processed facts by predicate, head symbol and one child of the first
    /// argument.
    by_child: HashMap<(Sym, Sym, usize, Term), Vec<usize>>,
    /// Same, keyed by the head of the child only.
    by_child_head: HashMap<(Sym, Sym, usize, Head), Vec<usize>>,
    /// Processed facts whose first argument is a sum, by its left child.
    by_xor_left: HashMap<(Sym, Term, Option<Head>), Vec<usize>>,
    processed: Vec<bool>,
    inert: Vec<bool>,
    queue: BinaryHeap<Reverse<(usize, usize, usize)>>,
    /// Same facts in arrival order; every `AGE_PICK`-th given fact is the oldest.
    arrivals: VecDeque<usize>,
    picks: usize,
    goal: Atom,
    guidance: Option<Guidance>,
    guidance_specialised: bool,
    stats: SearchStats,
    started: Instant,
    ticks: u64,
    timed_out: bool,
    over_limit: bool,
    found: Option<usize>,
}

/// Queue treatment of a new fact. Compositions and mixing sums wait
/// longer; compositions built only to feed an unfolded protocol step are
/// never joined unless derived again some other way.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Prio {
    Plain,
    Synth,
    Inert,
}

const AGE_PICK: usize = 4;
const HEIGHT_WEIGHT: usize = 2;
const SYNTH_WEIGHT: usize = 8;


impl<'a> Search<'a> {
    fn canonical_term(&self, t: &Term) -> Term {
        match self.mode {
            Mode::Syntactic => t.clone(),
            Mode::Xor => normal_form(t, &self.canon),
        }
    }

    fn canonical(&self, a: &Atom) -> Atom {
        match self.mode {
            Mode::Syntactic => a.clone(),
            Mode::Xor => a.map_args(|t| normal_form(t, &self.canon)),
        }
    }

    fn tick(&mut self) -> bool {
        self.ticks += 1;
        if self.ticks.is_multiple_of(1024) && self.started.elapsed() > self.opts.bounds.timeout {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn build_guidance(&self) -> Guidance {
        let mut goal_subterms = BTreeSet::new();
        for a in &self.goal.args {
            for s in a.subterms() {
                goal_subterms.insert(self.canonical_term(s));
            }
        }
        Guidance { goal_subterms }
    }

    /// Guided mode. Compositional rules are kept only for goal subterms;
    /// premises of the other non-intruder rules are unfolded through the
    /// compositional rules instead, so composed terms are built only when a
    /// protocol step consumes them.
    fn specialise(&mut self) {
        let Some(g) = &self.guidance else { return };
        let patterns: Vec<Term> = g
            .goal_subterms
            .iter()
            .filter(|t| match t {
                Term::App(_, a) => !a.is_empty(),
                Term::Xor(..) => self.mode == Mode::Syntactic,
                _ => false,
            })
            .cloned()
            .collect();
        let rules = std::mem::take(&mut self.rules);
        self.guidance_specialised = rules.iter().any(|r| r.compositional);
        let comps: Vec<Rule> = rules
            .iter()
            .filter(|r| r.compositional)
            .map(|r| Rule {
                id: r.id,
                clause: r.clause.clone(),
                pre: r.pre.clone(),
                source_vars: r.source_vars.clone(),
                compositional: true,
                simple: r.simple,
                filtered: false,
                plan: None,
            })
            .collect();
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for r in rules {
            if r.compositional {
                let concl = r.clause.conclusion.args[0].clone();
                let mut generic = false;
                for p in &patterns {
                    let mut th = Substitution::new();
                    match unify(&concl, p, &mut th, self.mode) {
                        Unify::No => {}
                        Unify::Unknown => generic = true,
                        Unify::Yes => {
                            let th = solved(&th);
                            let clause = r.clause.map_terms(|t| self.canonical_term(&th.apply(t)));
                            if clause.premises.contains(&clause.conclusion)
                                || !seen.insert((r.id, clause.premises.clone(), clause.conclusion.clone()))
                            {
                                continue;
                            }
                            let simple = clause.premises.iter().flat_map(|a| a.args.iter()).all(is_simple);
                            out.push(Rule {
                                id: r.id,
                                clause,
                                pre: r.pre.then(&th),
                                source_vars: r.source_vars.clone(),
                                compositional: true,
                                simple,
                                filtered: false,
                                plan: None,
                            });
                        }
                    }
                }
                if generic {
                    out.push(Rule { filtered: true, ..r });
                }
                continue;
            }
            if r.clause.role == Role::IntruderRule || r.clause.premises.is_empty() {
                out.push(r);
                continue;
            }
            let mut unf = Unfolder { comps: &comps, mode: self.mode, fresh: 0 };
            let variants = unf.list(&r.clause.premises, &Substitution::new(), UNFOLD_DEPTH);
            for (th, nodes) in variants {
                let th = solved(&th);
                let mut premises = Vec::new();
                let mut steps = Vec::new();
                let original: Vec<Input> =
                    nodes.iter().map(|n| self.flatten(n, &th, &comps, &mut premises, &mut steps)).collect();
                if steps.is_empty() {
                    continue;
                }
                let conclusion = r.clause.conclusion.map_args(|t| self.canonical_term(&th.apply(t)));
                let clause = HornClause::new(premises, conclusion, r.clause.role);
                let simple = clause.premises.iter().flat_map(|a| a.args.iter()).all(is_simple);
                out.push(Rule {
                    id: r.id,
                    clause,
                    pre: r.pre.then(&th),
                    source_vars: r.source_vars.clone(),
                    compositional: false,
                    simple,
                    filtered: false,
                    plan: Some(Rc::new(Plan { steps, original })),
                });
            }
            out.push(r);
        }
        self.rules = out;
    }

    fn flatten(
        &self,
        node: &Node,
        th: &Substitution,
        comps: &[Rule],
        premises: &mut Vec<Atom>,
        steps: &mut Vec<CompStep>,
    ) -> Input {
        match node {
            Node::Leaf(a) => {
                premises.push(a.map_args(|t| self.canonical_term(&th.apply(t))));
                Input::Premise(premises.len() - 1)
            }
            Node::Comp { rule, rho, conclusion, children } => {
                let inputs = children.iter().map(|c| self.flatten(c, th, comps, premises, steps)).collect();
                let cr = &comps[*rule];
                steps.push(CompStep {
                    id: cr.id,
                    conclusion: conclusion.map_args(|t| self.canonical_term(&th.apply(t))),
                    inputs,
                    pre: cr.pre.then(&rho.then(th)),
                    source_vars: cr.source_vars.clone(),
                });
                Input::Step(steps.len() - 1)
            }
        }
    }

    fn wanted(&self, t: &Term) -> bool {
        self.guidance.as_ref().is_none_or(|g| g.goal_subterms.contains(t))
    }

    fn split_of(&self, a: &Atom) -> Option<(u64, Option<Term>)> {
        let c = self.prune.as_ref()?;
        if self.mode != Mode::Xor || !a.is_intruder() || !is_c_dominated(&a.args[0], c) {
            return None;
        }
        let mut mask = 0u64;
        let mut rest = None;
        for s in a.args[0].summands() {
            match c.position(s) {
                Some(i) => mask ^= 1 << i,
                None => {
                    if rest.is_some() {
                        return None;
                    }
                    rest = Some(s.clone());
                }
            }
        }
        Some((mask, rest))
    }

    /// Admission check shared by all producers; `atom` is canonical.
    fn admissible(&mut self, atom: &Atom) -> bool {
        if atom.args.iter().any(|t| t.size() > self.opts.bounds.max_term_size) {
            self.stats.dropped_by_size += 1;
            return false;
        }
        if let (Mode::Syntactic, Some(c)) = (self.mode, &self.prune) {
            if atom.args.iter().any(|t| normal_form(t, c) != *t || !is_c_dominated(t, c)) {
                return false;
            }
        }
        true
    }

    /// Returns true when the goal was inserted.
    /// Returns whether the atom is the goal. Re-deriving an inert fact wakes it.
    fn insert(&mut self, atom: Atom, just: Justification, height: usize, prio: Prio) -> bool {
        if let Some(&id) = self.index.get(&atom) {
            if self.inert[id] && prio != Prio::Inert {
                self.inert[id] = false;
                self.queue.push(Reverse((self.weight(id, prio), height, id)));
                self.arrivals.push_back(id);
            }
            return false;
        }
        if self.facts.len() >= self.opts.bounds.max_facts {
            self.over_limit = true;
            return false;
        }
        let id = self.facts.len();
        let split = self.split_of(&atom);
        self.index.insert(atom.clone(), id);
        let is_goal = atom == self.goal;
        self.facts.push(Fact { atom, just, height, split });
        self.processed.push(false);
        self.inert.push(prio == Prio::Inert);
        if prio != Prio::Inert {
            self.queue.push(Reverse((self.weight(id, prio), height, id)));
            self.arrivals.push_back(id);
        }
        is_goal
    }

    fn next_given(&mut self) -> Option<usize> {
        self.picks += 1;
        if self.picks.is_multiple_of(AGE_PICK) {
            while let Some(id) = self.arrivals.pop_front() {
                if !self.processed[id] {
                    return Some(id);
                }
            }
        }
        while let Some(Reverse((_, _, id))) = self.queue.pop() {
            if !self.processed[id] {
                return Some(id);
            }
        }
        while let Some(id) = self.arrivals.pop_front() {
            if !self.processed[id] {
                return Some(id);
            }
        }
        None
    }

    fn weight(&self, id: usize, prio: Prio) -> usize {
        let size: usize = self.facts[id].atom.args.iter().map(Term::size).sum();
        let size = size + HEIGHT_WEIGHT * self.facts[id].height;
        match prio {
            Prio::Synth => size + SYNTH_WEIGHT,
            _ => size,
        }
    }

    /// Known and not waiting as an inert composition.
    fn settled(&self, atom: &Atom) -> bool {
        self.index.get(atom).is_some_and(|&i| !self.inert[i])
    }

    /// Makes fact `id` visible to joins.
    fn activate(&mut self, id: usize) {
        self.processed[id] = true;
        let atom = &self.facts[id].atom;
        self.by_pred.entry(atom.pred.clone()).or_default().push(id);
        if let Some(h) = atom.args.first().and_then(head) {
            self.by_head.entry((atom.pred.clone(), h)).or_default().push(id);
        }
        if let Some(Term::App(f, args)) = atom.args.first() {
            if args.len() > 1 {
                for (i, a) in args.iter().enumerate() {
                    self.by_child.entry((atom.pred.clone(), f.clone(), i, a.clone())).or_default().push(id);
                    if let Some(h) = head(a) {
                        self.by_child_head.entry((atom.pred.clone(), f.clone(), i, h)).or_default().push(id);
                    }
                }
            }
        }
        if let Some(Term::Xor(l, r)) = atom.args.first() {
            for h in [None, head(r)] {
                self.by_xor_left.entry((atom.pred.clone(), (**l).clone(), h)).or_default().push(id);
            }
        }
        if atom.is_intruder() {
            self.intruder.push(id);
        }
        if let Some((_, rest)) = &self.facts[id].split {
            self.by_rest.entry(rest.clone()).or_default().push(id);
        }
    }

    fn extract(&self, goal_id: usize) -> Derivation {
        let mut needed = BTreeSet::new();
        let mut stack = vec![goal_id];
        while let Some(i) = stack.pop() {
            if !needed.insert(i) {
                continue;
            }
            match &self.facts[i].just {
                Justification::Initial => {}
                Justification::Clause { premises, .. } => stack.extend(premises.iter().copied()),
                Justification::Xor { left, right } => stack.extend([*left, *right]),
            }
        }
        let order: Vec<usize> = needed.into_iter().collect();
        let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let steps = order
            .iter()
            .map(|&i| {
                let f = &self.facts[i];
                let just = match &f.just {
                    Justification::Initial => Justification::Initial,
                    Justification::Clause { clause, bindings, premises } => Justification::Clause {
                        clause: *clause,
                        bindings: bindings.clone(),
                        premises: premises.iter().map(|p| pos[p]).collect(),
                    },
                    Justification::Xor { left, right } => Justification::Xor { left: pos[left], right: pos[right] },
                };
                Step { atom: f.atom.clone(), just }
            })
            .collect();
        Derivation { steps }
    }

    /// Processed fact ids that may fill premise `pat` (instantiated by the
    /// partial binding), before the slot restriction.
    fn pool(&self, pat: &Atom) -> &[usize] {
        if pat.is_ground() {
            let canon = self.canonical(pat);
            return match self.index.get(&canon) {
                Some(i) if self.processed[*i] => std::slice::from_ref(i),
                _ => &[],
            };
        }
        let list = match pat.args.first().map(|t| (t, head(t))) {
            Some((Term::App(f, args), Some(h))) => {
                let mut best = self.by_head.get(&(pat.pred.clone(), h));
                if args.len() > 1 {
                    for (i, a) in args.iter().enumerate() {
                        let l = if a.is_ground() {
                            self.by_child.get(&(pat.pred.clone(), f.clone(), i, self.canonical_term(a)))
                        } else {
                            match head(a) {
                                Some(h @ Head::App(..)) => self.by_child_head.get(&(pat.pred.clone(), f.clone(), i, h)),
                                _ => continue,
                            }
                        };
                        if l.map_or(0, Vec::len) < best.map_or(0, Vec::len) {
                            best = l;
                        }
                        if l.is_none() {
                            return &[];
                        }
                    }
                }
                best
            }
            Some((t @ Term::Xor(..), _)) => match self.xor_key(t) {
                Some(k) => self.by_xor_left.get(&(pat.pred.clone(), k.0, k.1)),
                None => self.by_pred.get(&pat.pred),
            },
            _ => self.by_pred.get(&pat.pred),
        };
        list.map_or(&[], Vec::as_slice)
    }

    /// Left child, and head of the right child where fixed, that every fact
    /// matching the sum pattern `t` must have.
    fn xor_key(&self, t: &Term) -> Option<(Term, Option<Head>)> {
        let Term::Xor(l, r) = t else { return None };
        if !l.is_ground() {
            return None;
        }
        if self.mode == Mode::Syntactic {
            return Some(((**l).clone(), head(r)));
        }
        let t = normal_form(t, &self.canon);
        let Term::Xor(l, r) = &t else { return None };
        self.canon.mask_of(l)?;
        let c_heads: Vec<Option<Head>> = self.canon.normalized_elements().iter().map(head).collect();
        for s in t.summands() {
            if self.canon.position(s).is_some() {
                continue;
            }
            match s {
                Term::App(..) if !c_heads.contains(&head(s)) => {}
                _ => return None,
            }
        }
        Some(((**l).clone(), head(r)))
    }

    fn match_atom(&mut self, pat: &Atom, fact: &Atom, base: &Substitution, simple: bool) -> Vec<Substitution> {
        if pat.pred != fact.pred || pat.args.len() != fact.args.len() {
            return Vec::new();
        }
        match self.mode {
            Mode::Syntactic => {
                let mut s = base.clone();
                let ok = pat.args.iter().zip(fact.args.iter()).all(|(p, t)| match_syntactic(p, t, &mut s));
                if ok {
                    vec![s]
                } else {
                    Vec::new()
                }
            }
            Mode::Xor => {
                let mut acc = vec![base.clone()];
                for (p, t) in pat.args.iter().zip(fact.args.iter()) {
                    let mut next = Vec::new();
                    for b in &acc {
                        let inst = b.apply(p);
                        if inst.is_ground() {
                            if normal_form(&inst, &self.canon) == *t {
                                next.push(b.clone());
                            }
                            continue;
                        }
                        if simple {
                            if let Some(m) = match_mod_xor(&inst, t, &self.canon) {
                                next.extend(b.merge(&m));
                            }
                        } else {
                            let ms = match_all(&inst, t, &self.canon, self.opts.match_cap);
                            if !ms.complete {
                                self.stats.incomplete_matching = true;
                            }
                            for m in ms.substitutions {
                                next.extend(b.merge(&m));
                            }
                        }
                    }
                    acc = next;
                    if acc.is_empty() {
                        break;
                    }
                }
                acc
            }
        }
    }

    /// `chosen[p]` is the fact for premise `p`, or `usize::MAX` while open.
    /// The given fact fills premise `delta`; earlier premises may not use
    /// it again, so each combination is produced once.
    fn join(&mut self, rule: usize, delta: usize, given: usize, binding: Substitution, chosen: &mut Vec<usize>) {
        if self.tick() || self.over_limit || self.found.is_some() {
            return;
        }
        let n = chosen.len();
        // most constrained open premise next
        let mut next: Option<(usize, usize, Atom)> = None;
        for k in (0..n).filter(|&k| chosen[k] == usize::MAX) {
            let pat = self.rules[rule].clause.premises[k].apply(&binding);
            let size = self.pool(&pat).len();
            if next.as_ref().is_none_or(|(_, s, _)| size < *s) {
                next = Some((k, size, pat));
            }
            if size == 0 {
                break;
            }
        }
        let Some((k, _, pat)) = next else {
            self.conclude(rule, binding, chosen.clone());
            return;
        };
        let ids: Vec<usize> = self.pool(&pat).iter().copied().filter(|&i| !(k < delta && i == given)).collect();
        let simple = self.rules[rule].simple;
        for id in ids {
            let fact = self.facts[id].atom.clone();
            for b in self.match_atom(&pat, &fact, &binding, simple) {
                chosen[k] = id;
                self.join(rule, delta, given, b, chosen);
            }
        }
        chosen[k] = usize::MAX;
    }

    fn height_of(&self, premises: &[usize]) -> usize {
        premises.iter().map(|&p| self.facts[p].height + 1).max().unwrap_or(0)
    }

    /// Returns the new fact's id, or `None` when it was not inserted.
    fn add(&mut self, atom: Atom, just: Justification, height: usize, prio: Prio) -> Option<usize> {
        if height > self.opts.bounds.max_depth {
            self.stats.dropped_by_depth += 1;
            return None;
        }
        let known = self.index.contains_key(&atom);
        let is_goal = self.insert(atom, just, height, prio);
        if is_goal {
            self.found = Some(self.facts.len() - 1);
        }
        (!known && !self.over_limit).then(|| self.facts.len() - 1)
    }

    fn conclude(&mut self, rule: usize, binding: Substitution, premises: Vec<usize>) {
        let r = &self.rules[rule];
        let concl = r.clause.conclusion.apply(&binding);
        if !concl.is_ground() {
            return;
        }
        let concl = self.canonical(&concl);
        if self.settled(&concl) {
            return;
        }
        let filtered = r.filtered;
        let compositional = r.compositional;
        let id = r.id;
        let bindings = r.pre.then(&binding).restrict(&r.source_vars);
        let plan = r.plan.clone();
        if !self.admissible(&concl) {
            return;
        }
        if filtered && !self.wanted(&concl.args[0]) {
            self.stats.dropped_by_guidance += 1;
            return;
        }
        let premises = match plan {
            Some(plan) => match self.run_plan(&plan, &binding, &premises) {
                Some(p) => p,
                None => return,
            },
            None => premises,
        };
        let height = self.height_of(&premises);
        let prio = if compositional { Prio::Synth } else { Prio::Plain };
        self.add(concl, Justification::Clause { clause: id, bindings, premises }, height, prio);
    }

    /// Materialises the compositions of an unfolded variant; returns the
    /// fact ids for the source clause's premises.
    fn run_plan(&mut self, plan: &Plan, binding: &Substitution, premises: &[usize]) -> Option<Vec<usize>> {
        let mut step_ids: Vec<usize> = Vec::with_capacity(plan.steps.len());
        let pick = |inp: &Input, step_ids: &[usize]| match *inp {
            Input::Premise(k) => premises[k],
            Input::Step(k) => step_ids[k],
        };
        for st in &plan.steps {
            let atom = st.conclusion.apply(binding);
            if !atom.is_ground() {
                return None;
            }
            let atom = self.canonical(&atom);
            let fid = match self.index.get(&atom) {
                Some(&i) => i,
                None => {
                    if !self.admissible(&atom) {
                        return None;
                    }
                    let ids: Vec<usize> = st.inputs.iter().map(|i| pick(i, &step_ids)).collect();
                    let bindings = st.pre.then(binding).restrict(&st.source_vars);
                    let height = self.height_of(&ids);
                    let just = Justification::Clause { clause: st.id, bindings, premises: ids };
                    self.add(atom, just, height, Prio::Inert)?
                }
            };
            step_ids.push(fid);
        }
        Some(plan.original.iter().map(|i| pick(i, &step_ids)).collect())
    }

    /// Xor of the given fact with every processed intruder fact.
    fn xor_given(&mut self, i: usize) {
        if !self.facts[i].atom.is_intruder() {
            return;
        }
        let Some(c) = self.prune.clone() else {
            let partners = self.intruder.clone();
            for j in partners {
                if self.tick() || self.over_limit || self.found.is_some() {
                    return;
                }
                let t = Term::xor(self.facts[i].atom.args[0].clone(), self.facts[j].atom.args[0].clone());
                self.xor_result(normal_form(&t, &self.canon), i, j);
            }
            return;
        };
        let Some((m1, r1)) = self.facts[i].split.clone() else { return };
        let partners: Vec<usize> = match &r1 {
            Some(_) => {
                let mut v = self.by_rest.get(&r1).cloned().unwrap_or_default();
                v.extend(self.by_rest.get(&None).into_iter().flatten());
                v
            }
            None => self.by_rest.values().flatten().copied().collect(),
        };
        for j in partners {
            if self.tick() || self.over_limit || self.found.is_some() {
                return;
            }
            let Some((m2, r2)) = &self.facts[j].split else { continue };
            let rest = match (&r1, r2) {
                (Some(x), Some(y)) if x == y => None,
                (Some(_), Some(_)) => continue,
                (Some(x), None) | (None, Some(x)) => Some(x.clone()),
                (None, None) => None,
            };
            let result = match (c.chain(m1 ^ m2), rest) {
                (Term::Zero, None) => Term::Zero,
                (Term::Zero, Some(r)) => r,
                (cp, None) => cp,
                (cp, Some(r)) => Term::xor(cp, r),
            };
            self.xor_result(result, i, j);
        }
    }

    fn xor_result(&mut self, result: Term, i: usize, j: usize) {
        let atom = Atom::intruder(result);
        if self.settled(&atom) || !self.admissible(&atom) {
            return;
        }
        let (left, right) = (i.min(j), i.max(j));
        let height = self.height_of(&[i, j]);
        let prio = if matches!(atom.args[0], Term::Xor(..)) { Prio::Synth } else { Prio::Plain };
        self.add(atom, Justification::Xor { left, right }, height, prio);
    }

    fn run(&mut self, extra: &[Atom]) -> Verdict {
        for a in extra {
            let a = self.canonical(a);
            self.add(a, Justification::Initial, 0, Prio::Plain);
        }
        for r in 0..self.rules.len() {
            if self.rules[r].clause.premises.is_empty() {
                self.conclude(r, Substitution::new(), Vec::new());
            }
        }
        while let Some(given) = self.next_given() {
            if let Some(id) = self.found {
                return Verdict::Found(self.extract(id));
            }
            if self.timed_out {
                return Verdict::Timeout;
            }
            self.activate(given);
            self.stats.processed += 1;
            for r in 0..self.rules.len() {
                let n = self.rules[r].clause.premises.len();
                for delta in 0..n {
                    if !self.may_fill(r, delta, given) {
                        continue;
                    }
                    let pat = self.rules[r].clause.premises[delta].clone();
                    let fact = self.facts[given].atom.clone();
                    let simple = self.rules[r].simple;
                    for b in self.match_atom(&pat, &fact, &Substitution::new(), simple) {
                        let mut chosen = vec![usize::MAX; n];
                        chosen[delta] = given;
                        self.join(r, delta, given, b, &mut chosen);
                    }
                }
            }
            if self.mode == Mode::Xor && self.xor_rule {
                self.xor_given(given);
            }
        }
        if let Some(id) = self.found {
            return Verdict::Found(self.extract(id));
        }
        if self.timed_out {
            return Verdict::Timeout;
        }
        self.quiescent()
    }

    /// Cheap pre-check that the given fact can fill premise `k` of `rule`.
    fn may_fill(&self, rule: usize, k: usize, given: usize) -> bool {
        let pat = &self.rules[rule].clause.premises[k];
        let fact = &self.facts[given].atom;
        if pat.pred != fact.pred || pat.args.len() != fact.args.len() {
            return false;
        }
        match (pat.args.first().and_then(head), fact.args.first().and_then(head)) {
            (Some(Head::App(f, n)), Some(h)) => h == Head::App(f, n),
            _ => true,
        }
    }

    fn quiescent(&self) -> Verdict {
        let mut reasons = Vec::new();
        if self.stats.dropped_by_depth > 0 {
            reasons.push(format!("{} facts over the depth bound", self.stats.dropped_by_depth));
        }
        if self.stats.dropped_by_size > 0 {
            reasons.push(format!("{} facts over the size bound", self.stats.dropped_by_size));
        }
        if self.stats.dropped_by_guidance > 0 {
            reasons.push(format!("{} compositions skipped by guidance", self.stats.dropped_by_guidance));
        }
        if self.guidance_specialised {
            reasons.push("compositions restricted by guidance".to_string());
        }
        if self.stats.incomplete_matching {
            reasons.push("matcher cap on non-dominated patterns".to_string());
        }
        if reasons.is_empty() && !self.over_limit {
            Verdict::Saturated
        } else {
            let head = if self.over_limit {
                format!("fact limit {} reached", self.opts.bounds.max_facts)
            } else {
                "no new facts".to_string()
            };
            reasons.insert(0, head);
            Verdict::Exhausted(reasons.join(", "))
        }
    }
}

/// Searches for `goal` from `theory` plus the ground `extra` facts.
pub fn derive_with_facts(
    theory: &Theory,
    extra: &[Atom],
    goal: &Atom,
    mode: Mode,
    opts: &SearchOptions,
) -> Result<Outcome> {
    if mode == Mode::Syntactic && theory.xor_rule_implicit {
        return Err(Error::Precondition("syntactic search needs a theory without the implicit xor rule".into()));
    }
    if !goal.is_ground() {
        return Err(Error::Precondition(format!("goal `{goal}` is not ground")));
    }
    let canon = match (mode, &opts.c_set) {
        (Mode::Xor, Some(c)) => c.clone(),
        _ => CSet::empty(),
    };
    let mut s = Search {
        mode,
        opts,
        canon,
        prune: opts.c_set.clone(),
        xor_rule: theory.xor_rule_implicit,
        rules: expand_sids(theory, opts.sid_pool),
        facts: Vec::new(),
        index: HashMap::new(),
        by_pred: HashMap::new(),
        by_head: HashMap::new(),
        intruder: Vec::new(),
        by_rest: HashMap::new(),
        by_child: HashMap::new(),
        by_child_head: HashMap::new(),
        by_xor_left: HashMap::new(),
        processed: Vec::new(),
        inert: Vec::new(),
        queue: BinaryHeap::new(),
        arrivals: VecDeque::new(),
        picks: 0,
        goal: goal.clone(),
        guidance: None,
        guidance_specialised: false,
        stats: SearchStats::default(),
        started: Instant::now(),
        ticks: 0,
        timed_out: false,
        over_limit: false,
        found: None,
    };
    s.goal = s.canonical(goal);
    if opts.guided {
        s.guidance = Some(s.build_guidance());
        s.specialise();
    }
    let verdict = s.run(extra);
    s.stats.facts = s.facts.len();
    s.stats.elapsed = s.started.elapsed();
    Ok(Outcome { verdict, stats: s.stats })
}

pub fn derive_syntactic(theory: &Theory, goal: &Atom, opts: &SearchOptions) -> Result<Outcome> {
    derive_with_facts(theory, &[], goal, Mode::Syntactic, opts)
}

pub fn derive_mod_xor(theory: &Theory, goal: &Atom, opts: &SearchOptions) -> Result<Outcome> {
    derive_with_facts(theory, &[], goal, Mode::Xor, opts)
}

fn args_agree(p: &Atom, q: &Atom, mode: Mode) -> bool {
    atoms_agree(p, q, mode)
}

/// Checks that every step replays under its justification. `Initial` steps
/// must be among `extra`.
pub fn verify_derivation_with(theory: &Theory, extra: &[Atom], d: &Derivation, mode: Mode) -> bool {
    for (k, step) in d.steps.iter().enumerate() {
        if !step.atom.is_ground() {
            return false;
        }
        let ok = match &step.just {
            Justification::Initial => extra.iter().any(|e| args_agree(e, &step.atom, mode)),
            Justification::Clause { clause, bindings, premises } => {
                let Some(cl) = theory.clauses.get(*clause) else { return false };
                if premises.len() != cl.premises.len() || premises.iter().any(|&p| p >= k) {
                    return false;
                }
                let inst = cl.map_terms(|t| bindings.apply(t));
                inst.atoms().all(Atom::is_ground)
                    && args_agree(&inst.conclusion, &step.atom, mode)
                    && inst.premises.iter().zip(premises).all(|(p, &i)| args_agree(p, &d.steps[i].atom, mode))
            }
            Justification::Xor { left, right } => {
                if mode != Mode::Xor || !theory.xor_rule_implicit || *left >= k || *right >= k {
                    return false;
                }
                let (l, r) = (&d.steps[*left].atom, &d.steps[*right].atom);
                l.is_intruder()
                    && r.is_intruder()
                    && step.atom.is_intruder()
                    && crate::term::equiv_mod_xor(&Term::xor(l.args[0].clone(), r.args[0].clone()), &step.atom.args[0])
            }
        };
        if !ok {
            return false;
        }
    }
    true
}

pub fn verify_derivation(theory: &Theory, d: &Derivation, mode: Mode) -> bool {
    verify_derivation_with(theory, &[], d, mode)
}

/// Maps a syntactic derivation from `T⁺` back to a derivation modulo XOR
/// from the source theory: source-instance steps cite the source clause with
/// bindings `σ` followed by the step's bindings, the xor families become
/// applications of the xor rule.
pub fn replay_to_source(rt: &ReducedTheory, d: &Derivation) -> Derivation {
    let steps = d
        .steps
        .iter()
        .map(|s| {
            let just = match &s.just {
                Justification::Clause { clause, bindings, premises } => match &rt.origins[*clause] {
                    Origin::Source { clause: src, sigma } => Justification::Clause {
                        clause: *src,
                        bindings: sigma.then(bindings),
                        premises: premises.clone(),
                    },
                    Origin::Family { .. } => Justification::Xor { left: premises[0], right: premises[1] },
                },
                other => other.clone(),
            };
            Step { atom: s.atom.clone(), just }
        })
        .collect();
    Derivation { steps }
}

#[derive(Clone, Debug)]
pub enum CorrespondenceVerdict {
    /// Definitive when the search saturated.
    Holds { definitive: bool },
    Violated(Derivation),
    Inconclusive(String),
}

/// The end event `goal` is derivable from the theory plus the fixed begin
/// events although its own begin event is not among them.
pub fn check_correspondence(
    theory: &Theory,
    query: &Query,
    mode: Mode,
    opts: &SearchOptions,
) -> Result<(CorrespondenceVerdict, SearchStats)> {
    let Query::Correspondence { end, begin, fixed_begins, goal } = query else {
        return Err(Error::Precondition("not a correspondence query".into()));
    };
    let mut theta = Substitution::new();
    let matched = end.pred == goal.pred
        && end.args.len() == goal.args.len()
        && end.args.iter().zip(goal.args.iter()).all(|(p, t)| match mode {
            Mode::Syntactic => match_syntactic(p, t, &mut theta),
            Mode::Xor => match match_mod_xor(&theta.apply(p), t, &CSet::empty()) {
                Some(m) => match theta.merge(&m) {
                    Some(merged) => {
                        theta = merged;
                        true
                    }
                    None => false,
                },
                None => false,
            },
        });
    if !matched {
        return Err(Error::Precondition(format!("goal `{goal}` is not an instance of `{end}`")));
    }
    let required = begin.apply(&theta);
    if fixed_begins.iter().any(|b| b.equiv_mod_xor(&required)) {
        return Err(Error::Precondition(format!("the begin event `{required}` for the goal is already given")));
    }
    let out = derive_with_facts(theory, fixed_begins, goal, mode, opts)?;
    let v = match out.verdict {
        Verdict::Found(d) => CorrespondenceVerdict::Violated(d),
        Verdict::Saturated => CorrespondenceVerdict::Holds { definitive: true },
        Verdict::Exhausted(why) => CorrespondenceVerdict::Inconclusive(why),
        Verdict::Timeout => CorrespondenceVerdict::Inconclusive("timeout".into()),
    };
    Ok((v, out.stats))
}
