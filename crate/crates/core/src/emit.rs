//! ProVerif output for `T⁺`.
//!
//! Target dialect: ProVerif's untyped Horn-clause front end (`fun`, `pred`,
//! `query` declarations and one `reduc` block of clauses `F1 & … & Fn -> F`).
//! Frozen sums are printed with the free symbols `xor/2` and `zero/0`.
//! The optimized encoding also prints closure elements as nested `xx/2`
//! and replaces the instances of families (2), (4) and (5) by schema
//! clauses over the table predicate `xtab/3`.
//!
//! [`decode`] reads the emitted text back into an XOR-free theory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use crate::domination::CSet;
use crate::error::{Error, Result};
use crate::normal::normal_form;
use crate::reduction::{reduce_stats, ReducedTheory, XOR_VAR};
use crate::subst::Substitution;
use crate::term::{Sym, Term};
use crate::theory::{Atom, HornClause, Role, Theory};

pub const DIALECT: &str = "ProVerif untyped Horn clauses (reduc block)";

const XOR: &str = "xor";
const XX: &str = "xx";
const ZERO: &str = "zero";
const XTAB: &str = "xtab";

/// Keywords of the ProVerif front ends plus the symbols the encoding uses.
const RESERVED: &[&str] = &[
    XOR, XX, ZERO, XTAB, "among", "and", "block", "channel", "choice", "clauses", "const", "data", "decompData",
    "decompDataSelect", "def", "diff", "do", "elimVar", "elimVarStrict", "elimtrue", "else", "equation",
    "equivalence", "event", "expand", "fail", "for", "forall", "foreach", "free", "fun", "get", "if",
    "implementation", "in", "inj", "insert", "let", "letfun", "memberOptim", "new", "noninterf", "not", "nounif",
    "or", "otherwise", "out", "param", "phase", "pred", "private", "proba", "process", "proof", "public_vars",
    "putbegin", "query", "reduc", "secret", "set", "suchthat", "sync", "table", "then", "type", "weaksecret",
    "yield",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Plain,
    Optimized,
}

#[derive(Clone, Debug)]
pub struct EmitOptions {
    pub encoding: Encoding,
    /// Copied verbatim after the header comment.
    pub proverif_header_options: Vec<String>,
    pub query_goals: Vec<Atom>,
    /// Predicates declared `block` (begin events of correspondence queries).
    pub blocking: Vec<Sym>,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            encoding: Encoding::Optimized,
            proverif_header_options: Vec::new(),
            query_goals: Vec::new(),
            blocking: Vec::new(),
        }
    }
}

fn check_names(rt: &ReducedTheory) -> Result<()> {
    let clash: Vec<&str> = rt
        .theory
        .functions
        .keys()
        .chain(rt.theory.predicates.keys())
        .map(|s| &**s)
        .filter(|s| RESERVED.contains(s))
        .collect();
    if clash.is_empty() {
        Ok(())
    } else {
        Err(Error::ReservedName(clash.join(", ")))
    }
}

struct Printer<'a> {
    c: &'a CSet,
    optimized: bool,
}

impl Printer<'_> {
    fn term(&self, t: &Term, out: &mut String) {
        match t {
            Term::Var(v) => out.push_str(v),
            Term::Zero => out.push_str(ZERO),
            Term::App(f, args) => {
                out.push_str(f);
                if !args.is_empty() {
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        self.term(a, out);
                    }
                    out.push(')');
                }
            }
            Term::Xor(l, r) => {
                let sym = if self.optimized && t.is_ground() && self.c.mask_of(t).is_some() { XX } else { XOR };
                if sym == XX {
                    self.chain(t, out);
                    return;
                }
                out.push_str(sym);
                out.push('(');
                self.term(l, out);
                out.push_str(", ");
                self.term(r, out);
                out.push(')');
            }
        }
    }

    fn chain(&self, t: &Term, out: &mut String) {
        match t {
            Term::Xor(l, r) => {
                out.push_str(XX);
                out.push('(');
                self.chain(l, out);
                out.push_str(", ");
                self.chain(r, out);
                out.push(')');
            }
            _ => self.term(t, out),
        }
    }

    fn atom(&self, a: &Atom, out: &mut String) {
        out.push_str(&a.pred);
        out.push('(');
        for (i, t) in a.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            self.term(t, out);
        }
        out.push(')');
    }

    fn clause(&self, c: &HornClause, out: &mut String) {
        for (i, p) in c.premises.iter().enumerate() {
            if i > 0 {
                out.push_str(" & ");
            }
            self.atom(p, out);
        }
        if !c.premises.is_empty() {
            out.push_str(" -> ");
        }
        self.atom(&c.conclusion, out);
    }
}

/// Schema clauses standing for families (2), (4) and (5), and two companions
/// for the `0 ⊕ x = x` convention that the free `xor` symbol cannot express.
fn schemas() -> Vec<HornClause> {
    let v = Term::var;
    let x = v(XOR_VAR);
    let tab = |a: Term, b: Term, c: Term| Atom::new(XTAB, vec![a, b, c]);
    let i = Atom::intruder;
    let xor = |a: Term, b: Term| Term::app(XOR, vec![a, b]);
    let zero = Term::constant(ZERO);
    let rule = |p, c| HornClause::new(p, c, Role::IntruderRule);
    vec![
        rule(vec![tab(v("C1"), v("C2"), v("C3")), i(v("C1")), i(v("C2"))], i(v("C3"))),
        rule(vec![tab(v("C1"), v("C2"), v("C3")), i(v("C1")), i(xor(v("C2"), x.clone()))], i(xor(v("C3"), x.clone()))),
        rule(vec![tab(v("C1"), v("C2"), v("C3")), i(xor(v("C1"), x.clone())), i(xor(v("C2"), x.clone()))], i(v("C3"))),
        rule(vec![tab(v("C1"), v("C1"), zero.clone()), i(v("C1")), i(xor(v("C1"), x.clone()))], i(x.clone())),
        rule(vec![tab(v("C1"), zero, v("C1")), i(xor(v("C1"), x.clone())), i(x)], i(v("C1"))),
    ]
}

pub fn emit_proverif(rt: &ReducedTheory, opts: &EmitOptions) -> Result<String> {
    check_names(rt)?;
    let optimized = opts.encoding == Encoding::Optimized;
    let c = &rt.c_set;
    let closure = c.closure_norm()?;
    let stats = reduce_stats(rt);
    let p = Printer { c, optimized };
    let collapsed = |fam: u8| optimized && matches!(fam, 2 | 4 | 5);
    let mut out = String::new();

    let elems: Vec<String> = c.elements().iter().map(Term::to_string).collect();
    let _ = writeln!(out, "(* generated by xorhorn {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "   dialect: {DIALECT}");
    let _ = writeln!(out, "   encoding: {}", if optimized { "optimized" } else { "plain" });
    let _ = writeln!(out, "   C = {{{}}} in this order, closure size {}", elems.join(", "), stats.closure_size);
    let fams: Vec<String> =
        stats.clauses_per_family.iter().enumerate().map(|(i, n)| format!("({}) {n}", i + 1)).collect();
    let _ = writeln!(out, "   clauses per family: {} *)", fams.join(", "));
    for line in &opts.proverif_header_options {
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');

    let mut funs: BTreeMap<&str, usize> = rt.theory.functions.iter().map(|(k, v)| (&**k, *v)).collect();
    let uses_xor = rt.theory.terms().any(Term::has_xor) || (optimized && !c.is_empty());
    if uses_xor {
        funs.insert(XOR, 2);
        funs.insert(ZERO, 0);
    }
    if optimized && c.len() > 1 {
        funs.insert(XX, 2);
    }
    for (f, n) in &funs {
        let _ = writeln!(out, "fun {f}/{n}.");
    }
    let mut preds: BTreeMap<&str, usize> = rt.theory.predicates.iter().map(|(k, v)| (&**k, *v)).collect();
    let tabled = optimized && !c.is_empty();
    if tabled {
        preds.insert(XTAB, 3);
    }
    for (q, n) in &preds {
        let block = if opts.blocking.iter().any(|b| &**b == *q) { " block" } else { "" };
        let _ = writeln!(out, "pred {q}/{n}{block}.");
    }
    out.push('\n');
    for g in &opts.query_goals {
        out.push_str("query ");
        p.atom(&g.map_args(|t| normal_form(t, c)), &mut out);
        out.push_str(".\n");
    }
    if !opts.query_goals.is_empty() {
        out.push('\n');
    }

    let mut lines: Vec<String> = Vec::new();
    for (cl, origin) in rt.theory.clauses.iter().zip(&rt.origins) {
        if collapsed(origin.family()) {
            continue;
        }
        let mut s = String::new();
        p.clause(cl, &mut s);
        lines.push(s);
    }
    if tabled {
        for cl in schemas() {
            let mut s = String::new();
            p.clause(&cl, &mut s);
            lines.push(s);
        }
        for c1 in closure {
            for c2 in closure {
                let sum = normal_form(&Term::xor(c1.clone(), c2.clone()), c);
                let mut s = String::new();
                p.atom(&Atom::new(XTAB, vec![c1.clone(), c2.clone(), sum]), &mut s);
                lines.push(s);
            }
        }
    }
    out.push_str("reduc\n");
    for (i, l) in lines.iter().enumerate() {
        let end = if i + 1 == lines.len() { "." } else { ";" };
        let _ = writeln!(out, "  {l}{end}");
    }
    if lines.is_empty() {
        // an empty reduc block is not accepted; a trivially true clause is
        out.push_str("  I(X) -> I(X).\n");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// reading the output back

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(usize),
    Sym(&'static str),
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let ch = b[i];
        if ch.is_ascii_whitespace() {
            i += 1;
        } else if text[i..].starts_with("(*") {
            let end = text[i + 2..].find("*)").ok_or_else(|| bad("unterminated comment"))?;
            i += end + 4;
        } else if text[i..].starts_with("->") {
            toks.push(Tok::Sym("->"));
            i += 2;
        } else if let Some(s) = ["(", ")", ",", ".", ";", "&", "/", "="].iter().find(|s| text[i..].starts_with(**s)) {
            toks.push(Tok::Sym(s));
            i += 1;
        } else if ch.is_ascii_digit() {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            toks.push(Tok::Num(text[start..i].parse().map_err(|_| bad("number"))?));
        } else if ch.is_ascii_alphabetic() || ch == b'_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'\'') {
                i += 1;
            }
            toks.push(Tok::Ident(text[start..i].to_string()));
        } else {
            return Err(bad(&format!("unexpected character `{}`", ch as char)));
        }
    }
    Ok(toks)
}

fn bad(msg: &str) -> Error {
    Error::Precondition(format!("malformed ProVerif text: {msg}"))
}

struct Reader {
    toks: Vec<Tok>,
    pos: usize,
    funs: BTreeMap<String, usize>,
}

impl Reader {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| bad("unexpected end"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        match self.next()? {
            Tok::Sym(x) if x == s => Ok(()),
            t => Err(bad(&format!("expected `{s}`, found {t:?}"))),
        }
    }

    fn eat(&mut self, s: &'static str) -> bool {
        if self.peek() == Some(&Tok::Sym(s)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            t => Err(bad(&format!("expected a name, found {t:?}"))),
        }
    }

    fn decl(&mut self) -> Result<(String, usize)> {
        let name = self.ident()?;
        self.expect("/")?;
        let n = match self.next()? {
            Tok::Num(n) => n,
            t => Err(bad(&format!("expected an arity, found {t:?}")))?,
        };
        while !self.eat(".") {
            self.next()?;
        }
        Ok((name, n))
    }

    fn term(&mut self) -> Result<Term> {
        let name = self.ident()?;
        let mut args = Vec::new();
        if self.eat("(") {
            loop {
                args.push(self.term()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        match self.funs.get(&name) {
            Some(&n) if n != args.len() => Err(bad(&format!("`{name}` expects {n} arguments"))),
            Some(_) => Ok(match (name.as_str(), args.len()) {
                (XOR | XX, 2) => Term::xor(args[0].clone(), args[1].clone()),
                (ZERO, 0) => Term::Zero,
                _ => Term::app(&name, args),
            }),
            None if args.is_empty() => Ok(Term::var(&name)),
            None => Err(bad(&format!("undeclared function `{name}`"))),
        }
    }

    fn atom(&mut self) -> Result<Atom> {
        let pred = self.ident()?;
        self.expect("(")?;
        let mut args = Vec::new();
        loop {
            args.push(self.term()?);
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(Atom::new(&pred, args))
    }

    fn clause(&mut self) -> Result<HornClause> {
        let mut atoms = vec![self.atom()?];
        while self.eat("&") {
            atoms.push(self.atom()?);
        }
        if self.eat("->") {
            let concl = self.atom()?;
            Ok(HornClause::new(atoms, concl, Role::ProtocolRule))
        } else if atoms.len() == 1 {
            Ok(HornClause::fact(atoms.pop().unwrap()))
        } else {
            Err(bad("conjunction without a conclusion"))
        }
    }
}

/// `0 ⊕ x` read as `x`.
fn drop_zero(t: &Term) -> Term {
    match t {
        Term::Xor(l, r) => match (drop_zero(l), drop_zero(r)) {
            (Term::Zero, x) | (x, Term::Zero) => x,
            (l, r) => Term::xor(l, r),
        },
        Term::App(f, args) => Term::app_sym(f.clone(), args.iter().map(drop_zero).collect()),
        _ => t.clone(),
    }
}

/// Parses emitted text back into an XOR-free theory: `xx` and `xor` become
/// frozen sums, and clauses with an `xtab` premise are expanded over the
/// `xtab` facts. Degenerate and repeated instances are dropped the same way
/// the reduction drops them. Also serves as a grammar check of the output.
pub fn decode(text: &str) -> Result<Theory> {
    let mut r = Reader { toks: lex(text)?, pos: 0, funs: BTreeMap::new() };
    let mut theory = Theory::new();
    theory.xor_rule_implicit = false;
    let mut clauses = Vec::new();
    let mut saw_reduc = false;
    while let Some(tok) = r.peek().cloned() {
        let Tok::Ident(kw) = tok else { return Err(bad(&format!("unexpected {tok:?}"))) };
        r.pos += 1;
        match kw.as_str() {
            "fun" => {
                let (f, n) = r.decl()?;
                r.funs.insert(f, n);
            }
            "pred" => {
                let (p, n) = r.decl()?;
                if p != XTAB {
                    theory.declare_pred(&p, n);
                }
            }
            "query" => {
                r.atom()?;
                r.expect(".")?;
            }
            "reduc" => {
                if saw_reduc {
                    return Err(bad("second reduc block"));
                }
                saw_reduc = true;
                loop {
                    clauses.push(r.clause()?);
                    if r.eat(".") {
                        break;
                    }
                    r.expect(";")?;
                }
            }
            _ => {
                // pass-through option lines
                while !r.eat(".") {
                    r.next()?;
                }
            }
        }
    }
    if !saw_reduc {
        return Err(bad("no reduc block"));
    }
    for (f, n) in &r.funs {
        if ![XOR, XX, ZERO].contains(&f.as_str()) {
            theory.declare_fun(f, *n);
        }
    }

    let (table, rest): (Vec<HornClause>, Vec<HornClause>) =
        clauses.into_iter().partition(|c| c.premises.is_empty() && &*c.conclusion.pred == XTAB);
    let rows: Vec<Vec<Term>> = table.into_iter().map(|c| c.conclusion.args.to_vec()).collect();
    let mut seen: HashSet<(Vec<Atom>, Atom)> = HashSet::new();
    let mut push = |cl: HornClause, out: &mut Vec<HornClause>| {
        let cl = cl.map_terms(drop_zero);
        if cl.premises.contains(&cl.conclusion) {
            return;
        }
        if seen.insert((cl.premises.clone(), cl.conclusion.clone())) {
            out.push(cl);
        }
    };
    let mut out = Vec::new();
    for cl in rest {
        let Some(k) = cl.premises.iter().position(|a| &*a.pred == XTAB) else {
            push(cl, &mut out);
            continue;
        };
        let pat = cl.premises[k].clone();
        for row in &rows {
            let mut s = Substitution::new();
            let ok = pat.args.iter().zip(row).all(|(p, t)| crate::engine::match_syntactic(p, t, &mut s));
            if !ok {
                continue;
            }
            let mut inst = cl.clone();
            inst.premises.remove(k);
            push(inst.map_terms(|t| s.apply(t)), &mut out);
        }
    }
    theory.clauses = out;
    Ok(theory)
}

/// Clause set of a theory ignoring roles and order.
pub fn clause_set(t: &Theory) -> BTreeSet<String> {
    t.clauses
        .iter()
        .map(|c| {
            let prem: Vec<String> = c.premises.iter().map(Atom::to_string).collect();
            format!("{} -> {}", prem.join(", "), c.conclusion)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domination::compute_c_set;
    use crate::parser::parse_theory;
    use crate::reduction::build_t_plus;

    fn reduce(src: &str) -> ReducedTheory {
        let t = parse_theory(src).unwrap().theory;
        let c = compute_c_set(&t).unwrap();
        build_t_plus(&t, &c).unwrap()
    }

    fn k(n: &str) -> Term {
        Term::constant(n)
    }

    fn reduce_ab(src: &str) -> ReducedTheory {
        let t = parse_theory(src).unwrap().theory;
        build_t_plus(&t, &CSet::new(vec![k("a"), k("b")]).unwrap()).unwrap()
    }

    #[test]
    fn closure_elements_print_as_xx() {
        let c = CSet::new(vec![k("a"), k("b"), k("c")]).unwrap();
        let p = Printer { c: &c, optimized: true };
        let mut s = String::new();
        p.term(&normal_form(&Term::xor(k("b"), k("a")), &c), &mut s);
        assert_eq!(s, "xx(a, b)");
        s.clear();
        p.term(&c.chain(0b111), &mut s);
        assert_eq!(s, "xx(a, xx(b, c))");
        s.clear();
        p.term(&normal_form(&Term::xor(Term::xor(k("b"), Term::var("X")), k("a")), &c), &mut s);
        assert_eq!(s, "xor(xx(a, b), X)");
    }

    #[test]
    fn table_for_two_constants() {
        let rt = reduce_ab("const a, b.\n-> I(a + b).");
        let out = emit_proverif(&rt, &EmitOptions::default()).unwrap();
        assert_eq!(out.lines().filter(|l| l.trim_start().starts_with("xtab(") && !l.contains("->")).count(), 16);
        assert!(out.contains("xtab(C1, C2, C3) & I(C1) & I(xor(C2, X)) -> I(xor(C3, X))"));
        assert!(out.contains("xtab(a, b, xx(a, b))"));
    }

    #[test]
    fn empty_set_has_no_table() {
        let rt = reduce("fun f/1.\nconst a.\n-> I(a).\n[intruder] I(X) -> I(f(X)).");
        let out = emit_proverif(&rt, &EmitOptions::default()).unwrap();
        assert!(!out.contains("xx(") && !out.contains("xtab") && !out.contains("xor("));
        assert!(out.contains("I(X) -> I(f(X))"));
    }

    #[test]
    fn reserved_names_are_rejected() {
        let rt = reduce("const xtab.\n-> I(xtab).");
        assert!(matches!(emit_proverif(&rt, &EmitOptions::default()), Err(Error::ReservedName(_))));
    }

    #[test]
    fn decoding_gives_back_the_reduced_clauses() {
        let rt = reduce("fun f/1.\nconst a, b.\n-> I(a).\n[protocol] I(f(X + a)) -> I(X + b).");
        let want = clause_set(&rt.theory);
        for encoding in [Encoding::Plain, Encoding::Optimized] {
            let out = emit_proverif(&rt, &EmitOptions { encoding, ..Default::default() }).unwrap();
            assert_eq!(clause_set(&decode(&out).unwrap()), want, "{encoding:?}");
        }
    }

    #[test]
    fn header_and_options() {
        let rt = reduce_ab("const a, b.\n-> I(a + b).");
        let opts = EmitOptions { proverif_header_options: vec!["set ignoreTypes = true.".into()], ..Default::default() };
        let out = emit_proverif(&rt, &opts).unwrap();
        assert!(out.starts_with("(* generated by xorhorn"));
        assert!(out.contains("C = {a, b}"));
        assert!(out.contains("\nset ignoreTypes = true.\n"));
        assert_eq!(out, emit_proverif(&rt, &opts).unwrap());
    }
}
