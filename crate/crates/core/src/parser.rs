//! Reader for the line-oriented theory format.
//!
//! ```text
//! fun pair/2.  const a, b.  pred eBegin/3.
//! [intruder] I(pair(X, Y)) -> I(X).
//! exempt Sid.
//! [protocol] -> I(n(a, Sid)).
//! query secret m(a, a).
//! query corresp eEnd(X) ~> eBegin(X) given { eBegin(a) } goal eEnd(b).
//! ```
//!
//! Variables start with an uppercase letter, `+` is XOR (left associative)
//! and `0` is the XOR unit. `exempt` applies to the clause that follows it.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::term::{Sym, Term};
use crate::theory::{validate_with_positions, Atom, Diagnostic, DiagnosticKind, HornClause, Query, Role, Theory};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Zero,
    Number(usize),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Slash,
    Plus,
    Arrow,
    Leadsto,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str, diags: &mut Vec<Diagnostic>) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let ch = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match ch {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' | ')' | '[' | ']' | '{' | '}' | ',' | '.' | '/' | '+' => {
                let tok = match ch {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '/' => Tok::Slash,
                    _ => Tok::Plus,
                };
                out.push(Token { tok, line: tl, col: tc });
                advance(1, &mut i, &mut col);
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Token { tok: Tok::Arrow, line: tl, col: tc });
                advance(2, &mut i, &mut col);
            }
            '~' if chars.get(i + 1) == Some(&'>') => {
                out.push(Token { tok: Tok::Leadsto, line: tl, col: tc });
                advance(2, &mut i, &mut col);
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                let tok = if s == "0" { Tok::Zero } else { Tok::Number(s.parse().unwrap_or(usize::MAX)) };
                out.push(Token { tok, line: tl, col: tc });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                col += i - start;
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
            }
            other => {
                diags.push(Diagnostic {
                    line: tl,
                    column: tc,
                    kind: DiagnosticKind::Syntax,
                    message: format!("unexpected character `{other}`"),
                });
                advance(1, &mut i, &mut col);
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    out
}

fn is_variable_name(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    theory: Theory,
    queries: Vec<Query>,
    diags: Vec<Diagnostic>,
    positions: Vec<(usize, usize)>,
    pending_exempt: BTreeSet<Sym>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, tok: &Token, kind: DiagnosticKind, message: String) -> Diagnostic {
        Diagnostic { line: tok.line, column: tok.col, kind, message }
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<Token> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(self.error_at(&t, DiagnosticKind::Syntax, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => Err(self.error_at(&t, DiagnosticKind::Syntax, format!("expected {what}, found {}", describe(other)))),
        }
    }

    /// Skips to just after the next `.`.
    fn recover(&mut self) {
        loop {
            let t = self.next();
            if matches!(t.tok, Tok::Dot | Tok::Eof) {
                return;
            }
        }
    }

    fn run(&mut self) {
        while self.peek().tok != Tok::Eof {
            if let Err(d) = self.statement() {
                self.diags.push(d);
                self.recover();
            }
        }
        if !self.pending_exempt.is_empty() {
            let t = self.peek().clone();
            self.diags.push(self.error_at(&t, DiagnosticKind::Syntax, "`exempt` is not followed by a clause".into()));
        }
    }

    fn statement(&mut self) -> PResult<()> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(kw) if kw == "fun" || kw == "pred" => {
                let is_fun = kw == "fun";
                self.next();
                loop {
                    let (name, nt) = self.ident("symbol name")?;
                    self.expect(Tok::Slash, "`/`")?;
                    let at = self.next();
                    let arity = match at.tok {
                        Tok::Zero => 0,
                        Tok::Number(n) => n,
                        ref other => {
                            return Err(self.error_at(&at, DiagnosticKind::Syntax, format!("expected arity, found {}", describe(other))))
                        }
                    };
                    self.declare(&name, arity, is_fun, &nt)?;
                    if self.peek().tok == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::Dot, "`.`")?;
                Ok(())
            }
            Tok::Ident(kw) if kw == "const" => {
                self.next();
                loop {
                    let (name, nt) = self.ident("constant name")?;
                    self.declare(&name, 0, true, &nt)?;
                    if self.peek().tok == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::Dot, "`.`")?;
                Ok(())
            }
            Tok::Ident(kw) if kw == "exempt" => {
                self.next();
                loop {
                    let (name, nt) = self.ident("variable name")?;
                    if !is_variable_name(&name) {
                        return Err(self.error_at(&nt, DiagnosticKind::Syntax, format!("`{name}` is not a variable")));
                    }
                    self.pending_exempt.insert(Arc::from(name.as_str()));
                    if self.peek().tok == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::Dot, "`.`")?;
                Ok(())
            }
            Tok::Ident(kw) if kw == "query" => {
                self.next();
                self.query()
            }
            _ => self.clause(),
        }
    }

    fn declare(&mut self, name: &str, arity: usize, is_fun: bool, at: &Token) -> PResult<()> {
        if is_variable_name(name) && is_fun {
            return Err(self.error_at(at, DiagnosticKind::Syntax, format!("function symbol `{name}` must not start with an uppercase letter")));
        }
        let table = if is_fun { &mut self.theory.functions } else { &mut self.theory.predicates };
        if let Some(&old) = table.get(name) {
            if old != arity {
                return Err(self.error_at(at, DiagnosticKind::Arity, format!("`{name}` redeclared with arity {arity} (was {old})")));
            }
        }
        table.insert(Arc::from(name), arity);
        Ok(())
    }

    fn clause(&mut self) -> PResult<()> {
        let start = self.peek().clone();
        let mut role = None;
        if start.tok == Tok::LBracket {
            self.next();
            let (tag, tt) = self.ident("role")?;
            role = Some(Role::from_tag(&tag).ok_or_else(|| {
                self.error_at(&tt, DiagnosticKind::Syntax, format!("unknown role `{tag}` (expected fact, intruder, protocol or event)"))
            })?);
            self.expect(Tok::RBracket, "`]`")?;
        }
        let mut premises = Vec::new();
        if self.peek().tok != Tok::Arrow {
            loop {
                premises.push(self.atom()?);
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Arrow, "`->`")?;
        let conclusion = self.atom()?;
        self.expect(Tok::Dot, "`.`")?;
        let role = role.unwrap_or(if premises.is_empty() { Role::IntruderFact } else { Role::ProtocolRule });
        let mut clause = HornClause::new(premises, conclusion, role);
        clause.exempt_vars = std::mem::take(&mut self.pending_exempt);
        self.theory.clauses.push(clause);
        self.positions.push((start.line, start.col));
        Ok(())
    }

    fn query(&mut self) -> PResult<()> {
        let (kind, kt) = self.ident("`secret` or `corresp`")?;
        match kind.as_str() {
            "secret" => {
                let goal = match (&self.peek().tok, self.toks.get(self.pos + 1).map(|t| &t.tok)) {
                    (Tok::Ident(name), Some(Tok::LParen)) if self.theory.predicates.contains_key(name.as_str()) => self.atom()?,
                    _ => Atom::intruder(self.term()?),
                };
                self.expect(Tok::Dot, "`.`")?;
                if !goal.is_ground() {
                    return Err(self.error_at(&kt, DiagnosticKind::VariableCondition, "secrecy goal must be ground".into()));
                }
                self.queries.push(Query::Secrecy { goal });
                Ok(())
            }
            "corresp" => {
                let end = self.atom()?;
                self.expect(Tok::Leadsto, "`~>`")?;
                let begin = self.atom()?;
                let (g, gt) = self.ident("`given`")?;
                if g != "given" {
                    return Err(self.error_at(&gt, DiagnosticKind::Syntax, format!("expected `given`, found `{g}`")));
                }
                self.expect(Tok::LBrace, "`{`")?;
                let mut fixed_begins = Vec::new();
                if self.peek().tok != Tok::RBrace {
                    loop {
                        fixed_begins.push(self.atom()?);
                        if self.peek().tok == Tok::Comma {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace, "`}`")?;
                let (g, gt) = self.ident("`goal`")?;
                if g != "goal" {
                    return Err(self.error_at(&gt, DiagnosticKind::Syntax, format!("expected `goal`, found `{g}`")));
                }
                let goal = self.atom()?;
                self.expect(Tok::Dot, "`.`")?;
                if !goal.is_ground() || fixed_begins.iter().any(|b| !b.is_ground()) {
                    return Err(self.error_at(&kt, DiagnosticKind::VariableCondition, "correspondence goal and given begin events must be ground".into()));
                }
                self.queries.push(Query::Correspondence { end, begin, fixed_begins, goal });
                Ok(())
            }
            other => Err(self.error_at(&kt, DiagnosticKind::Syntax, format!("unknown query kind `{other}`"))),
        }
    }

    fn atom(&mut self) -> PResult<Atom> {
        let (name, nt) = self.ident("predicate")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            args.push(self.term()?);
            if self.peek().tok == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        match self.theory.predicates.get(name.as_str()) {
            None => Err(self.error_at(&nt, DiagnosticKind::UnknownSymbol, format!("predicate `{name}` is not declared"))),
            Some(&n) if n != args.len() => Err(self.error_at(
                &nt,
                DiagnosticKind::Arity,
                format!("predicate `{name}` declared with arity {n}, used with {}", args.len()),
            )),
            _ => Ok(Atom::new(&name, args)),
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let mut acc = self.primary()?;
        while self.peek().tok == Tok::Plus {
            self.next();
            let rhs = self.primary()?;
            acc = Term::xor(acc, rhs);
        }
        Ok(acc)
    }

    fn primary(&mut self) -> PResult<Term> {
        let t = self.next();
        match &t.tok {
            Tok::Zero => Ok(Term::Zero),
            Tok::LParen => {
                let inner = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) if is_variable_name(name) => Ok(Term::var(name)),
            Tok::Ident(name) => {
                let mut args = Vec::new();
                if self.peek().tok == Tok::LParen {
                    self.next();
                    loop {
                        args.push(self.term()?);
                        if self.peek().tok == Tok::Comma {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                }
                match self.theory.functions.get(name.as_str()) {
                    None => Err(self.error_at(&t, DiagnosticKind::UnknownSymbol, format!("function `{name}` is not declared"))),
                    Some(&n) if n != args.len() => Err(self.error_at(
                        &t,
                        DiagnosticKind::Arity,
                        format!("function `{name}` declared with arity {n}, used with {}", args.len()),
                    )),
                    _ => Ok(Term::app(name, args)),
                }
            }
            other => Err(self.error_at(&t, DiagnosticKind::Syntax, format!("expected a term, found {}", describe(other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Zero => "`0`".into(),
        Tok::Number(n) => format!("`{n}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Dot => "`.`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::Leadsto => "`~>`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parsed theory file.
#[derive(Clone, Debug)]
pub struct ParsedTheory {
    pub theory: Theory,
    pub queries: Vec<Query>,
}

/// Parses and validates a theory file. Any diagnostic makes the parse fail.
pub fn parse_theory(text: &str) -> Result<ParsedTheory, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let toks = lex(text, &mut diags);
    let mut p = Parser {
        toks,
        pos: 0,
        theory: Theory::new(),
        queries: Vec::new(),
        diags,
        positions: Vec::new(),
        pending_exempt: BTreeSet::new(),
    };
    p.run();
    let mut diags = p.diags;
    diags.extend(validate_with_positions(&p.theory, &p.positions));
    if diags.is_empty() {
        Ok(ParsedTheory { theory: p.theory, queries: p.queries })
    } else {
        diags.sort_by_key(|d| (d.line, d.column));
        Err(diags)
    }
}

/// Parses a single atom against the signature of `theory` (used for goals
/// given on the command line).
pub fn parse_atom(theory: &Theory, text: &str) -> Result<Atom, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let toks = lex(text, &mut diags);
    let mut p = Parser {
        toks,
        pos: 0,
        theory: theory.clone(),
        queries: Vec::new(),
        diags,
        positions: Vec::new(),
        pending_exempt: BTreeSet::new(),
    };
    let atom = match p.atom() {
        Ok(a) => a,
        Err(d) => {
            p.diags.push(d);
            return Err(p.diags);
        }
    };
    if p.peek().tok == Tok::Dot {
        p.next();
    }
    if p.peek().tok != Tok::Eof {
        let t = p.peek().clone();
        p.diags.push(p.error_at(&t, DiagnosticKind::Syntax, "trailing input after atom".into()));
    }
    if p.diags.is_empty() {
        Ok(atom)
    } else {
        Err(p.diags)
    }
}

/// Parses a term against the signature of `theory`.
pub fn parse_term(theory: &Theory, text: &str) -> Result<Term, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let toks = lex(text, &mut diags);
    let mut p = Parser {
        toks,
        pos: 0,
        theory: theory.clone(),
        queries: Vec::new(),
        diags,
        positions: Vec::new(),
        pending_exempt: BTreeSet::new(),
    };
    let term = match p.term() {
        Ok(t) => t,
        Err(d) => {
            p.diags.push(d);
            return Err(p.diags);
        }
    };
    if p.peek().tok != Tok::Eof {
        let t = p.peek().clone();
        p.diags.push(p.error_at(&t, DiagnosticKind::Syntax, "trailing input after term".into()));
    }
    if p.diags.is_empty() {
        Ok(term)
    } else {
        Err(p.diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        let p = parse_theory("").unwrap();
        assert!(p.theory.clauses.is_empty());
        assert!(p.queries.is_empty());
    }

    #[test]
    fn unexempted_fresh_variable() {
        let err = parse_theory("-> I(X).").unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].kind, DiagnosticKind::VariableCondition);
        assert_eq!((err[0].line, err[0].column), (1, 1));
    }

    #[test]
    fn exempt_session_variable() {
        let src = "fun n/2. const a.\nexempt Sid.\n[protocol] -> I(n(a, Sid)).\n";
        let p = parse_theory(src).unwrap();
        assert_eq!(p.theory.clauses[0].exempt_vars.len(), 1);
        let err = parse_theory("fun n/2. const a.\n[protocol] -> I(n(a, Sid)).\n").unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].kind, DiagnosticKind::VariableCondition);
    }

    #[test]
    fn unknown_symbol_and_arity() {
        let err = parse_theory("-> I(f(a)).").unwrap_err();
        assert_eq!(err[0].kind, DiagnosticKind::UnknownSymbol);
        let err = parse_theory("fun f/2. const a.\n-> I(f(a)).").unwrap_err();
        assert_eq!(err[0].kind, DiagnosticKind::Arity);
        assert_eq!(err[0].line, 2);
    }

    #[test]
    fn syntax_error_recovers() {
        let err = parse_theory("const a.\n-> I(a\n-> I(b.\n").unwrap_err();
        assert!(err.iter().all(|d| d.kind == DiagnosticKind::Syntax || d.kind == DiagnosticKind::UnknownSymbol));
        assert!(!err.is_empty());
    }

    #[test]
    fn xor_is_left_associative() {
        let p = parse_theory("const a, b, c.\n-> I(a + b + c).").unwrap();
        let t = &p.theory.clauses[0].conclusion.args[0];
        assert_eq!(t.to_string(), "(a + b) + c");
    }

    #[test]
    fn queries() {
        let src = "const a, b. pred eBegin/1. pred eEnd/1.\n\
                   query secret a + b.\n\
                   query corresp eEnd(X) ~> eBegin(X) given { eBegin(a) } goal eEnd(b).\n";
        let p = parse_theory(src).unwrap();
        assert_eq!(p.queries.len(), 2);
        assert_eq!(p.queries[0].goal().to_string(), "I(a + b)");
        match &p.queries[1] {
            Query::Correspondence { fixed_begins, .. } => assert_eq!(fixed_begins.len(), 1),
            _ => panic!("expected a correspondence query"),
        }
    }
}
