//! Terms and types of the linear quantum lambda-calculus, the `.lq` surface
//! parser and a minimal-parenthesis pretty-printer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::gates;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Type {
    Bit,
    Qbit,
    Unit,
    Tensor(Box<Type>, Box<Type>),
    Lolli(Box<Type>, Box<Type>),
}

impl Type {
    pub fn tensor(a: Type, b: Type) -> Type {
        Type::Tensor(Box::new(a), Box::new(b))
    }

    pub fn lolli(a: Type, b: Type) -> Type {
        Type::Lolli(Box::new(a), Box::new(b))
    }

    /// Right-nested tensor of a list; the empty list is `1`.
    pub fn tensor_of(items: &[Type]) -> Type {
        match items.split_last() {
            None => Type::Unit,
            Some((last, init)) => init.iter().rev().fold(last.clone(), |acc, t| Type::tensor(t.clone(), acc)),
        }
    }

    pub fn is_base(&self) -> bool {
        matches!(self, Type::Bit | Type::Qbit)
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Type::Bit | Type::Qbit | Type::Unit)
    }

    /// First-order: no `-o` anywhere.
    pub fn is_boolean(&self) -> bool {
        match self {
            Type::Bit | Type::Qbit | Type::Unit => true,
            Type::Tensor(a, b) => a.is_boolean() && b.is_boolean(),
            Type::Lolli(..) => false,
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            Type::Tensor(a, b) | Type::Lolli(a, b) => a.atom_count() + b.atom_count(),
            _ => 1,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        match self {
            Type::Bit => write!(f, "bit"),
            Type::Qbit => write!(f, "qbit"),
            Type::Unit => write!(f, "1"),
            Type::Tensor(a, b) => {
                if prec > 1 {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 2)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 1)?;
                if prec > 1 {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Type::Lolli(a, b) => {
                if prec > 0 {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 1)?;
                write!(f, " -o ")?;
                b.fmt_prec(f, 0)?;
                if prec > 0 {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Lam(String, Box<Term>),
    App(Box<Term>, Box<Term>),
    Star,
    LetStar(Box<Term>, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    LetPair(String, String, Box<Term>, Box<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    Const(String),
    BoolLit(bool),
}

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(x.to_string())
    }
    pub fn lam(x: &str, body: Term) -> Term {
        Term::Lam(x.to_string(), Box::new(body))
    }
    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }
    pub fn cnst(c: &str) -> Term {
        Term::Const(c.to_string())
    }
    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }
    pub fn let_star(m: Term, n: Term) -> Term {
        Term::LetStar(Box::new(m), Box::new(n))
    }
    pub fn let_pair(x: &str, y: &str, m: Term, n: Term) -> Term {
        Term::LetPair(x.to_string(), y.to_string(), Box::new(m), Box::new(n))
    }
    pub fn ite(g: Term, t: Term, e: Term) -> Term {
        Term::Ite(Box::new(g), Box::new(t), Box::new(e))
    }
    /// `let x = m in n`, i.e. `(\x. n) m`.
    pub fn let_in(x: &str, m: Term, n: Term) -> Term {
        Term::app(Term::lam(x, n), m)
    }

    pub fn is_value(&self) -> bool {
        match self {
            Term::Var(_) | Term::Lam(..) | Term::Star | Term::Const(_) | Term::BoolLit(_) => true,
            Term::Pair(a, b) => a.is_value() && b.is_value(),
            _ => false,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Star | Term::Const(_) | Term::BoolLit(_) => 1,
            Term::Lam(_, b) => 1 + b.size(),
            Term::App(a, b) | Term::LetStar(a, b) | Term::Pair(a, b) | Term::LetPair(_, _, a, b) => 1 + a.size() + b.size(),
            Term::Ite(g, t, e) => 1 + g.size() + t.size() + e.size(),
        }
    }

    pub fn free_vars(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut std::collections::BTreeSet<String>) {
        match self {
            Term::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Term::Lam(x, b) => {
                bound.push(x.clone());
                b.collect_free(bound, out);
                bound.pop();
            }
            Term::App(a, b) | Term::LetStar(a, b) | Term::Pair(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Term::LetPair(x, y, m, n) => {
                m.collect_free(bound, out);
                bound.push(x.clone());
                bound.push(y.clone());
                n.collect_free(bound, out);
                bound.pop();
                bound.pop();
            }
            Term::Ite(g, t, e) => {
                g.collect_free(bound, out);
                t.collect_free(bound, out);
                e.collect_free(bound, out);
            }
            Term::Star | Term::Const(_) | Term::BoolLit(_) => {}
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty(self))
    }
}

/// A parsed `.lq` file: optional declared context plus the term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub context: BTreeMap<String, Type>,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    SyntaxError { line: usize, col: usize, msg: String },
    #[error("unknown constant `{name}` at {line}:{col}")]
    UnknownConstant { name: String, line: usize, col: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Backslash,
    Dot,
    LParen,
    RParen,
    Comma,
    Star,
    Eq,
    Semi,
    Colon,
    Lolli,
    One,
    Eof,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &["if", "then", "else", "let", "in", "tt", "ff", "context", "bit", "qbit"];

const MAX_NESTING: usize = 4096;
const PARSER_STACK: usize = 512 << 20;

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let adv = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => adv(1, &mut i, &mut col),
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '-' if chars.get(i + 1) == Some(&'o') => {
                out.push(Spanned { tok: Tok::Lolli, line: l0, col: c0 });
                adv(2, &mut i, &mut col);
            }
            '\\' | '.' | '(' | ')' | ',' | '*' | '=' | ';' | ':' | '1' => {
                let tok = match c {
                    '\\' => Tok::Backslash,
                    '.' => Tok::Dot,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '*' => Tok::Star,
                    '=' => Tok::Eq,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    _ => Tok::One,
                };
                out.push(Spanned { tok, line: l0, col: c0 });
                adv(1, &mut i, &mut col);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                col += i - start;
                let s: String = chars[start..i].iter().collect();
                out.push(Spanned { tok: Tok::Ident(s), line: l0, col: c0 });
            }
            other => return Err(ParseError::SyntaxError { line: l0, col: c0, msg: format!("unexpected character {other:?}") }),
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::SyntaxError { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.err("nesting too deep");
        }
        Ok(())
    }

    fn binder(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) && !is_constant_name(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err("expected a variable name"),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut context = BTreeMap::new();
        if self.is_kw("context") {
            self.bump();
            loop {
                let x = self.binder()?;
                self.expect(Tok::Colon, "`:`")?;
                let ty = self.ty()?;
                if context.insert(x.clone(), ty).is_some() {
                    return self.err(format!("variable `{x}` declared twice"));
                }
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::Semi => {
                        self.bump();
                        break;
                    }
                    _ => return self.err("expected `,` or `;` in context"),
                }
            }
        }
        let term = self.term()?;
        if *self.peek() != Tok::Eof {
            return self.err("unexpected trailing input");
        }
        Ok(Program { context, term })
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        self.enter()?;
        let lhs = self.ty_tensor()?;
        let out = if *self.peek() == Tok::Lolli {
            self.bump();
            Type::lolli(lhs, self.ty()?)
        } else {
            lhs
        };
        self.depth -= 1;
        Ok(out)
    }

    fn ty_tensor(&mut self) -> Result<Type, ParseError> {
        let first = self.ty_atom()?;
        if *self.peek() == Tok::Star {
            self.bump();
            self.enter()?;
            let rest = self.ty_tensor()?;
            self.depth -= 1;
            Ok(Type::tensor(first, rest))
        } else {
            Ok(first)
        }
    }

    fn ty_atom(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "bit" => {
                self.bump();
                Ok(Type::Bit)
            }
            Tok::Ident(s) if s == "qbit" => {
                self.bump();
                Ok(Type::Qbit)
            }
            Tok::One => {
                self.bump();
                Ok(Type::Unit)
            }
            Tok::LParen => {
                self.bump();
                let t = self.ty()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            _ => self.err("expected a type"),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        self.enter()?;
        let out = self.term_inner()?;
        self.depth -= 1;
        Ok(out)
    }

    fn term_inner(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Backslash => {
                self.bump();
                let mut names = vec![self.binder()?];
                while *self.peek() != Tok::Dot {
                    names.push(self.binder()?);
                }
                self.bump();
                let body = self.term()?;
                Ok(names.iter().rev().fold(body, |acc, x| Term::lam(x, acc)))
            }
            Tok::Ident(s) if s == "if" => {
                self.bump();
                let g = self.term()?;
                self.expect_kw("then")?;
                let t = self.term()?;
                self.expect_kw("else")?;
                let e = self.term()?;
                Ok(Term::ite(g, t, e))
            }
            Tok::Ident(s) if s == "let" => {
                self.bump();
                match self.peek().clone() {
                    Tok::Star => {
                        self.bump();
                        self.expect(Tok::Eq, "`=`")?;
                        let m = self.term()?;
                        self.expect_kw("in")?;
                        let n = self.term()?;
                        Ok(Term::let_star(m, n))
                    }
                    Tok::LParen => {
                        self.bump();
                        let x = self.binder()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let y = self.binder()?;
                        self.expect(Tok::RParen, "`)`")?;
                        if x == y {
                            return self.err("pattern binds the same variable twice");
                        }
                        self.expect(Tok::Eq, "`=`")?;
                        let m = self.term()?;
                        self.expect_kw("in")?;
                        let n = self.term()?;
                        Ok(Term::let_pair(&x, &y, m, n))
                    }
                    _ => {
                        let x = self.binder()?;
                        self.expect(Tok::Eq, "`=`")?;
                        let m = self.term()?;
                        self.expect_kw("in")?;
                        let n = self.term()?;
                        Ok(Term::let_in(&x, m, n))
                    }
                }
            }
            _ => self.application(),
        }
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::LParen | Tok::Star => true,
            Tok::Ident(s) => !matches!(s.as_str(), "if" | "then" | "else" | "let" | "in" | "context" | "bit" | "qbit"),
            _ => false,
        }
    }

    fn application(&mut self) -> Result<Term, ParseError> {
        if !self.starts_atom() {
            return self.err("expected a term");
        }
        let mut head = self.atom()?;
        while self.starts_atom() {
            let arg = self.atom()?;
            head = Term::app(head, arg);
        }
        Ok(head)
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let (line, col) = self.here();
        match self.bump() {
            Tok::Star => Ok(Term::Star),
            Tok::Ident(s) => match s.as_str() {
                "tt" => Ok(Term::BoolLit(true)),
                "ff" => Ok(Term::BoolLit(false)),
                _ if gates::lookup(&s).is_some() => Ok(Term::Const(s)),
                _ if s.starts_with(|c: char| c.is_ascii_uppercase()) => Err(ParseError::UnknownConstant { name: s, line, col }),
                _ => Ok(Term::Var(s)),
            },
            Tok::LParen => {
                let mut items = vec![self.term()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    items.push(self.term()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                let last = items.pop().expect("at least one item");
                Ok(items.into_iter().rev().fold(last, |acc, t| Term::pair(t, acc)))
            }
            _ => {
                self.pos -= 1;
                self.err("expected a term")
            }
        }
    }
}

fn is_constant_name(s: &str) -> bool {
    gates::lookup(s).is_some() || s.starts_with(|c: char| c.is_ascii_uppercase())
}

/// Parses a whole `.lq` source (optional context header plus one term).
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    // Recursive descent on a dedicated thread so deep inputs hit the nesting
    // limit instead of the caller's stack.
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(PARSER_STACK)
            .spawn_scoped(s, || Parser { toks, pos: 0, depth: 0 }.program())
            .expect("spawn parser thread")
            .join()
            .expect("parser thread panicked")
    })
}

/// Parses a bare term; a context header is rejected.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let p = parse_program(text)?;
    if !p.context.is_empty() {
        return Err(ParseError::SyntaxError { line: 1, col: 1, msg: "context header not allowed here".into() });
    }
    Ok(p.term)
}

pub fn parse_type(text: &str) -> Result<Type, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return p.err("unexpected trailing input");
    }
    Ok(t)
}

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Top,
    Fun,
    Arg,
}

/// Prints a term with the fewest parentheses that still parse back to it.
pub fn pretty(term: &Term) -> String {
    let mut s = String::new();
    pp(term, Slot::Top, &mut s);
    s
}

fn pp(t: &Term, slot: Slot, out: &mut String) {
    let binder_like = matches!(t, Term::Lam(..) | Term::Ite(..) | Term::LetStar(..) | Term::LetPair(..));
    let wrap = (binder_like && slot != Slot::Top) || (matches!(t, Term::App(..)) && slot == Slot::Arg);
    if wrap {
        out.push('(');
    }
    match t {
        Term::Var(x) | Term::Const(x) => out.push_str(x),
        Term::Star => out.push('*'),
        Term::BoolLit(b) => out.push_str(if *b { "tt" } else { "ff" }),
        Term::Lam(x, b) => {
            out.push('\\');
            out.push_str(x);
            out.push_str(". ");
            pp(b, Slot::Top, out);
        }
        Term::App(f, a) => {
            pp(f, Slot::Fun, out);
            out.push(' ');
            pp(a, Slot::Arg, out);
        }
        Term::Pair(a, b) => {
            out.push('(');
            pp(a, Slot::Top, out);
            let mut rest: &Term = b;
            while let Term::Pair(x, y) = rest {
                out.push_str(", ");
                pp(x, Slot::Top, out);
                rest = y;
            }
            out.push_str(", ");
            pp(rest, Slot::Top, out);
            out.push(')');
        }
        Term::LetStar(m, n) => {
            out.push_str("let * = ");
            pp(m, Slot::Top, out);
            out.push_str(" in ");
            pp(n, Slot::Top, out);
        }
        Term::LetPair(x, y, m, n) => {
            out.push_str(&format!("let ({x}, {y}) = "));
            pp(m, Slot::Top, out);
            out.push_str(" in ");
            pp(n, Slot::Top, out);
        }
        Term::Ite(g, a, b) => {
            out.push_str("if ");
            pp(g, Slot::Top, out);
            out.push_str(" then ");
            pp(a, Slot::Top, out);
            out.push_str(" else ");
            pp(b, Slot::Top, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Prints a program with its context header, if any.
pub fn pretty_program(p: &Program) -> String {
    if p.context.is_empty() {
        return pretty(&p.term);
    }
    let decls: Vec<String> = p.context.iter().map(|(x, t)| format!("{x} : {t}")).collect();
    format!("context {};\n{}", decls.join(", "), pretty(&p.term))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(f: Term, x: Term) -> Term {
        Term::app(f, x)
    }

    #[test]
    fn coin_parses() {
        let t = parse_term("meas (H (new (one *)))").unwrap();
        let want = a(Term::cnst("meas"), a(Term::cnst("H"), a(Term::cnst("new"), a(Term::cnst("one"), Term::Star))));
        assert_eq!(t, want);
    }

    #[test]
    fn identity_parses_and_prints() {
        let t = parse_term("\\x. x").unwrap();
        assert_eq!(t, Term::lam("x", Term::var("x")));
        assert_eq!(pretty(&t), "\\x. x");
        assert_eq!(pretty(&Term::Star), "*");
        assert_eq!(pretty(&a(Term::cnst("meas"), Term::var("x"))), "meas x");
    }

    #[test]
    fn bell_parses() {
        let t = parse_term("(\\f.\\x. CNOT (f x, new (zero *))) H (new (zero *))").unwrap();
        let prep = a(Term::cnst("new"), a(Term::cnst("zero"), Term::Star));
        let body = a(Term::cnst("CNOT"), Term::pair(a(Term::var("f"), Term::var("x")), prep.clone()));
        let want = a(a(Term::lam("f", Term::lam("x", body)), Term::cnst("H")), prep);
        assert_eq!(t, want);
    }

    #[test]
    fn sugar_and_tuples() {
        let t = parse_term("let x = new ff in let (a, b) = (x, tt, *) in a").unwrap();
        match t {
            Term::App(f, _) => match *f {
                Term::Lam(_, body) => match *body {
                    Term::LetPair(_, _, m, _) => {
                        assert_eq!(*m, Term::pair(Term::var("x"), Term::pair(Term::BoolLit(true), Term::Star)))
                    }
                    other => panic!("{other:?}"),
                },
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn context_header_and_comments() {
        let p = parse_program("-- header\ncontext x : qbit, b : bit;\nif b then H x else x -- tail").unwrap();
        assert_eq!(p.context.len(), 2);
        assert_eq!(p.context["x"], Type::Qbit);
        assert!(matches!(p.term, Term::Ite(..)));
    }

    #[test]
    fn types_parse() {
        assert_eq!(parse_type("qbit * bit -o 1").unwrap(), Type::lolli(Type::tensor(Type::Qbit, Type::Bit), Type::Unit));
        assert_eq!(parse_type("(qbit -o qbit) -o qbit -o qbit").unwrap().to_string(), "(qbit -o qbit) -o qbit -o qbit");
    }

    #[test]
    fn errors_are_located() {
        match parse_term("\\x.\n  (x") {
            Err(ParseError::SyntaxError { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_term("FOO x") {
            Err(ParseError::UnknownConstant { name, line, col }) => {
                assert_eq!((name.as_str(), line, col), ("FOO", 1, 1))
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_term("").is_err());
        assert!(parse_term("\\new. new").is_err());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let s = "(".repeat(100_000);
        assert!(parse_term(&s).is_err());
    }

    #[test]
    fn pretty_minimal_parens() {
        let t = parse_term("(\\x. x) ((f y) (z, w))").unwrap();
        assert_eq!(pretty(&t), "(\\x. x) (f y (z, w))");
        let t = parse_term("f (if b then x else y)").unwrap();
        assert_eq!(pretty(&t), "f (if b then x else y)");
    }
}
