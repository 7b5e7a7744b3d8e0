//! Seeded generators for test corpora: closed Boolean-typed terms, chains of
//! conditionals, and random ite-closed circuits, plus the named examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{BaseType, Circuit, Env, GateApp, Label};
use crate::syntax::{parse_program, Program, Term, Type};
use crate::typing::infer;

pub const BELL: &str = "(\\f. \\x. CNOT (f x, new (zero *))) H (new (zero *))";
pub const COIN: &str = "meas (H (new ff))";
pub const RUW: &str = "context b : bit;\n(if b then \\f g x. f (g x) else \\f g x. g (f x)) H S";
pub const RUW_CLOSED: &str = "(if meas (H (new ff)) then \\f g x. f (g x) else \\f g x. g (f x)) H S";
pub const PQ: &str = "(if meas (H (new ff)) then \\f. f else \\f x. H (f x)) (if meas (H (new ff)) then S else T)";

/// The examples used across tests and the data directory.
pub fn named() -> Vec<(&'static str, Program)> {
    [("bell", BELL), ("coin", COIN), ("ruw", RUW), ("ruw_closed", RUW_CLOSED), ("pq", PQ)]
        .into_iter()
        .map(|(n, s)| (n, parse_program(s).expect("built-in examples parse")))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct TermLimits {
    pub depth: usize,
    pub meas: usize,
    pub ites: usize,
    pub news: usize,
}

impl Default for TermLimits {
    fn default() -> TermLimits {
        TermLimits { depth: 5, meas: 3, ites: 2, news: 4 }
    }
}

struct TermGen<'r> {
    rng: &'r mut ChaCha8Rng,
    lim: TermLimits,
    meas: usize,
    ites: usize,
    news: usize,
    vars: usize,
}

const UNARY: [&str; 4] = ["H", "S", "T", "X"];

impl TermGen<'_> {
    fn var(&mut self) -> String {
        self.vars += 1;
        format!("v{}", self.vars)
    }

    fn gate(&mut self) -> Term {
        Term::cnst(UNARY.choose(self.rng).expect("non-empty"))
    }

    fn can_meas(&self) -> bool {
        self.meas < self.lim.meas
    }

    fn can_ite(&self) -> bool {
        self.ites < self.lim.ites
    }

    fn can_new(&self) -> bool {
        self.news < self.lim.news
    }

    fn meas(&mut self, q: Term) -> Term {
        self.meas += 1;
        Term::app(Term::cnst("meas"), q)
    }

    fn new_of(&mut self, b: Term) -> Term {
        self.news += 1;
        Term::app(Term::cnst("new"), b)
    }

    /// A closed term of type `ty`, or one using `v` exactly once.
    fn term(&mut self, ty: &Type, v: Option<(&str, &Type)>, depth: usize) -> Term {
        match ty {
            Type::Unit => match v {
                Some((x, Type::Bit)) => Term::app(Term::cnst("discard"), Term::var(x)),
                Some((x, t)) => {
                    let b = self.term(&Type::Bit, Some((x, t)), depth.saturating_sub(1));
                    Term::app(Term::cnst("discard"), b)
                }
                None => Term::Star,
            },
            Type::Bit => self.bit(v, depth),
            Type::Qbit => self.qbit(v, depth),
            Type::Tensor(a, b) => {
                // the variable goes to a side that can absorb it
                let left = match v {
                    Some((_, Type::Qbit)) => {
                        let (qa, qb) = (has_qbit(a), has_qbit(b));
                        if qa && qb {
                            self.rng.gen_bool(0.5)
                        } else {
                            qa || !qb
                        }
                    }
                    _ => self.rng.gen_bool(0.5),
                };
                if matches!((&**a, &**b), (Type::Qbit, Type::Qbit)) && depth > 0 && self.rng.gen_bool(0.3) {
                    let x = self.term(a, if left { v } else { None }, depth - 1);
                    let y = self.term(b, if left { None } else { v }, depth - 1);
                    return Term::app(Term::cnst("CNOT"), Term::pair(x, y));
                }
                let d = depth.saturating_sub(1);
                let x = self.term(a, if left { v } else { None }, d);
                let y = self.term(b, if left { None } else { v }, d);
                Term::pair(x, y)
            }
            Type::Lolli(..) => unreachable!("generator only targets Boolean types"),
        }
    }

    fn bit(&mut self, v: Option<(&str, &Type)>, depth: usize) -> Term {
        let leaf = |g: &mut Self| match v {
            Some((x, Type::Bit)) => Term::var(x),
            Some((x, Type::Qbit)) => g.meas(Term::var(x)),
            Some(_) => unreachable!("variables are bits or qubits"),
            None => match g.rng.gen_range(0..4) {
                0 => Term::BoolLit(true),
                1 => Term::BoolLit(false),
                2 => Term::app(Term::cnst("zero"), Term::Star),
                _ => Term::app(Term::cnst("one"), Term::Star),
            },
        };
        if depth == 0 {
            return leaf(self);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..6) {
            0 | 1 if self.can_meas() && (self.can_new() || matches!(v, Some((_, Type::Qbit)))) => {
                self.meas += 1;
                let q = self.qbit(v, d);
                Term::app(Term::cnst("meas"), q)
            }
            2 if self.can_ite() => {
                self.ites += 1;
                let g = self.bit(None, d);
                let t = self.bit(v, d);
                let e = self.bit(v, d);
                Term::ite(g, t, e)
            }
            3 if v.is_none() || matches!(v, Some((_, Type::Bit))) => {
                // sequence a discarded bit before the result
                let (b, rest) = match v {
                    Some((x, _)) => (Term::var(x), self.bit(None, d)),
                    None => (self.bit(None, d), self.bit(None, d)),
                };
                Term::let_star(Term::app(Term::cnst("discard"), b), rest)
            }
            4 => {
                let y = self.var();
                let bound = Type::Bit;
                let arg = self.term(&bound, v, d);
                let body = self.bit(Some((&y, &bound)), d);
                Term::app(Term::lam(&y, body), arg)
            }
            _ => leaf(self),
        }
    }

    fn qbit(&mut self, v: Option<(&str, &Type)>, depth: usize) -> Term {
        let leaf = |g: &mut Self| match v {
            Some((x, Type::Qbit)) => Term::var(x),
            Some((x, Type::Bit)) => g.new_of(Term::var(x)),
            Some(_) => unreachable!("variables are bits or qubits"),
            None => {
                let b = Term::BoolLit(g.rng.gen_bool(0.5));
                g.new_of(b)
            }
        };
        if depth == 0 {
            return leaf(self);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..9) {
            0 | 1 => {
                let u = self.gate();
                let q = self.qbit(v, d);
                Term::app(u, q)
            }
            2 if self.can_ite() => {
                self.ites += 1;
                let g = self.bit(None, d);
                let t = self.qbit(v, d);
                let e = self.qbit(v, d);
                Term::ite(g, t, e)
            }
            3 if self.can_ite() => {
                // a conditional of function type, applied afterwards
                self.ites += 1;
                let g = self.bit(None, d);
                let (u1, u2) = (self.gate(), self.gate());
                let (y, z) = (self.var(), self.var());
                let f = Term::ite(g, Term::lam(&y, Term::app(u1, Term::var(&y))), Term::lam(&z, Term::app(u2, Term::var(&z))));
                let q = self.qbit(v, d);
                Term::app(f, q)
            }
            4 => {
                // (\f. f M) U
                let f = self.var();
                let q = self.qbit(v, d);
                let u = self.gate();
                Term::app(Term::lam(&f, Term::app(Term::var(&f), q)), u)
            }
            5 => {
                // (\f. f M) (\y. N)
                let (f, y) = (self.var(), self.var());
                let q = self.qbit(v, d);
                let body = self.qbit(Some((&y, &Type::Qbit)), d);
                Term::app(Term::lam(&f, Term::app(Term::var(&f), q)), Term::lam(&y, body))
            }
            6 if self.can_meas() && self.can_new() => {
                // entangle with a fresh qubit, then measure it away
                let (a, b) = (self.var(), self.var());
                let q = self.qbit(v, d);
                let fresh = self.qbit(None, 0);
                let m = self.meas(Term::var(&b));
                let body = Term::let_star(Term::app(Term::cnst("discard"), m), Term::var(&a));
                Term::let_pair(&a, &b, Term::app(Term::cnst("CNOT"), Term::pair(q, fresh)), body)
            }
            7 if self.can_ite() && self.ites + 1 == self.lim.ites => {
                // composition order chosen at run time
                self.ites += 1;
                let g = self.bit(None, d);
                let [f, h, x, f2, h2, x2] = [(); 6].map(|_| self.var());
                let comp = |f: &str, h: &str, x: &str| Term::app(Term::var(f), Term::app(Term::var(h), Term::var(x)));
                let t = Term::lam(&f, Term::lam(&h, Term::lam(&x, comp(&f, &h, &x))));
                let e = Term::lam(&f2, Term::lam(&h2, Term::lam(&x2, comp(&h2, &f2, &x2))));
                let (u, w) = (self.gate(), self.gate());
                let q = self.qbit(v, d);
                Term::app(Term::app(Term::app(Term::ite(g, t, e), u), w), q)
            }
            8 => {
                let y = self.var();
                let bound = if self.rng.gen_bool(0.5) || matches!(v, Some((_, Type::Qbit))) { Type::Qbit } else { Type::Bit };
                let arg = self.term(&bound, v, d);
                let body = self.qbit(Some((&y, &bound)), d);
                Term::app(Term::lam(&y, body), arg)
            }
            _ => leaf(self),
        }
    }
}

fn has_qbit(t: &Type) -> bool {
    match t {
        Type::Qbit => true,
        Type::Tensor(a, b) | Type::Lolli(a, b) => has_qbit(a) || has_qbit(b),
        _ => false,
    }
}

/// Occurrences of the constant `c`.
pub fn count_const(t: &Term, c: &str) -> usize {
    match t {
        Term::Const(k) => usize::from(k == c),
        Term::Var(_) | Term::Star | Term::BoolLit(_) => 0,
        Term::Lam(_, b) => count_const(b, c),
        Term::App(a, b) | Term::LetStar(a, b) | Term::Pair(a, b) | Term::LetPair(_, _, a, b) => count_const(a, c) + count_const(b, c),
        Term::Ite(g, a, b) => count_const(g, c) + count_const(a, c) + count_const(b, c),
    }
}

pub fn count_ites(t: &Term) -> usize {
    match t {
        Term::Var(_) | Term::Star | Term::BoolLit(_) | Term::Const(_) => 0,
        Term::Lam(_, b) => count_ites(b),
        Term::App(a, b) | Term::LetStar(a, b) | Term::Pair(a, b) | Term::LetPair(_, _, a, b) => count_ites(a) + count_ites(b),
        Term::Ite(g, a, b) => 1 + count_ites(g) + count_ites(a) + count_ites(b),
    }
}

const RESULT_TYPES: [&str; 5] = ["bit", "qbit", "bit * qbit", "qbit * qbit", "bit * bit"];

/// One closed term of a Boolean type within `lim`, or `None` when the draw
/// breaks a limit.
pub fn random_term(rng: &mut ChaCha8Rng, lim: TermLimits) -> Option<Term> {
    let ty = crate::syntax::parse_type(RESULT_TYPES.choose(rng).expect("non-empty")).expect("static types parse");
    let mut g = TermGen { rng, lim, meas: 0, ites: 0, news: 0, vars: 0 };
    let t = g.term(&ty, None, lim.depth);
    let ok = count_const(&t, "meas") <= lim.meas && count_ites(&t) <= lim.ites && count_const(&t, "new") <= lim.news;
    (ok && infer(&t, &Default::default()).is_ok()).then_some(t)
}

/// `n` distinct closed terms from `seed`.
pub fn term_corpus(n: usize, seed: u64) -> Vec<Term> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Term> = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        assert!(tries < 100 * n + 1000, "generator keeps failing");
        if let Some(t) = random_term(&mut rng, TermLimits::default()) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
    }
    out
}

/// `n` conditionals in sequence on one qubit, each followed by a gate that
/// both of its branches feed.
pub fn conditional_chain(n: usize) -> Term {
    let coin = || Term::app(Term::cnst("meas"), Term::app(Term::cnst("H"), Term::app(Term::cnst("new"), Term::BoolLit(false))));
    let mut t = Term::app(Term::cnst("new"), Term::BoolLit(false));
    for k in 0..n {
        let x = format!("x{k}");
        let cond = Term::ite(coin(), Term::app(Term::cnst("H"), Term::var(&x)), Term::app(Term::cnst("S"), Term::var(&x)));
        t = Term::let_in(&x, t, Term::app(Term::cnst("T"), cond));
    }
    t
}

// ---------------------------------------------------------------------------
// Circuits

struct CircGen<'r> {
    rng: &'r mut ChaCha8Rng,
    meas_left: usize,
    next_meas: usize,
    fresh: usize,
}

impl CircGen<'_> {
    fn label(&mut self, p: &str) -> Label {
        self.fresh += 1;
        Label(format!("{p}{}", self.fresh))
    }

    fn gate(&self, name: &str, ins: &[&Label], outs: &[&Label]) -> Circuit {
        Circuit::Gate(GateApp {
            gate: name.into(),
            inputs: ins.iter().map(|l| (*l).clone()).collect(),
            outputs: outs.iter().map(|l| (*l).clone()).collect(),
            meas_index: None,
        })
    }

    fn meas(&mut self, q: &Label, b: &Label) -> Circuit {
        let mut c = self.gate("meas", &[q], &[b]);
        if let Circuit::Gate(g) = &mut c {
            g.meas_index = Some(self.next_meas);
        }
        self.next_meas += 1;
        self.meas_left -= 1;
        c
    }

    fn unitary(&mut self, qs: &[Label]) -> Circuit {
        if qs.len() >= 2 && self.rng.gen_bool(0.3) {
            let mut pick = qs.to_vec();
            pick.shuffle(self.rng);
            return self.gate("CNOT", &[&pick[0], &pick[1]], &[&pick[0], &pick[1]]);
        }
        let q = qs.choose(self.rng).expect("at least one qubit");
        let u = UNARY.choose(self.rng).expect("non-empty");
        self.gate(u, &[q], &[q])
    }

    /// A sequence that leaves the qubit environment `qs` unchanged.
    fn block(&mut self, qs: &[Label], depth: usize, len: usize) -> Circuit {
        let mut out = Vec::new();
        for _ in 0..len {
            match self.rng.gen_range(0..5) {
                0 | 1 if depth > 0 && self.meas_left > 0 => {
                    // measure one qubit, branch on it, prepare it again
                    let q = qs.choose(self.rng).expect("at least one qubit").clone();
                    let b = self.label("m");
                    out.push(self.meas(&q, &b));
                    let rest: Vec<Label> = qs.iter().filter(|l| **l != q).cloned().collect();
                    let (t, e) = if rest.is_empty() {
                        (Circuit::empty(), Circuit::empty())
                    } else {
                        let n1 = self.rng.gen_range(1..3);
                        let n2 = self.rng.gen_range(1..3);
                        (self.block(&rest, depth - 1, n1), self.block(&rest, depth - 1, n2))
                    };
                    out.push(Circuit::ite(b, t, e));
                    let z = self.label("z");
                    let init = if self.rng.gen_bool(0.5) { "zero" } else { "one" };
                    out.push(self.gate(init, &[], &[&z]));
                    out.push(self.gate("new", &[&z], &[&q]));
                }
                _ => out.push(self.unitary(qs)),
            }
        }
        Circuit::seq(out)
    }
}

/// A random ite-closed circuit on `qubits` input qubits (every conditional
/// branches on a bit measured just before it), optionally ending with a
/// measured bit output. Returns the circuit and its input environment.
pub fn random_ite_closed(rng: &mut ChaCha8Rng, qubits: usize, max_meas: usize, bit_output: bool) -> (Circuit, Env) {
    let qs: Vec<Label> = (0..qubits).map(|i| Label(format!("q{i}"))).collect();
    let env: Env = qs.iter().map(|l| (l.clone(), BaseType::Qbit)).collect();
    let reserve = usize::from(bit_output);
    let mut g = CircGen { rng, meas_left: max_meas.saturating_sub(reserve), next_meas: 0, fresh: 0 };
    let len = g.rng.gen_range(2..6);
    let mut c = g.block(&qs, 2, len);
    if bit_output {
        g.meas_left += 1;
        let q = qs.last().expect("at least one qubit").clone();
        let out = Label::from("out");
        c = c.then(g.meas(&q, &out));
    }
    (c, env)
}

/// `n` ite-closed circuits on 1 to 3 qubits.
pub fn circuit_corpus(n: usize, seed: u64) -> Vec<(Circuit, Env)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let q = rng.gen_range(1..4);
            random_ite_closed(&mut rng, q, 4, i % 2 == 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::typecheck_circuit;
    use crate::syntax::{parse_term, pretty};

    #[test]
    fn named_examples_typecheck() {
        for (name, p) in named() {
            assert!(infer(&p.term, &p.context).is_ok(), "{name}");
        }
    }

    #[test]
    fn corpus_is_deterministic_and_typed() {
        let a = term_corpus(40, 7);
        assert_eq!(a, term_corpus(40, 7));
        for t in &a {
            let d = infer(t, &Default::default()).unwrap();
            assert!(d.node(0).ty.is_boolean());
            assert!(count_const(t, "meas") <= 3 && count_ites(t) <= 2);
            assert_eq!(parse_term(&pretty(t)).unwrap(), *t);
        }
        assert!(a.iter().any(|t| count_ites(t) > 0));
        assert!(a.iter().any(|t| pretty(t).contains('\\')));
    }

    #[test]
    fn chains_typecheck() {
        for n in 1..=4 {
            let d = infer(&conditional_chain(n), &Default::default()).unwrap();
            assert_eq!(d.node(0).ty, Type::Qbit);
        }
    }

    #[test]
    fn circuits_are_ite_closed_and_typed() {
        for (c, env) in circuit_corpus(30, 3) {
            typecheck_circuit(&c, &env).unwrap();
            assert!(c.meas_indices().len() <= 4);
        }
    }
}
