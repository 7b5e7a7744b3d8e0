//! Reference semantics, independent of circuit generation: call-by-value
//! reduction of quantum closures and the measuring token machine on a
//! quantum+classical register. Both expand every probabilistic branch.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::circuit::gates::{lookup, GateKind};
use crate::circuit::{BaseType, Circuit, GateApp, Label};
use crate::cpm::{mix, QCRegister};
use crate::extcircuit::Address;
use crate::syntax::{pretty, Term, Type};
use crate::tokenmachine::{Machine, Mode, Move, RunOptions, Token};
use crate::typing::{Derivation, Polarity};

/// Branches below this probability are pruned.
const PRUNE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("stuck term: {0}")]
    Stuck(String),
    #[error("ill-typed: {0}")]
    IllTyped(String),
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(usize),
    #[error("register does not match the machine inputs: {0}")]
    BadRegister(String),
    #[error("machine: {0}")]
    Machine(String),
}

/// A finite list of weighted outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoDistribution<T> {
    pub items: Vec<(T, f64)>,
}

impl<T> PseudoDistribution<T> {
    pub fn dirac(x: T) -> Self {
        PseudoDistribution { items: vec![(x, 1.0)] }
    }

    pub fn total(&self) -> f64 {
        self.items.iter().map(|(_, w)| w).sum()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn map<U>(self, f: impl Fn(T) -> U) -> PseudoDistribution<U> {
        PseudoDistribution { items: self.items.into_iter().map(|(x, w)| (f(x), w)).collect() }
    }

    /// Adds `x` with weight `w`, merging with an element equal under `eq`.
    pub fn add_merging(&mut self, x: T, w: f64, eq: impl Fn(&T, &T) -> bool) {
        match self.items.iter_mut().find(|(y, _)| eq(y, &x)) {
            Some((_, v)) => *v += w,
            None => self.items.push((x, w)),
        }
    }
}

// ---------------------------------------------------------------------------
// Pure states addressed by name

/// A normalized vector over named qubits, first name most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    pub names: Vec<String>,
    pub amps: Vec<Complex64>,
}

impl PureState {
    pub fn empty() -> PureState {
        PureState { names: vec![], amps: vec![Complex64::new(1.0, 0.0)] }
    }

    fn pos(&self, x: &str) -> Option<usize> {
        self.names.iter().position(|n| n == x)
    }

    pub fn push(&mut self, name: String, value: bool) {
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len() * 2];
        for (i, a) in self.amps.iter().enumerate() {
            out[2 * i + usize::from(value)] = *a;
        }
        self.amps = out;
        self.names.push(name);
    }

    /// Applies a row-major unitary to the named qubits, in order.
    pub fn apply(&mut self, u: &[Complex64], on: &[usize]) {
        let n = self.names.len();
        let m = on.len();
        let du = 1usize << m;
        let mask: usize = on.iter().map(|&k| 1usize << (n - 1 - k)).sum();
        let sub = |x: usize| on.iter().fold(0, |acc, &k| (acc << 1) | ((x >> (n - 1 - k)) & 1));
        let scatter = |a: usize| on.iter().enumerate().fold(0, |acc, (i, &k)| acc | (((a >> (m - 1 - i)) & 1) << (n - 1 - k)));
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (x, o) in out.iter_mut().enumerate() {
            let (r, base) = (sub(x), x & !mask);
            for a in 0..du {
                let coef = u[r * du + a];
                if coef.norm_sqr() != 0.0 {
                    *o += coef * self.amps[base | scatter(a)];
                }
            }
        }
        self.amps = out;
    }

    /// Measures and removes qubit `k`: `(outcome, probability, rest)` for each
    /// outcome of non-negligible probability.
    pub fn measure(&self, k: usize) -> Vec<(bool, f64, PureState)> {
        let n = self.names.len();
        let shift = n - 1 - k;
        let mut out = Vec::new();
        for b in [false, true] {
            let mut amps = Vec::with_capacity(self.amps.len() / 2);
            for (x, a) in self.amps.iter().enumerate() {
                if ((x >> shift) & 1 == 1) == b {
                    amps.push(*a);
                }
            }
            let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            if p < PRUNE {
                continue;
            }
            let s = p.sqrt();
            amps.iter_mut().for_each(|a| *a /= s);
            let mut names = self.names.clone();
            names.remove(k);
            out.push((b, p, PureState { names, amps }));
        }
        out
    }

    fn close_to(&self, other: &PureState, tol: f64) -> bool {
        self.names == other.names && self.amps.iter().zip(&other.amps).all(|(a, b)| (a - b).norm() <= tol)
    }
}

// ---------------------------------------------------------------------------
// Quantum closures

/// `[Q, L, M]`: `state.names` is the list `L` of quantum variables.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumClosure {
    pub state: PureState,
    pub term: Term,
    /// Next index for `#q<N>` variables made by `new`.
    pub fresh: usize,
}

impl QuantumClosure {
    pub fn closed(term: Term) -> QuantumClosure {
        QuantumClosure { state: PureState::empty(), term, fresh: 0 }
    }

    /// A closure whose free qubit variables `xs` hold `state` (in order) and
    /// whose free bit variables are replaced by constants. Variables are
    /// renamed to `#q<N>` so that substitution never captures them.
    pub fn with_inputs(term: &Term, qubits: &[String], amps: Vec<Complex64>, bits: &BTreeMap<String, bool>) -> QuantumClosure {
        let mut t = term.clone();
        for (x, b) in bits {
            t = subst(&t, x, &Term::BoolLit(*b));
        }
        let mut names = Vec::new();
        for (i, x) in qubits.iter().enumerate() {
            let y = format!("#q{i}");
            t = subst(&t, x, &Term::Var(y.clone()));
            names.push(y);
        }
        QuantumClosure { state: PureState { names, amps }, term: t, fresh: qubits.len() }
    }

    /// Renames quantum variables to `#q0, #q1, ...` in list order.
    pub fn canonical(&self) -> QuantumClosure {
        let map: BTreeMap<String, String> = self.state.names.iter().enumerate().map(|(i, x)| (x.clone(), format!("#c{i}"))).collect();
        let mut t = rename_free(&self.term, &map);
        let back: BTreeMap<String, String> = (0..map.len()).map(|i| (format!("#c{i}"), format!("#q{i}"))).collect();
        t = rename_free(&t, &back);
        QuantumClosure {
            state: PureState { names: (0..map.len()).map(|i| format!("#q{i}")).collect(), amps: self.state.amps.clone() },
            term: t,
            fresh: map.len(),
        }
    }

    pub fn is_value(&self) -> bool {
        self.term.is_value()
    }
}

impl std::fmt::Display for QuantumClosure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let amps: Vec<String> = self.state.amps.iter().map(|a| format!("{:.4}{:+.4}i", a.re, a.im)).collect();
        write!(f, "[({}), [{}], {}]", amps.join(", "), self.state.names.join(", "), pretty(&self.term))
    }
}

fn rename_free(t: &Term, map: &BTreeMap<String, String>) -> Term {
    map.iter().fold(t.clone(), |acc, (x, y)| subst(&acc, x, &Term::Var(y.clone())))
}

/// `m[x <- v]`. Values substituted here only have `#`-variables free, which
/// no binder can capture.
pub fn subst(m: &Term, x: &str, v: &Term) -> Term {
    let go = |t: &Term| subst(t, x, v);
    match m {
        Term::Var(y) if y == x => v.clone(),
        Term::Var(_) | Term::Star | Term::Const(_) | Term::BoolLit(_) => m.clone(),
        Term::Lam(y, _) if y == x => m.clone(),
        Term::Lam(y, b) => Term::lam(y, go(b)),
        Term::App(a, b) => Term::app(go(a), go(b)),
        Term::Pair(a, b) => Term::pair(go(a), go(b)),
        Term::LetStar(a, b) => Term::let_star(go(a), go(b)),
        Term::LetPair(y, z, a, b) => {
            let b = if y == x || z == x { (**b).clone() } else { go(b) };
            Term::let_pair(y, z, go(a), b)
        }
        Term::Ite(g, t, e) => Term::ite(go(g), go(t), go(e)),
    }
}

/// One reduction step of a closure; `None` on values.
pub fn eval_step(cl: &QuantumClosure) -> Result<Option<PseudoDistribution<QuantumClosure>>, EvalError> {
    if cl.is_value() {
        return Ok(None);
    }
    let outs = reduce(&cl.term, &cl.state, cl.fresh)?;
    Ok(Some(PseudoDistribution {
        items: outs.into_iter().map(|(term, state, fresh, w)| (QuantumClosure { state, term, fresh }, w)).collect(),
    }))
}

type Outcomes = Vec<(Term, PureState, usize, f64)>;

/// Reduces the leftmost redex under an evaluation context.
fn reduce(t: &Term, q: &PureState, fresh: usize) -> Result<Outcomes, EvalError> {
    let wrap = |outs: Outcomes, f: &dyn Fn(Term) -> Term| outs.into_iter().map(|(t, q, n, w)| (f(t), q, n, w)).collect();
    let det = |t: Term| vec![(t, q.clone(), fresh, 1.0)];
    match t {
        Term::App(f, a) if !f.is_value() => Ok(wrap(reduce(f, q, fresh)?, &|f2| Term::App(Box::new(f2), a.clone()))),
        Term::App(f, a) if !a.is_value() => Ok(wrap(reduce(a, q, fresh)?, &|a2| Term::App(f.clone(), Box::new(a2)))),
        Term::App(f, a) => match &**f {
            Term::Lam(x, body) => Ok(det(subst(body, x, a))),
            Term::Const(c) => operator(c, a, q, fresh),
            _ => Err(EvalError::Stuck(pretty(t))),
        },
        Term::Pair(a, b) if !a.is_value() => Ok(wrap(reduce(a, q, fresh)?, &|a2| Term::Pair(Box::new(a2), b.clone()))),
        Term::Pair(a, b) => Ok(wrap(reduce(b, q, fresh)?, &|b2| Term::Pair(a.clone(), Box::new(b2)))),
        Term::LetStar(m, n) if !m.is_value() => Ok(wrap(reduce(m, q, fresh)?, &|m2| Term::LetStar(Box::new(m2), n.clone()))),
        Term::LetStar(m, n) => match &**m {
            Term::Star => Ok(det((**n).clone())),
            _ => Err(EvalError::Stuck(pretty(t))),
        },
        Term::LetPair(x, y, m, n) if !m.is_value() => {
            Ok(wrap(reduce(m, q, fresh)?, &|m2| Term::LetPair(x.clone(), y.clone(), Box::new(m2), n.clone())))
        }
        Term::LetPair(x, y, m, n) => match &**m {
            Term::Pair(v, w) => {
                // substitute simultaneously: w's free variables are `#`-names
                Ok(det(subst(&subst(n, x, v), y, w)))
            }
            _ => Err(EvalError::Stuck(pretty(t))),
        },
        Term::Ite(g, a, b) if !g.is_value() => Ok(wrap(reduce(g, q, fresh)?, &|g2| Term::Ite(Box::new(g2), a.clone(), b.clone()))),
        Term::Ite(g, a, b) => match &**g {
            Term::BoolLit(true) => Ok(det((**a).clone())),
            Term::BoolLit(false) => Ok(det((**b).clone())),
            _ => Err(EvalError::Stuck(pretty(t))),
        },
        _ => Err(EvalError::Stuck(pretty(t))),
    }
}

fn flatten_tuple(v: &Term, n: usize, out: &mut Vec<Term>) {
    if n == 1 {
        out.push(v.clone());
    } else if let Term::Pair(a, b) = v {
        out.push((**a).clone());
        flatten_tuple(b, n - 1, out);
    } else {
        out.push(v.clone());
    }
}

fn tuple(items: Vec<Term>) -> Term {
    let mut it = items.into_iter().rev();
    let last = it.next().unwrap_or(Term::Star);
    it.fold(last, |acc, t| Term::pair(t, acc))
}

fn operator(c: &str, arg: &Term, q: &PureState, fresh: usize) -> Result<Outcomes, EvalError> {
    let def = lookup(c).ok_or_else(|| EvalError::Stuck(format!("unknown constant {c}")))?;
    let stuck = || EvalError::Stuck(format!("{c} {}", pretty(arg)));
    let var = |t: &Term| match t {
        Term::Var(x) => q.pos(x).ok_or_else(stuck),
        _ => Err(stuck()),
    };
    match &def.kind {
        GateKind::One | GateKind::Zero => match arg {
            Term::Star => Ok(vec![(Term::BoolLit(def.kind == GateKind::One), q.clone(), fresh, 1.0)]),
            _ => Err(stuck()),
        },
        GateKind::Discard => match arg {
            Term::BoolLit(_) => Ok(vec![(Term::Star, q.clone(), fresh, 1.0)]),
            _ => Err(stuck()),
        },
        GateKind::New => match arg {
            Term::BoolLit(b) => {
                let y = format!("#q{fresh}");
                let mut r = q.clone();
                r.push(y.clone(), *b);
                Ok(vec![(Term::Var(y), r, fresh + 1, 1.0)])
            }
            _ => Err(stuck()),
        },
        GateKind::Meas => {
            let k = var(arg)?;
            Ok(q.measure(k).into_iter().map(|(b, p, r)| (Term::BoolLit(b), r, fresh, p)).collect())
        }
        GateKind::Identity => Ok(vec![(arg.clone(), q.clone(), fresh, 1.0)]),
        GateKind::Unitary(u) => {
            let mut parts = Vec::new();
            flatten_tuple(arg, def.inputs.len(), &mut parts);
            let on = parts.iter().map(var).collect::<Result<Vec<_>, _>>()?;
            let mut r = q.clone();
            r.apply(u, &on);
            Ok(vec![(tuple(parts), r, fresh, 1.0)])
        }
    }
}

fn budget() -> usize {
    RunOptions::default().step_budget
}

/// Reduces until every branch is a value, merging equal value closures.
pub fn eval_full(cl: &QuantumClosure) -> Result<PseudoDistribution<QuantumClosure>, EvalError> {
    let limit = budget();
    let mut steps = 0usize;
    let mut out = PseudoDistribution { items: vec![] };
    let mut work = vec![(cl.clone(), 1.0)];
    while let Some((c, w)) = work.pop() {
        match eval_step(&c)? {
            None => out.add_merging(c.canonical(), w, |a, b| a.term == b.term && a.state.close_to(&b.state, 1e-12)),
            Some(next) => {
                steps += 1;
                if steps > limit {
                    return Err(EvalError::StepBudgetExceeded(limit));
                }
                // pushed in reverse so the first outcome is explored first
                for (c2, w2) in next.items.into_iter().rev() {
                    work.push((c2, w * w2));
                }
            }
        }
    }
    Ok(out)
}

/// The register of a value closure of Boolean type `ty`: qubit atoms and bit
/// atoms, left to right, are named by `labels` (unit atoms take no label).
pub fn value_register(cl: &QuantumClosure, ty: &Type, labels: &[Label]) -> Result<QCRegister, EvalError> {
    let mut atoms = Vec::new();
    collect_atoms(&cl.term, ty, &mut atoms)?;
    if atoms.len() != labels.len() {
        return Err(EvalError::IllTyped(format!("{} data atoms, {} labels", atoms.len(), labels.len())));
    }
    let mut qubit_label: BTreeMap<&str, Label> = BTreeMap::new();
    let mut v = BTreeMap::new();
    let mut bit_labels = Vec::new();
    for (a, l) in atoms.iter().zip(labels) {
        match a {
            Term::Var(x) => {
                qubit_label.insert(x, l.clone());
            }
            Term::BoolLit(b) => {
                v.insert(l.clone(), *b);
                bit_labels.push((l.clone(), BaseType::Bit));
            }
            _ => unreachable!("collect_atoms yields variables and booleans"),
        }
    }
    let mut reg_labels = Vec::new();
    for x in &cl.state.names {
        let l = qubit_label.get(x.as_str()).ok_or_else(|| EvalError::IllTyped(format!("qubit {x} not in the value")))?;
        reg_labels.push((l.clone(), BaseType::Qbit));
    }
    reg_labels.extend(bit_labels);
    Ok(QCRegister { labels: reg_labels, q: cl.state.amps.clone(), v })
}

fn collect_atoms(v: &Term, ty: &Type, out: &mut Vec<Term>) -> Result<(), EvalError> {
    match (v, ty) {
        (Term::Pair(a, b), Type::Tensor(ta, tb)) => {
            collect_atoms(a, ta, out)?;
            collect_atoms(b, tb, out)
        }
        (Term::Star, Type::Unit) => Ok(()),
        (Term::Var(_), Type::Qbit) | (Term::BoolLit(_), Type::Bit) => {
            out.push(v.clone());
            Ok(())
        }
        _ => Err(EvalError::IllTyped(format!("value {} at type {ty}", pretty(v)))),
    }
}

// ---------------------------------------------------------------------------
// The measuring token machine

struct Register {
    q: PureState,
    bits: BTreeMap<String, bool>,
}

impl Register {
    fn apply(&self, g: &GateApp) -> Result<Vec<(Register, f64)>, EvalError> {
        let def = g.def().ok_or_else(|| EvalError::Machine(format!("unknown gate {}", g.gate)))?;
        let name = |l: &Label| l.0.clone();
        let missing = |l: &Label| EvalError::Machine(format!("wire {l} not in the register"));
        let mut r = Register { q: self.q.clone(), bits: self.bits.clone() };
        let rename_q = |r: &mut Register| {
            for (i, o) in g.inputs.iter().zip(&g.outputs) {
                let k = r.q.pos(&i.0).expect("renamed wires exist");
                r.q.names[k] = name(o);
            }
        };
        match &def.kind {
            GateKind::Unitary(u) => {
                let on = g.inputs.iter().map(|l| r.q.pos(&l.0).ok_or_else(|| missing(l))).collect::<Result<Vec<_>, _>>()?;
                r.q.apply(u, &on);
                rename_q(&mut r);
                Ok(vec![(r, 1.0)])
            }
            GateKind::Identity => {
                match def.inputs[0] {
                    BaseType::Qbit => rename_q(&mut r),
                    BaseType::Bit => {
                        let b = r.bits.remove(&g.inputs[0].0).ok_or_else(|| missing(&g.inputs[0]))?;
                        r.bits.insert(name(&g.outputs[0]), b);
                    }
                }
                Ok(vec![(r, 1.0)])
            }
            GateKind::Zero | GateKind::One => {
                r.bits.insert(name(&g.outputs[0]), def.kind == GateKind::One);
                Ok(vec![(r, 1.0)])
            }
            GateKind::Discard => {
                r.bits.remove(&g.inputs[0].0).ok_or_else(|| missing(&g.inputs[0]))?;
                Ok(vec![(r, 1.0)])
            }
            GateKind::New => {
                let b = r.bits.remove(&g.inputs[0].0).ok_or_else(|| missing(&g.inputs[0]))?;
                r.q.push(name(&g.outputs[0]), b);
                Ok(vec![(r, 1.0)])
            }
            GateKind::Meas => {
                let k = r.q.pos(&g.inputs[0].0).ok_or_else(|| missing(&g.inputs[0]))?;
                Ok(r.q
                    .measure(k)
                    .into_iter()
                    .map(|(b, p, q)| {
                        let mut bits = r.bits.clone();
                        bits.insert(name(&g.outputs[0]), b);
                        (Register { q, bits }, p)
                    })
                    .collect())
            }
        }
    }

    fn to_qc(&self, rename: &BTreeMap<String, Label>) -> QCRegister {
        let get = |x: &String| rename.get(x).cloned().unwrap_or_else(|| Label(x.clone()));
        let mut labels: Vec<(Label, BaseType)> = self.q.names.iter().map(|x| (get(x), BaseType::Qbit)).collect();
        let mut v = BTreeMap::new();
        for (x, b) in &self.bits {
            labels.push((get(x), BaseType::Bit));
            v.insert(get(x), *b);
        }
        QCRegister { labels, q: self.q.amps.clone(), v }
    }
}

/// Runs a circuit on a pure register, branching on measurements, so that
/// the weighted outcomes mix to the circuit's image of `mix(input)`. Cheap
/// where the density-matrix semantics is not: wide closed circuits.
pub fn run_circuit_pure(c: &Circuit, input: &QCRegister) -> Result<PseudoDistribution<QCRegister>, EvalError> {
    let names = input.qbit_labels().into_iter().map(|l| l.0).collect();
    let bits = input.v.iter().map(|(l, b)| (l.0.clone(), *b)).collect();
    let start = Register { q: PureState { names, amps: input.q.clone() }, bits };
    let out = run_pure(c, vec![(start, 1.0)])?;
    Ok(PseudoDistribution { items: out.into_iter().map(|(r, w)| (r.to_qc(&BTreeMap::new()), w)).collect() })
}

fn run_pure(c: &Circuit, regs: Vec<(Register, f64)>) -> Result<Vec<(Register, f64)>, EvalError> {
    match c {
        Circuit::Gate(g) => {
            let mut out: Vec<(Register, f64)> = Vec::with_capacity(regs.len());
            for (r, w) in regs {
                for (r, p) in r.apply(g)? {
                    match out.iter_mut().find(|(o, _)| o.bits == r.bits && o.q.close_to(&r.q, 1e-12)) {
                        Some((_, ow)) => *ow += w * p,
                        None => out.push((r, w * p)),
                    }
                }
            }
            Ok(out)
        }
        Circuit::Seq { items } => items.iter().try_fold(regs, |acc, c| run_pure(c, acc)),
        Circuit::Ite { guard, then_branch, else_branch } => {
            let mut out = Vec::new();
            for (mut r, w) in regs {
                let b = r.bits.remove(&guard.0).ok_or_else(|| EvalError::Machine(format!("guard {guard} not in the register")))?;
                out.extend(run_pure(if b { then_branch } else { else_branch }, vec![(r, w)])?);
            }
            Ok(out)
        }
    }
}

/// A final configuration of the measuring machine.
#[derive(Clone, Debug)]
pub struct MachineOutcome {
    pub tokens: Vec<Token>,
    pub register: QCRegister,
}

struct Branch {
    cfg: crate::tokenmachine::Config,
    addr: Address,
    done: usize,
    reg: Register,
    w: f64,
    steps: usize,
}

fn leaf_gates(cfg: &crate::tokenmachine::Config, addr: &Address) -> Result<Vec<GateApp>, EvalError> {
    let c = cfg.circuit.at_address(addr).map_err(|e| EvalError::Machine(e.to_string()))?;
    let mut out = Vec::new();
    c.for_each_gate(&mut |g| out.push(g.clone()));
    Ok(out)
}

/// Catches up the register with the gates emitted at the branch's address.
fn sync_register(b: Branch) -> Result<Vec<Branch>, EvalError> {
    let gates = leaf_gates(&b.cfg, &b.addr)?;
    let mut frontier = vec![(b.reg, b.w)];
    for g in &gates[b.done..] {
        let mut next = Vec::new();
        for (r, w) in frontier {
            for (r2, p) in r.apply(g)? {
                next.push((r2, w * p));
            }
        }
        frontier = next;
    }
    Ok(frontier
        .into_iter()
        .map(|(reg, w)| Branch { cfg: b.cfg.clone(), addr: b.addr.clone(), done: gates.len(), reg, w, steps: b.steps })
        .collect())
}

/// Runs the measuring token machine on `d` from the register `m`, exploring
/// every measurement outcome. Outputs are named by the root's positions.
pub fn qmsiam_run(d: &Derivation, m: &QCRegister) -> Result<PseudoDistribution<MachineOutcome>, EvalError> {
    let machine = Machine::new(d);
    let cfg = machine.init();
    if m.env() != cfg.input {
        return Err(EvalError::BadRegister(format!(
            "register {} vs inputs {}",
            crate::circuit::show_env(&m.env()),
            crate::circuit::show_env(&cfg.input)
        )));
    }
    let reg = Register {
        q: PureState { names: m.qbit_labels().into_iter().map(|l| l.0).collect(), amps: m.q.clone() },
        bits: m.v.iter().map(|(l, b)| (l.0.clone(), *b)).collect(),
    };
    let limit = budget();
    let mut work = sync_register(Branch { cfg, addr: Address::new(), done: 0, reg, w: 1.0, steps: 0 })?;
    let mut out = PseudoDistribution { items: vec![] };
    while let Some(mut b) = work.pop() {
        let Some(mv) = machine.enabled_moves(&b.cfg, Mode::AsyncOnly).into_iter().next() else {
            if !machine.is_final(&b.cfg) {
                return Err(EvalError::Machine("deadlock in the measuring machine".into()));
            }
            let rename = final_names(d, &b.cfg);
            let tokens = b.cfg.tokens();
            out.items.push((MachineOutcome { tokens, register: b.reg.to_qc(&rename) }, b.w));
            continue;
        };
        b.steps += 1;
        if b.steps > limit {
            return Err(EvalError::StepBudgetExceeded(limit));
        }
        machine.step(&mut b.cfg, &mv, Mode::AsyncOnly).map_err(|e| EvalError::Machine(e.to_string()))?;
        if let Move::Async { .. } = mv {
            // the guard's value picks the branch; tokens of the other one go
            let wire = b
                .cfg
                .tokens
                .keys()
                .find_map(|(_, a)| a.keys().find(|k| !b.addr.contains_key(*k)).cloned())
                .ok_or_else(|| EvalError::Machine("conditional split without a new address".into()))?;
            let v = b.reg.bits.remove(&wire.0).ok_or_else(|| EvalError::Machine(format!("guard {wire} not in the register")))?;
            b.addr.insert(wire, v);
            let keep = b.addr.clone();
            b.cfg.tokens.retain(|(_, a), _| *a == keep);
            b.done = 0;
        }
        let mut next = sync_register(b)?;
        next.reverse();
        work.extend(next);
    }
    Ok(out)
}

fn final_names(d: &Derivation, cfg: &crate::tokenmachine::Config) -> BTreeMap<String, Label> {
    let root = d.node(cfg.root).id;
    cfg.tokens
        .iter()
        .filter_map(|((p, _), w)| {
            let info = d.pos(*p);
            (info.pos.node == root && info.polarity == Polarity::Pos).then_some(())?;
            Some((w.clone()?.0, d.label(*p).clone()))
        })
        .collect()
}

/// Equality of register distributions: near-equal registers (same labels,
/// trace distance of mixes within `tol`) are merged, then weights compared.
pub fn dist_equal(a: &PseudoDistribution<QCRegister>, b: &PseudoDistribution<QCRegister>, tol: f64) -> bool {
    let near = |x: &QCRegister, y: &QCRegister| x.env() == y.env() && mix(x).trace_distance(&mix(y)) <= tol;
    let canon = |d: &PseudoDistribution<QCRegister>| {
        let mut out = PseudoDistribution { items: vec![] };
        for (r, w) in &d.items {
            out.add_merging(r.clone(), *w, near);
        }
        out
    };
    let (ca, cb) = (canon(a), canon(b));
    if ca.len() != cb.len() {
        return false;
    }
    ca.items.iter().all(|(r, w)| cb.items.iter().any(|(s, v)| near(r, s) && (w - v).abs() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpm::mix_dist;
    use crate::syntax::parse_program;
    use crate::typing::infer;

    fn closure(src: &str) -> QuantumClosure {
        QuantumClosure::closed(parse_program(src).unwrap().term)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn operator_steps() {
        let s = eval_step(&closure("one *")).unwrap().unwrap();
        assert_eq!(s.items.len(), 1);
        assert_eq!(s.items[0].0.term, Term::BoolLit(true));
        assert_eq!(s.items[0].1, 1.0);

        let s = eval_step(&closure("new ff")).unwrap().unwrap();
        let (cl, w) = &s.items[0];
        assert_eq!(*w, 1.0);
        assert_eq!(cl.state.names, vec!["#q0"]);
        assert_eq!(cl.state.amps, vec![c(1.0), c(0.0)]);
        assert_eq!(cl.term, Term::var("#q0"));
        assert!(eval_step(&closure("\\x. x")).unwrap().is_none());
    }

    #[test]
    fn coin_splits_evenly() {
        let cl = closure("meas (H (new ff))");
        let mut cur = cl;
        loop {
            let s = eval_step(&cur).unwrap().unwrap();
            if s.len() == 2 {
                let ws: Vec<f64> = s.items.iter().map(|(_, w)| *w).collect();
                assert!((ws[0] - 0.5).abs() < 1e-12 && (ws[1] - 0.5).abs() < 1e-12);
                assert!((s.total() - 1.0).abs() < 1e-12);
                break;
            }
            cur = s.items[0].0.clone();
        }
        let full = eval_full(&closure("meas (H (new ff))")).unwrap();
        assert_eq!(full.len(), 2);
        for (cl, w) in &full.items {
            assert!(matches!(cl.term, Term::BoolLit(_)));
            assert!((w - 0.5).abs() < 1e-12);
        }
    }

    const BELL: &str = "(\\f. \\x. CNOT (f x, new (zero *))) H (new (zero *))";

    #[test]
    fn bell_closure() {
        let full = eval_full(&closure(BELL)).unwrap();
        assert_eq!(full.len(), 1);
        let (cl, w) = &full.items[0];
        assert_eq!(*w, 1.0);
        assert_eq!(cl.term, Term::pair(Term::var("#q0"), Term::var("#q1")));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let want = [s, 0.0, 0.0, s];
        for (a, b) in cl.state.amps.iter().zip(want) {
            assert!((a - c(b)).norm() < 1e-12);
        }
    }

    #[test]
    fn values_are_singletons() {
        let full = eval_full(&closure("\\x. x")).unwrap();
        assert_eq!(full.items.len(), 1);
        assert_eq!(full.items[0].1, 1.0);
    }

    #[test]
    fn intermediate_closures_typecheck() {
        let src = "let (a, b) = CNOT (H (new ff), new ff) in (meas a, meas b)";
        let p = parse_program(src).unwrap();
        let ty = infer(&p.term, &p.context).unwrap().node(0).ty.clone();
        let mut work = vec![QuantumClosure::closed(p.term)];
        while let Some(cl) = work.pop() {
            let ctx = cl.state.names.iter().map(|x| (x.clone(), Type::Qbit)).collect();
            let d = infer(&cl.term, &ctx).unwrap_or_else(|e| panic!("{cl}: {e}"));
            assert_eq!(d.node(0).ty, ty);
            if let Some(next) = eval_step(&cl).unwrap() {
                assert!((next.total() - 1.0).abs() < 1e-12);
                work.extend(next.items.into_iter().map(|(c, _)| c));
            }
        }
    }

    fn machine_dist(src: &str) -> PseudoDistribution<QCRegister> {
        let p = parse_program(src).unwrap();
        let d = infer(&p.term, &p.context).unwrap();
        qmsiam_run(&d, &QCRegister::empty()).unwrap().map(|o| o.register)
    }

    #[test]
    fn machine_bell_is_one_register() {
        let dist = machine_dist(BELL);
        assert_eq!(dist.len(), 1);
        let r = &dist.items[0].0;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.q[0] - c(s)).norm() < 1e-12 && (r.q[3] - c(s)).norm() < 1e-12);
    }

    #[test]
    fn machine_coin_two_outcomes() {
        let dist = machine_dist("meas (H (new ff))");
        assert_eq!(dist.len(), 2);
        for (_, w) in &dist.items {
            assert!((w - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn machine_agrees_with_closures() {
        for src in [
            BELL,
            "meas (H (new ff))",
            "if meas (H (new ff)) then (new tt, zero *) else (H (new ff), one *)",
            "let (a, b) = CNOT (H (new ff), new ff) in (meas a, meas b)",
            "(if meas (H (new ff)) then \\f g x. f (g x) else \\f g x. g (f x)) H S (new ff)",
        ] {
            let p = parse_program(src).unwrap();
            let d = infer(&p.term, &p.context).unwrap();
            let root = d.node(0);
            let labels: Vec<Label> = crate::typing::atoms(&root.ty)
                .into_iter()
                .filter(|(_, k, _)| k.base().is_some())
                .map(|(path, _, _)| d.label(d.pos_id(&crate::typing::Position::concl(0, path)).unwrap()).clone())
                .collect();
            let ops = eval_full(&QuantumClosure::closed(p.term.clone())).unwrap();
            let ops = ops.map(|cl| value_register(&cl, &root.ty, &labels).unwrap());
            let tkm = machine_dist(src);
            let (a, b) = (mix_dist(&ops.items).unwrap(), mix_dist(&tkm.items).unwrap());
            assert!(a.trace_distance(&b) < 1e-9, "{src}");
        }
    }

    #[test]
    fn pure_runs_match_the_density_semantics() {
        use crate::circuit::{env_of, parse_circuit};
        use crate::cpm::{interp_circuit, mix_dist};
        let circ =
            parse_circuit("H a -> a\nCNOT a,b -> a,b\n# meas-index 0\nmeas a -> m\nif m {\nX b -> b\n} else {\nH b -> b\nT b -> b\n}\n")
                .unwrap();
        let env = env_of(&[("a", BaseType::Qbit), ("b", BaseType::Qbit)]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let input = QCRegister {
            labels: vec![(Label::from("a"), BaseType::Qbit), (Label::from("b"), BaseType::Qbit)],
            q: vec![c(s), c(0.0), c(0.0), c(s)],
            v: BTreeMap::new(),
        };
        let pure = run_circuit_pure(&circ, &input).unwrap();
        let want = interp_circuit(&circ, &env).unwrap().apply(&mix(&input));
        assert!(mix_dist(&pure.items).unwrap().trace_distance(&want) < 1e-12);
    }

    #[test]
    fn dist_equality() {
        let d = machine_dist("meas (H (new ff))");
        assert!(dist_equal(&d, &d, 1e-9));
        let mut rev = d.clone();
        rev.items.reverse();
        assert!(dist_equal(&d, &rev, 1e-9));
        let mut skew = d.clone();
        skew.items[0].1 = 1.0 / 3.0;
        skew.items[1].1 = 2.0 / 3.0;
        assert!(!dist_equal(&d, &skew, 1e-9));
    }

    #[test]
    fn inputs_become_hash_variables() {
        let p = parse_program("context x : qbit, b : bit; if b then H x else x").unwrap();
        let bits = [("b".to_string(), true)].into_iter().collect();
        let cl = QuantumClosure::with_inputs(&p.term, &["x".to_string()], vec![c(1.0), c(0.0)], &bits);
        let full = eval_full(&cl).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((full.items[0].0.state.amps[1] - c(s)).norm() < 1e-12);
    }
}
