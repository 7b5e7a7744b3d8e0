//! The circuit-building token machine, with asynchronous and synchronous
//! handling of conditionals.
//!
//! Tokens carry the circuit wire they stand for, so structural moves leave
//! the circuit untouched; wires are renamed to position labels only when a
//! run finishes.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{BaseType, Circuit, Env, GateApp, Label};
use crate::extcircuit::{show_address, tau, Address, ExtCircuit};
use crate::typing::{atoms, Derivation, Dir, Polarity, PosId, Position, Rule, Side};

pub const DEFAULT_STEP_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Mode {
    /// Conditionals are always split into branches.
    AsyncOnly,
    /// The asynchronous rule fires only when nothing else can.
    SyncFirst,
    /// The asynchronous rule never fires; a stuck run is a deadlock.
    SyncOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheduler {
    Min,
    Max,
}

/// Ordered by scheduling priority, highest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RuleKind {
    Synchronous,
    CircuitGate,
    Structural,
    Guard,
    IteTransit,
    Asynchronous,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token {
    pub pos: PosId,
    pub addr: Address,
    /// The circuit wire this token stands for; `None` on unit tokens. On a
    /// guard token it is the guard bit, kept after the bit is consumed.
    pub wire: Option<Label>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Move {
    Token { kind: RuleKind, from: PosId, addr: Address, to: PosId },
    Gate { node: usize, addr: Address },
    Async { ite: usize, addr: Address },
    Sync { ite: usize, addr: Address },
}

impl Move {
    pub fn kind(&self) -> RuleKind {
        match self {
            Move::Token { kind, .. } => *kind,
            Move::Gate { .. } => RuleKind::CircuitGate,
            Move::Async { .. } => RuleKind::Asynchronous,
            Move::Sync { .. } => RuleKind::Synchronous,
        }
    }

    fn key(&self, d: &Derivation) -> (RuleKind, usize, PosId, Address) {
        match self {
            Move::Token { kind, from, addr, .. } => (*kind, d.pos(*from).pos.node, *from, addr.clone()),
            Move::Gate { node, addr } | Move::Async { ite: node, addr } | Move::Sync { ite: node, addr } => {
                (self.kind(), *node, 0, addr.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum MachineError {
    #[error("deadlock: {witness}")]
    Deadlock { witness: String },
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(usize),
    #[error("invalid move: {0}")]
    InvalidMove(String),
    #[error("machine invariant broken: {0}")]
    Invariant(String),
}

#[derive(Clone, Debug)]
enum Link {
    Stop,
    To {
        to: PosId,
        kind: RuleKind,
    },
    /// Into the branches of conditional `ite`.
    Enter {
        ite: usize,
        then_to: PosId,
        else_to: PosId,
    },
    /// Out of branch `branch` of conditional `ite`.
    Exit {
        ite: usize,
        to: PosId,
        branch: bool,
    },
    Gate(usize),
}

#[derive(Clone, Debug)]
struct IteInfo {
    node: usize,
    guard: PosId,
    then_root: usize,
    else_root: usize,
    /// Negative positions of the branch context and conclusion, with their
    /// counterparts in the then and else branches.
    neg: Vec<[PosId; 3]>,
    pos: Vec<[PosId; 3]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub depth: usize,
    pub rule: RuleKind,
    pub before: Vec<String>,
    pub after: Vec<String>,
    pub circuit_size: usize,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub mode: Mode,
    pub scheduler: Scheduler,
    pub trace: bool,
    pub check_invariants: bool,
    pub step_budget: usize,
}

impl Default for RunOptions {
    fn default() -> RunOptions {
        let step_budget = std::env::var("GOIQC_STEP_BUDGET").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_STEP_BUDGET);
        RunOptions { mode: Mode::SyncFirst, scheduler: Scheduler::Min, trace: false, check_invariants: false, step_budget }
    }
}

impl RunOptions {
    pub fn mode(mode: Mode) -> RunOptions {
        RunOptions { mode, ..RunOptions::default() }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunStats {
    pub steps: usize,
    pub sync_moves: usize,
    pub async_moves: usize,
    pub gate_moves: usize,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Input environment, one wire per negative data position of the root.
    pub input: Env,
    pub output: Env,
    pub circuit: ExtCircuit,
    pub tokens: Vec<Token>,
    pub stats: RunStats,
    pub trace: Vec<TraceEvent>,
}

impl RunResult {
    /// The flattened circuit.
    pub fn flat(&self) -> Circuit {
        tau(&self.circuit, &self.input).expect("final circuits are uniform")
    }
}

/// A configuration of a run over the subderivation at `root`.
#[derive(Clone, Debug)]
pub struct Config {
    pub root: usize,
    pub tokens: BTreeMap<(PosId, Address), Option<Label>>,
    pub circuit: ExtCircuit,
    pub input: Env,
}

impl Config {
    pub fn tokens(&self) -> Vec<Token> {
        self.tokens.iter().map(|((p, a), w)| Token { pos: *p, addr: a.clone(), wire: w.clone() }).collect()
    }
}

struct Shared {
    meas: usize,
    stats: RunStats,
    trace: Option<Vec<TraceEvent>>,
    opts: RunOptions,
    depth: usize,
}

pub struct Machine<'d> {
    d: &'d Derivation,
    links: Vec<Link>,
    ites: BTreeMap<usize, IteInfo>,
}

impl<'d> Machine<'d> {
    pub fn new(d: &'d Derivation) -> Machine<'d> {
        let (links, ites) = build_links(d);
        Machine { d, links, ites }
    }

    pub fn derivation(&self) -> &'d Derivation {
        self.d
    }

    /// Where a structural or guard move takes a token at `p`, if anywhere.
    pub fn structural_step(&self, p: PosId) -> Option<PosId> {
        match &self.links[p] {
            Link::To { to, .. } => Some(*to),
            _ => None,
        }
    }

    /// Conditional nodes with the negative and positive positions of their
    /// branch context and conclusion.
    pub fn conditionals(&self) -> impl Iterator<Item = (usize, Vec<PosId>, Vec<PosId>)> + '_ {
        self.ites.values().map(|i| (i.node, i.neg.iter().map(|t| t[0]).collect(), i.pos.iter().map(|t| t[0]).collect()))
    }

    fn in_subtree(&self, root: usize, p: PosId) -> bool {
        self.d.node(root).contains(self.d.pos(p).pos.node)
    }

    fn base(&self, p: PosId) -> Option<BaseType> {
        self.d.pos(p).kind.base()
    }

    /// Initial configuration over the whole derivation.
    pub fn init(&self) -> Config {
        let sets = self.d.position_sets();
        let inputs: Vec<(PosId, Option<Label>)> =
            sets.ndata.iter().map(|&p| (p, Some(self.d.label(p).clone()))).chain(sets.nones.iter().map(|&p| (p, None))).collect();
        self.init_at(0, inputs)
    }

    fn init_at(&self, root: usize, inputs: Vec<(PosId, Option<Label>)>) -> Config {
        let mut input = Env::new();
        let mut tokens = BTreeMap::new();
        for (p, w) in inputs {
            if let (Some(w), Some(b)) = (&w, self.base(p)) {
                input.insert(w.clone(), b);
            }
            tokens.insert((p, Address::new()), w);
        }
        let mut cfg = Config { root, tokens, circuit: ExtCircuit::leaf(Circuit::empty()), input };
        self.inject_sources(&mut cfg, root, &Address::new());
        cfg
    }

    /// Tokens for the `*` and `tt`/`ff` axioms reachable from `at` without
    /// crossing a conditional branch.
    fn inject_sources(&self, cfg: &mut Config, at: usize, addr: &Address) {
        let sets = self.d.position_sets_at(at);
        for &p in &sets.ones_down {
            cfg.tokens.insert((p, addr.clone()), None);
        }
        for &p in &sets.bools_down {
            let node = self.d.node(self.d.pos(p).pos.node);
            let gate = match node.subject {
                crate::syntax::Term::BoolLit(true) => "one",
                _ => "zero",
            };
            let l = self.d.label(p).clone();
            let leaf = cfg.circuit.leaf_mut(addr).expect("token addresses are leaves");
            *leaf = std::mem::replace(leaf, Circuit::empty()).then(Circuit::Gate(GateApp {
                gate: gate.into(),
                inputs: vec![],
                outputs: vec![l.clone()],
                meas_index: None,
            }));
            cfg.tokens.insert((p, addr.clone()), Some(l));
        }
    }

    fn guard_token<'c>(&self, cfg: &'c Config, ite: &IteInfo, addr: &Address) -> Option<(&'c Address, &'c Label)> {
        cfg.tokens
            .range((ite.guard, Address::new())..)
            .take_while(|((p, _), _)| *p == ite.guard)
            .find(|((_, a), _)| a.iter().all(|(k, v)| addr.get(k) == Some(v)))
            .and_then(|((_, a), w)| w.as_ref().map(|w| (a, w)))
    }

    fn flagged(&self, cfg: &Config, addr: &Address, wire: &Label) -> bool {
        addr.contains_key(wire) || cfg.circuit.path_to(addr).is_ok_and(|cs| cs.iter().any(|c| c.contains_ite_on(wire)))
    }

    /// The branch a token at `addr` inside conditional `ite` is committed to.
    fn branch_of(&self, cfg: &Config, ite: usize, addr: &Address) -> Option<bool> {
        let info = &self.ites[&ite];
        let (_, w) = self.guard_token(cfg, info, addr)?;
        addr.get(w).copied()
    }

    pub fn enabled_moves(&self, cfg: &Config, mode: Mode) -> Vec<Move> {
        let root = cfg.root;
        let mut moves = Vec::new();
        let mut gates = BTreeSet::new();
        for (p, addr) in cfg.tokens.keys() {
            match &self.links[*p] {
                Link::Stop => {}
                Link::To { to, kind } => {
                    if self.in_subtree(root, *to) {
                        moves.push(Move::Token { kind: *kind, from: *p, addr: addr.clone(), to: *to });
                    }
                }
                Link::Enter { ite, then_to, else_to } => {
                    if let Some(b) = self.branch_of(cfg, *ite, addr) {
                        let to = if b { *then_to } else { *else_to };
                        moves.push(Move::Token { kind: RuleKind::IteTransit, from: *p, addr: addr.clone(), to });
                    }
                }
                Link::Exit { ite, to, branch } => {
                    if self.in_subtree(root, *to) && self.branch_of(cfg, *ite, addr) == Some(*branch) {
                        moves.push(Move::Token { kind: RuleKind::IteTransit, from: *p, addr: addr.clone(), to: *to });
                    }
                }
                Link::Gate(node) => {
                    gates.insert((*node, addr.clone()));
                }
            }
        }
        for (node, addr) in gates {
            let ready = self
                .d
                .node_positions(node)
                .filter(|q| self.d.pos(*q).polarity == Polarity::Neg)
                .all(|q| cfg.tokens.contains_key(&(q, addr.clone())));
            if ready {
                moves.push(Move::Gate { node, addr });
            }
        }
        let mut asyncs = Vec::new();
        for info in self.ites.values().filter(|i| self.d.node(root).contains(i.node)) {
            let guards: Vec<(&Address, &Label)> = cfg
                .tokens
                .range((info.guard, Address::new())..)
                .take_while(|((p, _), _)| *p == info.guard)
                .filter_map(|((_, a), w)| w.as_ref().map(|w| (a, w)))
                .collect();
            for (addr, w) in guards {
                if self.flagged(cfg, addr, w) {
                    continue;
                }
                if mode != Mode::AsyncOnly && info.neg.iter().all(|[q, _, _]| cfg.tokens.contains_key(&(*q, addr.clone()))) {
                    moves.push(Move::Sync { ite: info.node, addr: addr.clone() });
                }
                if mode != Mode::SyncOnly {
                    asyncs.push(Move::Async { ite: info.node, addr: addr.clone() });
                }
            }
        }
        if mode == Mode::AsyncOnly || moves.is_empty() {
            moves.extend(asyncs);
        }
        moves.sort_by_cached_key(|m| m.key(self.d));
        moves
    }

    /// Whether every token sits on a final position and every guard is consumed.
    pub fn is_final(&self, cfg: &Config) -> bool {
        let root = self.d.node(cfg.root);
        cfg.tokens.iter().all(|((p, addr), w)| {
            let info = self.d.pos(*p);
            let at_root = info.pos.node == root.id && info.polarity == Polarity::Pos;
            let guard = self.ites.values().find(|i| i.guard == *p);
            match guard {
                Some(_) => w.as_ref().is_some_and(|w| self.flagged(cfg, addr, w)),
                None => at_root || matches!(self.links[*p], Link::Stop),
            }
        })
    }

    /// Applies one enabled move.
    pub fn step(&self, cfg: &mut Config, mv: &Move, mode: Mode) -> Result<(), MachineError> {
        if !self.enabled_moves(cfg, mode).contains(mv) {
            return Err(MachineError::InvalidMove(format!("{mv:?}")));
        }
        let mut sh = Shared { meas: next_meas(cfg), stats: RunStats::default(), trace: None, opts: RunOptions::mode(mode), depth: 0 };
        self.apply(cfg, mv, &mut sh)
    }

    fn apply(&self, cfg: &mut Config, mv: &Move, sh: &mut Shared) -> Result<(), MachineError> {
        let before: Vec<String> = if sh.trace.is_some() { self.describe_move(mv) } else { vec![] };
        match mv {
            Move::Token { from, addr, to, .. } => {
                let w = cfg.tokens.remove(&(*from, addr.clone())).ok_or_else(|| MachineError::InvalidMove(format!("{mv:?}")))?;
                cfg.tokens.insert((*to, addr.clone()), w);
            }
            Move::Gate { node, addr } => {
                sh.stats.gate_moves += 1;
                self.fire_gate(cfg, *node, addr, &mut sh.meas);
            }
            Move::Async { ite, addr } => {
                sh.stats.async_moves += 1;
                self.fire_async(cfg, *ite, addr);
            }
            Move::Sync { ite, addr } => {
                sh.stats.sync_moves += 1;
                self.fire_sync(cfg, *ite, addr, sh)?;
            }
        }
        sh.stats.steps += 1;
        if let Some(tr) = sh.trace.as_mut() {
            let after = match mv {
                Move::Token { to, addr, .. } => vec![format!("{} {}", self.d.pos(*to).pos, show_address(addr))],
                _ => vec![],
            };
            tr.push(TraceEvent { step: sh.stats.steps, depth: sh.depth, rule: mv.kind(), before, after, circuit_size: cfg.circuit.size() });
        }
        if sh.opts.check_invariants {
            self.check_invariant(cfg).map_err(MachineError::Invariant)?;
        }
        Ok(())
    }

    fn describe_move(&self, mv: &Move) -> Vec<String> {
        match mv {
            Move::Token { from, addr, .. } => vec![format!("{} {}", self.d.pos(*from).pos, show_address(addr))],
            Move::Gate { node, addr } | Move::Async { ite: node, addr } | Move::Sync { ite: node, addr } => {
                vec![format!("node {node} {}", show_address(addr))]
            }
        }
    }

    fn fire_gate(&self, cfg: &mut Config, node: usize, addr: &Address, meas: &mut usize) {
        let n = self.d.node(node);
        let crate::syntax::Term::Const(name) = &n.subject else { unreachable!("gate moves are on constants") };
        let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
        let mut out_tokens = Vec::new();
        for q in self.d.node_positions(node).collect::<Vec<_>>() {
            let info = self.d.pos(q);
            match info.polarity {
                Polarity::Neg => {
                    let w = cfg.tokens.remove(&(q, addr.clone())).expect("gate inputs are saturated");
                    inputs.extend(w);
                }
                Polarity::Pos => {
                    let w = info.kind.base().map(|_| info.label.clone());
                    outputs.extend(w.clone());
                    out_tokens.push((q, w));
                }
            }
        }
        let meas_index = (name == "meas").then(|| {
            *meas += 1;
            *meas - 1
        });
        let g = GateApp { gate: name.clone(), inputs, outputs, meas_index };
        let leaf = cfg.circuit.leaf_mut(addr).expect("token addresses are leaves");
        *leaf = std::mem::replace(leaf, Circuit::empty()).then(Circuit::Gate(g));
        for (q, w) in out_tokens {
            cfg.tokens.insert((q, addr.clone()), w);
        }
    }

    fn fire_async(&self, cfg: &mut Config, ite: usize, addr: &Address) {
        let info = &self.ites[&ite];
        let w = cfg.tokens[&(info.guard, addr.clone())].clone().expect("guard tokens carry their bit");
        cfg.circuit.split_at(addr, &w).expect("token addresses are leaves");
        let here: Vec<((PosId, Address), Option<Label>)> =
            cfg.tokens.iter().filter(|((_, a), _)| a == addr).map(|(k, v)| (k.clone(), v.clone())).collect();
        for ((p, a), v) in here {
            cfg.tokens.remove(&(p, a.clone()));
            for b in [true, false] {
                let mut a2 = a.clone();
                a2.insert(w.clone(), b);
                cfg.tokens.insert((p, a2), v.clone());
            }
        }
        for (b, root) in [(true, info.then_root), (false, info.else_root)] {
            let mut a2 = addr.clone();
            a2.insert(w.clone(), b);
            self.inject_sources(cfg, root, &a2);
        }
    }

    fn fire_sync(&self, cfg: &mut Config, ite: usize, addr: &Address, sh: &mut Shared) -> Result<(), MachineError> {
        let info = self.ites[&ite].clone();
        let w = cfg.tokens[&(info.guard, addr.clone())].clone().expect("guard tokens carry their bit");
        let wires: Vec<Option<Label>> =
            info.neg.iter().map(|[q, _, _]| cfg.tokens.remove(&(*q, addr.clone())).expect("saturated")).collect();
        let mut branches = Vec::new();
        for (k, root) in [(1, info.then_root), (2, info.else_root)] {
            let inputs: Vec<(PosId, Option<Label>)> = info.neg.iter().zip(&wires).map(|(t, w)| (t[k], w.clone())).collect();
            let names: BTreeMap<PosId, Label> = info.pos.iter().map(|t| (t[k], self.d.label(t[0]).clone())).collect();
            sh.depth += 1;
            let sub = self.run_from(root, inputs, &names, sh);
            sh.depth -= 1;
            branches.push(sub?);
        }
        let [then_run, else_run]: [RunResult; 2] = branches.try_into().expect("two branches");
        let c = Circuit::ite(w.clone(), then_run.flat(), else_run.flat());
        let leaf = cfg.circuit.leaf_mut(addr).expect("token addresses are leaves");
        *leaf = std::mem::replace(leaf, Circuit::empty()).then(c);
        for [n_pos, _, _] in &info.pos {
            let w = self.base(*n_pos).map(|_| self.d.label(*n_pos).clone());
            cfg.tokens.insert((*n_pos, addr.clone()), w);
        }
        Ok(())
    }

    fn run_from(
        &self,
        root: usize,
        inputs: Vec<(PosId, Option<Label>)>,
        names: &BTreeMap<PosId, Label>,
        sh: &mut Shared,
    ) -> Result<RunResult, MachineError> {
        let mut cfg = self.init_at(root, inputs);
        loop {
            if sh.stats.steps >= sh.opts.step_budget {
                return Err(MachineError::StepBudgetExceeded(sh.opts.step_budget));
            }
            let moves = self.enabled_moves(&cfg, sh.opts.mode);
            let mv = match sh.opts.scheduler {
                Scheduler::Min => moves.first(),
                Scheduler::Max => moves.last(),
            };
            match mv {
                Some(mv) => self.apply(&mut cfg, &mv.clone(), sh)?,
                None if self.is_final(&cfg) => break,
                None => return Err(MachineError::Deadlock { witness: self.deadlock_witness(&cfg) }),
            }
        }
        self.finish(cfg, names)
    }

    /// Renames each output wire to its final name, leaf by leaf.
    fn finish(&self, mut cfg: Config, names: &BTreeMap<PosId, Label>) -> Result<RunResult, MachineError> {
        let mut output = Env::new();
        for ((p, addr), w) in cfg.tokens.clone() {
            let (Some(target), Some(w), Some(ty)) = (names.get(&p), w, self.base(p)) else { continue };
            output.insert(target.clone(), ty);
            if w == *target {
                continue;
            }
            let leaf = cfg.circuit.leaf_mut(&addr).map_err(|e| MachineError::Invariant(e.to_string()))?;
            if !leaf.rename_output(&w, target, ty) {
                let id = crate::circuit::gates::identity_for(ty);
                *leaf = std::mem::replace(leaf, Circuit::empty()).then(Circuit::Gate(GateApp {
                    gate: id.to_string(),
                    inputs: vec![w],
                    outputs: vec![target.clone()],
                    meas_index: None,
                }));
            }
        }
        let tokens = cfg.tokens();
        Ok(RunResult { input: cfg.input, output, circuit: cfg.circuit, tokens, stats: RunStats::default(), trace: vec![] })
    }

    fn deadlock_witness(&self, cfg: &Config) -> String {
        let stuck: Vec<String> = cfg
            .tokens
            .keys()
            .filter(|(p, _)| {
                let info = self.d.pos(*p);
                !(info.pos.node == cfg.root && info.polarity == Polarity::Pos)
            })
            .map(|(p, a)| {
                let info = self.d.pos(*p);
                let what = if self.ites.values().any(|i| i.guard == *p) { "guard" } else { "token" };
                format!("{what} at {} {}", info.pos, show_address(a))
            })
            .collect();
        format!("no move enabled; waiting: {}", stuck.join("; "))
    }

    /// Every leaf's output environment equals the wires of the live tokens at its address.
    pub fn check_invariant(&self, cfg: &Config) -> Result<(), String> {
        let envs = crate::extcircuit::ext_typecheck(&cfg.circuit, &cfg.input).map_err(|e| e.to_string())?;
        let mut per_leaf: BTreeMap<Address, Env> = cfg.circuit.addresses().into_iter().map(|a| (a, Env::new())).collect();
        for ((p, addr), w) in &cfg.tokens {
            let Some(w) = w else { continue };
            let is_guard = self.ites.values().any(|i| i.guard == *p);
            if is_guard && self.flagged(cfg, addr, w) {
                continue;
            }
            let env = per_leaf.get_mut(addr).ok_or_else(|| format!("token at {} is not on a leaf", show_address(addr)))?;
            if env.insert(w.clone(), self.base(*p).expect("data token")).is_some() {
                return Err(format!("wire {w} carried twice"));
            }
        }
        fn leaves(e: &crate::extcircuit::ExtEnv, cur: &mut Address, out: &mut Vec<(Address, Env)>) {
            match e {
                crate::extcircuit::ExtEnv::Leaf(env) => out.push((cur.clone(), env.clone())),
                crate::extcircuit::ExtEnv::Branch { guard, then_env, else_env } => {
                    cur.insert(guard.clone(), true);
                    leaves(then_env, cur, out);
                    cur.insert(guard.clone(), false);
                    leaves(else_env, cur, out);
                    cur.remove(guard);
                }
            }
        }
        let mut got = Vec::new();
        leaves(&envs, &mut Address::new(), &mut got);
        for (a, env) in got {
            if per_leaf.get(&a) != Some(&env) {
                return Err(format!(
                    "leaf {} has {} but tokens carry {}",
                    show_address(&a),
                    crate::circuit::show_env(&env),
                    crate::circuit::show_env(per_leaf.get(&a).unwrap_or(&Env::new()))
                ));
            }
        }
        Ok(())
    }

    /// Runs the machine over the whole derivation.
    pub fn run(&self, opts: &RunOptions) -> Result<RunResult, MachineError> {
        let sets = self.d.position_sets();
        let inputs: Vec<(PosId, Option<Label>)> =
            sets.ndata.iter().map(|&p| (p, Some(self.d.label(p).clone()))).chain(sets.nones.iter().map(|&p| (p, None))).collect();
        let names: BTreeMap<PosId, Label> = sets.pdata.iter().map(|&p| (p, self.d.label(p).clone())).collect();
        let mut sh = Shared { meas: 0, stats: RunStats::default(), trace: opts.trace.then(Vec::new), opts: opts.clone(), depth: 0 };
        let mut res = self.run_from(0, inputs, &names, &mut sh)?;
        res.stats = sh.stats;
        res.trace = sh.trace.unwrap_or_default();
        Ok(res)
    }

    /// Runs the subderivation at `root` in sync-first mode from its negative
    /// positions, with the given input wires.
    pub fn exec(&self, root: usize, inputs: Vec<(PosId, Option<Label>)>) -> Result<RunResult, MachineError> {
        let sets = self.d.position_sets_at(root);
        let names: BTreeMap<PosId, Label> = sets.pdata.iter().map(|&p| (p, self.d.label(p).clone())).collect();
        let mut sh = Shared { meas: 0, stats: RunStats::default(), trace: None, opts: RunOptions::default(), depth: 0 };
        let mut res = self.run_from(root, inputs, &names, &mut sh)?;
        res.stats = sh.stats;
        Ok(res)
    }
}

fn next_meas(cfg: &Config) -> usize {
    cfg.circuit.meas_indices().into_iter().max().map_or(0, |m| m + 1)
}

/// Convenience wrapper: builds the machine and runs it.
pub fn run(d: &Derivation, opts: &RunOptions) -> Result<RunResult, MachineError> {
    Machine::new(d).run(opts)
}

fn build_links(d: &Derivation) -> (Vec<Link>, BTreeMap<usize, IteInfo>) {
    let mut links = vec![Link::Stop; d.all_positions().len()];
    let mut ites = BTreeMap::new();
    let pid = |node: usize, side: Side, path: Vec<Dir>| d.pos_id(&Position::new(node, side, path)).expect("position of a judgment atom");
    let pol = |p: PosId| d.pos(p).polarity;
    // Same occurrence, `a` in the node and `b` in a premise.
    let same = |links: &mut Vec<Link>, a: PosId, b: PosId, kind: RuleKind| {
        if pol(a) == Polarity::Neg {
            links[a] = Link::To { to: b, kind };
        } else {
            links[b] = Link::To { to: a, kind };
        }
    };
    let cut = |links: &mut Vec<Link>, x: PosId, y: PosId| {
        let (from, to) = if pol(x) == Polarity::Pos { (x, y) } else { (y, x) };
        links[from] = Link::To { to, kind: RuleKind::Structural };
    };
    let paths = |ty: &crate::syntax::Type| atoms(ty).into_iter().map(|(p, _, _)| p).collect::<Vec<_>>();
    let prefixed = |pre: Dir, path: &[Dir]| {
        let mut v = vec![pre];
        v.extend_from_slice(path);
        v
    };

    for n in &d.nodes {
        let id = n.id;
        let ctx_links = |links: &mut Vec<Link>, prem: &[usize], kind: RuleKind| {
            for (x, ty) in &n.context {
                if let Some(&p) = prem.iter().find(|&&p| d.node(p).context.contains_key(x)) {
                    for path in paths(ty) {
                        same(links, pid(id, Side::Ctx(x.clone()), path.clone()), pid(p, Side::Ctx(x.clone()), path), kind);
                    }
                }
            }
        };
        match n.rule {
            Rule::Ax => {
                let (x, ty) = n.context.iter().next().expect("axiom has one variable");
                for path in paths(ty) {
                    let a = pid(id, Side::Ctx(x.clone()), path.clone());
                    let b = pid(id, Side::Concl, path);
                    let (from, to) = if pol(a) == Polarity::Neg { (a, b) } else { (b, a) };
                    links[from] = Link::To { to, kind: RuleKind::Structural };
                }
            }
            Rule::Op => {
                for q in d.node_positions(id) {
                    if pol(q) == Polarity::Neg {
                        links[q] = Link::Gate(id);
                    }
                }
            }
            Rule::UnitIntro | Rule::BoolAx => {}
            Rule::Lam => {
                let p = n.premises[0];
                ctx_links(&mut links, &[p], RuleKind::Structural);
                let crate::syntax::Term::Lam(x, _) = &n.subject else { unreachable!() };
                let crate::syntax::Type::Lolli(a, b) = &n.ty else { unreachable!("lambda has arrow type") };
                for path in paths(a) {
                    same(
                        &mut links,
                        pid(id, Side::Concl, prefixed(Dir::L, &path)),
                        pid(p, Side::Ctx(x.clone()), path),
                        RuleKind::Structural,
                    );
                }
                for path in paths(b) {
                    same(&mut links, pid(id, Side::Concl, prefixed(Dir::R, &path)), pid(p, Side::Concl, path), RuleKind::Structural);
                }
            }
            Rule::App => {
                let (p0, p1) = (n.premises[0], n.premises[1]);
                ctx_links(&mut links, &[p0, p1], RuleKind::Structural);
                for path in paths(&n.ty) {
                    same(
                        &mut links,
                        pid(id, Side::Concl, path.clone()),
                        pid(p0, Side::Concl, prefixed(Dir::R, &path)),
                        RuleKind::Structural,
                    );
                }
                for path in paths(&d.node(p1).ty) {
                    cut(&mut links, pid(p0, Side::Concl, prefixed(Dir::L, &path)), pid(p1, Side::Concl, path));
                }
            }
            Rule::PairIntro => {
                let (p0, p1) = (n.premises[0], n.premises[1]);
                ctx_links(&mut links, &[p0, p1], RuleKind::Structural);
                for (dir, p) in [(Dir::L, p0), (Dir::R, p1)] {
                    for path in paths(&d.node(p).ty) {
                        same(&mut links, pid(id, Side::Concl, prefixed(dir, &path)), pid(p, Side::Concl, path), RuleKind::Structural);
                    }
                }
            }
            Rule::LetStar => {
                let (p0, p1) = (n.premises[0], n.premises[1]);
                ctx_links(&mut links, &[p0, p1], RuleKind::Structural);
                for path in paths(&n.ty) {
                    same(&mut links, pid(id, Side::Concl, path.clone()), pid(p1, Side::Concl, path), RuleKind::Structural);
                }
            }
            Rule::LetPair => {
                let (p0, p1) = (n.premises[0], n.premises[1]);
                ctx_links(&mut links, &[p0, p1], RuleKind::Structural);
                let crate::syntax::Term::LetPair(x, y, _, _) = &n.subject else { unreachable!() };
                let crate::syntax::Type::Tensor(a, b) = &d.node(p0).ty else { unreachable!("pair type") };
                for (dir, v, t) in [(Dir::L, x, a), (Dir::R, y, b)] {
                    for path in paths(t) {
                        cut(&mut links, pid(p0, Side::Concl, prefixed(dir, &path)), pid(p1, Side::Ctx(v.clone()), path));
                    }
                }
                for path in paths(&n.ty) {
                    same(&mut links, pid(id, Side::Concl, path.clone()), pid(p1, Side::Concl, path), RuleKind::Structural);
                }
            }
            Rule::Ite => {
                let (p0, p1, p2) = (n.premises[0], n.premises[1], n.premises[2]);
                let mut info =
                    IteInfo { node: id, guard: pid(p0, Side::Concl, vec![]), then_root: p1, else_root: p2, neg: vec![], pos: vec![] };
                let mut triples = Vec::new();
                for (x, ty) in &n.context {
                    if d.node(p0).context.contains_key(x) {
                        for path in paths(ty) {
                            same(
                                &mut links,
                                pid(id, Side::Ctx(x.clone()), path.clone()),
                                pid(p0, Side::Ctx(x.clone()), path),
                                RuleKind::Guard,
                            );
                        }
                    } else {
                        for path in paths(ty) {
                            let side = Side::Ctx(x.clone());
                            triples.push([pid(id, side.clone(), path.clone()), pid(p1, side.clone(), path.clone()), pid(p2, side, path)]);
                        }
                    }
                }
                for path in paths(&n.ty) {
                    triples.push([pid(id, Side::Concl, path.clone()), pid(p1, Side::Concl, path.clone()), pid(p2, Side::Concl, path)]);
                }
                for t in triples {
                    if pol(t[0]) == Polarity::Neg {
                        links[t[0]] = Link::Enter { ite: id, then_to: t[1], else_to: t[2] };
                        info.neg.push(t);
                    } else {
                        links[t[1]] = Link::Exit { ite: id, to: t[0], branch: true };
                        links[t[2]] = Link::Exit { ite: id, to: t[0], branch: false };
                        info.pos.push(t);
                    }
                }
                ites.insert(id, info);
            }
        }
    }
    (links, ites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpm::{interp_circuit, map_equal, CpmState};
    use crate::syntax::parse_program;
    use crate::typing::infer;

    fn deriv(src: &str) -> Derivation {
        let p = parse_program(src).unwrap();
        infer(&p.term, &p.context).unwrap()
    }

    fn checked(mode: Mode) -> RunOptions {
        RunOptions { check_invariants: true, ..RunOptions::mode(mode) }
    }

    const BELL: &str = "let (a, b) = (H (new (zero *)), new (zero *)) in CNOT (a, b)";
    const COIN: &str = "meas (H (new (zero *)))";
    const RUW: &str = "context b : bit; (if b then \\f g x. f (g x) else \\f g x. g (f x)) H S";

    #[test]
    fn bell_initial_tokens_are_units() {
        let d = deriv(BELL);
        let m = Machine::new(&d);
        let cfg = m.init();
        assert_eq!(cfg.tokens.len(), 2);
        assert!(cfg.tokens.values().all(|w| w.is_none()));
        let moves = m.enabled_moves(&cfg, Mode::SyncFirst);
        assert!(moves.iter().all(|mv| mv.kind() == RuleKind::Structural));
        assert_eq!(moves.len(), 2);
    }

    #[test]
    fn context_tokens_in_cnot_example() {
        let d = deriv("context x : qbit, y : qbit; CNOT (H x, y)");
        let cfg = Machine::new(&d).init();
        assert_eq!(cfg.tokens.len(), 2);
        assert_eq!(cfg.input.len(), 2);
    }

    #[test]
    fn bell_compiles_to_bell_state() {
        let d = deriv(BELL);
        for mode in [Mode::AsyncOnly, Mode::SyncFirst, Mode::SyncOnly] {
            let res = run(&d, &checked(mode)).unwrap();
            let c = res.flat();
            let out = interp_circuit(&c, &Env::new()).unwrap().apply(&CpmState::unit());
            assert_eq!(out.qbits.len(), 2);
            let blk = &out.blocks[0];
            for (i, want) in [0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.5].iter().enumerate() {
                assert!((blk[i].re - want).abs() < 1e-12, "{mode:?} entry {i}");
            }
        }
    }

    #[test]
    fn coin_is_fair() {
        let d = deriv(COIN);
        let res = run(&d, &checked(Mode::SyncFirst)).unwrap();
        let out = interp_circuit(&res.flat(), &Env::new()).unwrap().apply(&CpmState::unit());
        assert!((out.blocks[0][0].re - 0.5).abs() < 1e-12);
        assert!((out.blocks[1][0].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_term_passes_wire() {
        let d = deriv("context y : qbit; y");
        let res = run(&d, &checked(Mode::SyncFirst)).unwrap();
        assert_eq!(res.tokens.len(), 1);
        let c = res.flat();
        assert_eq!(c.size(), 1);
        assert_eq!(crate::circuit::typecheck_circuit(&c, &res.input).unwrap(), res.output);
    }

    #[test]
    fn ruw_deadlocks_only_in_sync_only() {
        let d = deriv(RUW);
        assert!(matches!(run(&d, &checked(Mode::SyncOnly)), Err(MachineError::Deadlock { .. })));
        let a = run(&d, &checked(Mode::SyncFirst)).unwrap();
        let b = run(&d, &checked(Mode::AsyncOnly)).unwrap();
        assert!(a.stats.async_moves >= 1);
        let fa = interp_circuit(&a.flat(), &a.input).unwrap();
        let fb = interp_circuit(&b.flat(), &b.input).unwrap();
        assert!(map_equal(&fa, &fb, 1e-9).unwrap());
    }

    #[test]
    fn synchronous_rule_on_conditional() {
        let src = "context x : qbit, y : qbit; if meas (H x) then H y else S y";
        let d = deriv(src);
        let s = run(&d, &checked(Mode::SyncFirst)).unwrap();
        assert_eq!((s.stats.sync_moves, s.stats.async_moves), (1, 0));
        assert_eq!(s.circuit.leaf_count(), 1);
        let a = run(&d, &checked(Mode::AsyncOnly)).unwrap();
        assert_eq!(a.stats.async_moves, 1);
        assert_eq!(a.circuit.leaf_count(), 2);
        let fs = interp_circuit(&s.flat(), &s.input).unwrap();
        let fa = interp_circuit(&a.flat(), &a.input).unwrap();
        assert!(map_equal(&fs, &fa, 1e-9).unwrap());
    }

    #[test]
    fn guard_consumed_before_a_split_stays_consumed() {
        // the first-order conditional fires synchronously, then the
        // function-typed one splits the leaf asynchronously
        let d = deriv("(if ff then \\a. a else \\a. a) H (new (if tt then tt else tt))");
        let res = run(&d, &checked(Mode::SyncFirst)).unwrap();
        assert_eq!(res.stats.sync_moves, 1);
        let text = crate::circuit::serialize(&res.flat());
        assert_eq!(text.matches("if l").count(), 2, "{text}");
    }

    #[test]
    fn schedulers_agree_semantically() {
        let src = "context x : qbit, y : qbit; let (a, b) = CNOT (H x, y) in (if meas a then X b else b)";
        let d = deriv(src);
        for mode in [Mode::AsyncOnly, Mode::SyncFirst] {
            let lo = run(&d, &RunOptions { scheduler: Scheduler::Min, ..checked(mode) }).unwrap();
            let hi = run(&d, &RunOptions { scheduler: Scheduler::Max, ..checked(mode) }).unwrap();
            let f = interp_circuit(&lo.flat(), &lo.input).unwrap();
            let g = interp_circuit(&hi.flat(), &hi.input).unwrap();
            assert!(map_equal(&f, &g, 1e-9).unwrap());
        }
    }

    #[test]
    fn invalid_move_rejected() {
        let d = deriv(BELL);
        let m = Machine::new(&d);
        let mut cfg = m.init();
        let bogus = Move::Gate { node: 0, addr: Address::new() };
        assert!(matches!(m.step(&mut cfg, &bogus, Mode::SyncFirst), Err(MachineError::InvalidMove(_))));
        let first = m.enabled_moves(&cfg, Mode::SyncFirst)[0].clone();
        m.step(&mut cfg, &first, Mode::SyncFirst).unwrap();
    }

    #[test]
    fn tiny_budget_is_reported() {
        let d = deriv(BELL);
        let opts = RunOptions { step_budget: 3, ..RunOptions::default() };
        assert!(matches!(run(&d, &opts), Err(MachineError::StepBudgetExceeded(3))));
    }
}
