//! Linear type inference with explicit derivations, and the positions,
//! polarities and labels the token machines walk over.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{gates, BaseType, Label};
use crate::syntax::{Term, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    Ax,
    Lam,
    App,
    UnitIntro,
    LetStar,
    PairIntro,
    LetPair,
    Ite,
    Op,
    BoolAx,
}

/// One judgment `context |- subject : ty` with its rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: usize,
    pub rule: Rule,
    pub context: BTreeMap<String, Type>,
    pub subject: Term,
    pub ty: Type,
    pub premises: Vec<usize>,
    pub parent: Option<usize>,
    /// One past the last node id of this subtree (ids are preorder).
    pub subtree_end: usize,
    /// Number of conditional branches enclosing this node.
    pub branch_depth: usize,
}

impl Node {
    pub fn contains(&self, other: usize) -> bool {
        other >= self.id && other < self.subtree_end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Dir {
    L,
    R,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Side {
    Ctx(String),
    Concl,
}

/// An atom occurrence in a judgment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Position {
    pub node: usize,
    pub side: Side,
    pub path: Vec<Dir>,
}

impl Position {
    pub fn new(node: usize, side: Side, path: Vec<Dir>) -> Position {
        Position { node, side, path }
    }

    pub fn concl(node: usize, path: Vec<Dir>) -> Position {
        Position { node, side: Side::Concl, path }
    }

    pub fn ctx(node: usize, x: &str, path: Vec<Dir>) -> Position {
        Position { node, side: Side::Ctx(x.to_string()), path }
    }

    pub fn extended(&self, prefix: &[Dir]) -> Vec<Dir> {
        let mut p = prefix.to_vec();
        p.extend_from_slice(&self.path);
        p
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path: String = self.path.iter().map(|d| if *d == Dir::L { 'L' } else { 'R' }).collect();
        match &self.side {
            Side::Ctx(x) => write!(f, "#{}:{}@{}", self.node, x, path),
            Side::Concl => write!(f, "#{}:|-@{}", self.node, path),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AtomKind {
    Bit,
    Qbit,
    Unit,
}

impl AtomKind {
    pub fn base(self) -> Option<BaseType> {
        match self {
            AtomKind::Bit => Some(BaseType::Bit),
            AtomKind::Qbit => Some(BaseType::Qbit),
            AtomKind::Unit => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn flip(self) -> Polarity {
        match self {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        }
    }
}

/// Atoms of a type, left to right, with their polarity as a formula.
pub fn atoms(ty: &Type) -> Vec<(Vec<Dir>, AtomKind, Polarity)> {
    fn go(t: &Type, path: &mut Vec<Dir>, pol: Polarity, out: &mut Vec<(Vec<Dir>, AtomKind, Polarity)>) {
        match t {
            Type::Bit => out.push((path.clone(), AtomKind::Bit, pol)),
            Type::Qbit => out.push((path.clone(), AtomKind::Qbit, pol)),
            Type::Unit => out.push((path.clone(), AtomKind::Unit, pol)),
            Type::Tensor(a, b) | Type::Lolli(a, b) => {
                let left_pol = if matches!(t, Type::Lolli(..)) { pol.flip() } else { pol };
                path.push(Dir::L);
                go(a, path, left_pol, out);
                path.pop();
                path.push(Dir::R);
                go(b, path, pol, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(ty, &mut Vec::new(), Polarity::Pos, &mut out);
    out
}

/// The subtype at a path, if the path exists.
pub fn subtype<'a>(ty: &'a Type, path: &[Dir]) -> Option<&'a Type> {
    match (ty, path.split_first()) {
        (_, None) => Some(ty),
        (Type::Tensor(a, b) | Type::Lolli(a, b), Some((d, rest))) => subtype(if *d == Dir::L { a } else { b }, rest),
        _ => None,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PosInfo {
    pub pos: Position,
    pub kind: AtomKind,
    pub polarity: Polarity,
    pub label: Label,
}

#[derive(Clone, Debug)]
pub struct Derivation {
    pub nodes: Vec<Node>,
    pub positions: Vec<PosInfo>,
    index: HashMap<Position, usize>,
}

pub type PosId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("linearity violation on `{var}`: {msg}")]
    LinearityError { var: String, msg: String },
    #[error("type mismatch: expected {expected}, found {found} in `{at}`")]
    TypeMismatch { expected: String, found: String, at: String },
    #[error("conditional branches disagree: {0}")]
    BranchMismatch(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
}

#[derive(Clone, Debug, PartialEq)]
enum MType {
    Var(usize),
    Bit,
    Qbit,
    Unit,
    Tensor(Box<MType>, Box<MType>),
    Lolli(Box<MType>, Box<MType>),
}

impl MType {
    fn from_type(t: &Type) -> MType {
        match t {
            Type::Bit => MType::Bit,
            Type::Qbit => MType::Qbit,
            Type::Unit => MType::Unit,
            Type::Tensor(a, b) => MType::Tensor(Box::new(MType::from_type(a)), Box::new(MType::from_type(b))),
            Type::Lolli(a, b) => MType::Lolli(Box::new(MType::from_type(a)), Box::new(MType::from_type(b))),
        }
    }
}

struct Infer {
    subst: Vec<Option<MType>>,
    raw: Vec<RawNode>,
}

struct RawNode {
    rule: Rule,
    context: BTreeMap<String, MType>,
    subject: Term,
    ty: MType,
    premises: Vec<usize>,
}

impl Infer {
    fn fresh(&mut self) -> MType {
        self.subst.push(None);
        MType::Var(self.subst.len() - 1)
    }

    fn walk(&self, t: &MType) -> MType {
        match t {
            MType::Var(v) => match &self.subst[*v] {
                Some(u) => self.walk(u),
                None => t.clone(),
            },
            MType::Tensor(a, b) => MType::Tensor(Box::new(self.walk(a)), Box::new(self.walk(b))),
            MType::Lolli(a, b) => MType::Lolli(Box::new(self.walk(a)), Box::new(self.walk(b))),
            _ => t.clone(),
        }
    }

    fn occurs(&self, v: usize, t: &MType) -> bool {
        match self.walk(t) {
            MType::Var(w) => v == w,
            MType::Tensor(a, b) | MType::Lolli(a, b) => self.occurs(v, &a) || self.occurs(v, &b),
            _ => false,
        }
    }

    fn unify(&mut self, a: &MType, b: &MType) -> bool {
        let (a, b) = (self.walk(a), self.walk(b));
        match (&a, &b) {
            (MType::Var(x), MType::Var(y)) if x == y => true,
            (MType::Var(x), t) | (t, MType::Var(x)) => {
                if self.occurs(*x, t) {
                    return false;
                }
                self.subst[*x] = Some(t.clone());
                true
            }
            (MType::Bit, MType::Bit) | (MType::Qbit, MType::Qbit) | (MType::Unit, MType::Unit) => true,
            (MType::Tensor(a1, b1), MType::Tensor(a2, b2)) | (MType::Lolli(a1, b1), MType::Lolli(a2, b2)) => {
                self.unify(a1, a2) && self.unify(b1, b2)
            }
            _ => false,
        }
    }

    fn show(&self, t: &MType) -> String {
        fn go(t: &MType, out: &mut String, prec: u8) {
            match t {
                MType::Var(v) => out.push_str(&format!("?{v}")),
                MType::Bit => out.push_str("bit"),
                MType::Qbit => out.push_str("qbit"),
                MType::Unit => out.push('1'),
                MType::Tensor(a, b) => {
                    if prec > 1 {
                        out.push('(');
                    }
                    go(a, out, 2);
                    out.push_str(" * ");
                    go(b, out, 1);
                    if prec > 1 {
                        out.push(')');
                    }
                }
                MType::Lolli(a, b) => {
                    if prec > 0 {
                        out.push('(');
                    }
                    go(a, out, 1);
                    out.push_str(" -o ");
                    go(b, out, 0);
                    if prec > 0 {
                        out.push(')');
                    }
                }
            }
        }
        let mut s = String::new();
        go(&self.walk(t), &mut s, 0);
        s
    }

    fn expect(&mut self, want: &MType, got: &MType, at: &Term) -> Result<(), TypeError> {
        if self.unify(want, got) {
            Ok(())
        } else {
            Err(TypeError::TypeMismatch { expected: self.show(want), found: self.show(got), at: crate::syntax::pretty(at) })
        }
    }

    fn restrict(ctx: &BTreeMap<String, MType>, keep: &BTreeSet<String>) -> BTreeMap<String, MType> {
        ctx.iter().filter(|(k, _)| keep.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    fn disjoint(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<(), TypeError> {
        match a.intersection(b).next() {
            Some(x) => Err(TypeError::LinearityError { var: x.clone(), msg: "used more than once".into() }),
            None => Ok(()),
        }
    }

    fn push(&mut self, n: RawNode) -> usize {
        self.raw.push(n);
        self.raw.len() - 1
    }

    /// `ctx` has exactly the free variables of `t`.
    fn node(&mut self, t: &Term, ctx: BTreeMap<String, MType>) -> Result<usize, TypeError> {
        let id = self.push(RawNode { rule: Rule::Ax, context: ctx.clone(), subject: t.clone(), ty: MType::Unit, premises: vec![] });
        let (rule, ty, premises) = match t {
            Term::Var(x) => {
                let ty = ctx.get(x).cloned().ok_or_else(|| TypeError::UnboundVariable(x.clone()))?;
                (Rule::Ax, ty, vec![])
            }
            Term::Const(c) => {
                let g = gates::lookup(c).ok_or_else(|| TypeError::UnknownConstant(c.clone()))?;
                (Rule::Op, MType::from_type(&g.term_type()), vec![])
            }
            Term::Star => (Rule::UnitIntro, MType::Unit, vec![]),
            Term::BoolLit(_) => (Rule::BoolAx, MType::Bit, vec![]),
            Term::Lam(x, body) => {
                if !body.free_vars().contains(x) {
                    return Err(TypeError::LinearityError { var: x.clone(), msg: "bound but never used".into() });
                }
                let a = self.fresh();
                let mut inner = ctx.clone();
                inner.insert(x.clone(), a.clone());
                let p = self.node(body, inner)?;
                let b = self.raw[p].ty.clone();
                (Rule::Lam, MType::Lolli(Box::new(a), Box::new(b)), vec![p])
            }
            Term::App(m, n) => {
                let (fm, fnn) = (m.free_vars(), n.free_vars());
                Self::disjoint(&fm, &fnn)?;
                let pm = self.node(m, Self::restrict(&ctx, &fm))?;
                let pn = self.node(n, Self::restrict(&ctx, &fnn))?;
                let b = self.fresh();
                let want = MType::Lolli(Box::new(self.raw[pn].ty.clone()), Box::new(b.clone()));
                let got = self.raw[pm].ty.clone();
                self.expect(&want, &got, m)?;
                (Rule::App, b, vec![pm, pn])
            }
            Term::Pair(m, n) => {
                let (fm, fnn) = (m.free_vars(), n.free_vars());
                Self::disjoint(&fm, &fnn)?;
                let pm = self.node(m, Self::restrict(&ctx, &fm))?;
                let pn = self.node(n, Self::restrict(&ctx, &fnn))?;
                let ty = MType::Tensor(Box::new(self.raw[pm].ty.clone()), Box::new(self.raw[pn].ty.clone()));
                (Rule::PairIntro, ty, vec![pm, pn])
            }
            Term::LetStar(m, n) => {
                let (fm, fnn) = (m.free_vars(), n.free_vars());
                Self::disjoint(&fm, &fnn)?;
                let pm = self.node(m, Self::restrict(&ctx, &fm))?;
                let got = self.raw[pm].ty.clone();
                self.expect(&MType::Unit, &got, m)?;
                let pn = self.node(n, Self::restrict(&ctx, &fnn))?;
                (Rule::LetStar, self.raw[pn].ty.clone(), vec![pm, pn])
            }
            Term::LetPair(x, y, m, n) => {
                let fm = m.free_vars();
                let mut fnn = n.free_vars();
                for v in [x, y] {
                    if !fnn.remove(v) {
                        return Err(TypeError::LinearityError { var: v.clone(), msg: "bound but never used".into() });
                    }
                }
                Self::disjoint(&fm, &fnn)?;
                let pm = self.node(m, Self::restrict(&ctx, &fm))?;
                let (a, b) = (self.fresh(), self.fresh());
                let got = self.raw[pm].ty.clone();
                self.expect(&MType::Tensor(Box::new(a.clone()), Box::new(b.clone())), &got, m)?;
                let mut inner = Self::restrict(&ctx, &fnn);
                inner.insert(x.clone(), a);
                inner.insert(y.clone(), b);
                let pn = self.node(n, inner)?;
                (Rule::LetPair, self.raw[pn].ty.clone(), vec![pm, pn])
            }
            Term::Ite(g, a, b) => {
                let (fg, fa, fb) = (g.free_vars(), a.free_vars(), b.free_vars());
                if fa != fb {
                    let diff: Vec<_> = fa.symmetric_difference(&fb).cloned().collect();
                    return Err(TypeError::BranchMismatch(format!("branches use different variables: {}", diff.join(", "))));
                }
                Self::disjoint(&fg, &fa)?;
                let pg = self.node(g, Self::restrict(&ctx, &fg))?;
                let got = self.raw[pg].ty.clone();
                self.expect(&MType::Bit, &got, g)?;
                let pa = self.node(a, Self::restrict(&ctx, &fa))?;
                let pb = self.node(b, Self::restrict(&ctx, &fb))?;
                let (ta, tb) = (self.raw[pa].ty.clone(), self.raw[pb].ty.clone());
                if !self.unify(&ta, &tb) {
                    return Err(TypeError::BranchMismatch(format!("then has type {}, else has type {}", self.show(&ta), self.show(&tb))));
                }
                (Rule::Ite, ta, vec![pg, pa, pb])
            }
        };
        let n = &mut self.raw[id];
        n.rule = rule;
        n.ty = ty;
        n.premises = premises;
        Ok(id)
    }

    fn resolve(&self, t: &MType) -> Type {
        match self.walk(t) {
            MType::Var(_) => Type::Qbit,
            MType::Bit => Type::Bit,
            MType::Qbit => Type::Qbit,
            MType::Unit => Type::Unit,
            MType::Tensor(a, b) => Type::tensor(self.resolve(&a), self.resolve(&b)),
            MType::Lolli(a, b) => Type::lolli(self.resolve(&a), self.resolve(&b)),
        }
    }
}

/// Infers a derivation of `context |- term : A`. Type variables left open by
/// inference default to `qbit`.
pub fn infer(term: &Term, context: &BTreeMap<String, Type>) -> Result<Derivation, TypeError> {
    let fv = term.free_vars();
    if let Some(x) = fv.iter().find(|x| !context.contains_key(*x)) {
        return Err(TypeError::UnboundVariable(x.clone()));
    }
    if let Some(x) = context.keys().find(|x| !fv.contains(*x)) {
        return Err(TypeError::LinearityError { var: x.clone(), msg: "declared but never used".into() });
    }
    let mut inf = Infer { subst: Vec::new(), raw: Vec::new() };
    let ctx = context.iter().map(|(k, v)| (k.clone(), MType::from_type(v))).collect();
    inf.node(term, ctx)?;
    let raw = std::mem::take(&mut inf.raw);
    let mut nodes: Vec<Node> = raw
        .iter()
        .enumerate()
        .map(|(id, r)| Node {
            id,
            rule: r.rule,
            context: r.context.iter().map(|(k, v)| (k.clone(), inf.resolve(v))).collect(),
            subject: r.subject.clone(),
            ty: inf.resolve(&r.ty),
            premises: r.premises.clone(),
            parent: None,
            subtree_end: id + 1,
            branch_depth: 0,
        })
        .collect();
    for id in (0..nodes.len()).rev() {
        let prem = nodes[id].premises.clone();
        for &p in &prem {
            nodes[p].parent = Some(id);
            let end = nodes[p].subtree_end;
            nodes[id].subtree_end = nodes[id].subtree_end.max(end);
        }
    }
    for id in 0..nodes.len() {
        let (rule, depth, prem) = (nodes[id].rule, nodes[id].branch_depth, nodes[id].premises.clone());
        for (k, &p) in prem.iter().enumerate() {
            nodes[p].branch_depth = depth + usize::from(rule == Rule::Ite && k > 0);
        }
    }
    Ok(Derivation::from_nodes(nodes))
}

/// Positive/negative data and unit positions, sources and guards.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PositionSets {
    pub ndata: Vec<PosId>,
    pub pdata: Vec<PosId>,
    pub nones: Vec<PosId>,
    pub pones: Vec<PosId>,
    /// Conclusions of `* : 1` axioms.
    pub ones: Vec<PosId>,
    /// Conclusions of `tt`/`ff` axioms.
    pub bools: Vec<PosId>,
    /// Conclusions of conditional guards.
    pub guard: Vec<PosId>,
    pub ones_down: Vec<PosId>,
    pub bools_down: Vec<PosId>,
    pub guard_down: Vec<PosId>,
}

impl Derivation {
    fn from_nodes(nodes: Vec<Node>) -> Derivation {
        let mut positions = Vec::new();
        for n in &nodes {
            for (x, ty) in &n.context {
                for (path, kind, pol) in atoms(ty) {
                    positions.push((Position::ctx(n.id, x, path), kind, pol.flip()));
                }
            }
            for (path, kind, pol) in atoms(&n.ty) {
                positions.push((Position::concl(n.id, path), kind, pol));
            }
        }
        let positions: Vec<PosInfo> = positions
            .into_iter()
            .enumerate()
            .map(|(i, (pos, kind, polarity))| PosInfo { pos, kind, polarity, label: Label::new(format!("l{}", i + 1)) })
            .collect();
        let index = positions.iter().enumerate().map(|(i, p)| (p.pos.clone(), i)).collect();
        Derivation { nodes, positions, index }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn pos_id(&self, p: &Position) -> Option<PosId> {
        self.index.get(p).copied()
    }

    pub fn pos(&self, id: PosId) -> &PosInfo {
        &self.positions[id]
    }

    pub fn label(&self, id: PosId) -> &Label {
        &self.positions[id].label
    }

    pub fn all_positions(&self) -> &[PosInfo] {
        &self.positions
    }

    /// Position ids of one node's judgment, in enumeration order.
    pub fn node_positions(&self, node: usize) -> impl Iterator<Item = PosId> + '_ {
        self.positions.iter().enumerate().filter(move |(_, p)| p.pos.node == node).map(|(i, _)| i)
    }

    pub fn position_sets(&self) -> PositionSets {
        self.position_sets_at(0)
    }

    /// Position sets of the subderivation rooted at `root`; ↓ means no conditional
    /// branch lies between `root` and the position.
    pub fn position_sets_at(&self, root: usize) -> PositionSets {
        let r = &self.nodes[root];
        let mut s = PositionSets::default();
        for (i, p) in self.positions.iter().enumerate() {
            let n = &self.nodes[p.pos.node];
            if !r.contains(n.id) {
                continue;
            }
            let down = n.branch_depth == r.branch_depth;
            if n.id == root {
                match (p.kind, p.polarity) {
                    (AtomKind::Unit, Polarity::Neg) => s.nones.push(i),
                    (AtomKind::Unit, Polarity::Pos) => s.pones.push(i),
                    (_, Polarity::Neg) => s.ndata.push(i),
                    (_, Polarity::Pos) => s.pdata.push(i),
                }
            }
            if p.pos.side == Side::Concl {
                match n.rule {
                    Rule::UnitIntro => {
                        s.ones.push(i);
                        if down {
                            s.ones_down.push(i);
                        }
                    }
                    Rule::BoolAx => {
                        s.bools.push(i);
                        if down {
                            s.bools_down.push(i);
                        }
                    }
                    _ => {}
                }
                if let Some(par) = n.parent {
                    let pn = &self.nodes[par];
                    if pn.rule == Rule::Ite && pn.premises[0] == n.id && r.contains(par) {
                        s.guard.push(i);
                        if pn.branch_depth == r.branch_depth {
                            s.guard_down.push(i);
                        }
                    }
                }
            }
        }
        s
    }

    /// Debug JSON: node id, rule, judgment and premise ids.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "nodeId": n.id,
                    "rule": format!("{:?}", n.rule),
                    "judgment": judgment_string(n),
                    "premises": n.premises,
                })
            })
            .collect();
        serde_json::Value::Array(nodes)
    }
}

pub fn judgment_string(n: &Node) -> String {
    let ctx: Vec<String> = n.context.iter().map(|(x, t)| format!("{x}:{t}")).collect();
    format!("{} |- {} : {}", ctx.join(", "), crate::syntax::pretty(&n.subject), n.ty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_program, parse_term};

    fn closed(src: &str) -> Result<Derivation, TypeError> {
        infer(&parse_term(src).unwrap(), &BTreeMap::new())
    }

    const BELL: &str = "(\\f.\\x. CNOT (f x, new (zero *))) H (new (zero *))";

    #[test]
    fn coin_is_bit() {
        assert_eq!(closed("meas (H (new (one *)))").unwrap().root().ty, Type::Bit);
    }

    #[test]
    fn bell_is_pair_of_qbits() {
        assert_eq!(closed(BELL).unwrap().root().ty, Type::tensor(Type::Qbit, Type::Qbit));
    }

    #[test]
    fn duplication_rejected() {
        assert!(matches!(closed("\\x.(x,x)"), Err(TypeError::LinearityError { .. })));
        assert!(matches!(closed("\\x. *"), Err(TypeError::LinearityError { .. })));
    }

    #[test]
    fn other_errors() {
        assert!(matches!(closed("meas *"), Err(TypeError::TypeMismatch { .. })));
        assert!(matches!(closed("if tt then * else ff"), Err(TypeError::BranchMismatch(_))));
        assert!(matches!(closed("x"), Err(TypeError::UnboundVariable(_))));
        let p = parse_program("context x : qbit, y : qbit; if tt then (x, y) else (y, x)").unwrap();
        assert!(infer(&p.term, &p.context).is_ok());
        let p = parse_program("context x : qbit, y : qbit; if tt then H x else H y").unwrap();
        assert!(matches!(infer(&p.term, &p.context), Err(TypeError::BranchMismatch(_))));
    }

    #[test]
    fn unresolved_defaults_to_qbit() {
        assert_eq!(closed("\\x. x").unwrap().root().ty.to_string(), "qbit -o qbit");
    }

    #[test]
    fn preorder_ids_and_parents() {
        let d = closed(BELL).unwrap();
        for n in &d.nodes {
            for &p in &n.premises {
                assert!(p > n.id);
                assert_eq!(d.node(p).parent, Some(n.id));
                assert!(n.contains(p));
            }
        }
    }

    #[test]
    fn cnot_example_position_sets() {
        let p = parse_program("context x : qbit, y : qbit; CNOT (H x, y)").unwrap();
        let d = infer(&p.term, &p.context).unwrap();
        let s = d.position_sets();
        assert_eq!((s.ndata.len(), s.pdata.len(), s.guard.len()), (2, 2, 0));
    }

    #[test]
    fn star_position_sets() {
        let d = closed("*").unwrap();
        let s = d.position_sets();
        assert_eq!(s.ones.len(), 1);
        assert_eq!(s.pones, s.ones);
    }

    #[test]
    fn guard_position() {
        let p = parse_program("context x : qbit, y : qbit; if meas (H x) then y else S y").unwrap();
        let d = infer(&p.term, &p.context).unwrap();
        assert_eq!(d.position_sets().guard.len(), 1);
    }

    #[test]
    fn position_counts() {
        let p = parse_program("context x : qbit; x").unwrap();
        let d = infer(&p.term, &p.context).unwrap();
        assert_eq!(d.all_positions().len(), 2);
        let pols: BTreeSet<_> = d.all_positions().iter().map(|p| p.polarity).collect();
        assert_eq!(pols.len(), 2);
        assert_eq!(closed("H").unwrap().all_positions().len(), 2);
    }

    #[test]
    fn labels_are_stable() {
        let a = closed(BELL).unwrap();
        let b = closed(BELL).unwrap();
        let la: Vec<_> = a.all_positions().iter().map(|p| p.label.clone()).collect();
        let lb: Vec<_> = b.all_positions().iter().map(|p| p.label.clone()).collect();
        assert_eq!(la, lb);
        let uniq: BTreeSet<_> = la.iter().collect();
        assert_eq!(uniq.len(), la.len());
    }
}
