//! Labelled circuits with classical conditionals: typing, size and the `.qc`
//! text format.

pub mod gates;
pub mod text;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gates::{lookup, registry, GateDef, GateKind};
pub use text::{parse_circuit, serialize, CircuitSyntaxError};

use crate::syntax::Type;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseType {
    Bit,
    Qbit,
}

impl BaseType {
    pub fn to_type(self) -> Type {
        match self {
            BaseType::Bit => Type::Bit,
            BaseType::Qbit => Type::Qbit,
        }
    }

    pub fn from_type(t: &Type) -> Option<BaseType> {
        match t {
            Type::Bit => Some(BaseType::Bit),
            Type::Qbit => Some(BaseType::Qbit),
            _ => None,
        }
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseType::Bit => "bit",
            BaseType::Qbit => "qbit",
        })
    }
}

/// A wire name. Ordered by alphabetic prefix, then numeric suffix, so `l2 < l10`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Label {
        Label(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>) {
        let s = self.0.as_str();
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (prefix, digits) = s.split_at(cut);
        (prefix, digits.parse().ok())
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, na) = self.split();
        let (pb, nb) = other.split();
        pa.cmp(pb).then(na.cmp(&nb)).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Label {
        Label(s.to_string())
    }
}

pub type Env = BTreeMap<Label, BaseType>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateApp {
    pub gate: String,
    pub inputs: Vec<Label>,
    pub outputs: Vec<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meas_index: Option<usize>,
}

impl GateApp {
    pub fn new(gate: &str, inputs: &[&str], outputs: &[&str]) -> GateApp {
        GateApp {
            gate: gate.to_string(),
            inputs: inputs.iter().map(|s| Label::from(*s)).collect(),
            outputs: outputs.iter().map(|s| Label::from(*s)).collect(),
            meas_index: None,
        }
    }

    pub fn def(&self) -> Option<&'static GateDef> {
        gates::lookup(&self.gate)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Circuit {
    Gate(GateApp),
    Seq { items: Vec<Circuit> },
    Ite { guard: Label, then_branch: Box<Circuit>, else_branch: Box<Circuit> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("unbound label `{0}`")]
    UnboundLabel(Label),
    #[error("label `{0}` already present in the environment")]
    LabelClash(Label),
    #[error("branch environments differ: {0}")]
    BranchEnvMismatch(String),
    #[error("gate `{gate}` arity mismatch: {msg}")]
    SignatureArityMismatch { gate: String, msg: String },
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("label `{label}` has type {found}, expected {expected}")]
    LabelTypeMismatch { label: Label, expected: BaseType, found: BaseType },
    #[error("duplicate meas index {0}")]
    DuplicateMeasIndex(usize),
}

impl Circuit {
    pub fn empty() -> Circuit {
        Circuit::Seq { items: vec![] }
    }

    pub fn gate(g: GateApp) -> Circuit {
        Circuit::Gate(g)
    }

    pub fn ite(guard: Label, then_branch: Circuit, else_branch: Circuit) -> Circuit {
        Circuit::Ite { guard, then_branch: Box::new(then_branch), else_branch: Box::new(else_branch) }
    }

    /// Sequential composition, flattened so that no `Seq` directly holds a `Seq`
    /// and singletons collapse.
    pub fn seq(items: Vec<Circuit>) -> Circuit {
        let mut flat = Vec::new();
        for c in items {
            match c {
                Circuit::Seq { items } => flat.extend(items),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Circuit::Seq { items: flat }
        }
    }

    pub fn then(self, next: Circuit) -> Circuit {
        Circuit::seq(vec![self, next])
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Circuit::Seq { items } if items.is_empty())
    }

    /// Canonical shape: flattened sequences everywhere.
    pub fn normalize(&self) -> Circuit {
        match self {
            Circuit::Gate(g) => Circuit::Gate(g.clone()),
            Circuit::Seq { items } => Circuit::seq(items.iter().map(|c| c.normalize()).collect()),
            Circuit::Ite { guard, then_branch, else_branch } => {
                Circuit::ite(guard.clone(), then_branch.normalize(), else_branch.normalize())
            }
        }
    }

    /// Number of gate applications; an `ite` counts 1 plus both branches.
    pub fn size(&self) -> usize {
        match self {
            Circuit::Gate(_) => 1,
            Circuit::Seq { items } => items.iter().map(|c| c.size()).sum(),
            Circuit::Ite { then_branch, else_branch, .. } => 1 + then_branch.size() + else_branch.size(),
        }
    }

    pub fn has_ite(&self) -> bool {
        match self {
            Circuit::Gate(_) => false,
            Circuit::Seq { items } => items.iter().any(|c| c.has_ite()),
            Circuit::Ite { .. } => true,
        }
    }

    pub fn contains_ite_on(&self, l: &Label) -> bool {
        match self {
            Circuit::Gate(_) => false,
            Circuit::Seq { items } => items.iter().any(|c| c.contains_ite_on(l)),
            Circuit::Ite { guard, then_branch, else_branch } => {
                guard == l || then_branch.contains_ite_on(l) || else_branch.contains_ite_on(l)
            }
        }
    }

    pub fn for_each_gate<'a>(&'a self, f: &mut impl FnMut(&'a GateApp)) {
        match self {
            Circuit::Gate(g) => f(g),
            Circuit::Seq { items } => items.iter().for_each(|c| c.for_each_gate(f)),
            Circuit::Ite { then_branch, else_branch, .. } => {
                then_branch.for_each_gate(f);
                else_branch.for_each_gate(f);
            }
        }
    }

    pub fn for_each_gate_mut(&mut self, f: &mut impl FnMut(&mut GateApp)) {
        match self {
            Circuit::Gate(g) => f(g),
            Circuit::Seq { items } => items.iter_mut().for_each(|c| c.for_each_gate_mut(f)),
            Circuit::Ite { then_branch, else_branch, .. } => {
                then_branch.for_each_gate_mut(f);
                else_branch.for_each_gate_mut(f);
            }
        }
    }

    pub fn meas_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_gate(&mut |g| out.extend(g.meas_index));
        out
    }

    /// Every label mentioned anywhere, guards included.
    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut BTreeSet<Label>) {
        match self {
            Circuit::Gate(g) => {
                out.extend(g.inputs.iter().cloned());
                out.extend(g.outputs.iter().cloned());
            }
            Circuit::Seq { items } => items.iter().for_each(|c| c.collect_labels(out)),
            Circuit::Ite { guard, then_branch, else_branch } => {
                out.insert(guard.clone());
                then_branch.collect_labels(out);
                else_branch.collect_labels(out);
            }
        }
    }

    /// Renames every occurrence of labels according to `f`.
    pub fn rename_all(&self, f: &impl Fn(&Label) -> Label) -> Circuit {
        match self {
            Circuit::Gate(g) => Circuit::Gate(GateApp {
                gate: g.gate.clone(),
                inputs: g.inputs.iter().map(f).collect(),
                outputs: g.outputs.iter().map(f).collect(),
                meas_index: g.meas_index,
            }),
            Circuit::Seq { items } => Circuit::Seq { items: items.iter().map(|c| c.rename_all(f)).collect() },
            Circuit::Ite { guard, then_branch, else_branch } => {
                Circuit::ite(f(guard), then_branch.rename_all(f), else_branch.rename_all(f))
            }
        }
    }

    /// Renames the wire that leaves this circuit as `from` so that it leaves as
    /// `to`. Returns false when no gate in this circuit produces `from`, i.e. the
    /// wire passes through untouched.
    pub fn rename_output(&mut self, from: &Label, to: &Label, ty: BaseType) -> bool {
        match self {
            Circuit::Gate(g) => {
                if let Some(o) = g.outputs.iter_mut().find(|o| *o == from) {
                    *o = to.clone();
                    true
                } else {
                    false
                }
            }
            Circuit::Seq { items } => {
                for c in items.iter_mut().rev() {
                    if c.rename_output(from, to, ty) {
                        return true;
                    }
                    if c.mentions_input(from) {
                        return false;
                    }
                }
                false
            }
            Circuit::Ite { guard, then_branch, else_branch } => {
                if guard == from {
                    return false;
                }
                let a = then_branch.rename_output(from, to, ty);
                let b = else_branch.rename_output(from, to, ty);
                if a != b {
                    let id = Circuit::Gate(GateApp {
                        gate: gates::identity_for(ty).to_string(),
                        inputs: vec![from.clone()],
                        outputs: vec![to.clone()],
                        meas_index: None,
                    });
                    let lagging = if a { else_branch } else { then_branch };
                    let body = std::mem::replace(lagging.as_mut(), Circuit::empty());
                    **lagging = body.then(id);
                }
                a || b
            }
        }
    }

    fn mentions_input(&self, l: &Label) -> bool {
        match self {
            Circuit::Gate(g) => g.inputs.contains(l),
            Circuit::Seq { items } => items.iter().any(|c| c.mentions_input(l)),
            Circuit::Ite { guard, then_branch, else_branch } => {
                guard == l || then_branch.mentions_input(l) || else_branch.mentions_input(l)
            }
        }
    }

    /// The environment of labels read before being produced, typed by first use.
    pub fn input_env(&self) -> Env {
        let mut live = BTreeSet::new();
        let mut env = Env::new();
        self.collect_inputs(&mut live, &mut env);
        env
    }

    fn collect_inputs(&self, live: &mut BTreeSet<Label>, env: &mut Env) {
        match self {
            Circuit::Gate(g) => {
                let def = g.def();
                for (i, l) in g.inputs.iter().enumerate() {
                    if !live.remove(l) {
                        let ty = def.and_then(|d| d.inputs.get(i).copied()).unwrap_or(BaseType::Qbit);
                        env.entry(l.clone()).or_insert(ty);
                    }
                }
                live.extend(g.outputs.iter().cloned());
            }
            Circuit::Seq { items } => items.iter().for_each(|c| c.collect_inputs(live, env)),
            Circuit::Ite { guard, then_branch, else_branch } => {
                if !live.remove(guard) {
                    env.entry(guard.clone()).or_insert(BaseType::Bit);
                }
                let mut l2 = live.clone();
                then_branch.collect_inputs(live, env);
                else_branch.collect_inputs(&mut l2, env);
                live.extend(l2);
            }
        }
    }
}

/// Checks `gamma |> c |> delta` and returns `delta`.
pub fn typecheck_circuit(c: &Circuit, gamma: &Env) -> Result<Env, CircuitError> {
    let mut seen = BTreeSet::new();
    let mut dup = None;
    c.for_each_gate(&mut |g| {
        if let Some(i) = g.meas_index {
            if !seen.insert(i) && dup.is_none() {
                dup = Some(i);
            }
        }
    });
    if let Some(i) = dup {
        return Err(CircuitError::DuplicateMeasIndex(i));
    }
    check(c, gamma.clone())
}

fn check(c: &Circuit, mut env: Env) -> Result<Env, CircuitError> {
    match c {
        Circuit::Gate(g) => {
            let def = g.def().ok_or_else(|| CircuitError::UnknownGate(g.gate.clone()))?;
            if def.inputs.len() != g.inputs.len() || def.outputs.len() != g.outputs.len() {
                return Err(CircuitError::SignatureArityMismatch {
                    gate: g.gate.clone(),
                    msg: format!("expected {} -> {}, got {} -> {}", def.inputs.len(), def.outputs.len(), g.inputs.len(), g.outputs.len()),
                });
            }
            for (l, want) in g.inputs.iter().zip(&def.inputs) {
                match env.remove(l) {
                    None => return Err(CircuitError::UnboundLabel(l.clone())),
                    Some(found) if found != *want => {
                        return Err(CircuitError::LabelTypeMismatch { label: l.clone(), expected: *want, found })
                    }
                    Some(_) => {}
                }
            }
            for (l, ty) in g.outputs.iter().zip(&def.outputs) {
                if env.insert(l.clone(), *ty).is_some() {
                    return Err(CircuitError::LabelClash(l.clone()));
                }
            }
            Ok(env)
        }
        Circuit::Seq { items } => items.iter().try_fold(env, |e, c| check(c, e)),
        Circuit::Ite { guard, then_branch, else_branch } => {
            match env.remove(guard) {
                None => return Err(CircuitError::UnboundLabel(guard.clone())),
                Some(BaseType::Qbit) => {
                    return Err(CircuitError::LabelTypeMismatch { label: guard.clone(), expected: BaseType::Bit, found: BaseType::Qbit })
                }
                Some(BaseType::Bit) => {}
            }
            let a = check(then_branch, env.clone())?;
            let b = check(else_branch, env)?;
            if a != b {
                return Err(CircuitError::BranchEnvMismatch(format!("then gives {}, else gives {}", show_env(&a), show_env(&b))));
            }
            Ok(a)
        }
    }
}

pub fn show_env(env: &Env) -> String {
    let parts: Vec<String> = env.iter().map(|(l, t)| format!("{l}:{t}")).collect();
    format!("{{{}}}", parts.join(", "))
}

pub fn env_of(pairs: &[(&str, BaseType)]) -> Env {
    pairs.iter().map(|(l, t)| (Label::from(*l), *t)).collect()
}
