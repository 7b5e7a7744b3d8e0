//! Extended circuits: trees of circuits split on classical labels.
//!
//! `Branch { circuit, guard, then_child, else_child }` runs `circuit`, then
//! continues with `then_child` when `guard` holds 1 and `else_child` when it
//! holds 0.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::text::{write_circuit, CircuitSyntaxError, Lines, Stmt};
use crate::circuit::{show_env, typecheck_circuit, BaseType, Circuit, CircuitError, Env, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtCircuit {
    Leaf(Circuit),
    Branch { circuit: Circuit, guard: Label, then_child: Box<ExtCircuit>, else_child: Box<ExtCircuit> },
}

/// A partial map from labels to bits selecting one leaf.
pub type Address = BTreeMap<Label, bool>;

/// An address extended with measurement outcomes, keyed by meas index.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SuperAddress {
    pub labels: BTreeMap<Label, bool>,
    pub meas: BTreeMap<usize, bool>,
}

impl SuperAddress {
    fn merge(&self, other: &SuperAddress) -> SuperAddress {
        let mut s = self.clone();
        s.labels.extend(other.labels.iter().map(|(k, v)| (k.clone(), *v)));
        s.meas.extend(other.meas.iter().map(|(k, v)| (*k, *v)));
        s
    }
}

impl fmt::Display for SuperAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.labels.iter().map(|(l, b)| format!("{l}->{}", *b as u8)).collect();
        parts.extend(self.meas.iter().map(|(i, b)| format!("#{i}->{}", *b as u8)));
        write!(f, "{{{}}}", parts.join(", "))
    }
}

pub fn show_address(a: &Address) -> String {
    let parts: Vec<String> = a.iter().map(|(l, b)| format!("{l}->{}", *b as u8)).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Output environments of an extended circuit, one per leaf.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ExtEnv {
    Leaf(Env),
    Branch { guard: Label, then_env: Box<ExtEnv>, else_env: Box<ExtEnv> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtError {
    #[error("address {0} does not select a leaf")]
    AddressUndefined(String),
    #[error("leaf environments differ: {0}")]
    NonUniform(String),
    #[error("guard `{0}` is not a bit of the branch circuit's output")]
    BadGuard(Label),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

impl ExtCircuit {
    pub fn leaf(c: Circuit) -> ExtCircuit {
        ExtCircuit::Leaf(c)
    }

    pub fn branch(circuit: Circuit, guard: Label, then_child: ExtCircuit, else_child: ExtCircuit) -> ExtCircuit {
        ExtCircuit::Branch { circuit, guard, then_child: Box::new(then_child), else_child: Box::new(else_child) }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ExtCircuit::Leaf(_) => 1,
            ExtCircuit::Branch { then_child, else_child, .. } => then_child.leaf_count() + else_child.leaf_count(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            ExtCircuit::Leaf(c) => c.size(),
            ExtCircuit::Branch { circuit, then_child, else_child, .. } => circuit.size() + 1 + then_child.size() + else_child.size(),
        }
    }

    /// Leaf addresses, then branch before else branch.
    pub fn addresses(&self) -> Vec<Address> {
        let mut out = Vec::new();
        self.collect_addresses(&mut Address::new(), &mut out);
        out
    }

    fn collect_addresses(&self, cur: &mut Address, out: &mut Vec<Address>) {
        match self {
            ExtCircuit::Leaf(_) => out.push(cur.clone()),
            ExtCircuit::Branch { guard, then_child, else_child, .. } => {
                for (b, child) in [(true, then_child), (false, else_child)] {
                    cur.insert(guard.clone(), b);
                    child.collect_addresses(cur, out);
                    cur.remove(guard);
                }
            }
        }
    }

    /// The leaf selected by `a`; `a` must bind exactly the guards on the path.
    pub fn at_address(&self, a: &Address) -> Result<&Circuit, ExtError> {
        let mut node = self;
        let mut used = 0;
        loop {
            match node {
                ExtCircuit::Leaf(c) => {
                    return if used == a.len() { Ok(c) } else { Err(ExtError::AddressUndefined(show_address(a))) };
                }
                ExtCircuit::Branch { guard, then_child, else_child, .. } => {
                    let b = a.get(guard).ok_or_else(|| ExtError::AddressUndefined(show_address(a)))?;
                    used += 1;
                    node = if *b { then_child } else { else_child };
                }
            }
        }
    }

    /// The circuits met from the root down to the leaf selected by `a`.
    pub fn path_to(&self, a: &Address) -> Result<Vec<&Circuit>, ExtError> {
        let mut node = self;
        let mut out = Vec::new();
        loop {
            match node {
                ExtCircuit::Leaf(c) => {
                    out.push(c);
                    return if out.len() == a.len() + 1 { Ok(out) } else { Err(ExtError::AddressUndefined(show_address(a))) };
                }
                ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
                    let b = a.get(guard).ok_or_else(|| ExtError::AddressUndefined(show_address(a)))?;
                    out.push(circuit);
                    node = if *b { then_child } else { else_child };
                }
            }
        }
    }

    pub fn leaf_mut(&mut self, a: &Address) -> Result<&mut Circuit, ExtError> {
        let shown = || ExtError::AddressUndefined(show_address(a));
        let mut node = self;
        let mut used = 0;
        loop {
            match node {
                ExtCircuit::Leaf(c) => return if used == a.len() { Ok(c) } else { Err(shown()) },
                ExtCircuit::Branch { guard, then_child, else_child, .. } => {
                    let b = *a.get(guard).ok_or_else(shown)?;
                    used += 1;
                    node = if b { then_child } else { else_child };
                }
            }
        }
    }

    /// Replaces the leaf at `a` by `e`.
    pub fn substitute_at(&mut self, a: &Address, e: ExtCircuit) -> Result<(), ExtError> {
        let shown = || ExtError::AddressUndefined(show_address(a));
        let mut node = self;
        let mut used = 0;
        loop {
            match node {
                ExtCircuit::Leaf(_) => {
                    if used != a.len() {
                        return Err(shown());
                    }
                    *node = e;
                    return Ok(());
                }
                ExtCircuit::Branch { guard, then_child, else_child, .. } => {
                    let b = *a.get(guard).ok_or_else(shown)?;
                    used += 1;
                    node = if b { then_child } else { else_child };
                }
            }
        }
    }

    /// Splits the leaf at `a` on `guard`, giving two empty children.
    pub fn split_at(&mut self, a: &Address, guard: &Label) -> Result<(), ExtError> {
        let c = std::mem::replace(self.leaf_mut(a)?, Circuit::empty());
        self.substitute_at(a, ExtCircuit::branch(c, guard.clone(), ExtCircuit::leaf(Circuit::empty()), ExtCircuit::leaf(Circuit::empty())))
    }

    pub fn for_each_leaf_mut(&mut self, f: &mut impl FnMut(&Address, &mut Circuit)) {
        fn go(e: &mut ExtCircuit, cur: &mut Address, f: &mut impl FnMut(&Address, &mut Circuit)) {
            match e {
                ExtCircuit::Leaf(c) => f(cur, c),
                ExtCircuit::Branch { guard, then_child, else_child, .. } => {
                    cur.insert(guard.clone(), true);
                    go(then_child, cur, f);
                    cur.insert(guard.clone(), false);
                    go(else_child, cur, f);
                    cur.remove(guard);
                }
            }
        }
        go(self, &mut Address::new(), f)
    }

    /// All circuits of the tree, branch circuits included.
    pub fn for_each_circuit<'a>(&'a self, f: &mut impl FnMut(&'a Circuit)) {
        match self {
            ExtCircuit::Leaf(c) => f(c),
            ExtCircuit::Branch { circuit, then_child, else_child, .. } => {
                f(circuit);
                then_child.for_each_circuit(f);
                else_child.for_each_circuit(f);
            }
        }
    }

    pub fn meas_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_circuit(&mut |c| out.extend(c.meas_indices()));
        out
    }
}

pub fn ext_typecheck(e: &ExtCircuit, gamma: &Env) -> Result<ExtEnv, ExtError> {
    match e {
        ExtCircuit::Leaf(c) => Ok(ExtEnv::Leaf(typecheck_circuit(c, gamma)?)),
        ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
            let mut env = typecheck_circuit(circuit, gamma)?;
            if env.remove(guard) != Some(BaseType::Bit) {
                return Err(ExtError::BadGuard(guard.clone()));
            }
            Ok(ExtEnv::Branch {
                guard: guard.clone(),
                then_env: Box::new(ext_typecheck(then_child, &env)?),
                else_env: Box::new(ext_typecheck(else_child, &env)?),
            })
        }
    }
}

impl ExtEnv {
    pub fn uniform(&self) -> Result<Env, ExtError> {
        match self {
            ExtEnv::Leaf(e) => Ok(e.clone()),
            ExtEnv::Branch { guard, then_env, else_env } => {
                let (a, b) = (then_env.uniform()?, else_env.uniform()?);
                if a != b {
                    return Err(ExtError::NonUniform(format!("at {guard}: {} vs {}", show_env(&a), show_env(&b))));
                }
                Ok(a)
            }
        }
    }
}

pub fn ext_typecheck_uniform(e: &ExtCircuit, gamma: &Env) -> Result<Env, ExtError> {
    ext_typecheck(e, gamma)?.uniform()
}

/// Flattens an extended circuit into a circuit with `ite`s.
pub fn tau(e: &ExtCircuit, gamma: &Env) -> Result<Circuit, ExtError> {
    ext_typecheck_uniform(e, gamma)?;
    Ok(flatten(e))
}

fn flatten(e: &ExtCircuit) -> Circuit {
    match e {
        ExtCircuit::Leaf(c) => c.clone(),
        ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
            circuit.clone().then(Circuit::ite(guard.clone(), flatten(then_child), flatten(else_child)))
        }
    }
}

/// Super-addresses of a circuit: one per ite path and measurement outcome.
/// Measurements without an index are not sliced.
pub fn circuit_super_addresses(c: &Circuit) -> Vec<SuperAddress> {
    match c {
        Circuit::Gate(g) => match (g.gate.as_str(), g.meas_index) {
            ("meas", Some(i)) => {
                [false, true].into_iter().map(|b| SuperAddress { meas: [(i, b)].into_iter().collect(), ..Default::default() }).collect()
            }
            _ => vec![SuperAddress::default()],
        },
        Circuit::Seq { items } => items.iter().fold(vec![SuperAddress::default()], |acc, c| {
            let next = circuit_super_addresses(c);
            acc.iter().flat_map(|a| next.iter().map(move |b| a.merge(b))).collect()
        }),
        Circuit::Ite { guard, then_branch, else_branch } => {
            let mut out = Vec::new();
            for (b, br) in [(false, else_branch), (true, then_branch)] {
                for mut s in circuit_super_addresses(br) {
                    s.labels.insert(guard.clone(), b);
                    out.push(s);
                }
            }
            out
        }
    }
}

pub fn super_addresses(e: &ExtCircuit) -> Vec<SuperAddress> {
    match e {
        ExtCircuit::Leaf(c) => circuit_super_addresses(c),
        ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
            let pre = circuit_super_addresses(circuit);
            let mut out = Vec::new();
            for (b, child) in [(false, else_child), (true, then_child)] {
                let rest = super_addresses(child);
                for p in &pre {
                    for r in &rest {
                        let mut s = p.merge(r);
                        s.labels.insert(guard.clone(), b);
                        out.push(s);
                    }
                }
            }
            out
        }
    }
}

#[derive(Default)]
struct Used {
    labels: usize,
    meas: usize,
}

fn walk(c: &Circuit, s: &SuperAddress, used: &mut Used) -> bool {
    match c {
        Circuit::Gate(g) => match (g.gate.as_str(), g.meas_index) {
            ("meas", Some(i)) => {
                used.meas += 1;
                s.meas.contains_key(&i)
            }
            _ => true,
        },
        Circuit::Seq { items } => items.iter().all(|c| walk(c, s, used)),
        Circuit::Ite { guard, then_branch, else_branch } => match s.labels.get(guard) {
            None => false,
            Some(b) => {
                used.labels += 1;
                walk(if *b { then_branch } else { else_branch }, s, used)
            }
        },
    }
}

/// Whether `s` is one of the super-addresses of `c`.
pub fn circuit_compatible(c: &Circuit, s: &SuperAddress) -> bool {
    let mut used = Used::default();
    walk(c, s, &mut used) && used.labels == s.labels.len() && used.meas == s.meas.len()
}

pub fn ext_compatible(e: &ExtCircuit, s: &SuperAddress) -> bool {
    let mut used = Used::default();
    let mut node = e;
    loop {
        match node {
            ExtCircuit::Leaf(c) => {
                return walk(c, s, &mut used) && used.labels == s.labels.len() && used.meas == s.meas.len();
            }
            ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
                if !walk(circuit, s, &mut used) {
                    return false;
                }
                let Some(b) = s.labels.get(guard) else { return false };
                used.labels += 1;
                node = if *b { then_child } else { else_child };
            }
        }
    }
}

pub fn serialize_ext(e: &ExtCircuit) -> String {
    let mut out = String::new();
    write_ext(e, 0, &mut out);
    out
}

fn write_ext(e: &ExtCircuit, indent: usize, out: &mut String) {
    match e {
        ExtCircuit::Leaf(c) => write_circuit(c, indent, out),
        ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
            let pad = "  ".repeat(indent);
            write_circuit(circuit, indent, out);
            out.push_str(&format!("{pad}branch {guard} {{\n"));
            write_ext(then_child, indent + 1, out);
            out.push_str(&format!("{pad}}} {{\n"));
            write_ext(else_child, indent + 1, out);
            out.push_str(&format!("{pad}}}\n"));
        }
    }
}

pub fn parse_ext(text: &str) -> Result<ExtCircuit, CircuitSyntaxError> {
    let mut lines = Lines::new(text);
    let stmts = lines.block(true)?;
    if !lines.at_end() {
        return Err(CircuitSyntaxError { line: 0, msg: "unmatched `}`".into() });
    }
    Ok(stmts_to_ext(stmts))
}

fn stmts_to_ext(mut stmts: Vec<Stmt>) -> ExtCircuit {
    match stmts.pop() {
        Some(Stmt::Branch(guard, a, b)) => {
            ExtCircuit::branch(crate::circuit::text::stmts_to_circuit(stmts), guard, stmts_to_ext(a), stmts_to_ext(b))
        }
        Some(last) => {
            stmts.push(last);
            ExtCircuit::Leaf(crate::circuit::text::stmts_to_circuit(stmts))
        }
        None => ExtCircuit::Leaf(Circuit::empty()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{env_of, GateApp};
    use BaseType::*;

    fn g(name: &str, i: &[&str], o: &[&str]) -> Circuit {
        Circuit::Gate(GateApp::new(name, i, o))
    }

    fn meas(i: &str, o: &str, idx: usize) -> Circuit {
        let mut m = GateApp::new("meas", &[i], &[o]);
        m.meas_index = Some(idx);
        Circuit::Gate(m)
    }

    fn coin() -> ExtCircuit {
        // zero; new; H; meas; split on the outcome
        ExtCircuit::branch(
            Circuit::seq(vec![g("zero", &[], &["a"]), g("new", &["a"], &["a"]), g("H", &["a"], &["a"]), meas("a", "b", 0)]),
            "b".into(),
            ExtCircuit::leaf(g("one", &[], &["r"])),
            ExtCircuit::leaf(g("zero", &[], &["r"])),
        )
    }

    fn addr(pairs: &[(&str, bool)]) -> Address {
        pairs.iter().map(|(l, b)| (Label::from(*l), *b)).collect()
    }

    #[test]
    fn addresses_and_lookup() {
        let e = coin();
        assert_eq!(e.addresses(), vec![addr(&[("b", true)]), addr(&[("b", false)])]);
        assert_eq!(e.at_address(&addr(&[("b", true)])).unwrap(), &g("one", &[], &["r"]));
        assert!(matches!(e.at_address(&Address::new()), Err(ExtError::AddressUndefined(_))));
        assert!(e.at_address(&addr(&[("b", true), ("z", false)])).is_err());
    }

    #[test]
    fn substitute_and_split() {
        let mut e = coin();
        e.substitute_at(&addr(&[("b", false)]), ExtCircuit::leaf(g("one", &[], &["r"]))).unwrap();
        assert_eq!(e.at_address(&addr(&[("b", false)])).unwrap(), &g("one", &[], &["r"]));
        e.split_at(&addr(&[("b", false)]), &"r".into()).unwrap();
        assert_eq!(e.leaf_count(), 3);
        assert!(e.at_address(&addr(&[("b", false), ("r", true)])).unwrap().is_empty());
    }

    #[test]
    fn tau_of_uniform_tree() {
        let e = coin();
        let c = tau(&e, &Env::new()).unwrap();
        assert_eq!(typecheck_circuit(&c, &Env::new()).unwrap(), env_of(&[("r", Bit)]));
        assert!(c.has_ite());
    }

    #[test]
    fn tau_rejects_non_uniform() {
        let e = ExtCircuit::branch(
            g("zero", &[], &["b"]),
            "b".into(),
            ExtCircuit::leaf(g("one", &[], &["r"])),
            ExtCircuit::leaf(Circuit::empty()),
        );
        assert!(matches!(tau(&e, &Env::new()), Err(ExtError::NonUniform(_))));
        assert!(ext_typecheck(&e, &Env::new()).is_ok());
    }

    #[test]
    fn super_address_enumeration() {
        let e = coin();
        let sas = super_addresses(&e);
        // the guard agrees or disagrees with the meas outcome: four paths
        assert_eq!(sas.len(), 4);
        for s in &sas {
            assert!(ext_compatible(&e, s));
        }
        let mut bad = sas[0].clone();
        bad.meas.clear();
        assert!(!ext_compatible(&e, &bad));

        let c = Circuit::seq(vec![meas("q", "b", 3), Circuit::ite("b".into(), meas("p", "c", 4), g("H", &["p"], &["p"]))]);
        let sas = circuit_super_addresses(&c);
        assert_eq!(sas.len(), 2 + 4);
        assert!(sas.iter().all(|s| circuit_compatible(&c, s)));
        let extra = SuperAddress { labels: addr(&[("b", false), ("x", true)]), meas: [(3, false)].into_iter().collect() };
        assert!(!circuit_compatible(&c, &extra));
    }

    #[test]
    fn text_round_trip() {
        let e = ExtCircuit::branch(
            Circuit::empty(),
            "b".into(),
            coin(),
            ExtCircuit::leaf(Circuit::ite("c".into(), g("H", &["a"], &["a"]), Circuit::empty())),
        );
        let text = serialize_ext(&e);
        assert!(text.starts_with("branch b {\n"));
        assert!(text.contains("  branch b {\n"));
        assert_eq!(parse_ext(&text).unwrap(), e);
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<ExtCircuit>(&json).unwrap(), e);
    }
}
