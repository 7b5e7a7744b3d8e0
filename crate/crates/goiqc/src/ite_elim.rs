//! Removal of classical conditionals: conditional swaps built from CSWAP and
//! the rewriting of every `ite` into a plain circuit of linear size.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::circuit::{typecheck_circuit, BaseType, Circuit, CircuitError, Env, GateApp, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElimError {
    #[error("environments of different shape: {0}")]
    ShapeMismatch(String),
    #[error("ill-typed circuit: {0}")]
    IllTyped(#[from] CircuitError),
}

fn g(name: &str, inputs: &[&Label], outputs: &[&Label]) -> Circuit {
    Circuit::Gate(GateApp {
        gate: name.to_string(),
        inputs: inputs.iter().map(|l| (*l).clone()).collect(),
        outputs: outputs.iter().map(|l| (*l).clone()).collect(),
        meas_index: None,
    })
}

/// Swaps `l1` and `l2` when the bit `l3` is 1, leaves them alone when it is 0.
pub fn sigma(l1: &Label, l2: &Label, l3: &Label, ty: BaseType) -> Circuit {
    let core = Circuit::seq(vec![g("new", &[l3], &[l3]), g("CSWAP", &[l1, l2, l3], &[l1, l2, l3]), g("meas", &[l3], &[l3])]);
    match ty {
        BaseType::Qbit => core,
        BaseType::Bit => {
            Circuit::seq(vec![g("new", &[l1], &[l1]), g("new", &[l2], &[l2]), core, g("meas", &[l1], &[l1]), g("meas", &[l2], &[l2])])
        }
    }
}

/// Conditionally swaps two environments entry by entry; the empty case is
/// the identity on the control bit.
pub fn tau_swap(g1: &[(Label, BaseType)], g2: &[(Label, BaseType)], l: &Label) -> Result<Circuit, ElimError> {
    let shape = |e: &[(Label, BaseType)]| e.iter().map(|(_, t)| *t).collect::<Vec<_>>();
    if shape(g1) != shape(g2) {
        let show = |e: &[(Label, BaseType)]| e.iter().map(|(l, t)| format!("{l}:{t}")).collect::<Vec<_>>().join(", ");
        return Err(ElimError::ShapeMismatch(format!("[{}] vs [{}]", show(g1), show(g2))));
    }
    if g1.is_empty() {
        return Ok(g("idb", &[l], &[l]));
    }
    Ok(swaps(g1, g2, l))
}

fn swaps(g1: &[(Label, BaseType)], g2: &[(Label, BaseType)], l: &Label) -> Circuit {
    Circuit::seq(g1.iter().zip(g2).map(|((a, t), (b, _))| sigma(a, b, l, *t)).collect())
}

struct Fresh {
    used: BTreeSet<Label>,
    next: usize,
}

impl Fresh {
    fn label(&mut self, prefix: &str) -> Label {
        loop {
            self.next += 1;
            let l = Label(format!("{prefix}{}", self.next));
            if self.used.insert(l.clone()) {
                return l;
            }
        }
    }
}

/// Rewrites every conditional, innermost first, into a plain circuit with the
/// same semantics. `env` is the input environment of `c`.
pub fn eliminate(c: &Circuit, env: &Env) -> Result<Circuit, ElimError> {
    typecheck_circuit(c, env)?;
    let mut used = c.labels();
    used.extend(env.keys().cloned());
    let mut fresh = Fresh { used, next: 0 };
    go(c, env, &mut fresh)
}

fn go(c: &Circuit, env: &Env, fresh: &mut Fresh) -> Result<Circuit, ElimError> {
    match c {
        Circuit::Gate(_) => Ok(c.clone()),
        Circuit::Seq { items } => {
            let mut env = env.clone();
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(go(item, &env, fresh)?);
                env = typecheck_circuit(item, &env)?;
            }
            Ok(Circuit::seq(out))
        }
        Circuit::Ite { guard, then_branch, else_branch } => {
            let mut inner = env.clone();
            inner.remove(guard);
            let d = go(then_branch, &inner, fresh)?;
            let e = go(else_branch, &inner, fresh)?;
            let out_env = typecheck_circuit(&d, &inner)?;
            if typecheck_circuit(&e, &inner)? != out_env {
                return Err(ElimError::ShapeMismatch("branch outputs differ".into()));
            }
            Ok(replace(guard, &d, &e, &inner, &out_env, fresh))
        }
    }
}

/// One plain conditional: `d` runs on shadow wires and `e` on the real ones;
/// the control bit swaps the real data into the shadows before and back after.
fn replace(guard: &Label, d: &Circuit, e: &Circuit, gamma: &Env, delta: &Env, fresh: &mut Fresh) -> Circuit {
    let touched: BTreeSet<Label> = d.labels().union(&e.labels()).cloned().collect();
    let pick =
        |env: &Env| -> Vec<(Label, BaseType)> { env.iter().filter(|(l, _)| touched.contains(*l)).map(|(l, t)| (l.clone(), *t)).collect() };
    let (ins, outs) = (pick(gamma), pick(delta));
    let mut out = Vec::new();

    // E may produce a wire named like the guard, which is still live here.
    let ctrl = if touched.contains(guard) {
        let c = fresh.label("anc");
        out.push(g("idb", &[guard], &[&c]));
        c
    } else {
        guard.clone()
    };

    // wires only E touches still need a shadow: D passes them through
    let shadow: BTreeMap<Label, Label> = touched.iter().map(|l| (l.clone(), fresh.label("sh"))).collect();
    let sh = |env: &[(Label, BaseType)]| -> Vec<(Label, BaseType)> { env.iter().map(|(l, t)| (shadow[l].clone(), *t)).collect() };
    let (sh_ins, sh_outs) = (sh(&ins), sh(&outs));

    for (s, t) in &sh_ins {
        out.push(g("zero", &[], &[s]));
        if *t == BaseType::Qbit {
            out.push(g("new", &[s], &[s]));
        }
    }
    out.push(swaps(&ins, &sh_ins, &ctrl));
    out.push(d.rename_all(&|l| shadow[l].clone()));
    out.push(e.clone());
    out.push(swaps(&outs, &sh_outs, &ctrl));
    out.push(g("discard", &[&ctrl], &[]));
    for (s, t) in &sh_outs {
        if *t == BaseType::Qbit {
            out.push(g("meas", &[s], &[s]));
        }
        out.push(g("discard", &[s], &[]));
    }
    Circuit::seq(out)
}
