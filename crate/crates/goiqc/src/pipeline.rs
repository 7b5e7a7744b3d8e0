//! The end-to-end pipeline: type, analyze, compile, eliminate conditionals,
//! and check the compiled circuit against the reference evaluator.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit::{serialize, show_env, BaseType, Circuit, Env, Label};
use crate::colorgraph::{color_infer, sync_points, verdict, DependencyGraph, SyncPoint};
use crate::cpm::{interp_circuit, mix, mix_dist, CpmState, QCRegister};
use crate::extcircuit::ExtCircuit;
use crate::ite_elim::eliminate;
use crate::refeval::{eval_full, value_register, QuantumClosure};
use crate::syntax::{parse_program, Program, Type};
use crate::tokenmachine::{MachineError, Mode, RunOptions, RunStats, Scheduler, TraceEvent};
use crate::typing::{atoms, infer, Derivation, Position};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Syntax(#[from] crate::syntax::ParseError),
    #[error("type error: {0}")]
    Type(#[from] crate::typing::TypeError),
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// 1 for problems with the input, 2 for broken invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Internal(_) => 2,
            _ => 1,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Internal(e.to_string())
}

impl From<MachineError> for PipelineError {
    fn from(e: MachineError) -> PipelineError {
        match e {
            MachineError::Deadlock { witness } => PipelineError::Deadlock(witness),
            other => PipelineError::Internal(other.to_string()),
        }
    }
}

pub struct Typed {
    pub program: Program,
    pub derivation: Derivation,
}

impl Typed {
    pub fn ty(&self) -> &Type {
        &self.derivation.node(0).ty
    }
}

pub fn check_source(src: &str) -> Result<Typed, PipelineError> {
    let program = parse_program(src)?;
    let derivation = infer(&program.term, &program.context)?;
    Ok(Typed { program, derivation })
}

pub fn source_hash(src: &str) -> String {
    Sha256::digest(src.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub points: Vec<SyncPoint>,
    pub graph: DependencyGraph,
    pub cycle: Option<Vec<usize>>,
    pub verdict: String,
    pub dot: String,
}

pub fn analyze(d: &Derivation) -> Analysis {
    let (_, graph) = color_infer(d);
    let points = sync_points(d);
    let dot = graph.to_dot(&points, d);
    Analysis { cycle: graph.find_cycle(), verdict: verdict(&graph), points, graph, dot }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub mode: Mode,
    pub scheduler: Scheduler,
    pub eliminate_ite: bool,
    pub trace: bool,
}

impl Default for CompileOptions {
    fn default() -> CompileOptions {
        CompileOptions { mode: Mode::SyncFirst, scheduler: Scheduler::Min, eliminate_ite: false, trace: false }
    }
}

#[derive(Clone, Debug)]
pub struct Compiled {
    pub input: Env,
    pub output: Env,
    pub extended: ExtCircuit,
    pub flat: Circuit,
    pub eliminated: Option<Circuit>,
    pub stats: RunStats,
    pub trace: Vec<TraceEvent>,
}

impl Compiled {
    /// The circuit handed to later stages: eliminated when requested.
    pub fn circuit(&self) -> &Circuit {
        self.eliminated.as_ref().unwrap_or(&self.flat)
    }

    /// `.qc` text with the interface as comments.
    pub fn to_qc(&self) -> String {
        format!("# inputs {}\n# outputs {}\n{}", show_env(&self.input), show_env(&self.output), serialize(self.circuit()))
    }
}

pub fn compile(d: &Derivation, opts: &CompileOptions) -> Result<Compiled, PipelineError> {
    let run = crate::tokenmachine::run(
        d,
        &RunOptions { mode: opts.mode, scheduler: opts.scheduler, trace: opts.trace, ..RunOptions::default() },
    )?;
    let flat = crate::extcircuit::tau(&run.circuit, &run.input).map_err(internal)?;
    let eliminated = if opts.eliminate_ite { Some(eliminate(&flat, &run.input).map_err(internal)?) } else { None };
    Ok(Compiled { input: run.input, output: run.output, extended: run.circuit, flat, eliminated, stats: run.stats, trace: run.trace })
}

/// Labels of the root conclusion's bit and qubit atoms, left to right.
pub fn output_labels(d: &Derivation) -> Vec<Label> {
    atoms(&d.node(0).ty)
        .into_iter()
        .filter(|(_, k, _)| k.base().is_some())
        .map(|(path, _, _)| d.label(d.pos_id(&Position::concl(0, path)).expect("root positions exist")).clone())
        .collect()
}

/// One computational-basis input for every assignment of the context.
fn basis_inputs(t: &Typed) -> Result<Vec<(QCRegister, QuantumClosure)>, PipelineError> {
    let d = &t.derivation;
    let mut vars: Vec<(String, BaseType, Label)> = Vec::new();
    for (x, ty) in &t.program.context {
        let b = BaseType::from_type(ty)
            .ok_or_else(|| PipelineError::Unsupported(format!("context variable {x} : {ty} is not a bit or qubit")))?;
        let l = d.label(d.pos_id(&Position::ctx(0, x, vec![])).expect("context positions exist")).clone();
        vars.push((x.clone(), b, l));
    }
    if vars.len() > 4 {
        return Err(PipelineError::Unsupported("more than 4 context variables".into()));
    }
    let qubits: Vec<&(String, BaseType, Label)> = vars.iter().filter(|v| v.1 == BaseType::Qbit).collect();
    let mut out = Vec::new();
    for bits in 0..1usize << vars.len() {
        let value = |i: usize| (bits >> (vars.len() - 1 - i)) & 1 == 1;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits.len()];
        let mut idx = 0;
        let mut v = BTreeMap::new();
        let mut closure_bits = BTreeMap::new();
        for (i, (x, b, l)) in vars.iter().enumerate() {
            match b {
                BaseType::Qbit => idx = (idx << 1) | usize::from(value(i)),
                BaseType::Bit => {
                    v.insert(l.clone(), value(i));
                    closure_bits.insert(x.clone(), value(i));
                }
            }
        }
        amps[idx] = Complex64::new(1.0, 0.0);
        let labels =
            qubits.iter().map(|(_, _, l)| (l.clone(), BaseType::Qbit)).chain(v.keys().map(|l| (l.clone(), BaseType::Bit))).collect();
        let reg = QCRegister { labels, q: amps.clone(), v };
        let names: Vec<String> = qubits.iter().map(|(x, _, _)| x.clone()).collect();
        out.push((reg, QuantumClosure::with_inputs(&t.program.term, &names, amps, &closure_bits)));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Sizes {
    pub extended: usize,
    pub flattened: usize,
    pub eliminated: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub inputs: usize,
    pub max_trace_distance: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Operational outcomes for the first input, as printed values.
    pub distribution: Vec<(String, f64)>,
    /// Weight of each classical output assignment in the circuit's output
    /// for the first input.
    pub circuit_distribution: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub source_hash: String,
    pub typing: String,
    pub graph: String,
    pub acyclic: bool,
    pub cycle: Option<Vec<usize>>,
    pub mode: String,
    pub sizes: Option<Sizes>,
    pub verification: Option<Verification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::AsyncOnly => "async-only",
        Mode::SyncFirst => "sync-first",
        Mode::SyncOnly => "sync-only",
    }
}

/// Compiles `src` and compares the circuit's action on each basis input
/// with the mixed state of the operational distribution.
pub fn verify(src: &str, opts: &CompileOptions, tol: f64, timings: bool) -> Result<PipelineReport, PipelineError> {
    let mut clock = BTreeMap::new();
    let mut lap = |name: &str, t0: Instant| {
        clock.insert(name.to_string(), t0.elapsed().as_secs_f64() * 1e3);
    };
    let t0 = Instant::now();
    let typed = check_source(src)?;
    lap("check", t0);
    let t0 = Instant::now();
    let an = analyze(&typed.derivation);
    lap("analyze", t0);
    if !typed.ty().is_boolean() {
        return Err(PipelineError::Unsupported(format!("result type {} is not Boolean", typed.ty())));
    }
    let t0 = Instant::now();
    let compiled = compile(&typed.derivation, opts)?;
    lap("compile", t0);
    let t0 = Instant::now();
    let (dist, inputs) = check_against_closures(&typed, &compiled)?;
    lap("verify", t0);
    Ok(PipelineReport {
        source_hash: source_hash(src),
        typing: format!("ok: {}", typed.ty()),
        graph: an.verdict,
        acyclic: an.cycle.is_none(),
        cycle: an.cycle,
        mode: mode_name(opts.mode).into(),
        sizes: Some(Sizes {
            extended: compiled.extended.size(),
            flattened: compiled.flat.size(),
            eliminated: compiled.eliminated.as_ref().map(Circuit::size),
        }),
        verification: Some(Verification {
            inputs,
            max_trace_distance: dist.max_trace_distance,
            tolerance: tol,
            passed: dist.max_trace_distance <= tol,
            distribution: dist.operational,
            circuit_distribution: dist.circuit,
        }),
        timings_ms: timings.then_some(clock),
    })
}

pub struct Outcomes {
    pub operational: Vec<(String, f64)>,
    pub circuit: Vec<(String, f64)>,
    pub max_trace_distance: f64,
}

fn block_weights(s: &CpmState) -> Vec<(String, f64)> {
    let d = 1usize << s.qbits.len();
    s.blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let name = if s.bits.is_empty() {
                "*".to_string()
            } else {
                let n = s.bits.len();
                s.bits.iter().enumerate().map(|(k, l)| format!("{l}={}", (i >> (n - 1 - k)) & 1)).collect::<Vec<_>>().join(" ")
            };
            (name, (0..d).map(|j| b[j * d + j].re).sum())
        })
        .collect()
}

/// The worst trace distance between the circuit and the closures over all
/// basis inputs, with the first input's distribution for display.
pub fn check_against_closures(typed: &Typed, compiled: &Compiled) -> Result<(Outcomes, usize), PipelineError> {
    let labels = output_labels(&typed.derivation);
    let map = interp_circuit(compiled.circuit(), &compiled.input).map_err(internal)?;
    let mut worst: f64 = 0.0;
    let mut shown = Vec::new();
    let mut circuit = Vec::new();
    let inputs = basis_inputs(typed)?;
    for (k, (reg, cl)) in inputs.iter().enumerate() {
        let ops = eval_full(cl).map_err(internal)?;
        if k == 0 {
            shown = ops.items.iter().map(|(c, w)| (crate::syntax::pretty(&c.term), *w)).collect();
        }
        let regs = ops
            .items
            .iter()
            .map(|(c, w)| value_register(c, typed.ty(), &labels).map(|r| (r, *w)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(internal)?;
        let want = mix_dist(&regs).map_err(internal)?;
        let got = map.apply(&mix(reg));
        if k == 0 {
            circuit = block_weights(&got);
        }
        worst = worst.max(distance(&got, &want)?);
    }
    Ok((Outcomes { operational: shown, circuit, max_trace_distance: worst }, inputs.len()))
}

fn distance(a: &CpmState, b: &CpmState) -> Result<f64, PipelineError> {
    if a.env() != b.env() {
        return Err(PipelineError::Internal(format!("output {} vs {}", show_env(&a.env()), show_env(&b.env()))));
    }
    Ok(a.trace_distance(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BELL, COIN, RUW};

    #[test]
    fn verify_bell_and_coin() {
        for src in [BELL, COIN] {
            let r = verify(src, &CompileOptions::default(), 1e-9, false).unwrap();
            let v = r.verification.unwrap();
            assert!(v.passed, "{src}: {}", v.max_trace_distance);
        }
        let r = verify(COIN, &CompileOptions::default(), 1e-9, false).unwrap();
        let dist = r.verification.unwrap().distribution;
        assert_eq!(dist.len(), 2);
        assert!(dist.iter().all(|(_, w)| (w - 0.5).abs() < 1e-12));
    }

    #[test]
    fn open_terms_use_all_basis_inputs() {
        let src = "context x : qbit, b : bit; if b then H x else S x";
        let r = verify(src, &CompileOptions { eliminate_ite: true, ..Default::default() }, 1e-9, false).unwrap();
        let v = r.verification.unwrap();
        assert_eq!(v.inputs, 4);
        assert!(v.passed);
        assert!(r.sizes.unwrap().eliminated.is_some());
    }

    #[test]
    fn ruw_analysis_and_sync_only() {
        let t = check_source(RUW).unwrap();
        assert!(analyze(&t.derivation).verdict.starts_with("synchronous: DEADLOCK"));
        let e = compile(&t.derivation, &CompileOptions { mode: Mode::SyncOnly, ..Default::default() }).unwrap_err();
        assert!(matches!(e, PipelineError::Deadlock(_)));
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn reports_are_deterministic() {
        let a = serde_json::to_string(&verify(BELL, &CompileOptions::default(), 1e-9, false).unwrap()).unwrap();
        let b = serde_json::to_string(&verify(BELL, &CompileOptions::default(), 1e-9, false).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
