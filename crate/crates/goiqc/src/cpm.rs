//! Completely positive map semantics of circuits.
//!
//! A state over an environment holds one `2^q x 2^q` block per assignment of
//! the bit labels. Bits and qubits are each kept in label order, the first
//! label being the most significant index bit.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{typecheck_circuit, BaseType, Circuit, CircuitError, Env, GateApp, GateKind, Label};
use crate::extcircuit::{ExtCircuit, SuperAddress};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub const MAX_PROBE_QBITS: usize = 6;
pub const MAX_PROBE_BITS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CpmError {
    #[error("ill-typed circuit: {0}")]
    IllTyped(#[from] CircuitError),
    #[error("maps have different source or target objects")]
    ObjectMismatch,
    #[error("distribution is not uniform: {0}")]
    NonUniformDistribution(String),
    #[error("environment too large to probe: {0} qubits, {1} bits")]
    TooLarge(usize, usize),
    #[error("bad state: {0}")]
    BadState(String),
}

/// A tuple of positive integers, the object interpreting a type or environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CpmObject(pub Vec<usize>);

impl CpmObject {
    pub fn unit() -> CpmObject {
        CpmObject(vec![1])
    }

    pub fn tensor(&self, other: &CpmObject) -> CpmObject {
        CpmObject(self.0.iter().flat_map(|n| other.0.iter().map(move |m| n * m)).collect())
    }
}

pub fn interp_type(b: BaseType) -> CpmObject {
    match b {
        BaseType::Bit => CpmObject(vec![1, 1]),
        BaseType::Qbit => CpmObject(vec![2]),
    }
}

pub fn interp_env(env: &Env) -> CpmObject {
    env.values().fold(CpmObject::unit(), |acc, b| acc.tensor(&interp_type(*b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpmState {
    pub bits: Vec<Label>,
    pub qbits: Vec<Label>,
    /// Row-major blocks, indexed by the bit assignment.
    pub blocks: Vec<Vec<Complex64>>,
}

fn bit_at(x: usize, pos: usize, n: usize) -> usize {
    (x >> (n - 1 - pos)) & 1
}

/// Inserts bit `v` at MSB-first position `pos` of an `n`-bit index.
fn insert_bit(x: usize, pos: usize, n: usize, v: usize) -> usize {
    let low_width = n - 1 - pos;
    let high = x >> low_width;
    let low = x & ((1 << low_width) - 1);
    (((high << 1) | v) << low_width) | low
}

fn remove_bit(x: usize, pos: usize, n: usize) -> usize {
    let low_width = n - 1 - pos;
    let high = x >> (low_width + 1);
    let low = x & ((1 << low_width) - 1);
    (high << low_width) | low
}

fn sorted_insert(v: &mut Vec<Label>, l: Label) -> usize {
    let at = v.binary_search(&l).unwrap_or_else(|e| e);
    v.insert(at, l);
    at
}

impl CpmState {
    pub fn zero(env: &Env) -> CpmState {
        let bits: Vec<Label> = env.iter().filter(|(_, t)| **t == BaseType::Bit).map(|(l, _)| l.clone()).collect();
        let qbits: Vec<Label> = env.iter().filter(|(_, t)| **t == BaseType::Qbit).map(|(l, _)| l.clone()).collect();
        let d = 1 << qbits.len();
        let blocks = vec![vec![ZERO; d * d]; 1 << bits.len()];
        CpmState { bits, qbits, blocks }
    }

    /// The scalar 1 on the empty environment.
    pub fn unit() -> CpmState {
        CpmState { bits: vec![], qbits: vec![], blocks: vec![vec![ONE]] }
    }

    pub fn env(&self) -> Env {
        let mut e = Env::new();
        for b in &self.bits {
            e.insert(b.clone(), BaseType::Bit);
        }
        for q in &self.qbits {
            e.insert(q.clone(), BaseType::Qbit);
        }
        e
    }

    pub fn dim(&self) -> usize {
        1 << self.qbits.len()
    }

    pub fn object(&self) -> CpmObject {
        interp_env(&self.env())
    }

    pub fn trace(&self) -> Complex64 {
        let d = self.dim();
        self.blocks.iter().map(|b| (0..d).map(|i| b[i * d + i]).sum::<Complex64>()).sum()
    }

    pub fn scale(&self, k: Complex64) -> CpmState {
        let mut s = self.clone();
        s.blocks.iter_mut().flatten().for_each(|x| *x *= k);
        s
    }

    pub fn add(&self, other: &CpmState) -> CpmState {
        assert_eq!((&self.bits, &self.qbits), (&other.bits, &other.qbits), "adding states on different environments");
        let mut s = self.clone();
        for (a, b) in s.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        s
    }

    pub fn frobenius_distance(&self, other: &CpmState) -> f64 {
        if self.bits != other.bits || self.qbits != other.qbits {
            return f64::INFINITY;
        }
        self.blocks.iter().zip(&other.blocks).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr())).sum::<f64>().sqrt()
    }

    /// Half the summed trace norms of the blockwise difference.
    pub fn trace_distance(&self, other: &CpmState) -> f64 {
        if self.bits != other.bits || self.qbits != other.qbits {
            return f64::INFINITY;
        }
        let d = self.dim();
        let mut total = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            let m = DMatrix::from_fn(d, d, |i, j| {
                let x = a[i * d + j] - b[i * d + j];
                let y = a[j * d + i] - b[j * d + i];
                (x + y.conj()) * 0.5
            });
            let eig = nalgebra::SymmetricEigen::new(m);
            total += eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>();
        }
        total / 2.0
    }

    pub fn block_for(&self, assignment: &BTreeMap<Label, bool>) -> Option<&Vec<Complex64>> {
        let nb = self.bits.len();
        let mut idx = 0;
        for (i, b) in self.bits.iter().enumerate() {
            if *assignment.get(b)? {
                idx |= 1 << (nb - 1 - i);
            }
        }
        self.blocks.get(idx)
    }

    fn bit_pos(&self, l: &Label) -> usize {
        self.bits.iter().position(|b| b == l).unwrap_or_else(|| panic!("bit {l} not in state"))
    }

    fn qbit_pos(&self, l: &Label) -> usize {
        self.qbits.iter().position(|b| b == l).unwrap_or_else(|| panic!("qubit {l} not in state"))
    }

    fn apply_unitary(&mut self, on: &[Label], u: &[Complex64]) {
        let n = self.qbits.len();
        let d = self.dim();
        let ks: Vec<usize> = on.iter().map(|l| self.qbit_pos(l)).collect();
        let m = ks.len();
        let du = 1 << m;
        let sub = |x: usize| ks.iter().fold(0, |acc, &k| (acc << 1) | bit_at(x, k, n));
        let clear: usize = ks.iter().fold(0, |acc, &k| acc | (1 << (n - 1 - k)));
        let scatter = |a: usize| ks.iter().enumerate().fold(0, |acc, (i, &k)| acc | (((a >> (m - 1 - i)) & 1) << (n - 1 - k)));
        let scat: Vec<usize> = (0..du).map(scatter).collect();
        for blk in self.blocks.iter_mut() {
            let mut left = vec![ZERO; d * d];
            for r in 0..d {
                let (sr, base) = (sub(r), r & !clear);
                for a in 0..du {
                    let coef = u[sr * du + a];
                    if coef == ZERO {
                        continue;
                    }
                    let src = (base | scat[a]) * d;
                    for c in 0..d {
                        left[r * d + c] += coef * blk[src + c];
                    }
                }
            }
            let mut out = vec![ZERO; d * d];
            for c in 0..d {
                let (sc, base) = (sub(c), c & !clear);
                for a in 0..du {
                    let coef = u[sc * du + a].conj();
                    if coef == ZERO {
                        continue;
                    }
                    let src = base | scat[a];
                    for r in 0..d {
                        out[r * d + c] += left[r * d + src] * coef;
                    }
                }
            }
            *blk = out;
        }
    }

    fn add_bit(&mut self, l: &Label, value: bool) {
        let nb_old = self.bits.len();
        let pos = sorted_insert(&mut self.bits, l.clone());
        let d = self.dim();
        let mut blocks = vec![vec![ZERO; d * d]; 1 << (nb_old + 1)];
        for (i, b) in std::mem::take(&mut self.blocks).into_iter().enumerate() {
            blocks[insert_bit(i, pos, nb_old + 1, value as usize)] = b;
        }
        self.blocks = blocks;
    }

    /// Removes bit `l`, keeping for each remaining assignment the block where
    /// `l` has value `v` when `keep` is `Some(v)`, or the sum of both otherwise.
    fn drop_bit(&mut self, l: &Label, keep: Option<bool>) {
        let n = self.bits.len();
        let pos = self.bit_pos(l);
        self.bits.remove(pos);
        let old = std::mem::take(&mut self.blocks);
        let d2 = old[0].len();
        let mut blocks = vec![vec![ZERO; d2]; 1 << (n - 1)];
        for (i, b) in old.into_iter().enumerate() {
            let v = bit_at(i, pos, n) == 1;
            if keep.is_some_and(|k| k != v) {
                continue;
            }
            let j = remove_bit(i, pos, n);
            for (x, y) in blocks[j].iter_mut().zip(b) {
                *x += y;
            }
        }
        self.blocks = blocks;
    }

    fn bit_to_qubit(&mut self, from: &Label, to: &Label) {
        let nb = self.bits.len();
        let bpos = self.bit_pos(from);
        self.bits.remove(bpos);
        let nq_old = self.qbits.len();
        let qpos = sorted_insert(&mut self.qbits, to.clone());
        let (d_old, d) = (1 << nq_old, 1 << (nq_old + 1));
        let old = std::mem::take(&mut self.blocks);
        let mut blocks = vec![vec![ZERO; d * d]; 1 << (nb - 1)];
        for (i, b) in old.into_iter().enumerate() {
            let v = bit_at(i, bpos, nb);
            let j = remove_bit(i, bpos, nb);
            for r in 0..d_old {
                let r2 = insert_bit(r, qpos, nq_old + 1, v);
                for c in 0..d_old {
                    let c2 = insert_bit(c, qpos, nq_old + 1, v);
                    blocks[j][r2 * d + c2] += b[r * d_old + c];
                }
            }
        }
        self.blocks = blocks;
    }

    /// Measures qubit `from` into bit `to`; with `only = Some(v)` the other
    /// outcome's block is zeroed.
    fn qubit_to_bit(&mut self, from: &Label, to: &Label, only: Option<bool>) {
        let nq = self.qbits.len();
        let qpos = self.qbit_pos(from);
        self.qbits.remove(qpos);
        let nb_old = self.bits.len();
        let bpos = sorted_insert(&mut self.bits, to.clone());
        let (d_old, d) = (1 << nq, 1 << (nq - 1));
        let old = std::mem::take(&mut self.blocks);
        let mut blocks = vec![vec![ZERO; d * d]; 1 << (nb_old + 1)];
        for (i, b) in old.into_iter().enumerate() {
            for v in 0..2usize {
                if only.is_some_and(|o| o as usize != v) {
                    continue;
                }
                let j = insert_bit(i, bpos, nb_old + 1, v);
                for r in 0..d {
                    let r2 = insert_bit(r, qpos, nq, v);
                    for c in 0..d {
                        let c2 = insert_bit(c, qpos, nq, v);
                        blocks[j][r * d + c] = b[r2 * d_old + c2];
                    }
                }
            }
        }
        self.blocks = blocks;
    }

    /// Simultaneous relabelling; labels not in `map` keep their names.
    pub fn rename(&mut self, map: &BTreeMap<Label, Label>) {
        if map.iter().all(|(a, b)| a == b) {
            return;
        }
        let rn = |l: &Label| map.get(l).cloned().unwrap_or_else(|| l.clone());
        let new_bits: Vec<Label> = self.bits.iter().map(rn).collect();
        let new_qbits: Vec<Label> = self.qbits.iter().map(rn).collect();
        let (bit_perm, sorted_bits) = sort_perm(&new_bits);
        let (qbit_perm, sorted_qbits) = sort_perm(&new_qbits);
        let (nb, nq) = (self.bits.len(), self.qbits.len());
        let bmap = index_map(&bit_perm, nb);
        let qmap = index_map(&qbit_perm, nq);
        let d = self.dim();
        let old = std::mem::take(&mut self.blocks);
        self.blocks = (0..1usize << nb)
            .map(|i| {
                let src = &old[bmap[i]];
                let mut out = vec![ZERO; d * d];
                for r in 0..d {
                    for c in 0..d {
                        out[r * d + c] = src[qmap[r] * d + qmap[c]];
                    }
                }
                out
            })
            .collect();
        self.bits = sorted_bits;
        self.qbits = sorted_qbits;
    }

    /// Applies a plain gate.
    pub fn apply_gate(&mut self, g: &GateApp) {
        let def = g.def().unwrap_or_else(|| panic!("unknown gate {}", g.gate));
        self.apply_gate_sliced(g, &def.kind, None);
    }

    fn apply_gate_sliced(&mut self, g: &GateApp, kind: &GateKind, meas_outcome: Option<bool>) {
        match kind {
            GateKind::Unitary(u) => {
                self.apply_unitary(&g.inputs, u);
                self.rename(&g.inputs.iter().cloned().zip(g.outputs.iter().cloned()).collect());
            }
            GateKind::Identity => {
                self.rename(&g.inputs.iter().cloned().zip(g.outputs.iter().cloned()).collect());
            }
            GateKind::New => self.bit_to_qubit(&g.inputs[0], &g.outputs[0]),
            GateKind::Meas => self.qubit_to_bit(&g.inputs[0], &g.outputs[0], meas_outcome),
            GateKind::Zero => self.add_bit(&g.outputs[0], false),
            GateKind::One => self.add_bit(&g.outputs[0], true),
            GateKind::Discard => self.drop_bit(&g.inputs[0], None),
        }
    }
}

/// Permutation sorting `labels`: `perm[j]` is the old position of the label at new position `j`.
fn sort_perm(labels: &[Label]) -> (Vec<usize>, Vec<Label>) {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by(|a, b| labels[*a].cmp(&labels[*b]));
    let sorted = idx.iter().map(|&i| labels[i].clone()).collect();
    (idx, sorted)
}

/// For each new index, the old index under the position permutation.
fn index_map(perm: &[usize], n: usize) -> Vec<usize> {
    (0..1usize << n).map(|x| perm.iter().enumerate().fold(0, |acc, (j, &old)| acc | (bit_at(x, j, n) << (n - 1 - old)))).collect()
}

fn run(c: &Circuit, mut s: CpmState, slice: Option<&SuperAddress>) -> CpmState {
    match c {
        Circuit::Gate(g) => {
            let def = g.def().unwrap_or_else(|| panic!("unknown gate {}", g.gate));
            let outcome = match (slice, g.meas_index) {
                (Some(sa), Some(i)) if def.kind == GateKind::Meas => sa.meas.get(&i).copied(),
                _ => None,
            };
            s.apply_gate_sliced(g, &def.kind, outcome);
            s
        }
        Circuit::Seq { items } => items.iter().fold(s, |acc, c| run(c, acc, slice)),
        Circuit::Ite { guard, then_branch, else_branch } => {
            if let Some(b) = slice.and_then(|sa| sa.labels.get(guard).copied()) {
                s.drop_bit(guard, Some(b));
                return run(if b { then_branch } else { else_branch }, s, slice);
            }
            let mut on1 = s.clone();
            on1.drop_bit(guard, Some(true));
            s.drop_bit(guard, Some(false));
            let a = run(then_branch, on1, slice);
            let b = run(else_branch, s, slice);
            a.add(&b)
        }
    }
}

/// A linear map between environments, given by its action.
#[derive(Clone)]
pub struct CpmMap {
    pub source: Env,
    pub target: Env,
    action: Arc<dyn Fn(&CpmState) -> CpmState + Send + Sync>,
}

impl std::fmt::Debug for CpmMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CpmMap({} -> {})", crate::circuit::show_env(&self.source), crate::circuit::show_env(&self.target))
    }
}

impl CpmMap {
    pub fn new(source: Env, target: Env, f: impl Fn(&CpmState) -> CpmState + Send + Sync + 'static) -> CpmMap {
        CpmMap { source, target, action: Arc::new(f) }
    }

    pub fn apply(&self, s: &CpmState) -> CpmState {
        (self.action)(s)
    }

    pub fn zero(source: Env, target: Env) -> CpmMap {
        let t = target.clone();
        CpmMap::new(source, target, move |_| CpmState::zero(&t))
    }

    pub fn sum(maps: &[CpmMap]) -> Option<CpmMap> {
        let first = maps.first()?;
        let (source, target) = (first.source.clone(), first.target.clone());
        let ms = maps.to_vec();
        let t = target.clone();
        Some(CpmMap::new(source, target, move |s| ms.iter().fold(CpmState::zero(&t), |acc, m| acc.add(&m.apply(s)))))
    }

    pub fn compose(&self, then: &CpmMap) -> CpmMap {
        let (a, b) = (self.clone(), then.clone());
        CpmMap::new(self.source.clone(), then.target.clone(), move |s| b.apply(&a.apply(s)))
    }
}

pub fn interp_gate(g: &GateApp, gamma: &Env) -> Result<CpmMap, CpmError> {
    interp_circuit(&Circuit::Gate(g.clone()), gamma)
}

pub fn interp_circuit(c: &Circuit, gamma: &Env) -> Result<CpmMap, CpmError> {
    let target = typecheck_circuit(c, gamma)?;
    let c = c.clone();
    Ok(CpmMap::new(gamma.clone(), target, move |s| run(&c, s.clone(), None)))
}

/// The slice of `c` at super-address `s`; the zero map when `s` does not
/// select exactly one path with its measurement outcomes.
pub fn slice_interp(c: &Circuit, gamma: &Env, s: &SuperAddress) -> Result<CpmMap, CpmError> {
    let target = typecheck_circuit(c, gamma)?;
    if !crate::extcircuit::circuit_compatible(c, s) {
        return Ok(CpmMap::zero(gamma.clone(), target));
    }
    let (c, s) = (c.clone(), s.clone());
    Ok(CpmMap::new(gamma.clone(), target, move |st| run(&c, st.clone(), Some(&s))))
}

pub fn interp_ext(e: &ExtCircuit, gamma: &Env) -> Result<CpmMap, CpmError> {
    let flat = crate::extcircuit::tau(e, gamma).map_err(|err| CpmError::BadState(err.to_string()))?;
    interp_circuit(&flat, gamma)
}

/// Slice of an extended circuit, computed on the tree without flattening.
pub fn ext_slice_interp(e: &ExtCircuit, gamma: &Env, s: &SuperAddress) -> Result<CpmMap, CpmError> {
    let target = crate::extcircuit::ext_typecheck_uniform(e, gamma).map_err(|err| CpmError::BadState(err.to_string()))?;
    if !crate::extcircuit::ext_compatible(e, s) {
        return Ok(CpmMap::zero(gamma.clone(), target));
    }
    let (e, s) = (e.clone(), s.clone());
    Ok(CpmMap::new(gamma.clone(), target, move |st| run_ext(&e, st.clone(), &s)))
}

fn run_ext(e: &ExtCircuit, s: CpmState, sa: &SuperAddress) -> CpmState {
    match e {
        ExtCircuit::Leaf(c) => run(c, s, Some(sa)),
        ExtCircuit::Branch { circuit, guard, then_child, else_child } => {
            let mut st = run(circuit, s, Some(sa));
            let b = sa.labels[guard];
            st.drop_bit(guard, Some(b));
            run_ext(if b { then_child } else { else_child }, st, sa)
        }
    }
}

/// Applies both maps to every matrix unit of every source block.
pub fn map_equal(f: &CpmMap, g: &CpmMap, tol: f64) -> Result<bool, CpmError> {
    Ok(map_distance(f, g)? <= tol)
}

/// Largest Frobenius distance between the images of a matrix unit.
pub fn map_distance(f: &CpmMap, g: &CpmMap) -> Result<f64, CpmError> {
    if f.source != g.source || f.target != g.target {
        return Err(CpmError::ObjectMismatch);
    }
    let proto = CpmState::zero(&f.source);
    let (nb, nq) = (proto.bits.len(), proto.qbits.len());
    if nq > MAX_PROBE_QBITS || nb > MAX_PROBE_BITS {
        return Err(CpmError::TooLarge(nq, nb));
    }
    let d = proto.dim();
    let probes: Vec<(usize, usize)> = (0..proto.blocks.len()).flat_map(|b| (0..d * d).map(move |k| (b, k))).collect();
    let worst = probes
        .par_iter()
        .map(|&(b, k)| {
            let mut e = proto.clone();
            e.blocks[b][k] = ONE;
            f.apply(&e).frobenius_distance(&g.apply(&e))
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// A classical+quantum register `[L, Q, v]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QCRegister {
    pub labels: Vec<(Label, BaseType)>,
    /// Amplitudes over the qubit labels in `labels` order, first most significant.
    pub q: Vec<Complex64>,
    pub v: BTreeMap<Label, bool>,
}

impl QCRegister {
    pub fn empty() -> QCRegister {
        QCRegister { labels: vec![], q: vec![ONE], v: BTreeMap::new() }
    }

    pub fn qbit_labels(&self) -> Vec<Label> {
        self.labels.iter().filter(|(_, t)| *t == BaseType::Qbit).map(|(l, _)| l.clone()).collect()
    }

    pub fn env(&self) -> Env {
        self.labels.iter().cloned().collect()
    }
}

pub fn mix(r: &QCRegister) -> CpmState {
    let env = r.env();
    let mut s = CpmState::zero(&env);
    let ql = r.qbit_labels();
    let n = ql.len();
    let (perm, _) = sort_perm(&ql);
    let map = index_map(&perm, n);
    let d = 1 << n;
    let psi: Vec<Complex64> = (0..d).map(|i| r.q[map[i]]).collect();
    let mut idx = 0;
    for (i, b) in s.bits.iter().enumerate() {
        if r.v.get(b).copied().unwrap_or(false) {
            idx |= 1 << (s.bits.len() - 1 - i);
        }
    }
    let blk = &mut s.blocks[idx];
    for i in 0..d {
        for j in 0..d {
            blk[i * d + j] = psi[i] * psi[j].conj();
        }
    }
    s
}

pub fn mix_dist(d: &[(QCRegister, f64)]) -> Result<CpmState, CpmError> {
    let Some((first, _)) = d.first() else {
        return Err(CpmError::NonUniformDistribution("empty distribution".into()));
    };
    let env = first.env();
    let mut acc = CpmState::zero(&env);
    for (r, w) in d {
        if r.env() != env {
            return Err(CpmError::NonUniformDistribution(format!(
                "{} vs {}",
                crate::circuit::show_env(&env),
                crate::circuit::show_env(&r.env())
            )));
        }
        acc = acc.add(&mix(r).scale(Complex64::new(*w, 0.0)));
    }
    Ok(acc)
}

/// JSON form used by the `simulate` command: blocks of `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateJson {
    pub bits: Vec<Label>,
    pub qbits: Vec<Label>,
    pub blocks: Vec<Vec<[f64; 2]>>,
}

impl From<&CpmState> for StateJson {
    fn from(s: &CpmState) -> StateJson {
        StateJson {
            bits: s.bits.clone(),
            qbits: s.qbits.clone(),
            blocks: s.blocks.iter().map(|b| b.iter().map(|z| [z.re, z.im]).collect()).collect(),
        }
    }
}

impl StateJson {
    pub fn into_state(self) -> Result<CpmState, CpmError> {
        let mut bits = self.bits.clone();
        bits.sort();
        let mut qbits = self.qbits.clone();
        qbits.sort();
        if bits != self.bits || qbits != self.qbits {
            return Err(CpmError::BadState("labels must be listed in label order".into()));
        }
        let d = 1usize << qbits.len();
        if self.blocks.len() != 1 << bits.len() || self.blocks.iter().any(|b| b.len() != d * d) {
            return Err(CpmError::BadState("block count or size does not match the labels".into()));
        }
        let blocks = self.blocks.into_iter().map(|b| b.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()).collect();
        Ok(CpmState { bits, qbits, blocks })
    }
}
