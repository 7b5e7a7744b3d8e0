//! The gate registry shared by terms and circuits.

use std::sync::OnceLock;

use num_complex::Complex64;

use super::BaseType;
use crate::syntax::Type;

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    /// Row-major `2^n x 2^n` matrix; input `i` is tensor factor `i`, first factor most significant.
    Unitary(Vec<Complex64>),
    New,
    Meas,
    Zero,
    One,
    Discard,
    /// Wire renaming; emitted by the compiler, not by terms.
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateDef {
    pub name: &'static str,
    pub inputs: Vec<BaseType>,
    pub outputs: Vec<BaseType>,
    pub kind: GateKind,
}

impl GateDef {
    /// The lambda-calculus type `B1 * ... -o B'1 * ...`.
    pub fn term_type(&self) -> Type {
        let ins: Vec<Type> = self.inputs.iter().map(|b| b.to_type()).collect();
        let outs: Vec<Type> = self.outputs.iter().map(|b| b.to_type()).collect();
        Type::lolli(Type::tensor_of(&ins), Type::tensor_of(&outs))
    }

    pub fn is_unitary(&self) -> bool {
        matches!(self.kind, GateKind::Unitary(_))
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn permutation_matrix(n: usize, f: impl Fn(usize) -> usize) -> Vec<Complex64> {
    let d = 1 << n;
    let mut m = vec![c(0.0, 0.0); d * d];
    for col in 0..d {
        m[f(col) * d + col] = c(1.0, 0.0);
    }
    m
}

fn build() -> Vec<GateDef> {
    use BaseType::*;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = |n: usize| vec![Qbit; n];
    vec![
        GateDef { name: "zero", inputs: vec![], outputs: vec![Bit], kind: GateKind::Zero },
        GateDef { name: "one", inputs: vec![], outputs: vec![Bit], kind: GateKind::One },
        GateDef { name: "discard", inputs: vec![Bit], outputs: vec![], kind: GateKind::Discard },
        GateDef { name: "new", inputs: vec![Bit], outputs: vec![Qbit], kind: GateKind::New },
        GateDef { name: "meas", inputs: vec![Qbit], outputs: vec![Bit], kind: GateKind::Meas },
        GateDef { name: "H", inputs: q(1), outputs: q(1), kind: GateKind::Unitary(vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]) },
        GateDef {
            name: "S",
            inputs: q(1),
            outputs: q(1),
            kind: GateKind::Unitary(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]),
        },
        GateDef { name: "T", inputs: q(1), outputs: q(1), kind: GateKind::Unitary(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, s)]) },
        GateDef {
            name: "X",
            inputs: q(1),
            outputs: q(1),
            kind: GateKind::Unitary(vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        },
        GateDef {
            name: "CNOT",
            inputs: q(2),
            outputs: q(2),
            // control first
            kind: GateKind::Unitary(permutation_matrix(2, |i| if i & 2 != 0 { i ^ 1 } else { i })),
        },
        GateDef {
            name: "CSWAP",
            inputs: q(3),
            outputs: q(3),
            // |i j k> -> |j i k> when the last qubit k is 1
            kind: GateKind::Unitary(permutation_matrix(3, |x| {
                if x & 1 == 1 {
                    let (i, j) = ((x >> 2) & 1, (x >> 1) & 1);
                    (j << 2) | (i << 1) | 1
                } else {
                    x
                }
            })),
        },
        GateDef {
            name: "TOFFOLI",
            inputs: q(3),
            outputs: q(3),
            kind: GateKind::Unitary(permutation_matrix(3, |x| if x & 6 == 6 { x ^ 1 } else { x })),
        },
        GateDef { name: "id", inputs: q(1), outputs: q(1), kind: GateKind::Identity },
        GateDef { name: "idb", inputs: vec![Bit], outputs: vec![Bit], kind: GateKind::Identity },
    ]
}

pub fn registry() -> &'static [GateDef] {
    static REG: OnceLock<Vec<GateDef>> = OnceLock::new();
    REG.get_or_init(build)
}

pub fn lookup(name: &str) -> Option<&'static GateDef> {
    registry().iter().find(|g| g.name == name)
}

/// The identity gate for a wire of type `b`.
pub fn identity_for(b: BaseType) -> &'static str {
    match b {
        BaseType::Qbit => "id",
        BaseType::Bit => "idb",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitaries_are_unitary() {
        for g in registry() {
            if let GateKind::Unitary(m) = &g.kind {
                let d = 1 << g.inputs.len();
                assert_eq!(m.len(), d * d);
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = c(0.0, 0.0);
                        for k in 0..d {
                            acc += m[i * d + k] * m[j * d + k].conj();
                        }
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((acc - c(want, 0.0)).norm() < 1e-12, "{} not unitary", g.name);
                    }
                }
            }
        }
    }

    #[test]
    fn cswap_swaps_on_last_control() {
        let g = lookup("CSWAP").unwrap();
        let GateKind::Unitary(m) = &g.kind else { unreachable!() };
        // |1 0 1> = 5 -> |0 1 1> = 3
        assert_eq!(m[3 * 8 + 5], c(1.0, 0.0));
        assert_eq!(m[4 * 8 + 4], c(1.0, 0.0));
    }

    #[test]
    fn term_types() {
        assert_eq!(lookup("zero").unwrap().term_type().to_string(), "1 -o bit");
        assert_eq!(lookup("CNOT").unwrap().term_type().to_string(), "qbit * qbit -o qbit * qbit");
        assert_eq!(lookup("discard").unwrap().term_type().to_string(), "bit -o 1");
    }
}
