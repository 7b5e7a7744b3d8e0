//! Compile the Bell-state term and compare its circuit with the density
//! matrix (|00> + |11>)(<00| + <11|) / 2.

use goiqc::corpus::BELL;
use goiqc::cpm::{interp_circuit, CpmState};
use goiqc::pipeline::{check_source, compile, CompileOptions};
use num_complex::Complex64;

fn main() {
    let typed = check_source(BELL).expect("the Bell term is well typed");
    println!("{BELL}\n  : {}", typed.ty());
    let compiled = compile(&typed.derivation, &CompileOptions::default()).expect("compiles");
    print!("{}", compiled.to_qc());

    let out = interp_circuit(compiled.circuit(), &compiled.input).unwrap().apply(&CpmState::unit());
    let mut want = CpmState::zero(&compiled.output);
    for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        want.blocks[0][i * 4 + j] = Complex64::new(0.5, 0.0);
    }
    println!("Frobenius distance to the Bell state: {:.2e}", out.frobenius_distance(&want));
}
