//! A fair coin: the reference evaluator's distribution against the circuit.

use goiqc::corpus::COIN;
use goiqc::pipeline::{verify, CompileOptions};

fn main() {
    let report = verify(COIN, &CompileOptions::default(), 1e-9, false).expect("verifies");
    let v = report.verification.as_ref().unwrap();
    println!("{COIN}");
    for (value, w) in &v.distribution {
        println!("  evaluator  {value}: {w}");
    }
    for (value, w) in &v.circuit_distribution {
        println!("  circuit    {value}: {w}");
    }
    println!("trace distance {:.2e}", v.max_trace_distance);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
