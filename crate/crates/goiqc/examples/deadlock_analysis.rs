//! Predict synchronous deadlocks from the colored dependency graph, then
//! confirm with a sync-only run of the token machine.

use goiqc::corpus::named;
use goiqc::pipeline::{analyze, compile, CompileOptions};
use goiqc::tokenmachine::Mode;
use goiqc::typing::infer;

fn main() {
    for (name, program) in named() {
        let d = infer(&program.term, &program.context).expect("named terms are typed");
        let a = analyze(&d);
        let run = compile(&d, &CompileOptions { mode: Mode::SyncOnly, ..Default::default() });
        let outcome = match run {
            Ok(c) => format!("terminated, {} gates", c.flat.size()),
            Err(e) => e.to_string(),
        };
        println!("{name:<12} {}\n{:<12} sync-only: {outcome}", a.verdict, "");
    }

    let (_, ruw) = named().into_iter().find(|(n, _)| *n == "ruw").unwrap();
    let d = infer(&ruw.term, &ruw.context).unwrap();
    println!("\n{}", analyze(&d).dot);
}
