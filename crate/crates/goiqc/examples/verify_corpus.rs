//! Compile a seeded corpus of random terms in both modes and compare each
//! circuit with the reference evaluator.

use goiqc::corpus::term_corpus;
use goiqc::pipeline::{check_against_closures, compile, CompileOptions, Typed};
use goiqc::syntax::Program;
use goiqc::tokenmachine::Mode;
use goiqc::typing::infer;
use rayon::prelude::*;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let terms = term_corpus(n, 2024);
    let worst = terms
        .par_iter()
        .map(|t| {
            let typed = Typed {
                derivation: infer(t, &Default::default()).unwrap(),
                program: Program { context: Default::default(), term: t.clone() },
            };
            [Mode::SyncFirst, Mode::AsyncOnly]
                .into_iter()
                .map(|mode| {
                    let c = compile(&typed.derivation, &CompileOptions { mode, ..Default::default() }).unwrap();
                    check_against_closures(&typed, &c).unwrap().0.max_trace_distance
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    println!("{} terms, worst trace distance {worst:.2e}", terms.len());
}
