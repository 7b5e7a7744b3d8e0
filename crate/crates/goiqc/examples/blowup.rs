//! Circuit size along a chain of measurement-controlled conditionals:
//! asynchronous compilation duplicates the rest of the program into both
//! branches, synchronous compilation does not.

use goiqc::corpus::conditional_chain;
use goiqc::pipeline::{compile, CompileOptions};
use goiqc::tokenmachine::Mode;
use goiqc::typing::infer;

fn main() {
    println!("{:>2} {:>8} {:>8}", "n", "async", "sync");
    for n in 1..=6 {
        let d = infer(&conditional_chain(n), &Default::default()).unwrap();
        let size = |mode| compile(&d, &CompileOptions { mode, ..Default::default() }).unwrap().flat.size();
        println!("{n:>2} {:>8} {:>8}", size(Mode::AsyncOnly), size(Mode::SyncFirst));
    }
}
