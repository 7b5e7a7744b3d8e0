//! Turn a circuit with classical conditionals into a plain one built from
//! controlled swaps, and check that both denote the same map.

use goiqc::circuit::{env_of, parse_circuit, serialize, BaseType};
use goiqc::cpm::{interp_circuit, map_distance};
use goiqc::ite_elim::eliminate;

const SRC: &str = "\
H q -> q
# meas-index 0
meas q -> m
if m {
  X p -> p
} else {
  H p -> p
  S p -> p
}
";

fn main() {
    let c = parse_circuit(SRC).unwrap();
    let env = env_of(&[("q", BaseType::Qbit), ("p", BaseType::Qbit)]);
    let plain = eliminate(&c, &env).unwrap();
    print!("{}", serialize(&plain));
    println!("sizes: {} -> {}", c.size(), plain.size());
    let d = map_distance(&interp_circuit(&c, &env).unwrap(), &interp_circuit(&plain, &env).unwrap()).unwrap();
    println!("largest distance on matrix units: {d:.2e}");
}
