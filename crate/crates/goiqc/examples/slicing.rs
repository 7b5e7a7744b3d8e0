//! Slices of a circuit, one per branch choice and measurement outcome, sum
//! to the whole circuit.

use goiqc::circuit::serialize;
use goiqc::corpus::random_ite_closed;
use goiqc::cpm::{interp_circuit, map_distance, slice_interp, CpmMap};
use goiqc::extcircuit::circuit_super_addresses;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (c, env) = random_ite_closed(&mut rng, 2, 2, true);
    print!("{}", serialize(&c));
    let addrs = circuit_super_addresses(&c);
    let slices: Vec<CpmMap> = addrs.iter().map(|s| slice_interp(&c, &env, s).unwrap()).collect();
    for s in &addrs {
        println!("slice {s}");
    }
    let sum = CpmMap::sum(&slices).unwrap();
    let d = map_distance(&sum, &interp_circuit(&c, &env).unwrap()).unwrap();
    println!("{} slices, distance of their sum to the circuit: {d:.2e}", slices.len());
}
