use goiqc::circuit::{parse_circuit, serialize, typecheck_circuit};
use goiqc::colorgraph::{color_infer, token_path_graph};
use goiqc::corpus::{random_ite_closed, term_corpus};
use goiqc::cpm::{interp_circuit, map_distance, slice_interp, CpmMap, CpmState};
use goiqc::extcircuit::circuit_super_addresses;
use goiqc::ite_elim::eliminate;
use goiqc::pipeline::{compile, CompileOptions};
use goiqc::syntax::{parse_term, pretty, Term};
use goiqc::tokenmachine::{run, MachineError, Mode, RunOptions, Scheduler};
use goiqc::typing::{infer, Derivation};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn term(seed: u64) -> Term {
    term_corpus(1, seed).pop().expect("the generator yields a term")
}

fn typed(seed: u64) -> Derivation {
    infer(&term(seed), &Default::default()).unwrap()
}

fn flat(d: &Derivation, mode: Mode, scheduler: Scheduler) -> goiqc::pipeline::Compiled {
    compile(d, &CompileOptions { mode, scheduler, ..Default::default() }).unwrap()
}

fn circuit(seed: u64) -> (goiqc::circuit::Circuit, goiqc::circuit::Env) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_ite_closed(&mut rng, 2, 3, seed.is_multiple_of(2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pretty_printing_round_trips(seed in any::<u64>()) {
        let t = term(seed);
        prop_assert_eq!(parse_term(&pretty(&t)).unwrap(), t);
    }

    #[test]
    fn circuit_text_round_trips(seed in any::<u64>()) {
        let (c, _) = circuit(seed);
        prop_assert_eq!(parse_circuit(&serialize(&c)).unwrap(), c);
    }

    #[test]
    fn circuits_preserve_trace(seed in any::<u64>(), probe in 0usize..64) {
        let (c, env) = circuit(seed);
        let map = interp_circuit(&c, &env).unwrap();
        let mut s = CpmState::zero(&env);
        let d = s.dim();
        let blk = probe % s.blocks.len();
        let i = (probe / s.blocks.len()) % d;
        s.blocks[blk][i * d + i] = Complex64::new(1.0, 0.0);
        prop_assert!((map.apply(&s).trace().re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn modes_compile_to_the_same_map(seed in any::<u64>()) {
        let d = typed(seed);
        let a = flat(&d, Mode::AsyncOnly, Scheduler::Min);
        let s = flat(&d, Mode::SyncFirst, Scheduler::Min);
        prop_assert_eq!(&a.output, &s.output);
        let fa = interp_circuit(a.circuit(), &a.input).unwrap();
        let fs = interp_circuit(s.circuit(), &s.input).unwrap();
        prop_assert!(map_distance(&fa, &fs).unwrap() <= 1e-9);
    }

    #[test]
    fn schedulers_compile_to_the_same_map(seed in any::<u64>()) {
        let d = typed(seed);
        let lo = flat(&d, Mode::SyncFirst, Scheduler::Min);
        let hi = flat(&d, Mode::SyncFirst, Scheduler::Max);
        let f = interp_circuit(lo.circuit(), &lo.input).unwrap();
        let g = interp_circuit(hi.circuit(), &hi.input).unwrap();
        prop_assert!(map_distance(&f, &g).unwrap() <= 1e-9);
    }

    #[test]
    fn deadlock_iff_cyclic(seed in any::<u64>()) {
        let d = typed(seed);
        let cyclic = !color_infer(&d).1.is_acyclic();
        let res = run(&d, &RunOptions::mode(Mode::SyncOnly));
        prop_assert_eq!(matches!(res, Err(MachineError::Deadlock { .. })), cyclic);
        if !cyclic {
            prop_assert!(res.is_ok());
        }
    }

    #[test]
    fn colored_graph_matches_token_paths(seed in any::<u64>()) {
        let d = typed(seed);
        prop_assert_eq!(color_infer(&d).1, token_path_graph(&d));
    }

    #[test]
    fn elimination_preserves_the_map(seed in any::<u64>()) {
        let (c, env) = circuit(seed);
        let p = eliminate(&c, &env).unwrap();
        prop_assert!(!p.has_ite());
        prop_assert_eq!(typecheck_circuit(&p, &env).unwrap(), typecheck_circuit(&c, &env).unwrap());
        let dist = map_distance(&interp_circuit(&c, &env).unwrap(), &interp_circuit(&p, &env).unwrap()).unwrap();
        prop_assert!(dist <= 1e-9);
    }

    #[test]
    fn slices_sum_to_the_circuit(seed in any::<u64>()) {
        let (c, env) = circuit(seed);
        let slices: Vec<CpmMap> = circuit_super_addresses(&c).iter().map(|s| slice_interp(&c, &env, s).unwrap()).collect();
        let sum = CpmMap::sum(&slices).unwrap();
        prop_assert!(map_distance(&sum, &interp_circuit(&c, &env).unwrap()).unwrap() <= 1e-9);
    }
}
