//! One line per acceptance criterion. Exits non-zero when any fails.

use std::time::Instant;

use goiqc::colorgraph::{color_infer, token_path_graph};
use goiqc::corpus::{circuit_corpus, conditional_chain, count_const, count_ites, named, term_corpus, BELL, COIN};
use goiqc::cpm::{interp_circuit, map_distance, mix_dist, slice_interp, CpmMap, CpmState, QCRegister};
use goiqc::extcircuit::circuit_super_addresses;
use goiqc::ite_elim::eliminate;
use goiqc::pipeline::{check_against_closures, check_source, compile, verify, CompileOptions, Compiled, Typed};
use goiqc::refeval::run_circuit_pure;
use goiqc::syntax::{Program, Term};
use goiqc::tokenmachine::{run, MachineError, Mode, RunOptions, Scheduler};
use goiqc::typing::{infer, Derivation};
use num_complex::Complex64;
use rayon::prelude::*;

const TOL: f64 = 1e-9;
const CORPUS_TERMS: usize = 240;
const CORPUS_SEED: u64 = 2024;
const CIRCUITS: usize = 160;
const CIRCUIT_SEED: u64 = 77;
const GROWTH: f64 = 1.8;
/// Upper bound on the fitted slope of eliminated size against input size.
const MAX_ELIM_SLOPE: f64 = 16.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome, String> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn opts(mode: Mode, scheduler: Scheduler) -> CompileOptions {
    CompileOptions { mode, scheduler, ..Default::default() }
}

fn closed(t: &Term) -> Typed {
    Typed {
        derivation: infer(t, &Default::default()).expect("corpus terms are typed"),
        program: Program { context: Default::default(), term: t.clone() },
    }
}

fn corpus() -> Vec<Typed> {
    term_corpus(CORPUS_TERMS, CORPUS_SEED).iter().map(closed).collect()
}

fn semantics_distance(a: &Compiled, b: &Compiled) -> Result<f64, String> {
    if a.input != b.input || a.output != b.output {
        return Err("interfaces differ".into());
    }
    let f = interp_circuit(a.circuit(), &a.input).map_err(|e| e.to_string())?;
    let g = interp_circuit(b.circuit(), &b.input).map_err(|e| e.to_string())?;
    map_distance(&f, &g).map_err(|e| e.to_string())
}

/// Least-squares line through the points: (intercept, slope).
fn fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn c1_bell() -> Result<Outcome, String> {
    let t = check_source(BELL).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for mode in [Mode::AsyncOnly, Mode::SyncFirst, Mode::SyncOnly] {
        let c = compile(&t.derivation, &opts(mode, Scheduler::Min)).map_err(|e| e.to_string())?;
        let out = interp_circuit(c.circuit(), &c.input).map_err(|e| e.to_string())?.apply(&CpmState::unit());
        let mut want = CpmState::zero(&c.output);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            want.blocks[0][i * 4 + j] = Complex64::new(0.5, 0.0);
        }
        worst = worst.max(out.frobenius_distance(&want));
    }
    outcome(worst <= TOL, format!("max Frobenius error {worst:.2e} over 3 modes"))
}

fn c2_coin() -> Result<Outcome, String> {
    let r = verify(COIN, &CompileOptions::default(), TOL, false).map_err(|e| e.to_string())?;
    let v = r.verification.ok_or("no verification")?;
    let weight = |name: &str| v.distribution.iter().find(|(n, _)| n == name).map_or(0.0, |(_, w)| *w);
    let fair = v.distribution.len() == 2 && (weight("tt") - 0.5).abs() <= TOL && (weight("ff") - 0.5).abs() <= TOL;
    outcome(
        fair && v.max_trace_distance <= TOL,
        format!("tt {:.6}, ff {:.6}, trace distance {:.2e}", weight("tt"), weight("ff"), v.max_trace_distance),
    )
}

fn c3_soundness(terms: &[Typed]) -> Result<Outcome, String> {
    let within = terms.iter().all(|t| count_const(&t.program.term, "meas") <= 3 && count_ites(&t.program.term) <= 2);
    let boolean = terms.iter().all(|t| t.ty().is_boolean());
    let worst = terms
        .par_iter()
        .map(|t| {
            let mut w: f64 = 0.0;
            for mode in [Mode::SyncFirst, Mode::AsyncOnly] {
                let c = compile(&t.derivation, &opts(mode, Scheduler::Min)).map_err(|e| e.to_string())?;
                w = w.max(check_against_closures(t, &c).map_err(|e| e.to_string())?.0.max_trace_distance);
            }
            Ok(w)
        })
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    outcome(
        within && boolean && terms.len() >= 200 && worst <= TOL,
        format!("{} terms, 2 modes, max trace distance {worst:.2e}", terms.len()),
    )
}

fn c4_elimination(terms: &[Typed]) -> Result<Outcome, String> {
    let mut circuits = circuit_corpus(CIRCUITS, CIRCUIT_SEED);
    for t in terms {
        let c = compile(&t.derivation, &opts(Mode::AsyncOnly, Scheduler::Min)).map_err(|e| e.to_string())?;
        if c.flat.has_ite() {
            circuits.push((c.flat, c.input));
        }
    }
    let rows = circuits
        .par_iter()
        .map(|(c, env)| {
            let p = eliminate(c, env).map_err(|e| e.to_string())?;
            let f = interp_circuit(c, env).map_err(|e| e.to_string())?;
            let d = if env.is_empty() {
                // a closed map is its image of the unit; the eliminated
                // circuit is too wide for density matrices, so it runs on
                // pure states
                let got = run_circuit_pure(&p, &QCRegister::empty()).map_err(|e| e.to_string())?;
                let got = mix_dist(&got.items).map_err(|e| e.to_string())?;
                f.apply(&CpmState::unit()).trace_distance(&got)
            } else {
                let g = interp_circuit(&p, env).map_err(|e| e.to_string())?;
                map_distance(&f, &g).map_err(|e| e.to_string())?
            };
            Ok((c.size() as f64, p.size() as f64, !p.has_ite(), d))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let (_, b) = fit(&points);
    // the intercept is lifted so the line bounds every point
    let a = points.iter().map(|(x, y)| y - b * x).fold(f64::MIN, f64::max);
    let ite_free = rows.iter().all(|r| r.2);
    let worst = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    outcome(
        ite_free && worst <= TOL && b <= MAX_ELIM_SLOPE,
        format!("{} circuits, max map distance {worst:.2e}, size <= {a:.1} + {b:.3} * input", rows.len()),
    )
}

fn c5_slicing() -> Result<Outcome, String> {
    let circuits = circuit_corpus(CIRCUITS, CIRCUIT_SEED + 1);
    let worst = circuits
        .par_iter()
        .map(|(c, env)| {
            let slices = circuit_super_addresses(c)
                .iter()
                .map(|s| slice_interp(c, env, s))
                .collect::<Result<Vec<CpmMap>, _>>()
                .map_err(|e| e.to_string())?;
            let sum = CpmMap::sum(&slices).ok_or("no slices")?;
            map_distance(&sum, &interp_circuit(c, env).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    outcome(worst <= TOL, format!("{} circuits, max distance {worst:.2e}", circuits.len()))
}

fn c6_deadlock(terms: &[Typed]) -> Result<Outcome, String> {
    let named: Vec<(&str, Derivation)> =
        named().into_iter().map(|(n, p)| (n, infer(&p.term, &p.context).expect("named terms are typed"))).collect();
    let agree = |d: &Derivation| -> Result<(bool, bool), String> {
        let cyclic = !color_infer(d).1.is_acyclic();
        match run(d, &RunOptions::mode(Mode::SyncOnly)) {
            Ok(_) => Ok((cyclic, !cyclic)),
            Err(MachineError::Deadlock { .. }) => Ok((cyclic, cyclic)),
            Err(e) => Err(e.to_string()),
        }
    };
    let mut mismatches = 0;
    let mut cyclic = 0;
    for d in terms.iter().map(|t| &t.derivation).chain(named.iter().map(|(_, d)| d)) {
        let (c, ok) = agree(d)?;
        cyclic += usize::from(c);
        mismatches += usize::from(!ok);
    }
    let is_cyclic = |name: &str| named.iter().any(|(n, d)| *n == name && !color_infer(d).1.is_acyclic());
    let ruw = &named.iter().find(|(n, _)| *n == "ruw").ok_or("no ruw")?.1;
    let g = color_infer(ruw).1;
    let one_two_one = g.edges.contains(&(1, 2)) && g.edges.contains(&(2, 1));
    outcome(
        mismatches == 0 && is_cyclic("ruw") && is_cyclic("pq") && one_two_one,
        format!(
            "{} derivations, {cyclic} cyclic, {mismatches} mismatches; RUW cyclic {}, PQ cyclic {}, RUW has 1→2→1 {one_two_one}",
            terms.len() + named.len(),
            is_cyclic("ruw"),
            is_cyclic("pq")
        ),
    )
}

fn c7_graphs(terms: &[Typed]) -> Result<Outcome, String> {
    let mut ds: Vec<Derivation> = terms.iter().map(|t| t.derivation.clone()).collect();
    ds.extend(named().into_iter().map(|(_, p)| infer(&p.term, &p.context).expect("typed")));
    let differ = ds.par_iter().filter(|d| color_infer(d).1 != token_path_graph(d)).count();
    outcome(differ == 0, format!("{} derivations, {differ} differ", ds.len()))
}

fn c8_blowup() -> Result<Outcome, String> {
    let mut sizes = Vec::new();
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        let d = infer(&conditional_chain(n), &Default::default()).map_err(|e| e.to_string())?;
        let a = compile(&d, &opts(Mode::AsyncOnly, Scheduler::Min)).map_err(|e| e.to_string())?;
        let s = compile(&d, &opts(Mode::SyncFirst, Scheduler::Min)).map_err(|e| e.to_string())?;
        worst = worst.max(semantics_distance(&a, &s)?);
        sizes.push((n as f64, a.flat.size() as f64, s.flat.size() as f64));
    }
    let min_ratio = sizes.windows(2).map(|w| w[1].1 / w[0].1).fold(f64::MAX, f64::min);
    let steps: Vec<f64> = sizes.windows(2).map(|w| w[1].2 - w[0].2).collect();
    let linear = steps.iter().all(|s| *s <= steps[0]);
    let (_, async_log_slope) = fit(&sizes.iter().map(|(n, a, _)| (*n, a.ln())).collect::<Vec<_>>());
    let (_, sync_slope) = fit(&sizes.iter().map(|(n, _, s)| (*n, *s)).collect::<Vec<_>>());
    let shown: Vec<String> = sizes.iter().map(|(_, a, s)| format!("{a}/{s}")).collect();
    outcome(
        min_ratio >= GROWTH && linear && worst <= TOL,
        format!(
            "async/sync sizes {}; min async ratio {min_ratio:.2}, async growth e^{async_log_slope:.3}={:.2}/level, sync slope {sync_slope:.2}, max map distance {worst:.2e}",
            shown.join(" "),
            async_log_slope.exp()
        ),
    )
}

fn c9_confluence(terms: &[Typed]) -> Result<Outcome, String> {
    let worst = terms
        .par_iter()
        .map(|t| {
            let mut w: f64 = 0.0;
            for mode in [Mode::SyncFirst, Mode::AsyncOnly] {
                let lo = compile(&t.derivation, &opts(mode, Scheduler::Min)).map_err(|e| e.to_string())?;
                let hi = compile(&t.derivation, &opts(mode, Scheduler::Max)).map_err(|e| e.to_string())?;
                w = w.max(semantics_distance(&lo, &hi)?);
            }
            Ok(w)
        })
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    outcome(worst <= TOL, format!("{} terms, 2 modes, max map distance {worst:.2e}", terms.len()))
}

fn main() {
    let terms = corpus();
    type Check<'a> = Box<dyn Fn() -> Result<Outcome, String> + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("Bell state", Box::new(c1_bell)),
        ("coin flip", Box::new(c2_coin)),
        ("soundness sweep", Box::new(|| c3_soundness(&terms))),
        ("ite elimination", Box::new(|| c4_elimination(&terms))),
        ("slicing identity", Box::new(c5_slicing)),
        ("deadlock prediction", Box::new(|| c6_deadlock(&terms))),
        ("graph equality", Box::new(|| c7_graphs(&terms))),
        ("blow-up", Box::new(c8_blowup)),
        ("confluence", Box::new(|| c9_confluence(&terms))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        let secs = t0.elapsed().as_secs_f64();
        println!("criterion {}: {} {name}: {detail} ({secs:.1}s)", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
