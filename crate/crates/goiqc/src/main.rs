use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use goiqc::circuit::parse_circuit;
use goiqc::cpm::{interp_circuit, StateJson};
use goiqc::pipeline::{analyze, check_source, compile, verify, CompileOptions, PipelineError, PipelineReport};
use goiqc::tokenmachine::{Mode, Scheduler};

#[derive(Parser)]
#[command(name = "goiqc", version, about = "Compile linear quantum lambda-terms to quantum circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Synchronous rule first, asynchronous fallback.
    Sync,
    Auto,
    Async,
    /// Synchronous rule only; fails on deadlock.
    SyncOnly,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Sync | ModeArg::Auto => Mode::SyncFirst,
            ModeArg::Async => Mode::AsyncOnly,
            ModeArg::SyncOnly => Mode::SyncOnly,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct CompileFlags {
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long)]
    eliminate_ite: bool,
    /// Reserved; the pipeline is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl CompileFlags {
    fn options(&self, trace: bool) -> CompileOptions {
        CompileOptions { mode: self.mode.into(), scheduler: Scheduler::Min, eliminate_ite: self.eliminate_ite, trace }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and type-check a term.
    Check {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the dependency graph in DOT and the synchronous verdict.
    Analyze {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Compile a term to a `.qc` circuit on standard output.
    Compile {
        file: PathBuf,
        #[command(flatten)]
        flags: CompileFlags,
        /// Print every machine step to standard error as a JSON line.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Apply a `.qc` circuit to a state given as JSON.
    Simulate { circuit: PathBuf, state: PathBuf },
    /// Compile and compare the circuit with the reference evaluator.
    Verify {
        file: Option<PathBuf>,
        /// Verify every `.lq` file in a directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[command(flatten)]
        flags: CompileFlags,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Include wall-clock time per stage in the report.
        #[arg(long)]
        timings: bool,
    },
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Failure {
        if e.exit_code() == 2 {
            Failure::Internal(e.to_string())
        } else {
            Failure::User(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::User(format!("{}: {e}", path.display())))
}

fn json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode, Failure> {
    match cmd {
        Command::Check { file, format } => {
            let t = check_source(&read(&file)?)?;
            match format {
                Format::Text => println!("ok: {}", t.ty()),
                Format::Json => println!("{}", json(&serde_json::json!({ "typing": "ok", "type": t.ty().to_string() }))),
            }
        }
        Command::Analyze { file, format } => {
            let t = check_source(&read(&file)?)?;
            let a = analyze(&t.derivation);
            match format {
                Format::Text => println!("{}{}", a.dot, a.verdict),
                Format::Json => println!("{}", json(&a)),
            }
        }
        Command::Compile { file, flags, trace, format } => {
            let t = check_source(&read(&file)?)?;
            let c = compile(&t.derivation, &flags.options(trace))?;
            for ev in &c.trace {
                eprintln!("{}", serde_json::to_string(ev).expect("events serialize"));
            }
            match format {
                Format::Text => print!("{}", c.to_qc()),
                Format::Json => println!("{}", json(&c.circuit())),
            }
        }
        Command::Simulate { circuit, state } => {
            let c = parse_circuit(&read(&circuit)?).map_err(|e| Failure::User(e.to_string()))?;
            let s: StateJson = serde_json::from_str(&read(&state)?).map_err(|e| Failure::User(format!("state: {e}")))?;
            let s = s.into_state().map_err(|e| Failure::User(e.to_string()))?;
            let map = interp_circuit(&c, &s.env()).map_err(|e| Failure::User(e.to_string()))?;
            println!("{}", json(&StateJson::from(&map.apply(&s))));
        }
        Command::Verify { file, dir, flags, tol, format, timings } => {
            let opts = flags.options(false);
            let files = match (file, dir) {
                (Some(f), None) => vec![f],
                (None, Some(d)) => lq_files(&d)?,
                _ => return Err(Failure::User("give exactly one of FILE or --dir".into())),
            };
            let results: Vec<(PathBuf, Result<PipelineReport, Failure>)> = files
                .into_par_iter()
                .map(|f| {
                    let r = read(&f).and_then(|src| verify(&src, &opts, tol, timings).map_err(Failure::from));
                    (f, r)
                })
                .collect();
            return Ok(report(results, format));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn lq_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let rd = std::fs::read_dir(dir).map_err(|e| Failure::User(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> =
        rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "lq")).collect();
    files.sort();
    Ok(files)
}

fn report(results: Vec<(PathBuf, Result<PipelineReport, Failure>)>, format: Format) -> ExitCode {
    let mut code = 0u8;
    let mut entries = Vec::new();
    for (path, r) in results {
        let name = path.display().to_string();
        match r {
            Ok(rep) => {
                let v = rep.verification.as_ref().expect("verify fills the verification");
                if !v.passed {
                    code = code.max(1);
                }
                if format == Format::Text {
                    println!("{name}: {} / {} / {}", rep.typing, rep.graph, rep.mode);
                    if let Some(s) = &rep.sizes {
                        let elim = s.eliminated.map_or(String::new(), |e| format!(", eliminated {e}"));
                        println!("  sizes: extended {}, flattened {}{elim}", s.extended, s.flattened);
                    }
                    println!("  operational: {}", show_dist(&v.distribution));
                    println!("  circuit:     {}", show_dist(&v.circuit_distribution));
                    println!(
                        "  max trace distance {:.3e} over {} input(s): {}",
                        v.max_trace_distance,
                        v.inputs,
                        if v.passed { "PASS" } else { "FAIL" }
                    );
                    if let Some(t) = &rep.timings_ms {
                        let parts: Vec<String> = t.iter().map(|(k, ms)| format!("{k} {ms:.2}ms")).collect();
                        println!("  timings: {}", parts.join(", "));
                    }
                }
                entries.push(serde_json::json!({ "file": name, "report": rep }));
            }
            Err(Failure::User(m)) => {
                code = code.max(1);
                eprintln!("{name}: error: {m}");
                entries.push(serde_json::json!({ "file": name, "error": m }));
            }
            Err(Failure::Internal(m)) => {
                code = 2;
                eprintln!("{name}: internal error: {m}");
                entries.push(serde_json::json!({ "file": name, "error": m, "internal": true }));
            }
        }
    }
    if format == Format::Json {
        if entries.len() == 1 {
            println!("{}", json(&entries[0]));
        } else {
            println!("{}", json(&entries));
        }
    }
    ExitCode::from(code)
}

fn show_dist(d: &[(String, f64)]) -> String {
    d.iter().map(|(v, w)| format!("{v} ↦ {w:.6}")).collect::<Vec<_>>().join(", ")
}
