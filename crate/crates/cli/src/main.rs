use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use qbmsym::assembly::{analyze, SymmetryGroupReport};
use qbmsym::equations::{counting_convention, generate_equations, reference_total, Tag};
use qbmsym::machine::{parse_spec, MachineSpec};
use qbmsym::pauli::{label_matrix, PauliLabel};
use qbmsym::solver::{sweep, zero_batch, Branch, SolverConfig};
use qbmsym::verifier::{
    check_solution_degeneracy, check_target_equivalence, minimize_sm, parse_density_matrix, OptConfig,
};
use qbmsym::{fixtures, Error};

#[derive(Parser)]
#[command(name = "qbmsym", version, about = "Symmetry analysis of quantum Boltzmann machines")]
struct Cli {
    /// Worker threads for parallel restarts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Output {
    /// Print the structured report instead of text.
    #[arg(long)]
    json: bool,
    /// Directory receiving report.txt, report.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Determine the symmetry group of a machine.
    Analyze {
        /// Machine file, or the name of a bundled machine.
        spec: String,
        #[command(flatten)]
        output: Output,
    },
    /// Random-restart solve of the basic equations on the visible subsystem.
    Solve {
        spec: String,
        /// Total runs (default 1000, or 20 per zero-pattern combination).
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long = "max-iter", default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value = "auto")]
        branch: String,
        #[command(flatten)]
        output: Output,
    },
    /// Dump the basic equations of the visible subsystem with per-tag counts.
    Equations {
        spec: String,
        #[command(flatten)]
        output: Output,
    },
    /// Check a symmetry element against a target state.
    Verify {
        spec: String,
        /// Target density matrix file.
        #[arg(long)]
        target: PathBuf,
        /// Element index, element name, or a Pauli label on the visible qubits.
        #[arg(long)]
        element: String,
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Check {
    Equivalence,
    Degeneracy,
}

enum Failure {
    Internal(String),
    Input(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) | Error::Parse { .. } | Error::LengthMismatch { .. } | Error::Resource { .. } => {
                Failure::Input(e.to_string())
            }
            Error::Precondition(_) => Failure::Verification(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

/// A finished command: text and structured reports, plus whether the
/// verification it performed passed.
struct Report {
    text: String,
    json: Value,
    config: Value,
    passed: bool,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    spec: &'a str,
    config: &'a Value,
    seed: Option<u64>,
    version: &'static str,
    wall_time_seconds: f64,
    outputs: Vec<String>,
}

fn load_spec(arg: &str) -> Result<MachineSpec, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{arg}: {e}")))?;
        return parse_spec(&text).map_err(|e| Failure::Input(format!("{arg}: {e}")));
    }
    if fixtures::document(arg).is_some() {
        return Ok(fixtures::load(arg)?);
    }
    Err(Failure::Input(format!("{arg}: no such file or bundled machine")))
}

fn cmd_analyze(spec: &MachineSpec) -> Result<Report, Failure> {
    let report = analyze(spec)?;
    Ok(Report {
        text: report.to_string(),
        json: report.to_json(),
        config: json!({}),
        passed: true,
    })
}

fn cmd_solve(spec: &MachineSpec, mut cfg: SolverConfig, restarts: Option<usize>) -> Result<Report, Failure> {
    let report = analyze(spec)?;
    let sub = &report.visible;
    let sys = generate_equations(&sub.terms, &sub.generators)?;
    cfg.restarts = match restarts {
        Some(0) => return Err(Failure::Input("--restarts must be at least 1".into())),
        Some(r) => r,
        None if cfg.effective_branch(sub.n) == Branch::ZeroPattern => {
            cfg.restarts_per_combination * zero_batch(&sys, &cfg)?.combinations.len()
        }
        None => cfg.restarts,
    };
    let set = sweep(&sys, sub, &cfg)?;
    let mut text = format!(
        "machine {} visible subsystem: {} generators x {} terms, {} equations, {} runs\n",
        spec.name,
        sys.rows,
        sys.cols,
        sys.len(),
        cfg.restarts
    );
    text.push_str(&set.to_string());
    let clean = set.unclassified().next().is_none();
    Ok(Report {
        text,
        json: json!({
            "machine": spec.name,
            "subsystem": "visible",
            "equations": sys.len(),
            "solutions": set.to_json(),
        }),
        config: serde_json::to_value(&cfg).expect("config serializes"),
        passed: clean,
    })
}

fn cmd_equations(spec: &MachineSpec) -> Result<Report, Failure> {
    let report = analyze(spec)?;
    let sub = &report.visible;
    let sys = generate_equations(&sub.terms, &sub.generators)?;
    let mut text = sys.to_text();
    let reference = reference_total(&spec.name);
    let mut comparison = json!(null);
    if let Some(expected) = reference {
        let total = sys.len();
        if total == expected {
            text.push_str(&format!("# reference total: {expected} (match)\n"));
        } else {
            text.push_str(&format!(
                "# reference total: {expected} (deviation {:+}); counting convention per tag:\n",
                total as i64 - expected as i64
            ));
            for tag in Tag::ALL {
                text.push_str(&format!("#   {}: {}\n", tag.name(), counting_convention(tag)));
            }
        }
        let conventions: serde_json::Map<String, Value> = Tag::ALL
            .iter()
            .map(|t| (t.name().to_string(), json!(counting_convention(*t))))
            .collect();
        comparison = json!({
            "reference_total": expected,
            "deviation": total as i64 - expected as i64,
            "conventions": conventions,
        });
    }
    let mut doc = sys.to_json();
    doc["machine"] = json!(spec.name);
    doc["comparison"] = comparison;
    Ok(Report {
        text,
        json: doc,
        config: json!({}),
        passed: true,
    })
}

/// Visible and hidden unitaries of the selected element.
fn resolve_element(
    report: &SymmetryGroupReport,
    arg: &str,
) -> Result<(String, DMatrix<Complex64>, Option<DMatrix<Complex64>>), Failure> {
    let k = match arg.parse::<usize>() {
        Ok(k) if k < report.order() => Some(k),
        Ok(k) => {
            return Err(Failure::Input(format!(
                "element index {k} out of range (group has {} elements)",
                report.order()
            )))
        }
        Err(_) => report.names().iter().position(|n| *n == arg),
    };
    if let Some(k) = k {
        let pair = &report.discrete_pairs[k];
        let uv = report.visible.unitary(pair.visible)?;
        let uh = match (&report.hidden, pair.hidden) {
            (Some(h), Some(j)) => Some(h.unitary(j)?),
            _ => None,
        };
        return Ok((pair.name.clone(), uv, uh));
    }
    match arg.parse::<PauliLabel>() {
        Ok(l) if l.n() == report.n_visible => Ok((arg.to_string(), label_matrix(&l)?, None)),
        _ => Err(Failure::Input(format!(
            "unknown element {arg:?}: expected an index, one of {:?}, or a {}-qubit Pauli label",
            report.names(),
            report.n_visible
        ))),
    }
}

fn cmd_verify(spec: &MachineSpec, target: &Path, element: &str, check: Check, seed: u64) -> Result<Report, Failure> {
    let text = fs::read_to_string(target).map_err(|e| Failure::Input(format!("{}: {e}", target.display())))?;
    let rho = parse_density_matrix(&text)?;
    if rho.qubits() != spec.n_visible {
        return Err(Failure::Input(format!(
            "target acts on {} qubits, machine has {} visible qubits",
            rho.qubits(),
            spec.n_visible
        )));
    }
    let report = analyze(spec)?;
    let (name, uv, uh) = resolve_element(&report, element)?;
    let opt = OptConfig { seed, ..OptConfig::default() };
    let config = json!({ "check": check, "element": name, "optimizer": opt });
    match check {
        Check::Equivalence => {
            let r = check_target_equivalence(spec, &rho, &uv, &opt)?;
            let text = format!(
                "element {name}\nS_m(target) = {:.12e}{}\nS_m(U target U^dag) = {:.12e}{}\ndifference {:.3e}\n{}\n",
                r.original.value,
                boundary_note(r.original.boundary),
                r.transformed.value,
                boundary_note(r.transformed.boundary),
                r.difference,
                verdict(r.passed)
            );
            Ok(Report {
                text,
                passed: r.passed,
                json: serde_json::to_value(&r).expect("report serializes"),
                config,
            })
        }
        Check::Degeneracy => {
            let fixed = rho.conjugate(&uv)?.distance(&rho);
            if fixed > 1e-8 {
                return Err(Failure::Verification(format!(
                    "precondition failed: element {name} does not fix the target (max entry change {fixed:.3e})"
                )));
            }
            let best = minimize_sm(spec, &rho, &opt)?;
            let r = check_solution_degeneracy(spec, &rho, &best.a, &uv, uh.as_ref())?;
            let fmt_vec = |v: &[f64]| v.iter().map(|x| format!("{x:+.9}")).collect::<Vec<_>>().join(" ");
            let text = format!(
                "element {name}\na*  = {}\na*' = {}\nS_m(a*) = {:.12e}{}\nS_m(a*') = {:.12e}\ndifference {:.3e}, span residual {:.3e}\n{}\n",
                fmt_vec(&r.a_star),
                fmt_vec(&r.a_prime),
                r.value,
                boundary_note(best.boundary),
                r.value_prime,
                r.difference,
                r.span_residual,
                verdict(r.passed)
            );
            Ok(Report {
                text,
                passed: r.passed,
                json: json!({ "optimum": best, "degeneracy": r }),
                config,
            })
        }
    }
}

fn boundary_note(boundary: bool) -> &'static str {
    if boundary {
        " (parameter cap reached)"
    } else {
        ""
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write_outputs(
    dir: &Path,
    report: &Report,
    command: &str,
    spec: &str,
    seed: Option<u64>,
    started: Instant,
) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let text_path = dir.join("report.txt");
    let json_path = dir.join("report.json");
    let manifest_path = dir.join("manifest.json");
    fs::write(&text_path, &report.text)?;
    fs::write(&json_path, pretty(&report.json))?;
    let manifest = RunManifest {
        command,
        spec,
        config: &report.config,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: [&text_path, &json_path, &manifest_path]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    let manifest = serde_json::to_value(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, pretty(&manifest))?;
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let started = Instant::now();
    let (name, spec_arg, seed, output, result) = match cli.command {
        Command::Analyze { spec, output } => {
            let result = load_spec(&spec).and_then(|s| cmd_analyze(&s));
            ("analyze", spec, None, output, result)
        }
        Command::Solve {
            spec,
            restarts,
            seed,
            tolerance,
            max_iter,
            branch,
            output,
        } => {
            let result = (|| {
                let branch: Branch = branch.parse()?;
                let cfg = SolverConfig {
                    seed,
                    tolerance,
                    max_iterations: max_iter,
                    branch,
                    ..SolverConfig::default()
                };
                cfg.validate()?;
                let machine = load_spec(&spec)?;
                cmd_solve(&machine, cfg, restarts)
            })();
            ("solve", spec, Some(seed), output, result)
        }
        Command::Equations { spec, output } => {
            let result = load_spec(&spec).and_then(|s| cmd_equations(&s));
            ("equations", spec, None, output, result)
        }
        Command::Verify {
            spec,
            target,
            element,
            check,
            seed,
            output,
        } => {
            let result = load_spec(&spec).and_then(|s| cmd_verify(&s, &target, &element, check, seed));
            ("verify", spec, Some(seed), output, result)
        }
    };
    let report = result?;
    if output.json {
        print!("{}", pretty(&report.json));
    } else {
        print!("{}", report.text);
    }
    if let Some(dir) = &output.out {
        write_outputs(dir, &report, name, &spec_arg, seed, started)?;
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(Failure::Input("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(Failure::Internal(e.to_string())),
        },
        None => run(cli),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
