//! `aniso`: batch experiments on anisotropic integrands.
//!
//! Exit codes: 0 when the tested property holds, 1 when a counterexample or
//! violation is found, 2 on usage or input errors.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use aniso::currents::{make_test_pair_k1, verify_aue};
use aniso::polyconvexity::{
    bisect_upc_constant, certify_sampled, search_report, verify_report, ReportMode, SamplerParams,
    COUNTEREXAMPLE_THRESHOLD,
};
use aniso::qvalued::{make_graph_test_pair, sample_uqc, verify_uqc};
use aniso::rational_approx::approximate_decomposition;
use aniso::suite::{equivalence_suite, Verdict};
use aniso::{
    AffineMultigraph, ClassicalIntegrand, Decomposition, GeometricIntegrand, IntegrandSpec, OrientationMode,
    PiecewiseAffineQ, PolyhedralChain, QIntegrand, UpcReport,
};

use output::{emit, Format, Outcome};

#[derive(Parser, Debug)]
#[command(name = "aniso", version, about = "Uniform polyconvexity and ellipticity experiments")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the full JSON report here, plus CSV summary and metadata beside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format printed on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "ANISO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jensen-type checks on decompositions of k-vectors.
    #[command(subcommand)]
    Upc(UpcCmd),
    /// Exact rational approximation.
    #[command(subcommand)]
    Approx(ApproxCmd),
    /// Energies of polyhedral chains.
    #[command(subcommand)]
    Energy(EnergyCmd),
    /// Polyhedral test pairs.
    #[command(subcommand)]
    Testpair(TestpairCmd),
    /// Energies of Q-valued graphs.
    #[command(subcommand)]
    Qgraph(QgraphCmd),
    /// Q-graph ellipticity checks.
    #[command(subcommand)]
    Uqc(UqcCmd),
    /// Cross-checks between formulations.
    #[command(subcommand)]
    Suite(SuiteCmd),
}

#[derive(Args, Debug)]
struct IntegrandArg {
    /// Integrand file (`{"name", "params"}`) or a built-in name such as `area`.
    #[arg(long, default_value = "area")]
    integrand: String,
}

#[derive(Subcommand, Debug)]
enum UpcCmd {
    /// Evaluate the gap of one decomposition.
    Verify {
        #[command(flatten)]
        integrand: IntegrandArg,
        #[arg(long)]
        decomposition: PathBuf,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value = "any")]
        mode: OrientationMode,
    },
    /// Random search for a decomposition with negative gap.
    Search {
        #[command(flatten)]
        integrand: IntegrandArg,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value_t = 2)]
        d_min: usize,
        #[arg(long, default_value_t = 4)]
        d_max: usize,
        #[arg(long, default_value = "any")]
        mode: OrientationMode,
    },
    /// Sampled LP certificate.
    Certify {
        #[command(flatten)]
        integrand: IntegrandArg,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 50)]
        dirs: usize,
        #[arg(long, default_value_t = 200)]
        atoms: usize,
        #[arg(long, default_value = "any")]
        mode: OrientationMode,
    },
    /// Heuristic estimate of the largest certified constant.
    Bisect {
        #[command(flatten)]
        integrand: IntegrandArg,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 2.0)]
        hi: f64,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 20)]
        dirs: usize,
        #[arg(long, default_value_t = 100)]
        atoms: usize,
        #[arg(long, default_value = "any")]
        mode: OrientationMode,
    },
}

#[derive(Subcommand, Debug)]
enum ApproxCmd {
    /// Rational decomposition close to a positively oriented one.
    Rational {
        #[arg(long)]
        decomposition: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
}

#[derive(Subcommand, Debug)]
enum EnergyCmd {
    Polyhedral {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        integrand: IntegrandArg,
    },
}

#[derive(Subcommand, Debug)]
enum TestpairCmd {
    /// Energy gap of a pair of chains with equal boundaries.
    Check {
        #[arg(long = "S")]
        s: PathBuf,
        #[arg(long = "D")]
        d: PathBuf,
        #[arg(long)]
        c: f64,
        #[command(flatten)]
        integrand: IntegrandArg,
    },
    /// Build the polyline pair of a 1-vector decomposition.
    Make {
        #[arg(long)]
        decomposition: PathBuf,
        #[arg(long = "S-out")]
        s_out: PathBuf,
        #[arg(long = "D-out")]
        d_out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum QgraphCmd {
    Energy {
        #[arg(long)]
        f: PathBuf,
        #[command(flatten)]
        integrand: IntegrandArg,
    },
}

#[derive(Subcommand, Debug)]
enum UqcCmd {
    /// Gap of a Q-function against an affine multigraph with the same boundary.
    Verify {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        h: PathBuf,
        #[arg(long)]
        c: f64,
        #[command(flatten)]
        integrand: IntegrandArg,
        /// Require the boundary matching to hold at facet vertices too.
        #[arg(long)]
        strict: bool,
    },
    /// Gaps of random graph test pairs.
    Sample {
        #[arg(long = "Q", default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        lipschitz: f64,
        #[command(flatten)]
        integrand: IntegrandArg,
    },
}

#[derive(Subcommand, Debug)]
enum SuiteCmd {
    Equivalence {
        #[command(flatten)]
        integrand: IntegrandArg,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A path to an integrand file, inline JSON, or a bare built-in name.
fn load_integrand(arg: &IntegrandArg, n: usize, k: usize) -> Result<GeometricIntegrand> {
    let s = arg.integrand.trim();
    let spec: IntegrandSpec = if Path::new(s).is_file() {
        read_json(Path::new(s))?
    } else if s.starts_with('{') {
        serde_json::from_str(s).context("parsing inline integrand")?
    } else {
        IntegrandSpec { name: s.to_string(), params: Value::Null }
    };
    Ok(spec.build(n, k)?)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn upc_outcome(rep: UpcReport) -> Result<Outcome> {
    let violated = rep.mode == ReportMode::Counterexample;
    let summary = vec![
        ("property", rep.property.to_string()),
        ("integrand", rep.integrand.clone()),
        ("n", rep.n.to_string()),
        ("k", rep.k.to_string()),
        ("orientation_mode", serde_json::to_value(rep.orientation_mode)?.as_str().unwrap_or("").to_string()),
        ("mode", serde_json::to_value(rep.mode)?.as_str().unwrap_or("").to_string()),
        ("c", num(rep.c)),
        ("seed", rep.seed.map(|s| s.to_string()).unwrap_or_default()),
        ("worst_gap", num(rep.worst_gap)),
        ("samples", rep.sample_stats.samples.to_string()),
    ];
    let witness = rep.witness.as_ref().map(serde_json::to_value).transpose()?;
    Ok(Outcome { report: serde_json::to_value(&rep)?, summary, witness, violated })
}

fn gap_outcome(property: &str, integrand: &str, c: f64, gap: f64, extra: Value, witness: Value) -> Outcome {
    let violated = gap < COUNTEREXAMPLE_THRESHOLD;
    let mut report = json!({
        "property": property,
        "integrand": integrand,
        "c": c,
        "gap": gap,
        "violated": violated,
    });
    if let (Value::Object(r), Value::Object(e)) = (&mut report, extra) {
        r.extend(e);
    }
    let summary = vec![
        ("property", property.to_string()),
        ("integrand", integrand.to_string()),
        ("c", num(c)),
        ("gap", num(gap)),
        ("violated", violated.to_string()),
    ];
    Outcome { report, summary, witness: violated.then_some(witness), violated }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Upc(cmd) => match cmd {
            UpcCmd::Verify { integrand, decomposition, c, mode } => {
                let dec: Decomposition = read_json(decomposition)?;
                let psi = load_integrand(integrand, dec.dim(), dec.grade())?;
                upc_outcome(verify_report(&psi, *c, &dec, *mode)?)
            }
            UpcCmd::Search { integrand, n, k, c, budget, d_min, d_max, mode } => {
                let psi = load_integrand(integrand, *n, *k)?;
                if d_min > d_max || *d_min == 0 {
                    bail!("need 1 ≤ d-min ≤ d-max");
                }
                let params = SamplerParams { n: psi.dim(), k: psi.grade(), d_min: *d_min, d_max: *d_max, mode: *mode };
                upc_outcome(search_report(&psi, *c, *budget, &params, seed)?)
            }
            UpcCmd::Certify { integrand, n, k, c, dirs, atoms, mode } => {
                let psi = load_integrand(integrand, *n, *k)?;
                upc_outcome(certify_sampled(&psi, *c, *dirs, *atoms, seed, *mode)?)
            }
            UpcCmd::Bisect { integrand, n, k, lo, hi, iters, dirs, atoms, mode } => {
                let psi = load_integrand(integrand, *n, *k)?;
                let estimate = bisect_upc_constant(&psi, *lo, *hi, *iters, *dirs, *atoms, seed, *mode)?;
                let report = json!({
                    "property": "uniform_polyconvexity_constant",
                    "integrand": psi.name(),
                    "n": psi.dim(),
                    "k": psi.grade(),
                    "orientation_mode": mode,
                    "seed": seed,
                    "lo": lo,
                    "hi": hi,
                    "iterations": iters,
                    "n_dirs": dirs,
                    "n_atoms": atoms,
                    "estimate": estimate,
                    "caveat": "heuristic: each step is a sampled certificate",
                });
                let summary = vec![
                    ("property", "uniform_polyconvexity_constant".to_string()),
                    ("integrand", psi.name().to_string()),
                    ("n", psi.dim().to_string()),
                    ("k", psi.grade().to_string()),
                    ("seed", seed.to_string()),
                    ("estimate", num(estimate)),
                ];
                Ok(Outcome::holds(report, summary))
            }
        },
        Command::Approx(ApproxCmd::Rational { decomposition, eps }) => {
            let dec: Decomposition = read_json(decomposition)?;
            let rd = approximate_decomposition(&dec, *eps)?;
            let ledger = rd.verify(&dec, *eps);
            let holds = ledger.all_hold();
            let summary = vec![
                ("property", "rational_approximation".to_string()),
                ("n", dec.dim().to_string()),
                ("k", dec.grade().to_string()),
                ("eps", num(*eps)),
                ("d", dec.atoms().len().to_string()),
                ("N", rd.n_atoms.to_string()),
                ("eta0_distance", num(ledger.eta0_distance)),
                ("atom_bound_ratio", num(ledger.atom_bound_ratio)),
                ("all_bounds_hold", holds.to_string()),
            ];
            let report = serde_json::to_value(&rd)?;
            Ok(Outcome { witness: (!holds).then(|| report.clone()), report, summary, violated: !holds })
        }
        Command::Energy(EnergyCmd::Polyhedral { chain, integrand }) => {
            let chain: PolyhedralChain = read_json(chain)?;
            let psi = load_integrand(integrand, chain.dim(), chain.grade())?;
            let energy = chain.energy(&psi)?;
            let via = chain.energy_via_gaussian_image(&psi)?;
            let mass = chain.mass();
            let report = json!({
                "property": "polyhedral_energy",
                "integrand": psi.name(),
                "n": chain.dim(),
                "k": chain.grade(),
                "cells": chain.cells().len(),
                "energy": energy,
                "energy_via_gaussian_image": via,
                "mass": mass,
            });
            let summary = vec![
                ("property", "polyhedral_energy".to_string()),
                ("integrand", psi.name().to_string()),
                ("cells", chain.cells().len().to_string()),
                ("energy", num(energy)),
                ("mass", num(mass)),
            ];
            Ok(Outcome::holds(report, summary))
        }
        Command::Testpair(TestpairCmd::Check { s, d, c, integrand }) => {
            let s_chain: PolyhedralChain = read_json(s)?;
            let d_chain: PolyhedralChain = read_json(d)?;
            let psi = load_integrand(integrand, s_chain.dim(), s_chain.grade())?;
            let gap = verify_aue(&psi, *c, &s_chain, &d_chain)?;
            let extra = json!({
                "n": s_chain.dim(),
                "k": s_chain.grade(),
                "mass_S": s_chain.mass(),
                "mass_D": d_chain.mass(),
            });
            let witness = json!({ "S": s_chain, "D": d_chain });
            Ok(gap_outcome("polyhedral_test_pair", psi.name(), *c, gap, extra, witness))
        }
        Command::Testpair(TestpairCmd::Make { decomposition, s_out, d_out }) => {
            let dec: Decomposition = read_json(decomposition)?;
            let (s, d) = make_test_pair_k1(&dec)?;
            fs::write(s_out, output::json_text(&serde_json::to_value(&s)?)?)?;
            fs::write(d_out, output::json_text(&serde_json::to_value(&d)?)?)?;
            let report = json!({
                "property": "polyhedral_test_pair",
                "S": s_out,
                "D": d_out,
                "mass_S": s.mass(),
                "mass_D": d.mass(),
            });
            let summary = vec![("S", s_out.display().to_string()), ("D", d_out.display().to_string())];
            Ok(Outcome::holds(report, summary))
        }
        Command::Qgraph(QgraphCmd::Energy { f, integrand }) => {
            let f: PiecewiseAffineQ = read_json(f)?;
            let psi = load_integrand(integrand, f.k() + f.m(), f.k())?;
            let fq = QIntegrand::new(f.q(), ClassicalIntegrand::new(psi.clone()))?;
            let energy = f.q_energy(&fq)?;
            let via = f.q_energy_via_graph(&fq)?;
            let mass = f.area_formula_mass();
            let graph_mass = f.graph_current()?.mass();
            let report = json!({
                "property": "q_graph_energy",
                "integrand": psi.name(),
                "k": f.k(),
                "m": f.m(),
                "Q": f.q(),
                "level": f.level(),
                "q_energy": energy,
                "q_energy_via_graph": via,
                "area_formula_mass": mass,
                "graph_mass": graph_mass,
            });
            let summary = vec![
                ("property", "q_graph_energy".to_string()),
                ("integrand", psi.name().to_string()),
                ("Q", f.q().to_string()),
                ("q_energy", num(energy)),
                ("q_energy_via_graph", num(via)),
                ("area_formula_mass", num(mass)),
            ];
            Ok(Outcome::holds(report, summary))
        }
        Command::Uqc(UqcCmd::Verify { f, h, c, integrand, strict }) => {
            let f: PiecewiseAffineQ = read_json(f)?;
            let h: AffineMultigraph = read_json(h)?;
            let psi = load_integrand(integrand, f.k() + f.m(), f.k())?;
            let pair = make_graph_test_pair(&f, &h, *strict)?;
            let fq = QIntegrand::new(f.q(), ClassicalIntegrand::new(psi.clone()))?;
            let gap = verify_uqc(&fq, *c, &pair)?;
            let extra = json!({
                "k": f.k(),
                "m": f.m(),
                "Q": f.q(),
                "strict": strict,
                "mass_f": pair.f.area_formula_mass(),
                "mass_h": pair.h_pa.area_formula_mass(),
            });
            let witness = json!({ "f": pair.f, "h": pair.h_pa });
            Ok(gap_outcome("uniform_q_ellipticity", psi.name(), *c, gap, extra, witness))
        }
        Command::Uqc(UqcCmd::Sample { q, level, trials, k, m, c, lipschitz, integrand }) => {
            let psi = load_integrand(integrand, k + m, *k)?;
            let samples = sample_uqc(&psi, *c, *k, *q, *level, *trials, *lipschitz, seed)?;
            let negative: Vec<_> = samples.iter().filter(|s| s.gap < COUNTEREXAMPLE_THRESHOLD).collect();
            let min_gap = samples.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
            let violated = !negative.is_empty();
            let worst = samples.iter().min_by(|a, b| a.gap.total_cmp(&b.gap).then(a.trial.cmp(&b.trial)));
            let report = json!({
                "property": "uniform_q_ellipticity",
                "integrand": psi.name(),
                "k": k,
                "m": m,
                "Q_max": q,
                "level": level,
                "c": c,
                "lipschitz": lipschitz,
                "seed": seed,
                "trials": trials,
                "min_gap": min_gap,
                "negative": negative.len(),
                "violated": violated,
                "caveat": "sampled test pairs: evidence, not a proof",
                "samples": samples,
            });
            let summary = vec![
                ("property", "uniform_q_ellipticity".to_string()),
                ("integrand", psi.name().to_string()),
                ("Q_max", q.to_string()),
                ("c", num(*c)),
                ("seed", seed.to_string()),
                ("trials", trials.to_string()),
                ("min_gap", num(min_gap)),
                ("negative", negative.len().to_string()),
            ];
            let witness = worst.filter(|_| violated).map(serde_json::to_value).transpose()?;
            Ok(Outcome { report, summary, witness, violated })
        }
        Command::Suite(SuiteCmd::Equivalence { integrand, n, k, c, trials }) => {
            let psi = load_integrand(integrand, *n, *k)?;
            let rep = equivalence_suite(&psi, *c, seed, *trials)?;
            let violated = rep.verdict != Verdict::Holds;
            let summary = vec![
                ("property", rep.property.to_string()),
                ("integrand", rep.integrand.clone()),
                ("n", rep.n.to_string()),
                ("k", rep.k.to_string()),
                ("c", num(rep.c)),
                ("seed", rep.seed.to_string()),
                ("trials", rep.trials.to_string()),
                ("upc_min_gap", rep.upc.min_gap.map(num).unwrap_or_default()),
                ("polyhedral_min_gap", rep.polyhedral.min_gap.map(num).unwrap_or_default()),
                ("q_graph_min_gap", rep.q_graph.min_gap.map(num).unwrap_or_default()),
                ("sign_mismatches", rep.sign_mismatches.to_string()),
                ("verdict", serde_json::to_value(rep.verdict)?.as_str().unwrap_or("").to_string()),
            ];
            let report = serde_json::to_value(&rep)?;
            let witness = violated.then(|| {
                json!({
                    "witness": rep.witness,
                    "defects": rep.defects,
                    "records": rep.records.iter().filter(|r| r.upc_gap < COUNTEREXAMPLE_THRESHOLD
                        || r.aue_gap.is_some_and(|g| g < COUNTEREXAMPLE_THRESHOLD)
                        || r.uqc_gap.is_some_and(|g| g < COUNTEREXAMPLE_THRESHOLD)).collect::<Vec<_>>(),
                })
            });
            Ok(Outcome { report, summary, witness, violated })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit(&outcome, cli.format, cli.out.as_deref(), rayon::current_num_threads()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if outcome.violated {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
