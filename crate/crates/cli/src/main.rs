//! `exrec`: sparse recovery from expander sketches on the command line.
//!
//! Workflows: `gen` produces matrices, measurements and test signals;
//! `sketch` applies a matrix to a signal; `decode` inverts a sketch with
//! one of the three decoders; `verify` runs the structural checkers; and
//! `phase-transition` maps empirical recovery probability over a (δ, ρ)
//! grid.
//!
//! Data formats: matrices and measurement manifests are JSON, signals
//! and sketches are `row_index,value` CSV, decoded solutions are sparse
//! `index,value` CSV.  Solution CSV goes to stdout (or `--out`);
//! diagnostics JSON goes to stderr (or `--diagnostics`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use expander_recovery::experiment::{
    self, ascii_heatmap, read_overlay_csv, read_results_csv, write_heatmap_svg, Ensemble,
    ExperimentConfig,
};
use expander_recovery::expander::{
    check_expansion_exact_with_budget, check_expansion_sampled, sample_expander,
    BipartiteGraph, DEFAULT_SUBSET_BUDGET,
};
use expander_recovery::guarantees::{
    check_nullspace_spread, check_rip2_not_rip1_demo, check_rip_p, collision_mass,
};
use expander_recovery::hhs::{
    build_measurement_with_budget, hhs_pursuit_with_diagnostics, HhsMeasurement,
    DEFAULT_DELTA_RANGE, DEFAULT_ROW_BUDGET,
};
use expander_recovery::lp::{decode_with_options, LpOptions, LpStatus};
use expander_recovery::sketch::{
    apply, from_graph, read_sketch_csv, set_rip_p_scale, write_sketch_csv, SparseBinaryMatrix,
    Sketch,
};
use expander_recovery::sublinear::{build_augmented, recover};

#[derive(Parser)]
#[command(
    name = "exrec",
    about = "Sparse signal recovery from sparse binary sketches",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate matrices, measurements and test signals.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Apply a matrix (or measurement) to a signal, writing the sketch.
    Sketch(SketchArgs),
    /// Recover a signal from a sketch.
    #[command(subcommand)]
    Decode(DecodeCmd),
    /// Run a structural checker and emit its report as JSON.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Map recovery probability over a (delta, rho) grid.
    PhaseTransition(PhaseArgs),
}

#[derive(Subcommand)]
enum GenCmd {
    /// Sample a left-regular expander and write it as matrix JSON.
    Expander {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale columns to unit ℓp norm (p in [1,2]).
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a pursuit measurement bundle (manifest plus matrix files).
    Hhs {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ROW_BUDGET)]
        row_budget: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Draw a random k-sparse test signal and write it as CSV.
    Signal {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Signal family: "pm1" (values ±1) or "01" (values +1).
        #[arg(long, default_value = "pm1")]
        ensemble: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SketchArgs {
    /// Matrix JSON file (alternative to --measurement).
    #[arg(long, conflicts_with = "measurement")]
    matrix: Option<PathBuf>,
    /// Measurement manifest JSON (alternative to --matrix).
    #[arg(long)]
    measurement: Option<PathBuf>,
    /// Refine the matrix with bit tests before sketching (the layout the
    /// sublinear decoder expects).
    #[arg(long, requires = "matrix")]
    bit_tests: bool,
    /// Signal CSV (row_index,value).
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum DecodeCmd {
    /// ℓ1-minimizing decoder (basis pursuit by simplex).
    Lp {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        sketch: PathBuf,
        /// Feasibility tolerance of the LP solve.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        pivot_budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Bit-test decoder for exactly k-sparse signals; --matrix is the
    /// expander part, the sketch must come from its bit-test refinement
    /// (`sketch --bit-tests`).
    Sublinear {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Multi-scale pursuit decoder; --measurement is a manifest from
    /// `gen hhs`.
    Hhs {
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        k: usize,
        /// Dynamic range of the signal (bounds the pursuit rounds).
        #[arg(long, default_value_t = DEFAULT_DELTA_RANGE)]
        range: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Exact (or sampled) expansion defect of a matrix's graph.
    Expansion {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        /// Subset budget for exhaustive enumeration.
        #[arg(long, default_value_t = DEFAULT_SUBSET_BUDGET)]
        budget: u128,
        /// Sample this many random sets instead of enumerating.
        #[arg(long)]
        sampled: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sparse lower frame bound over random k-sparse signals.
    RipP {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Kernel mass-spread bound at a caller-supplied defect.
    Nullspace {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Collision-mass decomposition of a signal on a matrix's graph.
    Collision {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        signal: PathBuf,
    },
    /// Dense Gaussian ℓ2-vs-ℓ1 sketch demo.
    Rip2Demo {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PhaseArgs {
    /// JSON file mirroring the experiment config fields.
    #[arg(long)]
    config: PathBuf,
    /// Stream results here as CSV (resumes a partial file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an SVG heatmap of success rates.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// (delta,rho) polyline CSV drawn over the heatmap.
    #[arg(long, requires = "heatmap")]
    overlay: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(cmd) => run_gen(cmd),
        Command::Sketch(args) => run_sketch(args),
        Command::Decode(cmd) => run_decode(cmd),
        Command::Verify(cmd) => run_verify(cmd),
        Command::PhaseTransition(args) => run_phase(args),
    }
}

/// Writes to stdout, exiting quietly if the reader hung up (e.g. piped
/// into `head`).
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write as _;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => Ok(other?),
    }
}

fn load_matrix(path: &Path) -> Result<SparseBinaryMatrix> {
    SparseBinaryMatrix::load(path).with_context(|| format!("loading matrix {}", path.display()))
}

fn load_signal(path: &Path) -> Result<Vec<f64>> {
    read_sketch_csv(path).with_context(|| format!("reading signal {}", path.display()))
}

fn graph_of(phi: &SparseBinaryMatrix) -> Result<BipartiteGraph> {
    let d = phi.column_degree()?;
    Ok(BipartiteGraph::new(phi.cols, phi.rows, d, phi.col_adjacency.clone())?)
}

/// Sparse `index,value` CSV of the nonzero entries, to `out` or stdout.
fn emit_solution(out: Option<&Path>, x: &[f64]) -> Result<()> {
    let mut text = String::from("index,value\n");
    for (i, v) in x.iter().enumerate() {
        if *v != 0.0 {
            text.push_str(&format!("{i},{v}\n"));
        }
    }
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing solution {}", path.display()))?,
        None => print_stdout(&text)?,
    }
    Ok(())
}

/// Diagnostics JSON, to `path` or stderr (keeping stdout machine-clean).
fn emit_diagnostics(path: Option<&Path>, record: &Value) -> Result<()> {
    let json = serde_json::to_string_pretty(record)?;
    match path {
        Some(path) => std::fs::write(path, json)
            .with_context(|| format!("writing diagnostics {}", path.display()))?,
        None => eprintln!("{json}"),
    }
    Ok(())
}

fn emit_report(report: &Value) -> Result<()> {
    print_stdout(&(serde_json::to_string_pretty(report)? + "\n"))
}

fn run_gen(cmd: GenCmd) -> Result<()> {
    match cmd {
        GenCmd::Expander { n, m, d, seed, p, out } => {
            let graph = sample_expander(n, m, d, seed)?;
            let mut phi = from_graph(&graph);
            if let Some(p) = p {
                phi = set_rip_p_scale(&phi, p)?;
            }
            phi.save(&out)?;
            eprintln!(
                "wrote {} ({} rows x {} cols, degree {d}, scale {})",
                out.display(),
                phi.rows,
                phi.cols,
                phi.scale
            );
        }
        GenCmd::Hhs { n, k, epsilon, seed, row_budget, out_dir } => {
            let hm = build_measurement_with_budget(n, k, epsilon, seed, row_budget)?;
            let manifest = hm.save(&out_dir)?;
            eprintln!(
                "wrote {} ({} identification + {} estimation rows, {} bands, {} truncated)",
                manifest.display(),
                hm.identification.rows,
                hm.estimation.rows,
                hm.blocks.len(),
                hm.truncated_blocks
            );
            print_stdout(&format!("{}\n", manifest.display()))?;
        }
        GenCmd::Signal { n, k, ensemble, seed, out } => {
            let ensemble = match ensemble.as_str() {
                "pm1" => Ensemble::PlusMinusOne,
                "01" => Ensemble::ZeroOne,
                other => bail!("unknown ensemble {other:?} (expected \"pm1\" or \"01\")"),
            };
            let x = experiment::generate_signal(ensemble, n, k, seed)?;
            write_sketch_csv(&out, &x)?;
            eprintln!("wrote {} ({} entries, {} nonzero)", out.display(), n, k);
        }
    }
    Ok(())
}

fn run_sketch(args: SketchArgs) -> Result<()> {
    let x = load_signal(&args.signal)?;
    let values = match (&args.matrix, &args.measurement) {
        (Some(matrix), None) => {
            let phi = load_matrix(matrix)?;
            let phi = if args.bit_tests { build_augmented(&phi)?.phi } else { phi };
            apply(&phi, &x)?.values
        }
        (None, Some(manifest)) => {
            let hm = HhsMeasurement::load(manifest)?;
            hm.apply(&x)?.values
        }
        _ => bail!("exactly one of --matrix and --measurement is required"),
    };
    write_sketch_csv(&args.out, &values)?;
    eprintln!("wrote {} ({} rows)", args.out.display(), values.len());
    Ok(())
}

fn run_decode(cmd: DecodeCmd) -> Result<()> {
    match cmd {
        DecodeCmd::Lp { matrix, sketch, tol, pivot_budget, out, diagnostics } => {
            let phi = load_matrix(&matrix)?;
            let values = load_signal(&sketch)?;
            let y = Sketch { values, provenance: phi.fingerprint() };
            let opts = LpOptions { pivot_budget, feasibility_tol: tol };
            let sol = decode_with_options(&phi, &y, &opts)?;
            emit_solution(out.as_deref(), &sol.x_star)?;
            emit_diagnostics(
                diagnostics.as_deref(),
                &serde_json::json!({
                    "decoder": "lp",
                    "status": sol.status,
                    "objective": sol.objective,
                    "residual_inf": sol.residual_inf,
                    "pivots": sol.pivots,
                }),
            )?;
            if sol.status != LpStatus::Optimal {
                bail!("lp decode finished with status {:?}", sol.status);
            }
        }
        DecodeCmd::Sublinear { matrix, sketch, k, out, diagnostics } => {
            let psi = load_matrix(&matrix)?;
            let am = build_augmented(&psi)?;
            let values = load_signal(&sketch)?;
            let outcome = recover(&am, &values, k)?;
            emit_solution(out.as_deref(), &outcome.x)?;
            emit_diagnostics(
                diagnostics.as_deref(),
                &serde_json::json!({
                    "decoder": "sublinear",
                    "success": outcome.success,
                    "iterations": outcome.iterations,
                    "residual_linf": outcome.residual_linf,
                }),
            )?;
            if !outcome.success {
                bail!(
                    "sublinear decode left a residual of {} (signal not exactly {k}-sparse?)",
                    outcome.residual_linf
                );
            }
        }
        DecodeCmd::Hhs { measurement, sketch, k, range, out, diagnostics } => {
            let hm = HhsMeasurement::load(&measurement)?;
            let values = load_signal(&sketch)?;
            let v = Sketch { values, provenance: hm.fingerprint() };
            let (spikes, diag) = hhs_pursuit_with_diagnostics(&hm, &v, k, range)?;
            emit_solution(out.as_deref(), &spikes.to_dense(hm.n)?)?;
            emit_diagnostics(
                diagnostics.as_deref(),
                &serde_json::json!({
                    "decoder": "hhs",
                    "spikes": spikes.len(),
                    "rounds": diag.rounds,
                    "located_per_round": diag.located_per_round,
                    "estimation_iterations": diag.estimation_iterations,
                    "residual_linf": diag.residual_linf,
                }),
            )?;
        }
    }
    Ok(())
}

fn run_verify(cmd: VerifyCmd) -> Result<()> {
    match cmd {
        VerifyCmd::Expansion { matrix, k, budget, sampled, seed } => {
            let phi = load_matrix(&matrix)?;
            let graph = graph_of(&phi)?;
            let report = match sampled {
                Some(trials) => check_expansion_sampled(&graph, k, trials, seed)?,
                None => check_expansion_exact_with_budget(&graph, k, budget)?,
            };
            emit_report(&serde_json::to_value(&report)?)?;
        }
        VerifyCmd::RipP { matrix, k, p, trials, seed } => {
            let phi = load_matrix(&matrix)?;
            emit_report(&serde_json::to_value(check_rip_p(&phi, k, p, trials, seed)?)?)?;
        }
        VerifyCmd::Nullspace { matrix, k, epsilon, trials, seed } => {
            let phi = load_matrix(&matrix)?;
            emit_report(&serde_json::to_value(check_nullspace_spread(
                &phi, k, epsilon, trials, seed,
            )?)?)?;
        }
        VerifyCmd::Collision { matrix, signal } => {
            let phi = load_matrix(&matrix)?;
            let graph = graph_of(&phi)?;
            let x = load_signal(&signal)?;
            emit_report(&serde_json::to_value(collision_mass(&graph, &x)?)?)?;
        }
        VerifyCmd::Rip2Demo { n, k, seed } => {
            emit_report(&serde_json::to_value(check_rip2_not_rip1_demo(n, k, seed)?)?)?;
        }
    }
    Ok(())
}

fn run_phase(args: PhaseArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| "parsing experiment config")?;
    let computed = experiment::run_grid(&cfg, args.out.as_deref())?;
    // With an output file the full grid (including resumed cells) lives
    // there; otherwise only this run's cells exist.
    let cells = match &args.out {
        Some(path) => read_results_csv(path)?,
        None => computed,
    };
    if args.out.is_none() {
        let mut text = experiment::CSV_HEADER.to_owned() + "\n";
        for cell in &cells {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                cell.delta,
                cell.rho,
                cell.m,
                cell.k,
                cfg.ensemble,
                cfg.decoder,
                cell.trials,
                cell.successes,
                cell.success_rate
            ));
        }
        print_stdout(&text)?;
    } else {
        print_stdout(&ascii_heatmap(&cells, cfg.grid))?;
    }
    if let Some(svg) = &args.heatmap {
        let overlay = match &args.overlay {
            Some(path) => Some(read_overlay_csv(path)?),
            None => None,
        };
        write_heatmap_svg(&cells, cfg.grid, svg, overlay.as_deref())?;
        eprintln!("wrote {}", svg.display());
    }
    Ok(())
}
