//! Empirical recovery phase transitions over a (δ, ρ) grid.
//!
//! For each grid cell, δ = m/n fixes the sketch length and ρ = k/m the
//! sparsity; `trials_per_cell` random signal/matrix pairs are sketched
//! and decoded, and a success is an ℓ∞-exact recovery up to
//! `success_tol`.  Results stream to CSV as cells finish, so an
//! interrupted run resumes by skipping the cells already present.  The
//! full grid renders as an SVG or ASCII heatmap with an optional overlay
//! polyline (e.g. an analytic threshold curve supplied by the caller).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expander::sample_expander;
use crate::hhs;
use crate::lp;
use crate::seed;
use crate::signal;
use crate::sketch::{apply, from_graph};
use crate::sublinear;

/// Signal family drawn in each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ensemble {
    /// k-sparse with values ±1 equiprobable.
    #[serde(rename = "pm1")]
    PlusMinusOne,
    /// k-sparse with all values +1.
    #[serde(rename = "01")]
    ZeroOne,
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ensemble::PlusMinusOne => "pm1",
            Ensemble::ZeroOne => "01",
        })
    }
}

/// Decoder run in each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decoder {
    #[serde(rename = "lp")]
    Lp,
    #[serde(rename = "sublinear")]
    Sublinear,
    #[serde(rename = "hhs")]
    Hhs,
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decoder::Lp => "lp",
            Decoder::Sublinear => "sublinear",
            Decoder::Hhs => "hhs",
        })
    }
}

/// Grid experiment parameters; JSON field names match the struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    /// Cell counts along the δ and ρ axes.
    pub grid: (usize, usize),
    pub trials_per_cell: usize,
    pub ensemble: Ensemble,
    pub decoder: Decoder,
    pub seed: u64,
    /// ℓ∞ recovery threshold counting as success.
    pub success_tol: f64,
    /// Reuse one matrix for all trials of a cell instead of drawing a
    /// fresh one per trial.
    pub reuse_matrix: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 200,
            d: 8,
            grid: (40, 40),
            trials_per_cell: 50,
            ensemble: Ensemble::PlusMinusOne,
            decoder: Decoder::Lp,
            seed: 0,
            success_tol: 1e-6,
            reuse_matrix: false,
        }
    }
}

impl ExperimentConfig {
    /// Coarse 8×8 preset for interactive runs.
    pub fn desk() -> Self {
        ExperimentConfig { grid: (8, 8), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.trials_per_cell == 0 {
            return Err(Error::Parameter("n, d and trials_per_cell must be at least 1".into()));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::Parameter("grid must have at least one cell per axis".into()));
        }
        if !(self.success_tol > 0.0) || !self.success_tol.is_finite() {
            return Err(Error::Parameter(format!(
                "success tolerance must be positive, got {}",
                self.success_tol
            )));
        }
        Ok(())
    }
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub delta: f64,
    pub rho: f64,
    pub m: usize,
    pub k: usize,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    /// Mean wall-clock decode seconds; excluded from the CSV and from the
    /// determinism contract.
    pub mean_decode_time: f64,
}

/// Uniformly random size-`k` support with ±1 (pm1) or +1 (01) values.
pub fn generate_signal(ensemble: Ensemble, n: usize, k: usize, seed: u64) -> Result<Vec<f64>> {
    if k > n {
        return Err(Error::Parameter(format!("sparsity {k} exceeds length {n}")));
    }
    let mut rng = seed::rng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut x = vec![0.0; n];
    for &i in idx.iter().take(k) {
        x[i] = match ensemble {
            Ensemble::ZeroOne => 1.0,
            Ensemble::PlusMinusOne => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
    }
    Ok(x)
}

/// One sketch-and-decode trial; any decoder error counts as non-success.
/// Returns the success flag and the decode wall-clock seconds.
fn run_trial(
    cfg: &ExperimentConfig,
    m: usize,
    k: usize,
    cell_seed: u64,
    trial: u64,
) -> (bool, f64) {
    if k == 0 {
        // The zero signal is recovered by construction.
        return (true, 0.0);
    }
    let matrix_seed = if cfg.reuse_matrix {
        seed::derive(cell_seed, &[u64::MAX, 0])
    } else {
        seed::derive(cell_seed, &[trial, 0])
    };
    let signal_seed = seed::derive(cell_seed, &[trial, 1]);
    let x = match generate_signal(cfg.ensemble, cfg.n, k, signal_seed) {
        Ok(x) => x,
        Err(_) => return (false, 0.0),
    };
    let start = Instant::now();
    let xhat: Option<Vec<f64>> = match cfg.decoder {
        Decoder::Lp => {
            let d = cfg.d.min(m);
            sample_expander(cfg.n, m, d, matrix_seed).ok().and_then(|g| {
                let phi = from_graph(&g);
                let y = apply(&phi, &x).ok()?;
                let sol = lp::decode(&phi, &y).ok()?;
                (sol.status == lp::LpStatus::Optimal).then_some(sol.x_star)
            })
        }
        Decoder::Sublinear => {
            // The bit tests multiply rows by L, so the expander part gets
            // m/L rows to keep the sketch length near m.
            let l = sublinear::BitTestMatrix::new(cfg.n)
                .map(|b| b.num_tests)
                .unwrap_or(1);
            let psi_rows = (m / l).max(1);
            let d = cfg.d.min(psi_rows);
            sample_expander(cfg.n, psi_rows, d, matrix_seed).ok().and_then(|g| {
                let am = sublinear::build_augmented(&from_graph(&g)).ok()?;
                let y = apply(&am.phi, &x).ok()?;
                let out = sublinear::recover(&am, &y.values, k).ok()?;
                out.success.then_some(out.x)
            })
        }
        Decoder::Hhs => {
            // The identification row budget is capped at m; cells too
            // small for any sift band count as failures.
            hhs::build_measurement_with_budget(cfg.n, k, 1.0, matrix_seed, m)
                .ok()
                .and_then(|hm| {
                    let v = hm.apply(&x).ok()?;
                    let spikes = hhs::hhs_pursuit(&hm, &v, k, 2.0).ok()?;
                    spikes.to_dense(cfg.n).ok()
                })
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let success = match xhat {
        Some(xh) => signal::linf(&signal::sub(&x, &xh)) <= cfg.success_tol,
        None => false,
    };
    (success, elapsed)
}

/// Runs all trials of the cell at (δ, ρ): `m = round(δn)` (at least 1),
/// `k = round(ρm)` (kept at 0 when it rounds there — the trivial cell is
/// reported, not skipped).  Trials run in parallel; the cell seed depends
/// only on (config seed, δ, ρ), so cells are independent of grid context.
pub fn run_cell(cfg: &ExperimentConfig, delta: f64, rho: f64) -> Result<CellResult> {
    cfg.validate()?;
    if !(delta > 0.0 && delta <= 1.0) || !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Parameter(format!(
            "grid coordinates must lie in (0,1], got delta = {delta}, rho = {rho}"
        )));
    }
    let m = ((delta * cfg.n as f64).round() as usize).max(1);
    let k = (rho * m as f64).round() as usize;
    let cell_seed = seed::derive(cfg.seed, &[delta.to_bits(), rho.to_bits()]);
    let outcomes: Vec<(bool, f64)> = (0..cfg.trials_per_cell as u64)
        .into_par_iter()
        .map(|trial| run_trial(cfg, m, k, cell_seed, trial))
        .collect();
    let successes = outcomes.iter().filter(|(ok, _)| *ok).count();
    let total_time: f64 = outcomes.iter().map(|(_, t)| t).sum();
    Ok(CellResult {
        delta,
        rho,
        m,
        k,
        successes,
        trials: cfg.trials_per_cell,
        success_rate: successes as f64 / cfg.trials_per_cell as f64,
        mean_decode_time: total_time / cfg.trials_per_cell as f64,
    })
}

/// Fixed CSV schema; timing is deliberately excluded so reruns are
/// byte-identical.
pub const CSV_HEADER: &str = "delta,rho,m,k,ensemble,decoder,trials,successes,success_rate";

fn csv_row(cfg: &ExperimentConfig, cell: &CellResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        cell.delta,
        cell.rho,
        cell.m,
        cell.k,
        cfg.ensemble,
        cfg.decoder,
        cell.trials,
        cell.successes,
        cell.success_rate
    )
}

/// Runs every grid cell, δ-major; with `out` set, streams one CSV row per
/// cell and skips cells whose (δ, ρ) key is already present in the file
/// (crash resume).  Returns the newly computed cells.
pub fn run_grid(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let mut done: BTreeSet<String> = BTreeSet::new();
    let mut writer = match out {
        Some(path) => {
            let existing = match std::fs::read_to_string(path) {
                Ok(text) => text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
                Err(e) => return Err(e.into()),
            };
            let mut lines = existing.lines();
            match lines.next() {
                Some(header) if header != CSV_HEADER => {
                    return Err(Error::Format(format!(
                        "existing results file has unexpected header: {header}"
                    )));
                }
                Some(_) => {
                    for line in lines {
                        let mut fields = line.splitn(3, ',');
                        if let (Some(d), Some(r)) = (fields.next(), fields.next()) {
                            done.insert(format!("{d},{r}"));
                        }
                    }
                }
                None => {}
            }
            let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            if existing.is_empty() {
                writeln!(file, "{CSV_HEADER}")?;
            }
            Some(file)
        }
        None => None,
    };
    let (grid_d, grid_r) = cfg.grid;
    let mut results = Vec::new();
    for i in 0..grid_d {
        let delta = (i + 1) as f64 / grid_d as f64;
        for j in 0..grid_r {
            let rho = (j + 1) as f64 / grid_r as f64;
            if done.contains(&format!("{delta},{rho}")) {
                continue;
            }
            let cell = run_cell(cfg, delta, rho).map_err(|e| {
                Error::Io(format!("cell delta = {delta}, rho = {rho}: {e}"))
            })?;
            if let Some(file) = writer.as_mut() {
                writeln!(file, "{}", csv_row(cfg, &cell)).and_then(|()| file.flush()).map_err(
                    |e| Error::Io(format!("cell delta = {delta}, rho = {rho}: {e}")),
                )?;
            }
            results.push(cell);
        }
    }
    Ok(results)
}

/// Reads cells back from a results CSV (timing is not persisted and
/// comes back as 0).
pub fn read_results_csv(path: &Path) -> Result<Vec<CellResult>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => {
            return Err(Error::Format(format!("unexpected results header: {other:?}")));
        }
    }
    let mut cells = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Format(format!("line {}: expected 9 fields", lineno + 2)));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
        };
        let parse_u = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
        };
        cells.push(CellResult {
            delta: parse_f(fields[0])?,
            rho: parse_f(fields[1])?,
            m: parse_u(fields[2])?,
            k: parse_u(fields[3])?,
            trials: parse_u(fields[6])?,
            successes: parse_u(fields[7])?,
            success_rate: parse_f(fields[8])?,
            mean_decode_time: 0.0,
        });
    }
    Ok(cells)
}

fn cell_indices(cell: &CellResult, grid: (usize, usize)) -> (usize, usize) {
    let i = ((cell.delta * grid.0 as f64).round() as usize).clamp(1, grid.0) - 1;
    let j = ((cell.rho * grid.1 as f64).round() as usize).clamp(1, grid.1) - 1;
    (i, j)
}

/// Text heatmap: ρ grows upward, δ rightward, darker glyph = higher
/// success rate.
pub fn ascii_heatmap(cells: &[CellResult], grid: (usize, usize)) -> String {
    const RAMP: [char; 10] = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let mut rates: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for cell in cells {
        rates.insert(cell_indices(cell, grid), cell.success_rate);
    }
    let mut out = String::new();
    for j in (0..grid.1).rev() {
        out.push_str(if j == grid.1 - 1 { "rho 1.0 |" } else { "        |" });
        for i in 0..grid.0 {
            let glyph = match rates.get(&(i, j)) {
                Some(&rate) => RAMP[((rate * 9.0).round() as usize).min(9)],
                None => '?',
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    out.push_str("        +");
    out.push_str(&"-".repeat(grid.0));
    out.push_str("\n         delta -> 1.0\n");
    out
}

/// SVG heatmap (dark = failure, light = success) with an optional
/// (δ, ρ) overlay polyline.
pub fn write_heatmap_svg(
    cells: &[CellResult],
    grid: (usize, usize),
    path: &Path,
    overlay: Option<&[(f64, f64)]>,
) -> Result<()> {
    const CELL: f64 = 16.0;
    const MARGIN: f64 = 40.0;
    let width = MARGIN * 2.0 + grid.0 as f64 * CELL;
    let height = MARGIN * 2.0 + grid.1 as f64 * CELL;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for cell in cells {
        let (i, j) = cell_indices(cell, grid);
        let x = MARGIN + i as f64 * CELL;
        let y = MARGIN + (grid.1 - 1 - j) as f64 * CELL;
        let shade = (cell.success_rate * 255.0).round() as u8;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
             fill=\"rgb({shade},{shade},{shade})\"/>\n"
        ));
    }
    if let Some(points) = overlay {
        if !points.is_empty() {
            let coords: Vec<String> = points
                .iter()
                .map(|&(delta, rho)| {
                    let x = MARGIN + delta * grid.0 as f64 * CELL;
                    let y = MARGIN + (1.0 - rho) * grid.1 as f64 * CELL;
                    format!("{x},{y}")
                })
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>\n",
                coords.join(" ")
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">delta</text>\n",
        MARGIN + grid.0 as f64 * CELL / 2.0 - 15.0,
        height - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"10\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\">rho</text>\n",
        MARGIN + grid.1 as f64 * CELL / 2.0,
        MARGIN + grid.1 as f64 * CELL / 2.0
    ));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Reads a (delta,rho) polyline CSV; a leading non-numeric line is
/// treated as a header and skipped.
pub fn read_overlay_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let pair = (|| -> Option<(f64, f64)> {
            let d = fields.next()?.trim().parse::<f64>().ok()?;
            let r = fields.next()?.trim().parse::<f64>().ok()?;
            Some((d, r))
        })();
        match pair {
            Some(p) => points.push(p),
            None if lineno == 0 => continue,
            None => {
                return Err(Error::Format(format!("overlay line {}: expected delta,rho", lineno + 1)));
            }
        }
    }
    Ok(points)
}
