//! Approximate sparse recovery with sublinear-time pursuit.
//!
//! The measurement stacks two parts.  The identification part is a row
//! tensor product `B ⊛ A` of the bit-test matrix `B` with a multi-scale
//! sift matrix `A`; `A` itself stacks blocks `NW(n, r, s) ⊛ S`, a
//! polynomial-evaluation split (which spreads colliding spikes across
//! evaluation points and dilutes dense noise) refined by a small random
//! expander `S` tuned to an expected spike count.  The estimation part is
//! an independent expander with unit-`ℓp` columns whose near-isometry on
//! sparse signals makes a diagonally preconditioned Richardson iteration
//! contract quickly.
//!
//! [`hhs_pursuit`] alternates the two: decode bit-test blocks of the
//! residual sketch to propose spike locations, vote across rows, estimate
//! values on the surviving support, then merge, prune and re-encode.
//! Each round roughly halves the unexplained mass, so `⌈log₂ Δ⌉ + 1`
//! rounds suffice for a dynamic range `Δ`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expander::{check_expansion_exact, check_expansion_sampled, sample_expander, BipartiteGraph};
use crate::nw::{build_nw_matrix, NwMatrix};
use crate::seed;
use crate::signal;
use crate::sketch::{
    apply, from_graph, row_tensor_product, set_rip_p_scale, SparseBinaryMatrix, Sketch,
};
use crate::sublinear::{decode_block_relative, index_bits, BitTestMatrix};

/// Left degree of the per-scale sift expanders.
pub const SIFT_DEGREE: usize = 4;
/// Inverse expansion quality the sift expanders are sized for (ε' = 1/12).
pub const SIFT_EPSILON_INV: usize = 12;
/// Sift expander rows per unit of band sparsity: `s·d/ε'`.
pub const SIFT_ROWS_PER_SPARSITY: usize = SIFT_DEGREE * SIFT_EPSILON_INV;
/// Left degree of the estimation expander.
pub const EST_DEGREE: usize = 8;
/// Inverse expansion quality the estimation expander is sized for.
pub const EST_EPSILON_INV: usize = 8;
/// Estimation rows per location-list slot: `K·d/ε`.
pub const EST_ROWS_PER_SLOT: usize = EST_DEGREE * EST_EPSILON_INV;
/// Cap on identification rows; candidate bands that do not fit are
/// dropped, least significant first.
pub const DEFAULT_ROW_BUDGET: usize = 2_000_000;
/// Magnitudes at or below this are dropped from the final spike list.
pub const SPIKE_TOL: f64 = 1e-9;
/// Pursuit stops early once the sketch residual is this small.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Iteration cap for the value-estimation solve.
pub const EST_MAX_ITERATIONS: usize = 100;
/// Relative residual target for the value-estimation solve.  Kept well
/// below [`SPIKE_TOL`] so that values fitted to falsely located indices
/// land under the final cleanup threshold instead of surviving as
/// ghost spikes.
pub const EST_REL_TOL: f64 = 1e-13;
/// Consecutive residual increases before estimation reports divergence.
pub const EST_DIVERGENCE_STEPS: usize = 5;
/// Default dynamic range for [`hhs_pursuit`] callers that track integer
/// streams of 32-bit magnitude.
pub const DEFAULT_DELTA_RANGE: f64 = 4_294_967_296.0;

/// Sparse vector as sorted `(index, value)` pairs with unique indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpikeList {
    spikes: Vec<(usize, f64)>,
}

impl SpikeList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a list from arbitrary pairs; duplicate indices are summed.
    pub fn from_pairs(pairs: Vec<(usize, f64)>) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        SpikeList { spikes: acc.into_iter().collect() }
    }

    pub fn spikes(&self) -> &[(usize, f64)] {
        &self.spikes
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn to_dense(&self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        for &(i, v) in &self.spikes {
            if i >= n {
                return Err(Error::Dimension(format!("spike index {i} out of range for length {n}")));
            }
            out[i] = v;
        }
        Ok(out)
    }

    /// Entrywise sum; duplicate indices add.
    pub fn merge(&self, other: &SpikeList) -> SpikeList {
        let mut pairs = self.spikes.clone();
        pairs.extend_from_slice(&other.spikes);
        SpikeList::from_pairs(pairs)
    }

    /// Keeps the `cap` largest-magnitude spikes (ties keep the smaller
    /// index), re-sorted by index.
    pub fn pruned(&self, cap: usize) -> SpikeList {
        if self.spikes.len() <= cap {
            return self.clone();
        }
        let mut by_mag = self.spikes.clone();
        by_mag.sort_by(|a, b| {
            b.1.abs()
                .partial_cmp(&a.1.abs())
                .expect("spike magnitudes are finite")
                .then(a.0.cmp(&b.0))
        });
        by_mag.truncate(cap);
        by_mag.sort_by_key(|&(i, _)| i);
        SpikeList { spikes: by_mag }
    }

    /// Removes spikes with `|value| <= tol`.
    pub fn drop_below(&self, tol: f64) -> SpikeList {
        SpikeList {
            spikes: self.spikes.iter().copied().filter(|&(_, v)| v.abs() > tol).collect(),
        }
    }
}

/// One accepted sift band: a polynomial split at spacing `r` and band
/// sparsity `s`, refined by the expander tuned to `j` expected spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    /// Spike-count scale of the refining expander (power of two ≤ k).
    pub j: usize,
    /// Row spacing of the polynomial split (power-of-two multiple of `s`).
    pub r: usize,
    /// Band sparsity scale (power of two ≤ k).
    pub s: usize,
    /// True when `r² ≤ k·s`; these bands carry most recoverable mass and
    /// are kept first under the row budget.
    pub significant: bool,
    /// First row of this block inside the stacked sift matrix.
    pub a_start: usize,
    /// Rows the block contributes: `β²·m_s`.
    pub a_rows: usize,
}

/// Full measurement: identification rows followed by estimation rows.
#[derive(Debug, Clone)]
pub struct HhsMeasurement {
    pub n: usize,
    /// Sparsity the measurement is sized for.
    pub k: usize,
    /// Approximation slack; the location list is pruned to `⌈2k/ε⌉`.
    pub epsilon: f64,
    pub seed: u64,
    /// Norm exponent `p = 1 + 1/log₂ n` carried by the estimation matrix.
    pub p: f64,
    /// Cap on proposed locations per round: `k·⌈log₂ n⌉`.
    pub location_cap: usize,
    pub bit_tests: BitTestMatrix,
    /// Stacked sift bands (one row block per [`BlockInfo`]).
    pub sift: SparseBinaryMatrix,
    /// `bit_tests ⊛ sift`; bit `t` of sift row `a` lives at row
    /// `t·sift.rows + a`.
    pub identification: SparseBinaryMatrix,
    /// Unit-`ℓp`-column expander for value estimation.
    pub estimation: SparseBinaryMatrix,
    pub blocks: Vec<BlockInfo>,
    /// Candidate bands dropped by the row budget.
    pub truncated_blocks: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    n: usize,
    k: usize,
    epsilon: f64,
    seed: u64,
    p: f64,
    location_cap: usize,
    truncated_blocks: usize,
    blocks: Vec<BlockInfo>,
    sift_file: String,
    identification_file: String,
    estimation_file: String,
}

impl HhsMeasurement {
    pub fn rows(&self) -> usize {
        self.identification.rows + self.estimation.rows
    }

    /// Fingerprint tying sketches to this measurement (covers both parts).
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in [
            self.identification.fingerprint(),
            self.estimation.fingerprint(),
            self.n as u64,
            self.k as u64,
            self.epsilon.to_bits(),
        ] {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        }
        h
    }

    /// Concatenated sketch `[identification·x, estimation·x]`.
    pub fn apply(&self, x: &[f64]) -> Result<Sketch> {
        let id = apply(&self.identification, x)?;
        let est = apply(&self.estimation, x)?;
        let mut values = id.values;
        values.extend_from_slice(&est.values);
        Ok(Sketch { values, provenance: self.fingerprint() })
    }

    /// Writes the measurement into `dir` (matrices as JSON plus a
    /// `measurement.json` manifest referencing them); returns the
    /// manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let sift_file = "sift_matrix.json".to_string();
        let identification_file = "identification_matrix.json".to_string();
        let estimation_file = "estimation_matrix.json".to_string();
        self.sift.save(&dir.join(&sift_file))?;
        self.identification.save(&dir.join(&identification_file))?;
        self.estimation.save(&dir.join(&estimation_file))?;
        let manifest = ManifestJson {
            n: self.n,
            k: self.k,
            epsilon: self.epsilon,
            seed: self.seed,
            p: self.p,
            location_cap: self.location_cap,
            truncated_blocks: self.truncated_blocks,
            blocks: self.blocks.clone(),
            sift_file,
            identification_file,
            estimation_file,
        };
        let path = dir.join("measurement.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: ManifestJson =
            serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let sift = SparseBinaryMatrix::load(&dir.join(&manifest.sift_file))?;
        let identification = SparseBinaryMatrix::load(&dir.join(&manifest.identification_file))?;
        let estimation = SparseBinaryMatrix::load(&dir.join(&manifest.estimation_file))?;
        let bit_tests = BitTestMatrix::new(manifest.n)?;
        if identification.rows != bit_tests.num_tests * sift.rows
            || identification.cols != manifest.n
            || sift.cols != manifest.n
            || estimation.cols != manifest.n
        {
            return Err(Error::Format("manifest and matrix shapes disagree".into()));
        }
        Ok(HhsMeasurement {
            n: manifest.n,
            k: manifest.k,
            epsilon: manifest.epsilon,
            seed: manifest.seed,
            p: manifest.p,
            location_cap: manifest.location_cap,
            bit_tests,
            sift,
            identification,
            estimation,
            blocks: manifest.blocks,
            truncated_blocks: manifest.truncated_blocks,
        })
    }
}

fn powers_of_two_up_to(k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut v = 1usize;
    while v <= k {
        out.push(v);
        v *= 2;
    }
    out
}

/// Builds the measurement for length-`n` signals at sparsity `k` and
/// approximation slack `epsilon`, with the default identification row
/// budget.
pub fn build_measurement(n: usize, k: usize, epsilon: f64, seed: u64) -> Result<HhsMeasurement> {
    build_measurement_with_budget(n, k, epsilon, seed, DEFAULT_ROW_BUDGET)
}

/// As [`build_measurement`] with an explicit cap on identification rows.
/// Candidate bands are ranked significant-first (then by spacing ratio,
/// spike scale, band scale) and accepted greedily while they fit.
pub fn build_measurement_with_budget(
    n: usize,
    k: usize,
    epsilon: f64,
    seed: u64,
    row_budget: usize,
) -> Result<HhsMeasurement> {
    if n < 2 {
        return Err(Error::Parameter("signal length must be at least 2".into()));
    }
    if k == 0 || 2 * k > n {
        return Err(Error::Parameter(format!(
            "sparsity must satisfy 1 <= 2k <= n, got k = {k}, n = {n}"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Parameter(format!("approximation slack must be positive, got {epsilon}")));
    }
    let bits = index_bits(n);
    let p = 1.0 + 1.0 / bits.max(1) as f64;
    let bit_tests = BitTestMatrix::new(n)?;
    let l = bit_tests.num_tests;

    let scales = powers_of_two_up_to(k);
    // Candidate bands: every (j, s) pair of scales, at every power-of-two
    // spacing r = 2^i·s ≤ n with i ≥ 1.
    struct Candidate {
        j: usize,
        r: usize,
        s: usize,
        significant: bool,
    }
    let mut candidates = Vec::new();
    for &j in &scales {
        for &s in &scales {
            let mut r = 2 * s;
            while r <= n {
                candidates.push(Candidate { j, r, s, significant: r * r <= k * s });
                match r.checked_mul(2) {
                    Some(next) => r = next,
                    None => break,
                }
            }
        }
    }
    candidates.sort_by_key(|c| (!c.significant, c.r / c.s, c.j, c.s));

    let mut nw_cache: BTreeMap<(usize, usize), NwMatrix> = BTreeMap::new();
    let mut sift_cache: BTreeMap<(usize, usize), SparseBinaryMatrix> = BTreeMap::new();
    let mut blocks = Vec::new();
    let mut block_matrices = Vec::new();
    let mut a_rows_total = 0usize;
    let mut truncated_blocks = 0usize;
    let mut cheapest_cost = u128::MAX;
    for c in candidates {
        let nw = match nw_cache.get(&(c.r, c.s)) {
            Some(nw) => nw,
            None => {
                let nw = build_nw_matrix(n, c.r, c.s)?;
                nw_cache.entry((c.r, c.s)).or_insert(nw)
            }
        };
        let m_s = c.s * SIFT_ROWS_PER_SPARSITY;
        let block_rows = nw.matrix.rows * m_s;
        let omega_cost = l as u128 * block_rows as u128;
        cheapest_cost = cheapest_cost.min(omega_cost);
        let used = l as u128 * a_rows_total as u128;
        if used + omega_cost > row_budget as u128 {
            truncated_blocks += 1;
            continue;
        }
        let s_matrix = match sift_cache.get(&(c.j, c.s)) {
            Some(m) => m,
            None => {
                let g = sample_expander(n, m_s, SIFT_DEGREE, seed::derive(seed, &[1, c.j as u64, c.s as u64]))?;
                sift_cache.entry((c.j, c.s)).or_insert(from_graph(&g))
            }
        };
        let block = row_tensor_product(&nw.matrix, s_matrix)?;
        debug_assert_eq!(block.rows, block_rows);
        blocks.push(BlockInfo {
            j: c.j,
            r: c.r,
            s: c.s,
            significant: c.significant,
            a_start: a_rows_total,
            a_rows: block_rows,
        });
        a_rows_total += block_rows;
        block_matrices.push(block);
    }
    if blocks.is_empty() {
        return Err(Error::BudgetExceeded { required: cheapest_cost, budget: row_budget as u128 });
    }

    let mut col_adjacency = vec![Vec::new(); n];
    for (info, block) in blocks.iter().zip(&block_matrices) {
        for (col, entries) in col_adjacency.iter_mut().zip(&block.col_adjacency) {
            col.extend(entries.iter().map(|&r| r + info.a_start));
        }
    }
    let sift = SparseBinaryMatrix::new(a_rows_total, n, col_adjacency, 1.0)?;
    let identification = row_tensor_product(&bit_tests.matrix, &sift)?;

    let location_cap = k * bits.max(1);
    let est_rows = location_cap * EST_ROWS_PER_SLOT;
    let est_graph = sample_expander(n, est_rows, EST_DEGREE, seed::derive(seed, &[2]))?;
    let estimation = set_rip_p_scale(&from_graph(&est_graph), p)?;

    Ok(HhsMeasurement {
        n,
        k,
        epsilon,
        seed,
        p,
        location_cap,
        bit_tests,
        sift,
        identification,
        estimation,
        blocks,
        truncated_blocks,
    })
}

/// Least-squares values on a fixed support by preconditioned Richardson
/// iteration: `z ← z + ω·Φ_Sᵀ r` with `ω = 1/(d·scale²)`, the exact
/// inverse of the diagonal of `Φ_SᵀΦ_S`.  Stops at relative residual
/// [`EST_REL_TOL`] or [`EST_MAX_ITERATIONS`]; reports divergence after
/// [`EST_DIVERGENCE_STEPS`] consecutive residual increases.
pub fn estimate_values(
    phi: &SparseBinaryMatrix,
    support: &[usize],
    rhs: &[f64],
) -> Result<(Vec<f64>, usize)> {
    if rhs.len() != phi.rows {
        return Err(Error::Dimension(format!(
            "sketch length {} != matrix rows {}",
            rhs.len(),
            phi.rows
        )));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) || support.last().is_some_and(|&j| j >= phi.cols) {
        return Err(Error::Parameter("support must be sorted, unique and in range".into()));
    }
    let d = phi.column_degree()?;
    let scale = phi.scale;
    let omega = 1.0 / (d as f64 * scale * scale);
    let rhs_norm = signal::lp(rhs, 2.0);
    let mut z = vec![0.0; support.len()];
    if rhs_norm == 0.0 {
        return Ok((z, 0));
    }
    let mut residual = rhs.to_vec();
    let mut prev_norm = f64::INFINITY;
    let mut growing = 0usize;
    let mut iterations = 0usize;
    loop {
        let norm = signal::lp(&residual, 2.0);
        if norm <= EST_REL_TOL * rhs_norm || iterations >= EST_MAX_ITERATIONS {
            break;
        }
        if norm > prev_norm {
            growing += 1;
            if growing >= EST_DIVERGENCE_STEPS {
                return Err(Error::Numeric(format!(
                    "value estimation diverged after {iterations} iterations \
                     (residual {norm:.3e} over {rhs_norm:.3e})"
                )));
            }
        } else {
            growing = 0;
        }
        prev_norm = norm;
        for (zc, &col) in z.iter_mut().zip(support) {
            let mut g = 0.0;
            for &row in &phi.col_adjacency[col] {
                g += residual[row];
            }
            *zc += omega * scale * g;
        }
        residual.copy_from_slice(rhs);
        for (&zc, &col) in z.iter().zip(support) {
            if zc != 0.0 {
                for &row in &phi.col_adjacency[col] {
                    residual[row] -= scale * zc;
                }
            }
        }
        iterations += 1;
    }
    Ok((z, iterations))
}

/// Per-round pursuit instrumentation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PursuitDiagnostics {
    /// Rounds actually executed.
    pub rounds: usize,
    /// Spike locations surviving the vote in each round.
    pub located_per_round: Vec<usize>,
    /// Estimation iterations used in each round.
    pub estimation_iterations: Vec<usize>,
    /// `‖v − Φx̂‖∞` after the final round.
    pub residual_linf: f64,
}

/// Recovers a spike list from a sketch taken with `hm`.  `delta_range`
/// bounds the dynamic range of the signal; the pursuit runs
/// `⌈log₂ delta_range⌉ + 1` rounds, stopping early when the residual
/// sketch is explained.
pub fn hhs_pursuit(
    hm: &HhsMeasurement,
    v: &Sketch,
    k: usize,
    delta_range: f64,
) -> Result<SpikeList> {
    hhs_pursuit_with_diagnostics(hm, v, k, delta_range).map(|(spikes, _)| spikes)
}

pub fn hhs_pursuit_with_diagnostics(
    hm: &HhsMeasurement,
    v: &Sketch,
    k: usize,
    delta_range: f64,
) -> Result<(SpikeList, PursuitDiagnostics)> {
    let expected = hm.fingerprint();
    if v.provenance != expected {
        return Err(Error::ProvenanceMismatch { expected, found: v.provenance });
    }
    if v.values.len() != hm.rows() {
        return Err(Error::Dimension(format!(
            "sketch length {} != measurement rows {}",
            v.values.len(),
            hm.rows()
        )));
    }
    if k == 0 {
        return Err(Error::Parameter("sparsity must be at least 1".into()));
    }
    if !(delta_range >= 1.0) || !delta_range.is_finite() {
        return Err(Error::Parameter(format!(
            "dynamic range must be a finite value >= 1, got {delta_range}"
        )));
    }
    let rounds_cap = delta_range.log2().ceil().max(0.0) as usize + 1;
    let prune_cap = ((2.0 * k as f64 / hm.epsilon).ceil() as usize).max(1);
    let id_rows = hm.identification.rows;
    let a_rows = hm.sift.rows;
    let l = hm.bit_tests.num_tests;

    let mut xhat = SpikeList::new();
    let mut diag = PursuitDiagnostics::default();
    let mut group = vec![0.0; l];
    for _ in 0..rounds_cap {
        let residual = if xhat.is_empty() {
            v.values.clone()
        } else {
            let encoded = hm.apply(&xhat.to_dense(hm.n)?)?;
            signal::sub(&v.values, &encoded.values)
        };
        if signal::linf(&residual) <= RESIDUAL_TOL {
            break;
        }
        // Locate: decode every bit-test block of the identification part,
        // tally one vote per sift row, keep locations clearing the
        // per-scale threshold ⌈d·j/4⌉.
        let mut votes: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
        for block in &hm.blocks {
            let tally = votes.entry(block.j).or_default();
            for a in block.a_start..block.a_start + block.a_rows {
                for (t, slot) in group.iter_mut().enumerate() {
                    *slot = residual[t * a_rows + a];
                }
                if let Some((idx, _)) = decode_block_relative(&group, hm.n) {
                    *tally.entry(idx).or_insert(0) += 1;
                }
            }
        }
        let mut located: BTreeMap<usize, usize> = BTreeMap::new();
        for (&j, tally) in &votes {
            let threshold = (SIFT_DEGREE * j).div_ceil(4);
            for (&idx, &count) in tally {
                if count >= threshold {
                    *located.entry(idx).or_insert(0) += count;
                }
            }
        }
        let mut ranked: Vec<(usize, usize)> = located.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(hm.location_cap);
        let mut support: Vec<usize> = ranked.into_iter().map(|(idx, _)| idx).collect();
        support.sort_unstable();
        diag.located_per_round.push(support.len());
        diag.rounds += 1;
        if support.is_empty() {
            // Nothing decodable: later rounds would see the same residual.
            break;
        }
        let (values, est_iters) = estimate_values(&hm.estimation, &support, &residual[id_rows..])?;
        diag.estimation_iterations.push(est_iters);
        let round_spikes =
            SpikeList::from_pairs(support.into_iter().zip(values).collect());
        xhat = xhat.merge(&round_spikes).pruned(prune_cap);
    }
    let xhat = xhat.drop_below(SPIKE_TOL);
    let encoded = hm.apply(&xhat.to_dense(hm.n)?)?;
    diag.residual_linf = signal::linf(&signal::sub(&v.values, &encoded.values));
    Ok((xhat, diag))
}

/// Result of comparing a truncated recovery against the two tail bounds
/// it is designed to meet.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub k: usize,
    pub p: f64,
    pub epsilon: f64,
    /// `‖x − x̂_k‖_p` against `‖x − x_k‖_p + 2ε·k^{1/p−1}·‖x − x_k‖₁`.
    pub lp_error: f64,
    pub lp_bound: f64,
    pub lp_satisfied: bool,
    /// `‖x − x̂_k‖₁` against `(1 + 3ε)·‖x − x_k‖₁`.
    pub l1_error: f64,
    pub l1_bound: f64,
    pub l1_satisfied: bool,
}

/// Keeps the `k` largest-magnitude spikes of `xhat` and evaluates both
/// tail-error bounds against the reference signal `x`.
pub fn truncate_to_k(
    xhat: &SpikeList,
    k: usize,
    x: &[f64],
    p: f64,
    epsilon: f64,
) -> Result<(SpikeList, TruncationReport)> {
    if k == 0 {
        return Err(Error::Parameter("truncation size must be at least 1".into()));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::Parameter(format!("p must lie in [1,2], got {p}")));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Parameter(format!("approximation slack must be positive, got {epsilon}")));
    }
    let kept = xhat.pruned(k);
    let diff = signal::sub(x, &kept.to_dense(x.len())?);
    let tail = signal::sub(x, &signal::head_approximation(x, k));
    let tail_l1 = signal::l1(&tail);
    let lp_error = signal::lp(&diff, p);
    let lp_bound =
        signal::lp(&tail, p) + 2.0 * epsilon * (k as f64).powf(1.0 / p - 1.0) * tail_l1;
    let l1_error = signal::l1(&diff);
    let l1_bound = (1.0 + 3.0 * epsilon) * tail_l1;
    let report = TruncationReport {
        k,
        p,
        epsilon,
        lp_error,
        lp_bound,
        lp_satisfied: lp_error <= lp_bound + 1e-9,
        l1_error,
        l1_bound,
        l1_satisfied: l1_error <= l1_bound + 1e-9,
    };
    Ok((kept, report))
}

/// One-sided bound evaluation: `lhs ≤ rhs` up to a 1e-9 slack.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
}

impl BoundReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        BoundReport { lhs, rhs, margin: lhs - rhs, satisfied: lhs <= rhs + 1e-9 }
    }
}

/// Checks the tail-to-total comparison `‖g − g_t‖_p ≤
/// (1/(p−1))^{1/p}·t^{1/p−1}·‖g‖₁` for `1 < p ≤ 2`.
pub fn check_head_bound(g: &[f64], t: usize, p: f64) -> Result<BoundReport> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::Parameter(format!("p must lie in (1,2], got {p}")));
    }
    if t == 0 {
        return Err(Error::Parameter("head size must be at least 1".into()));
    }
    let tail = signal::sub(g, &signal::head_approximation(g, t));
    let lhs = signal::lp(&tail, p);
    let rhs = (1.0 / (p - 1.0)).powf(1.0 / p) * (t as f64).powf(1.0 / p - 1.0) * signal::l1(g);
    Ok(BoundReport::new(lhs, rhs))
}

/// Operator-bound evaluation for a unit-`ℓp`-column expander matrix.
#[derive(Debug, Clone, Serialize)]
pub struct RipOperatorReport {
    /// Norm exponent recovered from the matrix scale.
    pub p: f64,
    /// Measured expansion defect at the tested set size.
    pub epsilon_hat: f64,
    /// True when the expansion check enumerated every set.
    pub exhaustive: bool,
    /// Distortion `1/(1−2ε̂) − 1` implied by the defect.
    pub delta: f64,
    pub bound: BoundReport,
}

/// Evaluates `‖Φx‖_p ≤ (1+δ)·(‖x‖_p + K^{1/p−1}·‖x‖₁)` for an arbitrary
/// signal `x`, with `δ` taken from the measured expansion defect at set
/// size `K`.  The exponent is recovered from the column scale `d^{−1/p}`.
pub fn check_rip_p_operator_bound(
    phi: &SparseBinaryMatrix,
    big_k: usize,
    x: &[f64],
) -> Result<RipOperatorReport> {
    let d = phi.column_degree()?;
    if d < 2 {
        return Err(Error::Parameter(
            "cannot recover the norm exponent from a degree-1 matrix".into(),
        ));
    }
    if !(phi.scale > 0.0 && phi.scale < 1.0) {
        return Err(Error::Parameter(
            "matrix must carry its unit-column normalization (scale in (0,1))".into(),
        ));
    }
    let p = -(d as f64).ln() / phi.scale.ln();
    if !(0.999..=2.001).contains(&p) {
        return Err(Error::Parameter(format!(
            "matrix scale implies norm exponent {p:.4}, outside [1,2]"
        )));
    }
    let graph = BipartiteGraph::new(phi.cols, phi.rows, d, phi.col_adjacency.clone())?;
    let report = match check_expansion_exact(&graph, big_k) {
        Ok(r) => r,
        Err(Error::BudgetExceeded { .. }) => check_expansion_sampled(&graph, big_k, 2000, 0)?,
        Err(e) => return Err(e),
    };
    let eps = report.epsilon_hat;
    if eps >= 0.5 {
        return Err(Error::BoundUndefined(format!(
            "expansion defect {eps:.4} >= 1/2 leaves the distortion unbounded"
        )));
    }
    let delta = 1.0 / (1.0 - 2.0 * eps) - 1.0;
    let lhs = signal::lp(&apply(phi, x)?.values, p);
    let rhs = (1.0 + delta)
        * (signal::lp(x, p) + (big_k as f64).powf(1.0 / p - 1.0) * signal::l1(x));
    Ok(RipOperatorReport {
        p,
        epsilon_hat: eps,
        exhaustive: report.exhaustive,
        delta,
        bound: BoundReport::new(lhs, rhs),
    })
}

/// Fraction of spikes seeing at least one clean row of a sift expander:
/// no other spike present and off-spike mass at most `2‖g‖₁/ℓ`.
#[derive(Debug, Clone, Serialize)]
pub struct IsolationReport {
    pub spike_count: usize,
    pub isolated: usize,
    pub fraction: f64,
    /// Row noise cap used: `2‖g‖₁ / spike_count`.
    pub noise_cap: f64,
}

/// Measures how many of `spikes` are isolated by `phi` in the presence of
/// the dense noise vector `g` (entries of `g` at spike positions are
/// ignored).
pub fn check_isolation(
    phi: &SparseBinaryMatrix,
    spikes: &[usize],
    g: &[f64],
) -> Result<IsolationReport> {
    if g.len() != phi.cols {
        return Err(Error::Dimension(format!(
            "noise length {} != matrix cols {}",
            g.len(),
            phi.cols
        )));
    }
    if spikes.is_empty() {
        return Err(Error::Parameter("need at least one spike".into()));
    }
    if spikes.windows(2).any(|w| w[0] >= w[1]) || *spikes.last().unwrap() >= phi.cols {
        return Err(Error::Parameter("spikes must be sorted, unique and in range".into()));
    }
    let rows = phi.row_adjacency();
    let is_spike = {
        let mut mask = vec![false; phi.cols];
        for &s in spikes {
            mask[s] = true;
        }
        mask
    };
    let total_noise: f64 = g
        .iter()
        .enumerate()
        .filter(|&(j, _)| !is_spike[j])
        .map(|(_, v)| v.abs())
        .sum();
    let noise_cap = 2.0 * total_noise / spikes.len() as f64;
    let mut isolated = 0usize;
    for &s in spikes {
        let clean = phi.col_adjacency[s].iter().any(|&r| {
            let mut other_spike = false;
            let mut mass = 0.0;
            for &c in &rows[r] {
                if c == s {
                    continue;
                }
                if is_spike[c] {
                    other_spike = true;
                    break;
                }
                mass += g[c].abs();
            }
            !other_spike && mass <= noise_cap + 1e-12
        });
        if clean {
            isolated += 1;
        }
    }
    Ok(IsolationReport {
        spike_count: spikes.len(),
        isolated,
        fraction: isolated as f64 / spikes.len() as f64,
        noise_cap,
    })
}

/// Noise mass landing next to one spike in each of its polynomial-split
/// rows, plus the calibrated constant `C` such that half of the rows
/// carry mass at most `C/r`.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseReductionReport {
    pub rows: usize,
    pub median_mass: f64,
    /// `median_mass · r`; half the rows carry mass ≤ `calibrated_c / r`.
    pub calibrated_c: f64,
}

/// Per-evaluation-point off-spike noise mass for one spike under a
/// polynomial-split matrix.
pub fn noise_reduction_profile(nw: &NwMatrix, spike: usize, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != nw.matrix.cols {
        return Err(Error::Dimension(format!(
            "noise length {} != matrix cols {}",
            g.len(),
            nw.matrix.cols
        )));
    }
    if spike >= nw.matrix.cols {
        return Err(Error::Parameter(format!("spike {spike} out of range")));
    }
    let rows = nw.matrix.row_adjacency();
    Ok(nw.matrix.col_adjacency[spike]
        .iter()
        .map(|&r| rows[r].iter().filter(|&&c| c != spike).map(|&c| g[c].abs()).sum())
        .collect())
}

/// Summarizes [`noise_reduction_profile`] at spacing `r`.
pub fn check_noise_reduction(
    nw: &NwMatrix,
    spike: usize,
    g: &[f64],
    r: usize,
) -> Result<NoiseReductionReport> {
    if r == 0 {
        return Err(Error::Parameter("spacing must be at least 1".into()));
    }
    let mut profile = noise_reduction_profile(nw, spike, g)?;
    profile.sort_by(|a, b| a.partial_cmp(b).expect("noise masses are finite"));
    let median_mass = profile[(profile.len() - 1) / 2];
    Ok(NoiseReductionReport {
        rows: profile.len(),
        median_mass,
        calibrated_c: median_mass * r as f64,
    })
}
