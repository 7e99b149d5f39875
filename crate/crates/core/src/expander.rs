//! Left-regular bipartite graphs and expansion measurement.
//!
//! The central quantity is the expansion defect of a set `X` of left
//! vertices: `1 - |N(X)| / (d·|X|)`, where `N(X)` is the right
//! neighborhood.  A graph is a good expander when every small set has
//! defect at most ε.  `check_expansion_exact` finds the worst defect over
//! all sets of size at most `k` by exhaustive enumeration with
//! branch-and-bound pruning; `check_expansion_sampled` gives a cheap lower
//! bound on the same quantity.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{self, ConstraintOp, LinearProgram, SimplexOptions, SimplexStatus};
use crate::sketch::SparseBinaryMatrix;

/// Default cap on the number of subsets (or sign faces) an exhaustive
/// check may examine before it refuses to run.
pub const DEFAULT_SUBSET_BUDGET: u128 = 10_000_000;

/// Bipartite graph with `n_left` left vertices, each adjacent to exactly
/// `degree` distinct right vertices out of `m_right`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    pub n_left: usize,
    pub m_right: usize,
    pub degree: usize,
    /// `neighbors[v]` is the sorted list of right vertices adjacent to `v`.
    pub neighbors: Vec<Vec<usize>>,
}

/// Result of an expansion measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    /// Set size actually tested (the requested `k`, clamped to `n_left`).
    pub k_tested: usize,
    /// Worst observed defect `1 - |N(X)|/(d|X|)`.
    pub epsilon_hat: f64,
    /// A set achieving the worst defect (lexicographically smallest among
    /// the maximizers for exhaustive checks).
    pub worst_set: Vec<usize>,
    /// True when every set of size 1..=k_tested was covered.
    pub exhaustive: bool,
    /// True when the requested `k` exceeded `n_left` and was reduced.
    pub k_clamped: bool,
}

/// Exact lower/upper frame constants for the unscaled 0-1 matrix on
/// k-sparse signals: `lo·d·‖x‖₁ ≤ ‖Φx‖₁ ≤ hi·d·‖x‖₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rip1Constants {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    m: usize,
    d: usize,
    neighbors: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    /// Validates left-regularity, sortedness, and index ranges.
    pub fn new(
        n_left: usize,
        m_right: usize,
        degree: usize,
        neighbors: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if n_left == 0 || m_right == 0 {
            return Err(Error::Parameter("graph must have vertices on both sides".into()));
        }
        if degree == 0 || degree > m_right {
            return Err(Error::Parameter(format!(
                "degree {degree} must lie in 1..={m_right}"
            )));
        }
        if neighbors.len() != n_left {
            return Err(Error::Dimension(format!(
                "expected {n_left} neighbor lists, got {}",
                neighbors.len()
            )));
        }
        for (v, nbrs) in neighbors.iter().enumerate() {
            if nbrs.len() != degree {
                return Err(Error::Parameter(format!(
                    "vertex {v} has {} neighbors, expected {degree}",
                    nbrs.len()
                )));
            }
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Parameter(format!(
                        "vertex {v} neighbor list not strictly increasing"
                    )));
                }
            }
            if let Some(&last) = nbrs.last() {
                if last >= m_right {
                    return Err(Error::Parameter(format!(
                        "vertex {v} references right vertex {last} >= {m_right}"
                    )));
                }
            }
        }
        Ok(BipartiteGraph { n_left, m_right, degree, neighbors })
    }

    /// Bitset per left vertex over right vertices, `words` u64 words each.
    fn neighbor_masks(&self) -> (usize, Vec<Vec<u64>>) {
        let words = self.m_right.div_ceil(64);
        let masks = self
            .neighbors
            .iter()
            .map(|nbrs| {
                let mut m = vec![0u64; words];
                for &r in nbrs {
                    m[r / 64] |= 1u64 << (r % 64);
                }
                m
            })
            .collect();
        (words, masks)
    }

    pub fn to_json_string(&self) -> String {
        let doc = GraphJson {
            n: self.n_left,
            m: self.m_right,
            d: self.degree,
            neighbors: self.neighbors.clone(),
        };
        serde_json::to_string(&doc).expect("graph serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: GraphJson = serde_json::from_str(s)?;
        BipartiteGraph::new(doc.n, doc.m, doc.d, doc.neighbors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Samples a left-d-regular graph: each left vertex draws `d` distinct
/// right vertices via a partial Fisher-Yates shuffle.  Deterministic in
/// `seed`.
pub fn sample_expander(n: usize, m: usize, d: usize, seed: u64) -> Result<BipartiteGraph> {
    if n == 0 || m == 0 {
        return Err(Error::Parameter("n and m must be positive".into()));
    }
    if d == 0 || d > m {
        return Err(Error::Parameter(format!("degree {d} must lie in 1..={m}")));
    }
    let mut rng = crate::seed::rng(seed);
    use rand::Rng;
    // The pool stays a permutation of 0..m across vertices, so no reset is
    // needed between draws.
    let mut pool: Vec<usize> = (0..m).collect();
    let mut neighbors = Vec::with_capacity(n);
    for _ in 0..n {
        for i in 0..d {
            let j = rng.gen_range(i..m);
            pool.swap(i, j);
        }
        let mut nbrs: Vec<usize> = pool[..d].to_vec();
        nbrs.sort_unstable();
        neighbors.push(nbrs);
    }
    BipartiteGraph::new(n, m, d, neighbors)
}

/// Right neighborhood of a set of left vertices (duplicates in the input
/// are collapsed), returned sorted.
pub fn neighborhood(g: &BipartiteGraph, xs: &[usize]) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for &v in xs {
        if v >= g.n_left {
            return Err(Error::Parameter(format!(
                "vertex {v} out of range ({} left vertices)",
                g.n_left
            )));
        }
        out.extend(g.neighbors[v].iter().copied());
    }
    Ok(out.into_iter().collect())
}

#[derive(Clone)]
struct BestSet {
    num: u64,
    den: u64,
    set: Vec<usize>,
}

/// `a/b > c/d` on nonnegative integer fractions, exactly.
fn defect_gt(a_num: u64, a_den: u64, b_num: u64, b_den: u64) -> bool {
    (a_num as u128) * (b_den as u128) > (b_num as u128) * (a_den as u128)
}

fn defect_eq(a_num: u64, a_den: u64, b_num: u64, b_den: u64) -> bool {
    (a_num as u128) * (b_den as u128) == (b_num as u128) * (a_den as u128)
}

/// Number of subsets of size 1..=k of an n-element set, saturating.
fn subset_count(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for s in 1..=k {
        binom = match binom
            .checked_mul((n - s + 1) as u128)
            .map(|b| b / s as u128)
        {
            Some(b) => b,
            None => return u128::MAX,
        };
        total = match total.checked_add(binom) {
            Some(t) => t,
            None => return u128::MAX,
        };
    }
    total
}

struct DfsShared<'a> {
    n: usize,
    d: u64,
    k: u64,
    global_bits: &'a AtomicU64,
}

struct DfsState {
    best: Option<BestSet>,
    current: Vec<usize>,
}

impl DfsState {
    /// Records the set `current` with `nu` distinct neighbors if it beats
    /// the best defect so far; ties keep the earlier (lexicographically
    /// smaller) set.
    fn consider(&mut self, shared: &DfsShared<'_>, nu: u64) {
        let s = self.current.len() as u64;
        let den = shared.d * s;
        let num = den - nu;
        let replace = match &self.best {
            None => true,
            Some(b) => defect_gt(num, den, b.num, b.den),
        };
        if replace {
            self.best = Some(BestSet { num, den, set: self.current.clone() });
            // Defects are nonnegative, so f64 bit patterns order like values.
            shared
                .global_bits
                .fetch_max((num as f64 / den as f64).to_bits(), Ordering::Relaxed);
        }
    }

    /// True when no strict superset (up to size k) of a set with `nu`
    /// distinct neighbors can beat the best defect seen so far.  The bound
    /// `(dk - nu)/(dk)` dominates every extension because the neighborhood
    /// only grows; the comparison is strict, so tied maximizers survive.
    fn prunable(&self, shared: &DfsShared<'_>, nu: u64) -> bool {
        let bden = shared.d * shared.k;
        let bnum = bden.saturating_sub(nu);
        if let Some(b) = &self.best {
            if (bnum as u128) * (b.den as u128) < (b.num as u128) * (bden as u128) {
                return true;
            }
        }
        let g = f64::from_bits(shared.global_bits.load(Ordering::Relaxed));
        // Conservative margin below the defect published by other branches.
        (bnum as f64) / (bden as f64) < g - 1e-12
    }
}

/// Single-word DFS for graphs with at most 64 right vertices.
fn dfs_explore64(shared: &DfsShared<'_>, masks: &[u64], state: &mut DfsState, first: usize, mask: u64) {
    for v in first..shared.n {
        let child = mask | masks[v];
        let nu = child.count_ones() as u64;
        state.current.push(v);
        state.consider(shared, nu);
        if (state.current.len() as u64) < shared.k && !state.prunable(shared, nu) {
            dfs_explore64(shared, masks, state, v + 1, child);
        }
        state.current.pop();
    }
}

/// Multi-word DFS; `stack[depth]` holds the union mask of the current set.
fn dfs_explore_wide(
    shared: &DfsShared<'_>,
    masks: &[Vec<u64>],
    state: &mut DfsState,
    stack: &mut [Vec<u64>],
    first: usize,
    depth: usize,
) {
    let words = masks[0].len();
    for v in first..shared.n {
        {
            let (lo, hi) = stack.split_at_mut(depth + 1);
            let parent = &lo[depth];
            let child = &mut hi[0];
            for w in 0..words {
                child[w] = parent[w] | masks[v][w];
            }
        }
        let nu: u64 = stack[depth + 1].iter().map(|w| w.count_ones() as u64).sum();
        state.current.push(v);
        state.consider(shared, nu);
        if (state.current.len() as u64) < shared.k && !state.prunable(shared, nu) {
            dfs_explore_wide(shared, masks, state, stack, v + 1, depth + 1);
        }
        state.current.pop();
    }
}

fn merge_best(results: Vec<Option<BestSet>>) -> Option<BestSet> {
    let mut out: Option<BestSet> = None;
    for cand in results.into_iter().flatten() {
        let take = match &out {
            None => true,
            Some(b) => defect_gt(cand.num, cand.den, b.num, b.den),
        };
        if take {
            out = Some(cand);
        }
    }
    out
}

/// Exhaustive worst-case expansion defect over all left sets of size
/// 1..=k, with the default work budget.
pub fn check_expansion_exact(g: &BipartiteGraph, k: usize) -> Result<ExpansionReport> {
    check_expansion_exact_with_budget(g, k, DEFAULT_SUBSET_BUDGET)
}

/// As [`check_expansion_exact`] but with an explicit cap on the number of
/// subsets the enumeration may visit.
pub fn check_expansion_exact_with_budget(
    g: &BipartiteGraph,
    k: usize,
    budget: u128,
) -> Result<ExpansionReport> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let k_eff = k.min(g.n_left);
    let required = subset_count(g.n_left, k_eff);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let (words, masks) = g.neighbor_masks();
    let global_bits = AtomicU64::new(0f64.to_bits());
    let shared = DfsShared {
        n: g.n_left,
        d: g.degree as u64,
        k: k_eff as u64,
        global_bits: &global_bits,
    };
    let masks64: Vec<u64> = if words == 1 { masks.iter().map(|m| m[0]).collect() } else { Vec::new() };
    // Parallel over the smallest element of the set; each branch explores
    // its sub-tree in lexicographic (pre)order, so the first maximizer each
    // branch keeps is its lexicographically smallest.  The sequential merge
    // below then picks the overall lexicographically smallest maximizer,
    // independent of scheduling: pruning is strict, so ties are never lost.
    let results: Vec<Option<BestSet>> = (0..g.n_left)
        .into_par_iter()
        .map(|v0| {
            let mut state = DfsState { best: None, current: Vec::with_capacity(k_eff) };
            let nu: u64 = masks[v0].iter().map(|w| w.count_ones() as u64).sum();
            state.current.push(v0);
            state.consider(&shared, nu);
            if k_eff > 1 && !state.prunable(&shared, nu) {
                if words == 1 {
                    dfs_explore64(&shared, &masks64, &mut state, v0 + 1, masks64[v0]);
                } else {
                    let mut stack = vec![vec![0u64; words]; k_eff + 1];
                    stack[1].copy_from_slice(&masks[v0]);
                    dfs_explore_wide(&shared, &masks, &mut state, &mut stack, v0 + 1, 1);
                }
            }
            state.best
        })
        .collect();
    let best = merge_best(results).expect("at least one set is always examined");
    Ok(ExpansionReport {
        k_tested: k_eff,
        epsilon_hat: best.num as f64 / best.den as f64,
        worst_set: best.set,
        exhaustive: true,
        k_clamped: k_eff < k,
    })
}

/// Monte-Carlo lower bound on the worst defect: samples `trials` sets with
/// sizes uniform in 1..=k and keeps the worst one seen.
pub fn check_expansion_sampled(
    g: &BipartiteGraph,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<ExpansionReport> {
    if k == 0 || trials == 0 {
        return Err(Error::Parameter("k and trials must be at least 1".into()));
    }
    let k_eff = k.min(g.n_left);
    let (_words, masks) = g.neighbor_masks();
    let words = masks[0].len();
    let mut rng = crate::seed::rng(seed);
    use rand::Rng;
    let mut pool: Vec<usize> = (0..g.n_left).collect();
    let mut best: Option<BestSet> = None;
    let mut mask = vec![0u64; words];
    for _ in 0..trials {
        let s = rng.gen_range(1..=k_eff);
        for i in 0..s {
            let j = rng.gen_range(i..g.n_left);
            pool.swap(i, j);
        }
        let mut set: Vec<usize> = pool[..s].to_vec();
        set.sort_unstable();
        mask.iter_mut().for_each(|w| *w = 0);
        for &v in &set {
            for w in 0..words {
                mask[w] |= masks[v][w];
            }
        }
        let nu: u64 = mask.iter().map(|w| w.count_ones() as u64).sum();
        let den = (g.degree * s) as u64;
        let num = den - nu;
        let replace = match &best {
            None => true,
            Some(b) => {
                defect_gt(num, den, b.num, b.den)
                    || (defect_eq(num, den, b.num, b.den) && set < b.set)
            }
        };
        if replace {
            best = Some(BestSet { num, den, set });
        }
    }
    let best = best.expect("trials >= 1");
    Ok(ExpansionReport {
        k_tested: k_eff,
        epsilon_hat: best.num as f64 / best.den as f64,
        worst_set: best.set,
        exhaustive: false,
        k_clamped: k_eff < k,
    })
}

/// Expansion quality sufficient for a given lower frame looseness: inverts
/// `δ` (from `lo = 1/(1+δ)`) into the ε that explains it.
pub fn epsilon_from_rip1_delta(delta: f64) -> Result<f64> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::Parameter(format!("delta must be finite and >= 0, got {delta}")));
    }
    Ok((1.0 - 1.0 / (1.0 + delta)) / (2.0 - std::f64::consts::SQRT_2))
}

/// Exact frame constants of the unscaled 0-1 matrix over k-sparse signals,
/// by solving one small LP per support and sign pattern.
pub fn rip1_constant_exact(phi: &SparseBinaryMatrix, k: usize) -> Result<Rip1Constants> {
    rip1_constant_exact_with_budget(phi, k, DEFAULT_SUBSET_BUDGET)
}

/// As [`rip1_constant_exact`] with an explicit cap on the number of sign
/// faces (LPs) examined.
pub fn rip1_constant_exact_with_budget(
    phi: &SparseBinaryMatrix,
    k: usize,
    budget: u128,
) -> Result<Rip1Constants> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if phi.scale != 1.0 {
        return Err(Error::Parameter("frame constants are defined for the unscaled 0-1 matrix".into()));
    }
    let d = phi.column_degree()?;
    let n = phi.cols;
    let k_eff = k.min(n);
    // One LP per (support, sign) face, with the first sign fixed to +1 by
    // the symmetry ‖Φ(-x)‖₁ = ‖Φx‖₁.
    let mut faces: u128 = 0;
    let mut binom: u128 = 1;
    for s in 1..=k_eff {
        binom = binom
            .checked_mul((n - s + 1) as u128)
            .map(|b| b / s as u128)
            .unwrap_or(u128::MAX);
        let f = binom.checked_mul(1u128 << (s - 1)).unwrap_or(u128::MAX);
        faces = faces.checked_add(f).unwrap_or(u128::MAX);
    }
    if faces > budget {
        return Err(Error::BudgetExceeded { required: faces, budget });
    }

    let mut lo = f64::INFINITY;
    let mut support = Vec::with_capacity(k_eff);
    lo_over_supports(phi, d, k_eff, 0, &mut support, &mut lo)?;
    Ok(Rip1Constants { lo, hi: 1.0 })
}

fn lo_over_supports(
    phi: &SparseBinaryMatrix,
    d: usize,
    k: usize,
    next: usize,
    support: &mut Vec<usize>,
    lo: &mut f64,
) -> Result<()> {
    for j in next..phi.cols {
        support.push(j);
        let v = face_minimum(phi, d, support)?;
        if v < *lo {
            *lo = v;
        }
        if support.len() < k {
            lo_over_supports(phi, d, k, j + 1, support, lo)?;
        }
        support.pop();
    }
    Ok(())
}

/// Minimum of `‖Φx‖₁ / d` over the face `{x : supp(x) ⊆ S, ‖x‖₁ = 1}`,
/// minimizing over all sign patterns with the first coordinate positive.
fn face_minimum(phi: &SparseBinaryMatrix, d: usize, support: &[usize]) -> Result<f64> {
    let s = support.len();
    let rows: Vec<usize> = {
        let mut set = BTreeSet::new();
        for &j in support {
            set.extend(phi.col_adjacency[j].iter().copied());
        }
        set.into_iter().collect()
    };
    let nrows = rows.len();
    let row_index = |r: usize| rows.binary_search(&r).expect("row in touched set");
    let mut best = f64::INFINITY;
    for pattern in 0..(1u64 << (s - 1)) {
        let signs: Vec<f64> = (0..s)
            .map(|i| {
                if i == 0 || pattern & (1 << (i - 1)) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        // Variables: w_0..w_{s-1} (magnitudes), t_0..t_{nrows-1} (row
        // absolute values).  Minimize Σt subject to ±(Φ(σ∘w))_r ≤ t_r and
        // Σw = 1, w,t ≥ 0.
        let nvars = s + nrows;
        let mut objective = vec![0.0; nvars];
        for t in 0..nrows {
            objective[s + t] = 1.0;
        }
        let mut lp_rows = Vec::with_capacity(2 * nrows + 1);
        let mut row_coef = vec![vec![0.0f64; s]; nrows];
        for (i, &j) in support.iter().enumerate() {
            for &r in &phi.col_adjacency[j] {
                row_coef[row_index(r)][i] = signs[i];
            }
        }
        for (ri, coef) in row_coef.iter().enumerate() {
            let mut up = vec![0.0; nvars];
            let mut down = vec![0.0; nvars];
            for i in 0..s {
                up[i] = coef[i];
                down[i] = -coef[i];
            }
            up[s + ri] = -1.0;
            down[s + ri] = -1.0;
            lp_rows.push((up, ConstraintOp::Le, 0.0));
            lp_rows.push((down, ConstraintOp::Le, 0.0));
        }
        let mut norm = vec![0.0; nvars];
        for i in 0..s {
            norm[i] = 1.0;
        }
        lp_rows.push((norm, ConstraintOp::Eq, 1.0));
        let lp = LinearProgram { num_vars: nvars, objective, rows: lp_rows };
        let out = simplex::solve(&lp, &SimplexOptions::default());
        if out.status != SimplexStatus::Optimal {
            return Err(Error::Parameter(format!(
                "face LP did not reach optimality (status {:?})",
                out.status
            )));
        }
        let v = out.objective / d as f64;
        if v < best {
            best = v;
        }
    }
    Ok(best)
}
