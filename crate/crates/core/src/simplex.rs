//! Dense two-phase tableau simplex for small linear programs.
//!
//! All variables are implicitly nonnegative; callers encode free variables
//! by splitting.  Phase 1 minimizes the sum of artificial variables to find
//! a feasible basis (removing rows that turn out redundant), phase 2
//! minimizes the caller's objective.  Pivoting uses Dantzig's rule and
//! falls back to Bland's rule after a window of non-improving pivots.
//!
//! Incremental tableau updates accumulate rounding error, and the highly
//! degenerate 0/±1 programs this crate solves make that error decisive:
//! drifted reduced costs keep the solver pivoting at an optimal face, or
//! end phase 1 above the feasibility tolerance on a feasible system.  The
//! tableau is therefore rebuilt from the original constraint data (an LU
//! solve against the current basis) on a fixed pivot cadence, and every
//! terminal verdict — optimal, unbounded, or infeasible — is only accepted
//! off a freshly rebuilt tableau.  The ratio test breaks near-ties by the
//! largest pivot element to bound growth between rebuilds (smallest basis
//! index instead while Bland's rule is active).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintOp {
    Eq,
    Le,
}

/// `min c·x  s.t.  rows, x ≥ 0`, with each row `(coeffs, op, rhs)`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, ConstraintOp, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Optimal,
    Infeasible,
    Unbounded,
    BudgetExceeded,
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub status: SimplexStatus,
    /// Structural variable values at the final basis (whatever its status).
    pub x: Vec<f64>,
    /// `c·x` recomputed from `x`, not read off the tableau.
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub pivot_budget: usize,
    /// Consecutive non-improving pivots before switching to Bland's rule.
    pub stall_window: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            pivot_budget: 1_000_000,
            stall_window: 64,
        }
    }
}

/// Pivots between tableau rebuilds from the original constraint data.
const REINVERT_EVERY: usize = 100;
/// Smallest acceptable pivot magnitude when forcing a leftover artificial
/// out of the basis; rows with nothing larger are treated as redundant.
const DRIVE_OUT_TOL: f64 = 1e-7;

enum PhaseEnd {
    Optimal,
    Unbounded,
    BudgetExceeded,
}

struct Tableau {
    /// `m × (ncols + 1)`; the last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced costs (+ negated objective value in the last cell) for the
    /// phase-1 and phase-2 objectives; both are updated by every pivot.
    cost1: Vec<f64>,
    cost2: Vec<f64>,
    basis: Vec<usize>,
    art_start: usize,
    ncols: usize,
    pivots: usize,
    bland: bool,
    stall: usize,
    /// Pristine copy of the initial tableau rows (slacks, artificials, rhs).
    orig: Vec<Vec<f64>>,
    /// Index into `orig` for each surviving tableau row.
    rowmap: Vec<usize>,
    /// Full-length phase-1 / phase-2 cost vectors over all columns.
    c1_full: Vec<f64>,
    c2_full: Vec<f64>,
    since_reinvert: usize,
}

impl Tableau {
    fn pivot(&mut self, prow: usize, pcol: usize) {
        let piv = self.rows[prow][pcol];
        for v in &mut self.rows[prow] {
            *v /= piv;
        }
        self.rows[prow][pcol] = 1.0;
        let pivot_row = std::mem::take(&mut self.rows[prow]);
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == prow {
                continue;
            }
            let f = row[pcol];
            if f != 0.0 {
                for (dst, src) in row.iter_mut().zip(&pivot_row) {
                    *dst -= f * src;
                }
                row[pcol] = 0.0;
            }
        }
        for cost in [&mut self.cost1, &mut self.cost2] {
            let f = cost[pcol];
            if f != 0.0 {
                for (dst, src) in cost.iter_mut().zip(&pivot_row) {
                    *dst -= f * src;
                }
                cost[pcol] = 0.0;
            }
        }
        self.rows[prow] = pivot_row;
        self.basis[prow] = pcol;
        self.pivots += 1;
        self.since_reinvert += 1;
    }

    /// Rebuilds the tableau and both cost rows from the original constraint
    /// data for the current basis, discarding accumulated rounding error.
    /// A (numerically) singular basis leaves the tableau untouched; the
    /// pivot budget remains the backstop in that degenerate state.
    fn reinvert(&mut self) {
        self.since_reinvert = 0;
        let k = self.rows.len();
        if k == 0 {
            return;
        }
        // LU-factorize the basis matrix with partial pivoting.
        let mut lu = vec![vec![0.0; k]; k];
        for (r, row) in lu.iter_mut().enumerate() {
            for (i, cell) in row.iter_mut().enumerate() {
                *cell = self.orig[self.rowmap[r]][self.basis[i]];
            }
        }
        let mut perm: Vec<usize> = (0..k).collect();
        for col in 0..k {
            let mut p = col;
            for r in col + 1..k {
                if lu[r][col].abs() > lu[p][col].abs() {
                    p = r;
                }
            }
            if lu[p][col].abs() < 1e-12 {
                return;
            }
            lu.swap(col, p);
            perm.swap(col, p);
            let inv = 1.0 / lu[col][col];
            for r in col + 1..k {
                let f = lu[r][col] * inv;
                lu[r][col] = f;
                if f != 0.0 {
                    for c in col + 1..k {
                        lu[r][c] -= f * lu[col][c];
                    }
                }
            }
        }
        // rows = B⁻¹ · (original rows), one column solve at a time.
        let mut fresh = vec![vec![0.0; self.ncols + 1]; k];
        let mut col = vec![0.0; k];
        for j in 0..=self.ncols {
            for (r, cell) in col.iter_mut().enumerate() {
                *cell = self.orig[self.rowmap[perm[r]]][j];
            }
            for r in 1..k {
                let mut s = col[r];
                for c in 0..r {
                    s -= lu[r][c] * col[c];
                }
                col[r] = s;
            }
            for r in (0..k).rev() {
                let mut s = col[r];
                for c in r + 1..k {
                    s -= lu[r][c] * col[c];
                }
                col[r] = s / lu[r][r];
            }
            for (r, &v) in col.iter().enumerate() {
                fresh[r][j] = v;
            }
        }
        // The basis block of B⁻¹·B is the identity by definition; make it
        // exact so basic columns can never look eligible to re-enter.
        for (i, &b) in self.basis.iter().enumerate() {
            for (r, row) in fresh.iter_mut().enumerate() {
                row[b] = if r == i { 1.0 } else { 0.0 };
            }
        }
        self.rows = fresh;
        // cost_j = c_j − c_Bᵀ (B⁻¹A)_j, with the negated objective value
        // landing in the right-hand-side cell (c_full there is zero).
        for (cost, full) in
            [(&mut self.cost1, &self.c1_full), (&mut self.cost2, &self.c2_full)]
        {
            cost.copy_from_slice(full);
            for (i, &b) in self.basis.iter().enumerate() {
                let cb = full[b];
                if cb != 0.0 {
                    for (dst, src) in cost.iter_mut().zip(&self.rows[i]) {
                        *dst -= cb * src;
                    }
                }
            }
            for &b in &self.basis {
                cost[b] = 0.0;
            }
        }
    }

    fn run_phase(&mut self, phase1: bool, opts: &SimplexOptions) -> PhaseEnd {
        loop {
            if self.pivots >= opts.pivot_budget {
                return PhaseEnd::BudgetExceeded;
            }
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert();
            }
            let cost = if phase1 { &self.cost1 } else { &self.cost2 };
            let mut entering = None;
            if self.bland {
                for j in 0..self.art_start {
                    if cost[j] < -opts.optimality_tol {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -opts.optimality_tol;
                for j in 0..self.art_start {
                    if cost[j] < best {
                        best = cost[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(e) = entering else {
                // Optimality seen on a stale tableau may be an artifact of
                // drifted reduced costs: rebuild and re-derive the verdict.
                if self.since_reinvert > 0 {
                    self.reinvert();
                    continue;
                }
                return PhaseEnd::Optimal;
            };
            // Two-pass ratio test: find the minimum ratio, then break
            // near-ties by the largest pivot element (numerical growth
            // control) or, under Bland's rule, the smallest basis index.
            let mut min_ratio = f64::INFINITY;
            for r in 0..self.rows.len() {
                let a = self.rows[r][e];
                if a > opts.pivot_tol {
                    min_ratio = min_ratio.min(self.rows[r][self.ncols] / a);
                }
            }
            if min_ratio == f64::INFINITY {
                if self.since_reinvert > 0 {
                    self.reinvert();
                    continue;
                }
                return PhaseEnd::Unbounded;
            }
            let tie = 1e-9 * (1.0 + min_ratio.abs());
            let mut prow = usize::MAX;
            let mut best_pivot = 0.0;
            let mut best_index = usize::MAX;
            for r in 0..self.rows.len() {
                let a = self.rows[r][e];
                if a > opts.pivot_tol && self.rows[r][self.ncols] / a <= min_ratio + tie {
                    if self.bland {
                        if self.basis[r] < best_index {
                            best_index = self.basis[r];
                            prow = r;
                        }
                    } else if a > best_pivot {
                        best_pivot = a;
                        prow = r;
                    }
                }
            }
            let z_before = -cost[self.ncols];
            self.pivot(prow, e);
            let cost_after = if phase1 { &self.cost1 } else { &self.cost2 };
            let z_after = -cost_after[self.ncols];
            if z_before - z_after <= 1e-10 * (1.0 + z_before.abs()) {
                self.stall += 1;
                if self.stall >= opts.stall_window {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
                self.bland = false;
            }
        }
    }

    fn extract(&self, num_vars: usize) -> Vec<f64> {
        let mut x = vec![0.0; num_vars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < num_vars {
                x[b] = self.rows[r][self.ncols];
            }
        }
        x
    }
}

enum RowKind {
    Le,
    Ge,
    Eq,
}

/// Solves the program; statuses other than `Optimal` still carry the last
/// basic solution for diagnostics.
pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> SimplexOutcome {
    assert_eq!(lp.objective.len(), lp.num_vars, "objective length mismatch");
    let nv = lp.num_vars;
    // Normalize to nonnegative right-hand sides.
    let mut norm: Vec<(Vec<f64>, RowKind, f64)> = Vec::with_capacity(lp.rows.len());
    for (coeffs, op, rhs) in &lp.rows {
        assert_eq!(coeffs.len(), nv, "constraint length mismatch");
        let flip = *rhs < 0.0;
        let c: Vec<f64> = if flip { coeffs.iter().map(|v| -v).collect() } else { coeffs.clone() };
        let b = if flip { -rhs } else { *rhs };
        let kind = match (op, flip) {
            (ConstraintOp::Eq, _) => RowKind::Eq,
            (ConstraintOp::Le, false) => RowKind::Le,
            (ConstraintOp::Le, true) => RowKind::Ge,
        };
        norm.push((c, kind, b));
    }
    let m = norm.len();
    let n_extra = norm
        .iter()
        .map(|(_, k, _)| match k {
            RowKind::Le | RowKind::Ge => 1,
            RowKind::Eq => 0,
        })
        .sum::<usize>();
    let n_art = norm
        .iter()
        .map(|(_, k, _)| match k {
            RowKind::Le => 0,
            RowKind::Ge | RowKind::Eq => 1,
        })
        .sum::<usize>();
    let art_start = nv + n_extra;
    let ncols = art_start + n_art;

    let mut rows = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut next_extra = nv;
    let mut next_art = art_start;
    for (r, (coeffs, kind, b)) in norm.iter().enumerate() {
        rows[r][..nv].copy_from_slice(coeffs);
        rows[r][ncols] = *b;
        match kind {
            RowKind::Le => {
                rows[r][next_extra] = 1.0;
                basis[r] = next_extra;
                next_extra += 1;
            }
            RowKind::Ge => {
                rows[r][next_extra] = -1.0;
                next_extra += 1;
                rows[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
            RowKind::Eq => {
                rows[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
    }

    let mut cost2 = vec![0.0; ncols + 1];
    cost2[..nv].copy_from_slice(&lp.objective);
    let mut cost1 = vec![0.0; ncols + 1];
    for j in art_start..ncols {
        cost1[j] = 1.0;
    }
    let c1_full = cost1.clone();
    let c2_full = cost2.clone();
    for (r, &b) in basis.iter().enumerate() {
        if b >= art_start {
            for j in 0..=ncols {
                cost1[j] -= rows[r][j];
            }
        }
    }

    let mut tab = Tableau {
        orig: rows.clone(),
        rowmap: (0..m).collect(),
        rows,
        cost1,
        cost2,
        basis,
        art_start,
        ncols,
        pivots: 0,
        bland: false,
        stall: 0,
        c1_full,
        c2_full,
        since_reinvert: 0,
    };

    let finish = |tab: &Tableau, status: SimplexStatus| {
        let x = tab.extract(nv);
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        SimplexOutcome { status, x, objective, pivots: tab.pivots }
    };

    if n_art > 0 {
        match tab.run_phase(true, opts) {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                // Phase 1 is bounded below by zero; failing the ratio test
                // here is a numerical breakdown, reported as infeasible.
                return finish(&tab, SimplexStatus::Infeasible);
            }
            PhaseEnd::BudgetExceeded => return finish(&tab, SimplexStatus::BudgetExceeded),
        }
        let z1 = -tab.cost1[tab.ncols];
        if z1 > opts.feasibility_tol {
            return finish(&tab, SimplexStatus::Infeasible);
        }
        // Drive remaining artificials out of the basis, pivoting on the
        // largest available element; rows with nothing above the drive-out
        // threshold are redundant and dropped.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= tab.art_start {
                let mut best = (0.0f64, usize::MAX);
                for j in 0..tab.art_start {
                    let a = tab.rows[r][j].abs();
                    if a > best.0 {
                        best = (a, j);
                    }
                }
                if best.0 > DRIVE_OUT_TOL {
                    tab.pivot(r, best.1);
                    r += 1;
                } else {
                    tab.rows.swap_remove(r);
                    tab.basis.swap_remove(r);
                    tab.rowmap.swap_remove(r);
                }
            } else {
                r += 1;
            }
        }
        tab.stall = 0;
        tab.bland = false;
    }

    match tab.run_phase(false, opts) {
        PhaseEnd::Optimal => finish(&tab, SimplexStatus::Optimal),
        PhaseEnd::Unbounded => finish(&tab, SimplexStatus::Unbounded),
        PhaseEnd::BudgetExceeded => finish(&tab, SimplexStatus::BudgetExceeded),
    }
}
