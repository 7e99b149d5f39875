//! Sparse recovery by ℓ1 minimization.
//!
//! `decode` solves `min ‖x‖₁ s.t. Φx = y` with the two-phase simplex on the
//! split formulation `x = x⁺ - x⁻`.  The evaluation helpers compare a
//! recovered signal against the approximation guarantee implied by the
//! measured expansion quality of the matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal;
use crate::simplex::{self, ConstraintOp, LinearProgram, SimplexOptions, SimplexStatus};
use crate::sketch::{self, SparseBinaryMatrix, Sketch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    BudgetExceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    pub x_star: Vec<f64>,
    /// ‖x*‖₁, recomputed from the solution vector.
    pub objective: f64,
    pub status: LpStatus,
    /// ‖Φx* - y‖∞, recomputed against the inputs.
    pub residual_inf: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub pivot_budget: usize,
    pub feasibility_tol: f64,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { pivot_budget: 1_000_000, feasibility_tol: 1e-9 }
    }
}

/// Outcome of testing a recovery against its ℓ1 approximation guarantee.
#[derive(Debug, Clone, Serialize)]
pub struct GuaranteeEvaluation {
    pub k: usize,
    pub epsilon: f64,
    /// Tail amplification factor `2ε/(1-2ε)`.
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `min ‖x‖₁ s.t. Φx = y` with default options.
pub fn decode(phi: &SparseBinaryMatrix, y: &Sketch) -> Result<LpSolution> {
    decode_with_options(phi, y, &LpOptions::default())
}

/// As [`decode`], with an explicit pivot budget and feasibility tolerance.
pub fn decode_with_options(
    phi: &SparseBinaryMatrix,
    y: &Sketch,
    opts: &LpOptions,
) -> Result<LpSolution> {
    let expected = phi.fingerprint();
    if y.provenance != expected {
        return Err(Error::ProvenanceMismatch { expected, found: y.provenance });
    }
    if y.values.len() != phi.rows {
        return Err(Error::Dimension(format!(
            "sketch length {} != matrix rows {}",
            y.values.len(),
            phi.rows
        )));
    }
    let n = phi.cols;
    let row_adj = phi.row_adjacency();
    // Split x = x⁺ - x⁻; the scale folds into the right-hand side so the
    // tableau stays 0/±1.
    let mut rows = Vec::with_capacity(phi.rows);
    for (r, cols) in row_adj.iter().enumerate() {
        let mut coeffs = vec![0.0; 2 * n];
        for &j in cols {
            coeffs[j] = 1.0;
            coeffs[n + j] = -1.0;
        }
        rows.push((coeffs, ConstraintOp::Eq, y.values[r] / phi.scale));
    }
    let lp = LinearProgram { num_vars: 2 * n, objective: vec![1.0; 2 * n], rows };
    let sopts = SimplexOptions {
        pivot_budget: opts.pivot_budget,
        feasibility_tol: opts.feasibility_tol,
        ..SimplexOptions::default()
    };
    let out = simplex::solve(&lp, &sopts);
    let status = match out.status {
        SimplexStatus::Optimal => LpStatus::Optimal,
        SimplexStatus::Infeasible => LpStatus::Infeasible,
        SimplexStatus::BudgetExceeded => LpStatus::BudgetExceeded,
        SimplexStatus::Unbounded => {
            return Err(Error::Parameter(
                "ℓ1 program reported unbounded, which cannot happen for a nonnegative objective"
                    .into(),
            ))
        }
    };
    // Degenerate optimal bases carry basic variables at numerical dust
    // (≈ machine precision); anything below the feasibility tolerance is
    // indistinguishable from zero and reported as exactly that.
    let x_star: Vec<f64> = (0..n)
        .map(|j| {
            let v = out.x[j] - out.x[n + j];
            if v.abs() <= opts.feasibility_tol {
                0.0
            } else {
                v
            }
        })
        .collect();
    let resketch = sketch::apply(phi, &x_star)?;
    let residual_inf = resketch
        .values
        .iter()
        .zip(&y.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(LpSolution {
        objective: signal::l1(&x_star),
        x_star,
        status,
        residual_inf,
        pivots: out.pivots,
    })
}

fn alpha_from_epsilon(epsilon: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Parameter(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )));
    }
    if epsilon >= 0.25 {
        return Err(Error::BoundUndefined(format!(
            "approximation guarantee needs epsilon < 1/4, got {epsilon}"
        )));
    }
    Ok(2.0 * epsilon / (1.0 - 2.0 * epsilon))
}

/// Noiseless guarantee: `‖x - x*‖₁ ≤ 2/(1-2α) · ‖x - x_k‖₁` with
/// `α = 2ε/(1-2ε)`.
pub fn evaluate_bound(
    x: &[f64],
    x_star: &[f64],
    k: usize,
    epsilon: f64,
) -> Result<GuaranteeEvaluation> {
    if x.len() != x_star.len() {
        return Err(Error::Dimension(format!(
            "signal lengths differ: {} vs {}",
            x.len(),
            x_star.len()
        )));
    }
    let alpha = alpha_from_epsilon(epsilon)?;
    let tail = signal::l1(&signal::sub(x, &signal::head_approximation(x, k)));
    let lhs = signal::l1(&signal::sub(x, x_star));
    let rhs = 2.0 / (1.0 - 2.0 * alpha) * tail;
    Ok(GuaranteeEvaluation { k, epsilon, alpha, lhs, rhs, satisfied: lhs <= rhs + 1e-9 })
}

/// Noisy-sketch guarantee: against `y = Φx + μ` with `‖μ‖₁ ≤ β`, the
/// recovered `x*` obeys
/// `‖x* - x_k‖₁ ≤ 2/(1-2α)·‖x - x_k‖₁ + 2β/(d(1-2ε)(1-2α))`.
pub fn evaluate_noisy_bound(
    x: &[f64],
    x_star: &[f64],
    k: usize,
    epsilon: f64,
    d: usize,
    beta: f64,
) -> Result<GuaranteeEvaluation> {
    if x.len() != x_star.len() {
        return Err(Error::Dimension(format!(
            "signal lengths differ: {} vs {}",
            x.len(),
            x_star.len()
        )));
    }
    if d == 0 {
        return Err(Error::Parameter("degree must be positive".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Parameter(format!("noise budget must be nonnegative, got {beta}")));
    }
    let alpha = alpha_from_epsilon(epsilon)?;
    let head = signal::head_approximation(x, k);
    let tail = signal::l1(&signal::sub(x, &head));
    let lhs = signal::l1(&signal::sub(x_star, &head));
    let additive = 2.0 * beta / (d as f64 * (1.0 - 2.0 * epsilon) * (1.0 - 2.0 * alpha));
    let rhs = 2.0 / (1.0 - 2.0 * alpha) * tail + additive;
    Ok(GuaranteeEvaluation { k, epsilon, alpha, lhs, rhs, satisfied: lhs <= rhs + 1e-9 })
}
