//! Polynomial-evaluation matrices for noise reduction.
//!
//! Rows are indexed by pairs `(a, b)` of elements of a prime field of size
//! β; the column assigned to polynomial `q` has a one in row `(a, b)` iff
//! `q(a) = b`.  Each column therefore has exactly β ones (one per
//! evaluation point), and two distinct columns share at most
//! `degree_bound` rows because distinct polynomials of degree ≤ D agree on
//! at most D points.  Splitting a row band by evaluation point scatters
//! colliding spikes into different rows while diluting dense noise.

use crate::error::{Error, Result};
use crate::sketch::SparseBinaryMatrix;
use crate::sublinear::index_bits;

/// Polynomial-evaluation matrix over a prime field.
#[derive(Debug, Clone, PartialEq)]
pub struct NwMatrix {
    /// Field size (prime).
    pub beta: usize,
    /// Maximum polynomial degree; `beta^(degree_bound+1) >= n` makes the
    /// index-to-polynomial assignment injective.
    pub degree_bound: usize,
    pub n: usize,
    /// `beta²` rows, row `(a, b)` stored at index `a·beta + b`.
    pub matrix: SparseBinaryMatrix,
}

fn is_prime(x: usize) -> bool {
    if x < 2 {
        return false;
    }
    let mut f = 2;
    while f * f <= x {
        if x % f == 0 {
            return false;
        }
        f += 1;
    }
    true
}

fn next_prime(mut x: usize) -> usize {
    if x < 2 {
        return 2;
    }
    while !is_prime(x) {
        x += 1;
    }
    x
}

impl NwMatrix {
    /// Builds the matrix over the field of (prime) size `beta` directly.
    pub fn with_field(n: usize, beta: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("column count must be positive".into()));
        }
        if !is_prime(beta) {
            return Err(Error::Parameter(format!("field size {beta} is not prime")));
        }
        // Smallest D with beta^(D+1) >= n.
        let mut degree_bound = 0usize;
        let mut capacity = beta as u128;
        while capacity < n as u128 {
            degree_bound += 1;
            capacity = capacity.saturating_mul(beta as u128);
        }
        if degree_bound >= beta {
            return Err(Error::Parameter(format!(
                "degree bound {degree_bound} must stay below the field size {beta} \
                 for columns to be near-disjoint"
            )));
        }
        let rows = beta * beta;
        let mut col_adjacency = Vec::with_capacity(n);
        for i in 0..n {
            // Base-β digits of i are the polynomial coefficients,
            // constant term first.
            let mut coeffs = Vec::with_capacity(degree_bound + 1);
            let mut rest = i;
            for _ in 0..=degree_bound {
                coeffs.push((rest % beta) as u64);
                rest /= beta;
            }
            let mut col = Vec::with_capacity(beta);
            for a in 0..beta as u64 {
                // Horner evaluation mod β.
                let mut b = 0u64;
                for &c in coeffs.iter().rev() {
                    b = (b * a + c) % beta as u64;
                }
                col.push(a as usize * beta + b as usize);
            }
            col_adjacency.push(col);
        }
        let matrix = SparseBinaryMatrix::new(rows, n, col_adjacency, 1.0)?;
        Ok(NwMatrix { beta, degree_bound, n, matrix })
    }
}

/// Noise-reduction matrix for a band with spike spacing `r` and sparsity
/// `s`: the field size is the smallest prime at least `(r/s)·⌈log₂ n⌉`.
pub fn build_nw_matrix(n: usize, r: usize, s: usize) -> Result<NwMatrix> {
    if s == 0 || r < 2 * s {
        return Err(Error::Parameter(format!(
            "band scales must satisfy r >= 2s >= 2, got r = {r}, s = {s}"
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("column count must be positive".into()));
    }
    let log = index_bits(n).max(1);
    // ceil((r/s)·log) in integer arithmetic.
    let target = (r * log).div_ceil(s);
    NwMatrix::with_field(n, next_prime(target))
}
