//! Combinatorial decoder for exactly sparse signals.
//!
//! The measurement matrix is the row tensor product of an expander
//! adjacency Ψ with a bit-test matrix B: each Ψ-row is refined into
//! `L = ⌈log₂ n⌉ + 1` rows that read off the binary digits of whichever
//! coordinate dominates that row.  When a row isolates a single spike, its
//! bit-test block encodes the spike's index and value; `reduce` collects
//! one vote per block and keeps coordinates with a left-degree majority,
//! which at the design sparsity halves the number of wrong positions.
//! `recover` iterates `reduce` on the residual sketch.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::signal;
use crate::sketch::{self, row_tensor_product, SparseBinaryMatrix};

/// Absolute tolerance for "this measurement is zero" tests.  Integer-valued
/// signals keep these tests exact.
pub const ZERO_TOL: f64 = 1e-9;

/// Expansion quality the decoder is designed for (`ε = 1/8`): sketches need
/// `k·d/ε` rows at sparsity `k` and left degree `d`.
pub const DESIGN_EPSILON_INV: usize = 8;

/// Expander rows needed at sparsity `k`, degree `d`, design quality 1/8.
pub fn design_rows(k: usize, d: usize) -> usize {
    k * d * DESIGN_EPSILON_INV
}

/// Bits needed to write indices `0..n`, i.e. `⌈log₂ n⌉`.
pub(crate) fn index_bits(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Binary matrix whose column `i` lists the bits of `i`, plus a final
/// all-ones row.  The ones-row reads the value of an isolated spike
/// directly and distinguishes "spike at index 0" from "no spike".
#[derive(Debug, Clone, PartialEq)]
pub struct BitTestMatrix {
    pub n: usize,
    /// `⌈log₂ n⌉ + 1` rows: one per index bit, then the ones-row.
    pub num_tests: usize,
    pub matrix: SparseBinaryMatrix,
}

impl BitTestMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("signal length must be positive".into()));
        }
        let bits = index_bits(n);
        let num_tests = bits + 1;
        let col_adjacency = (0..n)
            .map(|i| {
                let mut col: Vec<usize> = (0..bits).filter(|&t| i >> t & 1 == 1).collect();
                col.push(num_tests - 1);
                col
            })
            .collect();
        let matrix = SparseBinaryMatrix::new(num_tests, n, col_adjacency, 1.0)?;
        Ok(BitTestMatrix { n, num_tests, matrix })
    }
}

/// Expander measurement refined by bit tests: `phi = psi ⊛ bit_tests`,
/// laid out so Ψ-row `j` owns the row block `[j·L, (j+1)·L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMeasurement {
    pub psi: SparseBinaryMatrix,
    pub bit_tests: BitTestMatrix,
    pub phi: SparseBinaryMatrix,
}

pub fn build_augmented(psi: &SparseBinaryMatrix) -> Result<AugmentedMeasurement> {
    if psi.scale != 1.0 {
        return Err(Error::Parameter("bit-test augmentation requires an unscaled matrix".into()));
    }
    let bit_tests = BitTestMatrix::new(psi.cols)?;
    let phi = row_tensor_product(psi, &bit_tests.matrix)?;
    Ok(AugmentedMeasurement { psi: psi.clone(), bit_tests, phi })
}

fn decode_block_with_tol(block: &[f64], n: usize, tol: f64) -> Option<(usize, f64)> {
    let l = block.len();
    let val = block[l - 1];
    if val.abs() <= tol {
        return None;
    }
    let mut index = 0usize;
    for (t, &entry) in block[..l - 1].iter().enumerate() {
        let bit_set = entry.abs() > tol;
        if bit_set {
            index |= 1usize << t;
        }
        // Consistency: a set bit must carry the full value, a clear bit
        // nothing; anything else is a collision leaking through.
        let expected = if bit_set { val } else { 0.0 };
        if (entry - expected).abs() > tol {
            return None;
        }
    }
    if index >= n {
        return None;
    }
    Some((index, val))
}

/// Reads a spike `(index, value)` out of one bit-test block, or `None`
/// when the block is empty or inconsistent (a detected collision).
pub fn decode_block(block: &[f64], n: usize) -> Option<(usize, f64)> {
    decode_block_with_tol(block, n, ZERO_TOL)
}

/// As [`decode_block`] with the tolerance scaled to half the block value,
/// so bit decisions survive additive noise smaller than the spike itself.
pub fn decode_block_relative(block: &[f64], n: usize) -> Option<(usize, f64)> {
    let val = block[block.len() - 1];
    decode_block_with_tol(block, n, val.abs() / 2.0)
}

/// Per-index multiset of proposed values, filled by one `reduce` pass.
#[derive(Debug, Clone, Default)]
pub struct VoteTable {
    votes: BTreeMap<usize, Vec<f64>>,
}

impl VoteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, index: usize, value: f64) {
        self.votes.entry(index).or_default().push(value);
    }

    /// Values proposed for `index`, in insertion order.
    pub fn proposals(&self, index: usize) -> &[f64] {
        self.votes.get(&index).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    pub y: Vec<f64>,
    /// Indices where two distinct values each reached the vote threshold;
    /// the more-voted (then smaller-magnitude) value was kept.
    pub ambiguous: Vec<usize>,
}

/// One voting pass: decodes every bit-test block, then keeps `y_i = val`
/// wherever at least `⌈d/2⌉` blocks proposed exactly that value.
pub fn reduce(am: &AugmentedMeasurement, sketch: &[f64]) -> Result<Vec<f64>> {
    Ok(reduce_with_diagnostics(am, sketch)?.y)
}

pub fn reduce_with_diagnostics(
    am: &AugmentedMeasurement,
    sketch: &[f64],
) -> Result<ReduceOutcome> {
    if sketch.len() != am.phi.rows {
        return Err(Error::Dimension(format!(
            "sketch length {} != augmented rows {}",
            sketch.len(),
            am.phi.rows
        )));
    }
    let l = am.bit_tests.num_tests;
    let n = am.psi.cols;
    let d = am.psi.column_degree()?;
    let mut table = VoteTable::new();
    for j in 0..am.psi.rows {
        if let Some((i, v)) = decode_block(&sketch[j * l..(j + 1) * l], n) {
            table.add(i, v);
        }
    }
    let threshold = d.div_ceil(2);
    let mut y = vec![0.0; n];
    let mut ambiguous = Vec::new();
    for (&i, proposals) in &table.votes {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &v in proposals {
            *counts.entry(v.to_bits()).or_insert(0) += 1;
        }
        let mut winners: Vec<(usize, f64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= threshold)
            .map(|(bits, c)| (c, f64::from_bits(bits)))
            .collect();
        if winners.is_empty() {
            continue;
        }
        winners.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(a.1.abs().partial_cmp(&b.1.abs()).expect("finite votes"))
                .then(a.1.to_bits().cmp(&b.1.to_bits()))
        });
        y[i] = winners[0].1;
        if winners.len() > 1 {
            ambiguous.push(i);
        }
    }
    Ok(ReduceOutcome { y, ambiguous })
}

#[derive(Debug, Clone)]
pub struct RecoverOutcome {
    /// Accumulated estimate; the final answer on success, the partial
    /// result on failure.
    pub x: Vec<f64>,
    pub success: bool,
    pub iterations: usize,
    pub residual_linf: f64,
}

/// Iterates `reduce`, subtracting each round's findings from the sketch,
/// until the residual sketch vanishes or `⌈log₂ k⌉ + 1` rounds pass.
pub fn recover(am: &AugmentedMeasurement, sketch: &[f64], k: usize) -> Result<RecoverOutcome> {
    if k == 0 {
        return Err(Error::Parameter("sparsity must be at least 1".into()));
    }
    if sketch.len() != am.phi.rows {
        return Err(Error::Dimension(format!(
            "sketch length {} != augmented rows {}",
            sketch.len(),
            am.phi.rows
        )));
    }
    let cap = index_bits(k) + 1;
    let n = am.psi.cols;
    let mut x = vec![0.0; n];
    let mut residual: Vec<f64> = sketch.to_vec();
    let mut iterations = 0;
    for _ in 0..cap {
        if signal::linf(&residual) <= ZERO_TOL {
            break;
        }
        let y = reduce(am, &residual)?;
        if y.iter().all(|&v| v == 0.0) {
            break; // no progress; the residual check below reports failure
        }
        iterations += 1;
        for (acc, v) in x.iter_mut().zip(&y) {
            *acc += v;
        }
        let encoded = sketch::apply(&am.phi, &x)?;
        residual = sketch
            .iter()
            .zip(&encoded.values)
            .map(|(s, e)| s - e)
            .collect();
    }
    let residual_linf = signal::linf(&residual);
    Ok(RecoverOutcome { x, success: residual_linf <= ZERO_TOL, iterations, residual_linf })
}
