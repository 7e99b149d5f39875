//! Sparse signal recovery from linear sketches taken with sparse binary
//! matrices.
//!
//! The measurement matrices are adjacency matrices of left-regular
//! bipartite graphs.  When such a graph expands well — every small left
//! set has close to the maximal number of distinct neighbors — the matrix
//! behaves like an ℓ1 isometry on sparse signals, and several decoders
//! with different speed/robustness trade-offs can invert the sketch:
//!
//! - [`lp`]: ℓ1 minimization (basis pursuit) via a built-in simplex solver;
//! - [`sublinear`]: bit-test recovery of exactly sparse signals in time
//!   polynomial in the sketch length;
//! - [`hhs`]: a multi-scale pursuit that tolerates tails and noise while
//!   keeping the sketch short.
//!
//! [`expander`] measures expansion exactly or by sampling, [`guarantees`]
//! re-checks the structural facts the decoders rely on, and [`experiment`]
//! maps empirical recovery phase transitions.

pub mod error;
pub mod expander;
pub mod experiment;
pub mod guarantees;
pub mod hhs;
pub mod linalg;
pub mod lp;
pub mod nw;
pub mod seed;
pub mod signal;
pub mod simplex;
pub mod sketch;
pub mod sublinear;

pub use error::{Error, Result};
pub use expander::{
    check_expansion_exact, check_expansion_exact_with_budget, check_expansion_sampled,
    epsilon_from_rip1_delta, neighborhood, rip1_constant_exact, sample_expander, BipartiteGraph,
    ExpansionReport, Rip1Constants,
};
pub use sketch::{apply, from_graph, row_tensor_product, set_rip_p_scale, update, SparseBinaryMatrix, Sketch};
