//! Sparse binary measurement operators.
//!
//! A measurement matrix is stored in column-adjacency form: for each signal
//! coordinate, the sorted list of measurement rows it feeds.  Decoding and
//! sketch updates are column-driven, so row views are materialized only on
//! demand.  An optional scalar `scale` is kept as metadata and applied when
//! the matrix is applied, which preserves exact integer arithmetic for the
//! unscaled 0-1 case.

use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expander::BipartiteGraph;

/// 0-1 matrix in column-adjacency form with a lazy multiplicative scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBinaryMatrix {
    pub rows: usize,
    pub cols: usize,
    pub col_adjacency: Vec<Vec<usize>>,
    pub scale: f64,
}

/// A measurement vector `y = Φx` together with the fingerprint of the
/// matrix that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub values: Vec<f64>,
    pub provenance: u64,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    scale: f64,
    neighbors: Vec<Vec<usize>>,
}

impl SparseBinaryMatrix {
    /// Validates ranges, sortedness and the scale sign.
    pub fn new(rows: usize, cols: usize, col_adjacency: Vec<Vec<usize>>, scale: f64) -> Result<Self> {
        if col_adjacency.len() != cols {
            return Err(Error::Dimension(format!(
                "expected {cols} columns, got {}",
                col_adjacency.len()
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Parameter(format!("scale must be positive, got {scale}")));
        }
        for (j, col) in col_adjacency.iter().enumerate() {
            for w in col.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Parameter(format!(
                        "column {j} row indices not strictly increasing"
                    )));
                }
            }
            if let Some(&last) = col.last() {
                if last >= rows {
                    return Err(Error::Parameter(format!(
                        "column {j} references row {last} >= rows {rows}"
                    )));
                }
            }
        }
        Ok(SparseBinaryMatrix { rows, cols, col_adjacency, scale })
    }

    /// Number of stored ones.
    pub fn nnz(&self) -> usize {
        self.col_adjacency.iter().map(|c| c.len()).sum()
    }

    /// The common column degree, or an error if columns are not equally
    /// occupied.
    pub fn column_degree(&self) -> Result<usize> {
        let d = self
            .col_adjacency
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::Parameter("matrix has no columns".into()))?;
        if d == 0 {
            return Err(Error::Parameter("columns are empty".into()));
        }
        if self.col_adjacency.iter().any(|c| c.len() != d) {
            return Err(Error::Parameter("matrix is not column-regular".into()));
        }
        Ok(d)
    }

    /// Row-adjacency view (which columns feed each row), materialized on
    /// demand.
    pub fn row_adjacency(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.rows];
        for (j, col) in self.col_adjacency.iter().enumerate() {
            for &r in col {
                rows[r].push(j);
            }
        }
        rows
    }

    /// Dense materialization including the scale; intended for small
    /// instances (kernel computations, diagnostics).
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (j, col) in self.col_adjacency.iter().enumerate() {
            for &r in col {
                out[r][j] = self.scale;
            }
        }
        out
    }

    /// FNV-1a fingerprint of the full matrix content; used to tie sketches
    /// to the matrix that produced them.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(self.rows as u64);
        eat(self.cols as u64);
        eat(self.scale.to_bits());
        for col in &self.col_adjacency {
            eat(col.len() as u64);
            for &r in col {
                eat(r as u64);
            }
        }
        h
    }

    pub fn to_json_string(&self) -> String {
        let doc = MatrixJson {
            rows: self.rows,
            cols: self.cols,
            scale: self.scale,
            neighbors: self.col_adjacency.clone(),
        };
        serde_json::to_string(&doc).expect("matrix serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: MatrixJson = serde_json::from_str(s)?;
        SparseBinaryMatrix::new(doc.rows, doc.cols, doc.neighbors, doc.scale)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Adjacency matrix of a left-regular bipartite graph: rows = right
/// vertices, columns = left vertices, scale 1.
pub fn from_graph(g: &BipartiteGraph) -> SparseBinaryMatrix {
    SparseBinaryMatrix {
        rows: g.m_right,
        cols: g.n_left,
        col_adjacency: g.neighbors.clone(),
        scale: 1.0,
    }
}

/// `y = scale · Φx`, computed column-by-column in O(nnz of the support).
pub fn apply(phi: &SparseBinaryMatrix, x: &[f64]) -> Result<Sketch> {
    if x.len() != phi.cols {
        return Err(Error::Dimension(format!(
            "signal length {} != matrix cols {}",
            x.len(),
            phi.cols
        )));
    }
    let mut values = vec![0.0; phi.rows];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for &r in &phi.col_adjacency[j] {
                values[r] += xj;
            }
        }
    }
    if phi.scale != 1.0 {
        for v in &mut values {
            *v *= phi.scale;
        }
    }
    Ok(Sketch { values, provenance: phi.fingerprint() })
}

/// Sketch of `x + delta·e_j` given the sketch of `x`; touches exactly the
/// rows of column `j`.
pub fn update(y: &Sketch, phi: &SparseBinaryMatrix, j: usize, delta: f64) -> Result<Sketch> {
    let expected = phi.fingerprint();
    if y.provenance != expected {
        return Err(Error::ProvenanceMismatch { expected, found: y.provenance });
    }
    if j >= phi.cols {
        return Err(Error::Parameter(format!("column {j} out of range ({} cols)", phi.cols)));
    }
    if y.values.len() != phi.rows {
        return Err(Error::Dimension(format!(
            "sketch length {} != matrix rows {}",
            y.values.len(),
            phi.rows
        )));
    }
    let mut out = y.clone();
    for &r in &phi.col_adjacency[j] {
        out.values[r] += delta * phi.scale;
    }
    Ok(out)
}

/// Returns a copy of `phi` carrying the scale `d^{-1/p}` that normalizes
/// every column to unit `lp` norm.
pub fn set_rip_p_scale(phi: &SparseBinaryMatrix, p: f64) -> Result<SparseBinaryMatrix> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::Parameter(format!("p must lie in [1,2], got {p}")));
    }
    let d = phi.column_degree()?;
    let mut out = phi.clone();
    out.scale = (d as f64).powf(-1.0 / p);
    Ok(out)
}

/// Row tensor product `Q ⊛ R`: one output row per (Q-row, R-row) pair, the
/// entrywise product of the two rows.  Output row ordering is outer = left
/// operand: all R-rows for Q-row 0 first, then Q-row 1, and so on.
pub fn row_tensor_product(
    q: &SparseBinaryMatrix,
    r: &SparseBinaryMatrix,
) -> Result<SparseBinaryMatrix> {
    if q.cols != r.cols {
        return Err(Error::Dimension(format!(
            "column mismatch: {} vs {}",
            q.cols, r.cols
        )));
    }
    if q.scale != 1.0 || r.scale != 1.0 {
        return Err(Error::Parameter("row tensor product requires unscaled factors".into()));
    }
    let rows = q
        .rows
        .checked_mul(r.rows)
        .ok_or_else(|| Error::Parameter("row tensor product row count overflows".into()))?;
    let mut col_adjacency = Vec::with_capacity(q.cols);
    for j in 0..q.cols {
        let qa = &q.col_adjacency[j];
        let rb = &r.col_adjacency[j];
        let mut col = Vec::with_capacity(qa.len() * rb.len());
        for &a in qa {
            let base = a * r.rows;
            for &b in rb {
                col.push(base + b);
            }
        }
        col_adjacency.push(col);
    }
    Ok(SparseBinaryMatrix { rows, cols: q.cols, col_adjacency, scale: 1.0 })
}

/// Writes a sketch as `row_index,value` CSV, one line per row.
pub fn write_sketch_csv(path: &Path, values: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "row_index,value").map_err(Error::from)?;
    for (r, v) in values.iter().enumerate() {
        writeln!(w, "{r},{v}").map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `row_index,value` CSV written by [`write_sketch_csv`]; every row
/// index below the maximum must be present exactly once.
pub fn read_sketch_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::Format(format!("expected 2 fields, got {}", rec.len())));
        }
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad row index {:?}", &rec[0])))?;
        let val: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad value {:?}", &rec[1])))?;
        pairs.push((idx, val));
    }
    let mut values = vec![f64::NAN; pairs.len()];
    for (idx, val) in pairs {
        if idx >= values.len() || !values[idx].is_nan() {
            return Err(Error::Format(format!("row index {idx} out of range or duplicated")));
        }
        values[idx] = val;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expander::sample_expander;

    /// Independent dense oracle: builds the full 0-1 array straight from
    /// the graph's neighbor lists and multiplies row by row.
    fn dense_matvec(g: &BipartiteGraph, scale: f64, x: &[f64]) -> Vec<f64> {
        let mut dense = vec![vec![0.0f64; g.n_left]; g.m_right];
        for (j, nbrs) in g.neighbors.iter().enumerate() {
            for &r in nbrs {
                dense[r][j] = 1.0;
            }
        }
        dense
            .iter()
            .map(|row| scale * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    #[test]
    fn from_graph_lays_out_columns() {
        let g = BipartiteGraph::new(2, 4, 2, vec![vec![1, 3], vec![0, 1]]).unwrap();
        let phi = from_graph(&g);
        assert_eq!(phi.rows, 4);
        assert_eq!(phi.cols, 2);
        assert_eq!(phi.col_adjacency[0], vec![1, 3]);
        assert_eq!(phi.scale, 1.0);
        for col in &phi.col_adjacency {
            assert_eq!(col.len(), 2);
        }
    }

    #[test]
    fn permutation_matrix_from_degree_one_graph() {
        let g = BipartiteGraph::new(3, 3, 1, vec![vec![2], vec![0], vec![1]]).unwrap();
        let phi = from_graph(&g);
        let y = apply(&phi, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y.values, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn apply_zero_gives_zero() {
        let g = sample_expander(12, 8, 3, 11).unwrap();
        let phi = from_graph(&g);
        let y = apply(&phi, &vec![0.0; 12]).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_basis_vector_marks_column_rows() {
        let g = sample_expander(12, 8, 3, 5).unwrap();
        let phi = from_graph(&g);
        let mut x = vec![0.0; 12];
        x[7] = 1.0;
        let y = apply(&phi, &x).unwrap();
        for r in 0..8 {
            let expected = if phi.col_adjacency[7].contains(&r) { 1.0 } else { 0.0 };
            assert_eq!(y.values[r], expected);
        }
    }

    #[test]
    fn apply_matches_dense_oracle() {
        let g = sample_expander(12, 8, 3, 42).unwrap();
        let phi = from_graph(&g);
        let mut rng = crate::seed::rng(9);
        use rand::Rng;
        for _ in 0..50 {
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y = apply(&phi, &x).unwrap();
            let oracle = dense_matvec(&g, 1.0, &x);
            for (a, b) in y.values.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaled_apply_matches_dense_oracle() {
        let g = sample_expander(10, 6, 2, 4).unwrap();
        let phi = set_rip_p_scale(&from_graph(&g), 1.25).unwrap();
        let x: Vec<f64> = (0..10).map(|i| (i as f64) - 4.5).collect();
        let y = apply(&phi, &x).unwrap();
        let oracle = dense_matvec(&g, 2f64.powf(-1.0 / 1.25), &x);
        for (a, b) in y.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn update_zero_delta_is_identity() {
        let g = sample_expander(12, 8, 3, 2).unwrap();
        let phi = from_graph(&g);
        let y = apply(&phi, &vec![1.0; 12]).unwrap();
        let y2 = update(&y, &phi, 3, 0.0).unwrap();
        assert_eq!(y.values, y2.values);
    }

    #[test]
    fn update_matches_reapplication() {
        let g = sample_expander(12, 8, 3, 2).unwrap();
        let phi = from_graph(&g);
        let mut x = vec![0.0; 12];
        x[1] = 2.0;
        let y = apply(&phi, &x).unwrap();
        let y2 = update(&y, &phi, 4, 1.0).unwrap();
        x[4] += 1.0;
        assert_eq!(y2.values, apply(&phi, &x).unwrap().values);
    }

    #[test]
    fn hundred_integer_updates_equal_accumulated_apply() {
        // Oracle: accumulate the updates into a plain vector first, then
        // sketch once; integer arithmetic so equality is exact.
        let g = sample_expander(16, 10, 3, 77).unwrap();
        let phi = from_graph(&g);
        let mut rng = crate::seed::rng(13);
        use rand::Rng;
        let mut acc = vec![0.0; 16];
        let mut y = apply(&phi, &acc).unwrap();
        for _ in 0..100 {
            let j = rng.gen_range(0..16usize);
            let delta = rng.gen_range(-4i32..=4) as f64;
            y = update(&y, &phi, j, delta).unwrap();
            acc[j] += delta;
        }
        assert_eq!(y.values, apply(&phi, &acc).unwrap().values);
    }

    #[test]
    fn update_rejects_foreign_sketch() {
        let g1 = sample_expander(12, 8, 3, 1).unwrap();
        let g2 = sample_expander(12, 8, 3, 2).unwrap();
        let y = apply(&from_graph(&g1), &vec![0.5; 12]).unwrap();
        let err = update(&y, &from_graph(&g2), 0, 1.0).unwrap_err();
        assert!(matches!(err, Error::ProvenanceMismatch { .. }));
    }

    #[test]
    fn rip_p_scale_values() {
        let g = sample_expander(8, 8, 3, 1).unwrap();
        let phi = from_graph(&g);
        assert_eq!(set_rip_p_scale(&phi, 1.0).unwrap().scale, 1.0 / 3.0);
        let p = 1.0 + 1.0 / 8.0; // n = 256 convention
        let g8 = sample_expander(4, 10, 8, 1).unwrap();
        let s = set_rip_p_scale(&from_graph(&g8), p).unwrap().scale;
        assert!((s - 8f64.powf(-1.0 / p)).abs() < 1e-15);
        let g1 = BipartiteGraph::new(3, 3, 1, vec![vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(set_rip_p_scale(&from_graph(&g1), 1.7).unwrap().scale, 1.0);
    }

    #[test]
    fn rip_p_scale_rejects_irregular() {
        let m = SparseBinaryMatrix::new(3, 2, vec![vec![0, 1], vec![2]], 1.0).unwrap();
        assert!(set_rip_p_scale(&m, 1.0).is_err());
    }

    #[test]
    fn row_tensor_hand_example() {
        // q rows {110, 011}, r rows {101, 010} -> rows {100, 010, 001, 010}.
        let q = SparseBinaryMatrix::new(2, 3, vec![vec![0], vec![0, 1], vec![1]], 1.0).unwrap();
        let r = SparseBinaryMatrix::new(2, 3, vec![vec![0], vec![1], vec![0]], 1.0).unwrap();
        let t = row_tensor_product(&q, &r).unwrap();
        assert_eq!(t.rows, 4);
        let dense = t.dense();
        assert_eq!(dense[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(dense[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(dense[2], vec![0.0, 0.0, 1.0]);
        assert_eq!(dense[3], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn row_tensor_with_all_ones_row_is_identity() {
        let g = sample_expander(6, 5, 2, 8).unwrap();
        let phi = from_graph(&g);
        let ones = SparseBinaryMatrix::new(1, 6, vec![vec![0]; 6], 1.0).unwrap();
        assert_eq!(row_tensor_product(&ones, &phi).unwrap().dense(), phi.dense());
        assert_eq!(row_tensor_product(&phi, &ones).unwrap().dense(), phi.dense());
    }

    #[test]
    fn row_tensor_matches_dense_oracle() {
        // Dense oracle: all row pairs, entrywise product.
        let ga = sample_expander(16, 8, 3, 3).unwrap();
        let gb = sample_expander(16, 5, 2, 4).unwrap();
        let q = from_graph(&ga);
        let r = from_graph(&gb);
        let t = row_tensor_product(&q, &r).unwrap();
        let (dq, dr, dt) = (q.dense(), r.dense(), t.dense());
        for a in 0..q.rows {
            for b in 0..r.rows {
                for j in 0..16 {
                    assert_eq!(dt[a * r.rows + b][j], dq[a][j] * dr[b][j]);
                }
            }
        }
    }

    #[test]
    fn row_tensor_restriction_semantics() {
        // (Q ⊛ R)x restricted to Q-row a equals R(q_a ∘ x).
        let ga = sample_expander(16, 4, 2, 21).unwrap();
        let gb = sample_expander(16, 6, 3, 22).unwrap();
        let (q, r) = (from_graph(&ga), from_graph(&gb));
        let t = row_tensor_product(&q, &r).unwrap();
        let mut rng = crate::seed::rng(5);
        use rand::Rng;
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
        let tx = apply(&t, &x).unwrap();
        let dq = q.dense();
        for a in 0..q.rows {
            let masked: Vec<f64> = x.iter().zip(&dq[a]).map(|(xi, qa)| xi * qa).collect();
            let rx = apply(&r, &masked).unwrap();
            assert_eq!(&tx.values[a * r.rows..(a + 1) * r.rows], rx.values.as_slice());
        }
    }

    #[test]
    fn matrix_json_round_trip_is_bit_exact() {
        let g = sample_expander(9, 7, 3, 6).unwrap();
        let phi = set_rip_p_scale(&from_graph(&g), 1.0 + 1.0 / 4.0).unwrap();
        let s = phi.to_json_string();
        let back = SparseBinaryMatrix::from_json_str(&s).unwrap();
        assert_eq!(phi, back);
        assert_eq!(phi.scale.to_bits(), back.scale.to_bits());
        assert_eq!(s, back.to_json_string());
    }

    #[test]
    fn sketch_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let values = vec![0.0, -1.5, 3.25, 1e-9, 7.0];
        write_sketch_csv(&path, &values).unwrap();
        assert_eq!(read_sketch_csv(&path).unwrap(), values);
    }

    #[test]
    fn upper_rip1_bound_holds() {
        let g = sample_expander(20, 12, 4, 19).unwrap();
        let phi = from_graph(&g);
        let mut rng = crate::seed::rng(88);
        use rand::Rng;
        for _ in 0..200 {
            let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = apply(&phi, &x).unwrap();
            let lhs: f64 = y.values.iter().map(|v| v.abs()).sum();
            let rhs = phi.scale * 4.0 * x.iter().map(|v| v.abs()).sum::<f64>();
            assert!(lhs <= rhs + 1e-9);
        }
    }
}
