//! Small dense linear-algebra helpers used by the diagnostic checkers.

/// Basis of the kernel of a dense matrix, via Gauss-Jordan elimination
/// with partial pivoting.  Pivots smaller than `tol` are treated as zero.
/// Returns one basis vector per free column (unit in the free coordinate).
pub fn nullspace_basis(a: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    if a.is_empty() {
        return Vec::new();
    }
    let rows = a.len();
    let cols = a[0].len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        // Partial pivoting: bring the largest remaining entry up.
        let Some(best) = (r..rows).max_by(|&i, &j| {
            m[i][c].abs().partial_cmp(&m[j][c].abs()).expect("finite entries")
        }) else {
            break;
        };
        if m[best][c].abs() <= tol {
            continue;
        }
        m.swap(r, best);
        let piv = m[r][c];
        for v in &mut m[r] {
            *v /= piv;
        }
        for i in 0..rows {
            if i != r {
                let f = m[i][c];
                if f != 0.0 {
                    let (row_r, row_i) = if i < r {
                        let (lo, hi) = m.split_at_mut(r);
                        (&hi[0], &mut lo[i])
                    } else {
                        let (lo, hi) = m.split_at_mut(i);
                        (&lo[r], &mut hi[0])
                    };
                    for (dst, src) in row_i.iter_mut().zip(row_r) {
                        *dst -= f * src;
                    }
                    row_i[c] = 0.0;
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    let mut basis = Vec::new();
    let is_pivot: Vec<bool> = {
        let mut v = vec![false; cols];
        for &c in &pivot_cols {
            v[c] = true;
        }
        v
    };
    for free in 0..cols {
        if is_pivot[free] {
            continue;
        }
        let mut v = vec![0.0; cols];
        v[free] = 1.0;
        for (ri, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -m[ri][free];
        }
        basis.push(v);
    }
    basis
}
