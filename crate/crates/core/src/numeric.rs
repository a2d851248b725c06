//! Small dense least-squares helper shared by the cache models and the
//! dynamic energy profile.

use nalgebra::{DMatrix, DVector};

/// Minimum-norm solution of `min ||A x - b||` via SVD. `a` is row-major
/// `rows x cols`. Returns `None` when the system is empty.
pub fn least_squares(rows: usize, cols: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    if rows == 0 || cols == 0 {
        return None;
    }
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(b.len(), rows);
    let m = DMatrix::from_row_slice(rows, cols, a);
    let rhs = DVector::from_column_slice(b);
    let svd = m.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max_sv == 0.0 {
        return Some(vec![0.0; cols]);
    }
    let eps = max_sv * 1e-12 * rows.max(cols) as f64;
    svd.solve(&rhs, eps).ok().map(|x| x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_exact_system() {
        // x + y = 3, x - y = 1
        let x = least_squares(2, 2, &[1.0, 1.0, 1.0, -1.0], &[3.0, 1.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        let x = least_squares(2, 2, &[1.0, 1.0, 1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
