/// Thomas algorithm for a tridiagonal system, overwriting `rhs` with the
/// solution. `lower[0]` and `upper[n - 1]` are ignored; `scratch` needs `n`
/// entries. No pivoting: intended for diagonally dominant matrices.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    debug_assert!(lower.len() >= n && diag.len() >= n && upper.len() >= n && scratch.len() >= n);
    if n == 0 {
        return;
    }
    let mut denom = diag[0];
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_dense_solve(
            n in 1usize..40,
            seed in proptest::collection::vec(-1.0f64..1.0, 160),
        ) {
            let lower: Vec<f64> = (0..n).map(|i| seed[i]).collect();
            let upper: Vec<f64> = (0..n).map(|i| seed[40 + i]).collect();
            let diag: Vec<f64> = (0..n).map(|i| 2.5 + seed[80 + i]).collect();
            let b: Vec<f64> = (0..n).map(|i| seed[120 + i]).collect();
            let a = DMatrix::from_fn(n, n, |i, j| {
                if i == j { diag[i] } else if i == j + 1 { lower[i] } else if j == i + 1 { upper[i] } else { 0.0 }
            });
            let expected = a.lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let mut x = b;
            let mut scratch = vec![0.0; n];
            solve_tridiagonal(&lower, &diag, &upper, &mut x, &mut scratch);
            for i in 0..n {
                prop_assert!((x[i] - expected[i]).abs() < 1e-12);
            }
        }
    }
}
