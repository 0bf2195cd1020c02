//! Pentadiagonal systems for the second-difference penalty.

use crate::error::{Error, Result};

/// Symmetric pentadiagonal matrix stored by diagonals.
///
/// Row `i` holds `l2[i]` at column i-2, `l1[i]` at i-1, `d0[i]` at i,
/// `u1[i]` at i+1 and `u2[i]` at i+2 (out-of-range entries unused).
#[derive(Debug, Clone)]
pub struct PentaBands {
    pub l2: Vec<f64>,
    pub l1: Vec<f64>,
    pub d0: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl PentaBands {
    /// Build `diag(w) + lambda * D'D` where `D` is the (n-2) x n
    /// second-difference operator.
    pub fn whittaker(weights: &[f64], lambda: f64) -> PentaBands {
        let n = weights.len();
        let mut b = PentaBands {
            l2: vec![0.0; n],
            l1: vec![0.0; n],
            d0: weights.to_vec(),
            u1: vec![0.0; n],
            u2: vec![0.0; n],
        };
        // D'D = sum of outer products of the [1, -2, 1] stencil
        const C: [f64; 3] = [1.0, -2.0, 1.0];
        for k in 0..n.saturating_sub(2) {
            for i in 0..3 {
                b.d0[k + i] += lambda * C[i] * C[i];
            }
            for i in 0..2 {
                let v = lambda * C[i] * C[i + 1];
                b.u1[k + i] += v;
                b.l1[k + i + 1] += v;
            }
            let v = lambda * C[0] * C[2];
            b.u2[k] += v;
            b.l2[k + 2] += v;
        }
        b
    }

    pub fn len(&self) -> usize {
        self.d0.len()
    }

    /// Multiply by a vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.d0[i] * x[i];
            if i >= 2 {
                acc += self.l2[i] * x[i - 2];
            }
            if i >= 1 {
                acc += self.l1[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                acc += self.u2[i] * x[i + 2];
            }
            y[i] = acc;
        }
        y
    }

    /// Solve `A x = rhs` by banded Gaussian elimination (no pivoting; the
    /// Whittaker system is symmetric positive definite).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        if n < 3 {
            return Err(Error::Numerical(
                "pentadiagonal solve needs n >= 3".into(),
            ));
        }
        let a = self.l2.clone();
        let mut b = self.l1.clone();
        let mut d = self.d0.clone();
        let mut c = self.u1.clone();
        let e = self.u2.clone();
        let mut r = rhs.to_vec();

        for i in 0..n {
            let pivot = d[i];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Numerical(format!(
                    "singular pentadiagonal system at row {i}"
                )));
            }
            if i + 1 < n {
                let f = b[i + 1] / pivot;
                d[i + 1] -= f * c[i];
                if i + 2 < n {
                    c[i + 1] -= f * e[i];
                }
                r[i + 1] -= f * r[i];
            }
            if i + 2 < n {
                let f = a[i + 2] / pivot;
                b[i + 2] -= f * c[i];
                d[i + 2] -= f * e[i];
                r[i + 2] -= f * r[i];
            }
        }

        let mut x = vec![0.0; n];
        x[n - 1] = r[n - 1] / d[n - 1];
        x[n - 2] = (r[n - 2] - c[n - 2] * x[n - 1]) / d[n - 2];
        for i in (0..n - 2).rev() {
            x[i] = (r[i] - c[i] * x[i + 1] - e[i] * x[i + 2]) / d[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "non-finite result in pentadiagonal solve".into(),
            ));
        }
        Ok(x)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    /// Dense Gaussian elimination with partial pivoting; the independent
    /// reference the banded path is checked against.
    pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    pub(crate) fn dense_whittaker_matrix(w: &[f64], lambda: f64) -> Vec<Vec<f64>> {
        let n = w.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = w[i];
        }
        const C: [f64; 3] = [1.0, -2.0, 1.0];
        for k in 0..n - 2 {
            for i in 0..3 {
                for j in 0..3 {
                    a[k + i][k + j] += lambda * C[i] * C[j];
                }
            }
        }
        a
    }

    #[test]
    fn bands_match_dense_assembly() {
        let w = [1.0, 0.5, 2.0, 1.0, 0.0, 1.5, 1.0];
        let bands = PentaBands::whittaker(&w, 3.25);
        let dense = dense_whittaker_matrix(&w, 3.25);
        for i in 0..w.len() {
            for j in 0..w.len() {
                let b = if j + 2 == i {
                    bands.l2[i]
                } else if j + 1 == i {
                    bands.l1[i]
                } else if j == i {
                    bands.d0[i]
                } else if j == i + 1 {
                    bands.u1[i]
                } else if j == i + 2 {
                    bands.u2[i]
                } else {
                    0.0
                };
                assert_eq!(b, dense[i][j], "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn banded_matches_dense_solve_up_to_n50() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for n in [3usize, 4, 5, 8, 13, 27, 50] {
            for _ in 0..20 {
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..2.0)).collect();
                let lambda = 10f64.powf(rng.random_range(-1.0..3.0));
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let rhs: Vec<f64> = w.iter().zip(&y).map(|(wi, yi)| wi * yi).collect();

                let bands = PentaBands::whittaker(&w, lambda);
                let x = bands.solve(&rhs).unwrap();
                let x_ref = dense_solve(dense_whittaker_matrix(&w, lambda), rhs);
                for (a, b) in x.iter().zip(&x_ref) {
                    let rel = (a - b).abs() / b.abs().max(1.0);
                    assert!(rel < 1e-10, "n={n}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn matvec_consistent_with_solve() {
        let w = vec![1.0; 12];
        let bands = PentaBands::whittaker(&w, 7.0);
        let rhs: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let x = bands.solve(&rhs).unwrap();
        let back = bands.matvec(&x);
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
