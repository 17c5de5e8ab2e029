//! Banded Cholesky factorization for the symmetric positive definite
//! systems arising from the implicit step.

use sprs::CsMat;

use crate::error::{Error, Result};

/// `L Lᵀ` factor of a symmetric positive definite band matrix.
///
/// Row `i` of `L` is stored densely for columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the lower triangle of a symmetric CSR matrix.
    pub fn factor(a: &CsMat<f64>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                actual: (a.rows(), a.cols()),
            });
        }
        let a = if a.is_csr() { a.clone() } else { a.to_csr() };
        let mut bw = 0;
        for (i, row) in a.outer_iterator().enumerate() {
            for (j, _) in row.iter() {
                if j < i {
                    bw = bw.max(i - j);
                }
            }
        }
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for (i, row) in a.outer_iterator().enumerate() {
            for (j, v) in row.iter() {
                if j <= i {
                    l[i * w + (j + bw - i)] += *v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                // L[i][j] = (A[i][j] - Σ_k L[i][k] L[j][k]) / L[j][j]
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Overwrites `x` with `A⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        assert_eq!(x.len(), n);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let row = &self.l[i * w..(i + 1) * w];
            let mut s = x[i];
            for j in j0..i {
                s -= row[j + bw - i] * x[j];
            }
            x[i] = s / row[bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            let j1 = (i + bw).min(n - 1);
            for j in i + 1..=j1 {
                s -= self.l[j * w + (i + bw - j)] * x[j];
            }
            x[i] = s / self.l[i * w + bw];
        }
    }
}
