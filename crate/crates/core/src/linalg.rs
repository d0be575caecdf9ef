//! Small dense SPD solves for `X^T X`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::exact::CompensatedSum;

/// Largest number of columns the OLS routines accept.
pub const MAX_COLUMNS: usize = 8;

/// Fits beyond this condition estimate are refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `X^T X` with compensated accumulation of each entry.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let s: CompensatedSum = x.column(i).iter().zip(x.column(j).iter()).map(|(a, b)| a * b).collect();
            g[(i, j)] = s.value();
            g[(j, i)] = s.value();
        }
    }
    g
}

/// Cholesky factor of a Gram matrix together with its condition estimate.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl SpdFactor {
    pub fn new(g: &DMatrix<f64>) -> Result<Self> {
        let p = g.nrows();
        if p == 0 || p > MAX_COLUMNS {
            return Err(Error::domain(format!(
                "between 1 and {MAX_COLUMNS} columns are supported, got {p}"
            )));
        }
        let eig = SymmetricEigen::new(g.clone()).eigenvalues;
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || !max.is_finite() {
            return Err(Error::Singular);
        }
        let condition = max / min;
        if condition > CONDITION_LIMIT {
            return Err(Error::IllConditioned(condition));
        }
        let chol = Cholesky::new(g.clone()).ok_or(Error::Singular)?;
        Ok(SpdFactor { chol, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `|L^{-1} v|^2 = v^T G^{-1} v`.
    pub fn inverse_quadratic_form(&self, v: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}
