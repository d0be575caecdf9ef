//! Gaussian moment oracles.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance of a centered univariate normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    variance: f64,
}

impl GaussianLaw {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::domain(format!("Gaussian variance must be positive, got {variance}")));
        }
        Ok(GaussianLaw { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `E X^r = (r-1)!! variance^{r/2}`, zero for odd `r`.
    pub fn moment(&self, r: u32) -> f64 {
        if r % 2 == 1 {
            return 0.0;
        }
        let df: f64 = (1..r).step_by(2).map(f64::from).product();
        df * self.variance.powi(r as i32 / 2)
    }
}

/// Symmetric positive semidefinite `k x k` matrix, stored as its lower
/// triangle so symmetry holds exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    dim: usize,
    lower: Vec<f64>,
}

impl CovarianceMatrix {
    /// Validates a full matrix: exact symmetry and eigenvalues
    /// `>= -1e-10 * trace`.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|row| row.len() != dim) {
            return Err(Error::domain("covariance matrix must be square and nonempty"));
        }
        for i in 0..dim {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::domain(format!(
                        "covariance matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Self::from_matrix(&DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    /// Takes the lower triangle of `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if dim == 0 || m.ncols() != dim {
            return Err(Error::domain("covariance matrix must be square and nonempty"));
        }
        let mut lower = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                lower.push(m[(i, j)]);
            }
        }
        let cov = CovarianceMatrix { dim, lower };
        let full = cov.to_matrix();
        let trace = full.trace();
        let min = SymmetricEigen::new(full)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -1e-10 * trace.abs() {
            return Err(Error::domain(format!(
                "covariance matrix is not positive semidefinite (eigenvalue {min:.3e})"
            )));
        }
        Ok(cov)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.lower[i * (i + 1) / 2 + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

/// Largest total degree the pairing enumeration accepts.
pub const MAX_PAIRING_DEGREE: u32 = 12;

/// `E prod_j X_j^{r_j}` for `X ~ N(0, cov)` by summing over all perfect
/// matchings of the degree multiset (Isserlis).
pub fn gaussian_mixed_moment(cov: &CovarianceMatrix, powers: &[u32]) -> Result<f64> {
    if powers.len() != cov.dim() {
        return Err(Error::domain(format!(
            "{} powers given for a {}-dimensional covariance",
            powers.len(),
            cov.dim()
        )));
    }
    let total: u32 = powers.iter().sum();
    if total > MAX_PAIRING_DEGREE {
        return Err(Error::GuardExceeded {
            what: "Gaussian pairings",
            size: total as u128,
            limit: MAX_PAIRING_DEGREE as u128,
        });
    }
    if total % 2 == 1 {
        return Ok(0.0);
    }
    let mut slots: Vec<usize> = powers
        .iter()
        .enumerate()
        .flat_map(|(j, &r)| std::iter::repeat(j).take(r as usize))
        .collect();
    Ok(sum_matchings(&mut slots, cov))
}

fn sum_matchings(slots: &mut Vec<usize>, cov: &CovarianceMatrix) -> f64 {
    if slots.is_empty() {
        return 1.0;
    }
    let first = slots.remove(0);
    let mut total = 0.0;
    for idx in 0..slots.len() {
        let partner = slots.remove(idx);
        total += cov.get(first, partner) * sum_matchings(slots, cov);
        slots.insert(idx, partner);
    }
    slots.insert(0, first);
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(rho: f64) -> CovarianceMatrix {
        CovarianceMatrix::new(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()
    }

    #[test]
    fn bivariate_examples() {
        let c = corr(0.3);
        assert!((gaussian_mixed_moment(&c, &[1, 1]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(gaussian_mixed_moment(&c, &[2, 1]).unwrap(), 0.0);
        let want = 1.0 + 2.0 * 0.09;
        assert!((gaussian_mixed_moment(&c, &[2, 2]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn univariate_reduces_to_double_factorial() {
        let v = 2.5;
        let c = CovarianceMatrix::new(&[vec![v]]).unwrap();
        let law = GaussianLaw::new(v).unwrap();
        for r in 0..=12 {
            let got = gaussian_mixed_moment(&c, &[r]).unwrap();
            let want = law.moment(r);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "r={r}");
        }
    }

    #[test]
    fn guards_and_validation() {
        let c = corr(0.1);
        assert!(matches!(
            gaussian_mixed_moment(&c, &[7, 7]),
            Err(Error::GuardExceeded { .. })
        ));
        assert!(CovarianceMatrix::new(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(CovarianceMatrix::new(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(GaussianLaw::new(0.0).is_err());
    }
}
