//! Seeded Monte Carlo estimation of moments of `xi_n`.
//!
//! Replications are processed in fixed chunks of [`CHUNK_SIZE`]; chunk `c`
//! draws from stream `c` of the master seed and chunk totals are reduced in
//! chunk order, so results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::CompensatedSum;
use crate::gaussian::{gaussian_mixed_moment, CovarianceMatrix};
use crate::linalg::SpdFactor;
use crate::ols::{fill_errors, joint_moment_exact, xi_weights, ErrorLaw, XiConfig, XiSpec};
use crate::rng::RngStream;

pub const CHUNK_SIZE: u64 = 4096;
pub const MIN_REPS: u64 = 1000;

/// One Monte Carlo moment estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Order of a univariate moment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    /// Powers of a joint moment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<u32>>,
    pub value: f64,
    pub std_error: f64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.sum.add(v);
        self.sum_sq.add(v * v);
    }

    fn merge(&mut self, other: &Moments) {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    fn estimate(&self, reps: u64) -> Result<(f64, f64)> {
        let s = self.sum.value();
        let s2 = self.sum_sq.value();
        if !s.is_finite() || !s2.is_finite() {
            return Err(Error::numeric("overflow while accumulating Monte Carlo powers"));
        }
        let n = reps as f64;
        let mean = s / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        Ok((mean, (var / n).sqrt()))
    }
}

fn check_reps(reps: u64) -> Result<()> {
    if reps < MIN_REPS {
        return Err(Error::domain(format!("at least {MIN_REPS} replications are required, got {reps}")));
    }
    Ok(())
}

/// Runs `reps` replications of `xi = (b_1^T eps, .., b_k^T eps)` and feeds
/// each into `observe`, which accumulates into `stats` slots.
fn run_chunks<F>(
    weights: &[Vec<f64>],
    law: &ErrorLaw,
    reps: u64,
    seed: u64,
    slots: usize,
    observe: F,
) -> Result<Vec<Moments>>
where
    F: Fn(&[f64], &mut [Moments]) + Sync,
{
    let n = weights[0].len();
    let chunks = reps.div_ceil(CHUNK_SIZE);
    let per_chunk: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(seed, c);
            let mut stats = vec![Moments::default(); slots];
            let mut eps = vec![0.0; n];
            let mut xi = vec![0.0; weights.len()];
            let count = CHUNK_SIZE.min(reps - c * CHUNK_SIZE);
            for _ in 0..count {
                fill_errors(law, &mut rng, &mut eps);
                for (x, w) in xi.iter_mut().zip(weights) {
                    *x = w.iter().zip(&eps).map(|(a, b)| a * b).sum();
                }
                observe(&xi, &mut stats);
            }
            stats
        })
        .collect();
    let mut total = vec![Moments::default(); slots];
    for chunk in &per_chunk {
        for (t, m) in total.iter_mut().zip(chunk) {
            t.merge(m);
        }
    }
    Ok(total)
}

/// Monte Carlo estimates of `E(xi_n^r)` for each requested order.
///
/// `xi_n = sqrt(n) alpha^T (X^T X)^{-1} X^T eps`; the true coefficients
/// cancel exactly, so the estimates do not depend on `beta_true`.
pub fn mc_xi_moments(spec: &XiSpec, orders: &[u32], reps: u64, seed: u64) -> Result<Vec<McEstimate>> {
    check_reps(reps)?;
    if orders.is_empty() {
        return Err(Error::domain("no moment orders requested"));
    }
    let b = xi_weights(spec)?;
    let orders_owned = orders.to_vec();
    let stats = run_chunks(&[b], &spec.law, reps, seed, orders.len(), |xi, stats| {
        for (slot, &r) in stats.iter_mut().zip(&orders_owned) {
            slot.add(xi[0].powi(r as i32));
        }
    })?;
    orders
        .iter()
        .zip(&stats)
        .map(|(&r, m)| {
            let (value, std_error) = m.estimate(reps)?;
            Ok(McEstimate { r: Some(r), powers: None, value, std_error, reps, seed })
        })
        .collect()
}

pub const MAX_JOINT_MC_DEGREE: u32 = 8;

fn check_shared(specs: &[XiSpec]) -> Result<()> {
    let first = specs
        .first()
        .ok_or_else(|| Error::domain("at least one functional is required"))?;
    for s in &specs[1..] {
        if s.design.matrix() != first.design.matrix() || s.law != first.law {
            return Err(Error::domain("joint moments need one shared design and error law"));
        }
    }
    Ok(())
}

/// Monte Carlo estimate of `E prod_j xi_{n,j}^{r_j}` for functionals sharing
/// one design and one error draw per replication.
pub fn mc_joint_moments(specs: &[XiSpec], powers: &[u32], reps: u64, seed: u64) -> Result<McEstimate> {
    check_reps(reps)?;
    check_shared(specs)?;
    if powers.len() != specs.len() {
        return Err(Error::domain("one power per functional is required"));
    }
    let total: u32 = powers.iter().sum();
    if total > MAX_JOINT_MC_DEGREE {
        return Err(Error::GuardExceeded {
            what: "joint Monte Carlo degree",
            size: total as u128,
            limit: MAX_JOINT_MC_DEGREE as u128,
        });
    }
    let weights = specs.iter().map(xi_weights).collect::<Result<Vec<_>>>()?;
    let stats = run_chunks(&weights, &specs[0].law, reps, seed, 1, |xi, stats| {
        let v: f64 = xi.iter().zip(powers).map(|(x, &r)| x.powi(r as i32)).product();
        stats[0].add(v);
    })?;
    let (value, std_error) = stats[0].estimate(reps)?;
    Ok(McEstimate { r: None, powers: Some(powers.to_vec()), value, std_error, reps, seed })
}

/// Reference values for a joint moment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointReference {
    /// Exact finite-`n` value under the actual error law.
    pub exact: f64,
    /// Isserlis value at the finite-`n` covariance `sigma^2 A n(X^T X)^{-1} A^T`.
    pub isserlis_finite: f64,
    /// Isserlis value at the limit covariance `sigma^2 A V A^T`, when known.
    pub isserlis_limit: Option<f64>,
}

pub fn joint_reference(specs: &[XiSpec], powers: &[u32]) -> Result<JointReference> {
    check_shared(specs)?;
    let weights = specs.iter().map(xi_weights).collect::<Result<Vec<_>>>()?;
    let law = &specs[0].law;
    let exact = joint_moment_exact(&weights, powers, &law.central_f64())?;
    let k = specs.len();
    let finite: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    law.sigma2()
                        * weights[i]
                            .iter()
                            .zip(&weights[j])
                            .map(|(a, b)| a * b)
                            .collect::<CompensatedSum>()
                            .value()
                })
                .collect()
        })
        .collect();
    let finite = symmetrize(finite);
    let isserlis_finite = gaussian_mixed_moment(&CovarianceMatrix::new(&finite)?, powers)?;
    let isserlis_limit = match specs[0].design.spec().limit_gram() {
        Some(vinv) => {
            let v = SpdFactor::new(&vinv)?.inverse();
            let cov: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| {
                            let ai = nalgebra::DVector::from_column_slice(&specs[i].alpha);
                            let aj = nalgebra::DVector::from_column_slice(&specs[j].alpha);
                            law.sigma2() * ai.dot(&(&v * aj))
                        })
                        .collect()
                })
                .collect();
            Some(gaussian_mixed_moment(&CovarianceMatrix::new(&symmetrize(cov))?, powers)?)
        }
        None => None,
    };
    Ok(JointReference { exact, isserlis_finite, isserlis_limit })
}

fn symmetrize(mut m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for i in 0..m.len() {
        for j in 0..i {
            m[j][i] = m[i][j];
        }
    }
    m
}

/// `E[|xi_n|^r 1{|xi_n| > K}]` over an `n` grid, one row per threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UiTable {
    pub r: u32,
    pub n_grid: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// `values[k][j]`: threshold `k`, sample size `n_grid[j]`.
    pub values: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Supremum over the grid for each threshold.
    pub sup_over_n: Vec<f64>,
}

/// Tail expectations used to inspect uniform integrability of `|xi_n|^r`.
pub fn ui_tail_diagnostic(
    config: &XiConfig,
    r: u32,
    thresholds: &[f64],
    n_grid: &[usize],
    reps: u64,
    seed: u64,
) -> Result<UiTable> {
    check_reps(reps)?;
    if thresholds.is_empty() || n_grid.is_empty() {
        return Err(Error::domain("thresholds and n grid must be nonempty"));
    }
    let mut values = vec![Vec::with_capacity(n_grid.len()); thresholds.len()];
    let mut std_errors = vec![Vec::with_capacity(n_grid.len()); thresholds.len()];
    for &n in n_grid {
        let spec = config.at(n)?;
        let b = xi_weights(&spec)?;
        let ks = thresholds.to_vec();
        let stats = run_chunks(&[b], &spec.law, reps, seed, ks.len(), |xi, stats| {
            let a = xi[0].abs();
            let v = a.powi(r as i32);
            for (slot, &k) in stats.iter_mut().zip(&ks) {
                slot.add(if a > k { v } else { 0.0 });
            }
        })?;
        for (i, m) in stats.iter().enumerate() {
            let (v, se) = m.estimate(reps)?;
            values[i].push(v);
            std_errors[i].push(se);
        }
    }
    let sup_over_n = values
        .iter()
        .map(|row| row.iter().cloned().fold(0.0, f64::max))
        .collect();
    Ok(UiTable {
        r,
        n_grid: n_grid.to_vec(),
        thresholds: thresholds.to_vec(),
        values,
        std_errors,
        sup_over_n,
    })
}

/// Serialized Monte Carlo run: `{spec, orders, reps, seed, estimates}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub schema: u32,
    pub spec: XiConfig,
    pub orders: Vec<u32>,
    pub reps: u64,
    pub seed: u64,
    pub estimates: Vec<McEstimate>,
}

impl McReport {
    pub fn run(spec: &XiConfig, orders: &[u32], reps: u64, seed: u64) -> Result<Self> {
        let xi = spec.build()?;
        let estimates = mc_xi_moments(&xi, orders, reps, seed)?;
        Ok(McReport { schema: 1, spec: spec.clone(), orders: orders.to_vec(), reps, seed, estimates })
    }
}
