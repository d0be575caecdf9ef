//! OLS fitting and exact moments of the functional
//! `xi_n = sqrt(n) alpha^T (beta_hat - beta) = sum_i b_i eps_i`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::combinat::{binomial, set_partitions};
use crate::design::{Design, DesignSpec};
use crate::error::{Error, Result};
use crate::exact::{compensated_sum, parse_rational, to_f64, CompensatedSum};
use crate::linalg::{gram, SpdFactor};
use crate::moments::weighted_moment_f64;
use crate::profile::{self, MomentProfile};
use crate::rng::RngStream;

/// Named error laws. Each is scaled from a reference law (unit variance, or
/// variance `q(1-q)` for the centered Bernoulli) to the requested variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LawKind {
    Normal,
    Uniform,
    CenteredExponential,
    Rademacher,
    CenteredBernoulli { q: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawErrorLaw")]
pub struct ErrorLaw {
    #[serde(flatten)]
    kind: LawKind,
    sigma2: f64,
}

#[derive(Deserialize)]
struct RawErrorLaw {
    #[serde(flatten)]
    kind: LawKind,
    sigma2: f64,
}

impl TryFrom<RawErrorLaw> for ErrorLaw {
    type Error = Error;
    fn try_from(raw: RawErrorLaw) -> Result<Self> {
        ErrorLaw::new(raw.kind, raw.sigma2)
    }
}

impl ErrorLaw {
    pub fn new(kind: LawKind, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain(format!("error variance must be positive, got {sigma2}")));
        }
        if let LawKind::CenteredBernoulli { q } = kind {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::domain(format!("Bernoulli parameter must lie in (0, 1), got {q}")));
            }
        }
        let law = ErrorLaw { kind, sigma2 };
        law.build_reference()?;
        Ok(law)
    }

    /// Reads `normal`, `uniform`, `exp1`, `rademacher` or `bern(q)`.
    pub fn parse(name: &str, sigma2: f64) -> Result<Self> {
        let kind = match name.trim() {
            "normal" => LawKind::Normal,
            "uniform" => LawKind::Uniform,
            "exp1" | "exponential" | "centered_exponential" => LawKind::CenteredExponential,
            "rademacher" => LawKind::Rademacher,
            other => {
                let q = other
                    .strip_prefix("bern(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| other.strip_prefix("bern:"))
                    .ok_or_else(|| Error::domain(format!("unknown error law {other:?}")))?;
                let q: f64 = q
                    .parse()
                    .map_err(|_| Error::domain(format!("bad Bernoulli parameter in {other:?}")))?;
                LawKind::CenteredBernoulli { q }
            }
        };
        ErrorLaw::new(kind, sigma2)
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    fn build_reference(&self) -> Result<MomentProfile> {
        match &self.kind {
            LawKind::Normal => Ok(profile::normal()),
            LawKind::Uniform => Ok(profile::uniform()),
            LawKind::CenteredExponential => Ok(profile::exp1()),
            LawKind::Rademacher => Ok(profile::rademacher()),
            // shortest round-trip decimal, so 0.3 is read as 3/10
            LawKind::CenteredBernoulli { q } => profile::centered_bernoulli(&parse_rational(&q.to_string())?),
        }
    }

    /// Exact central moments of the reference law.
    pub fn reference_profile(&self) -> MomentProfile {
        self.build_reference().expect("validated at construction")
    }

    fn scale(&self) -> f64 {
        let reference_var = match self.kind {
            LawKind::CenteredBernoulli { q } => q * (1.0 - q),
            _ => 1.0,
        };
        (self.sigma2 / reference_var).sqrt()
    }

    /// Central moments `mu_0 ..= mu_R` at the configured variance.
    pub fn central_f64(&self) -> Vec<f64> {
        let c = self.scale();
        self.reference_profile()
            .central_f64()
            .iter()
            .enumerate()
            .map(|(v, m)| m * c.powi(v as i32))
            .collect()
    }

    pub fn central_moment(&self, order: usize) -> Result<f64> {
        let central = self.central_f64();
        central.get(order).copied().ok_or(Error::InsufficientMoments {
            requested: order,
            available: central.len() - 1,
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.reference_profile().is_symmetric()
    }

    /// One draw from the reference law by inversion (Box-Muller for the
    /// normal), scaled to the configured variance.
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        self.draw_reference(rng) * self.scale()
    }

    fn draw_reference(&self, rng: &mut RngStream) -> f64 {
        match self.kind {
            LawKind::Normal => rng.standard_normal(),
            LawKind::Uniform => (2.0 * rng.uniform() - 1.0) * 3f64.sqrt(),
            LawKind::CenteredExponential => rng.exponential() - 1.0,
            LawKind::Rademacher => rng.sign(),
            LawKind::CenteredBernoulli { q } => {
                if rng.uniform() < q {
                    1.0 - q
                } else {
                    -q
                }
            }
        }
    }
}

/// iid errors `eps_1..eps_n` from `law`.
pub fn sample_errors(law: &ErrorLaw, n: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut out = vec![0.0; n];
    fill_errors(law, rng, &mut out);
    out
}

pub(crate) fn fill_errors(law: &ErrorLaw, rng: &mut RngStream, out: &mut [f64]) {
    let scale = law.scale();
    for e in out.iter_mut() {
        *e = law.draw_reference(rng) * scale;
    }
}

/// `beta_hat = (X^T X)^{-1} X^T y` through a Cholesky solve.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::domain(format!(
            "X has {} rows but y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let factor = SpdFactor::new(&gram(x))?;
    let xty = x.tr_mul(y);
    let beta = factor.solve(&xty);
    let residual = y - x * &beta;
    let ortho = x.tr_mul(&residual).norm();
    if ortho > 1e-8 * xty.norm().max(f64::MIN_POSITIVE) && ortho > 1e-12 {
        return Err(Error::numeric(format!(
            "residual not orthogonal to the columns: |X^T r| = {ortho:.3e}"
        )));
    }
    Ok(beta)
}

/// Serializable description of a functional: design spec, `alpha`, error
/// law and true coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiConfig {
    pub design: DesignSpec,
    pub alpha: Vec<f64>,
    pub law: ErrorLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_true: Option<Vec<f64>>,
}

impl XiConfig {
    pub fn build(&self) -> Result<XiSpec> {
        let design = self.design.build()?;
        let beta = self.beta_true.clone().unwrap_or_else(|| vec![0.0; design.p()]);
        XiSpec::with_beta(design, self.alpha.clone(), self.law.clone(), beta)
    }

    /// The same functional at sample size `n`.
    pub fn at(&self, n: usize) -> Result<XiSpec> {
        XiConfig { design: self.design.with_n(n), ..self.clone() }.build()
    }
}

/// A linear functional of the OLS estimator in a model with a given design
/// and error law.
#[derive(Clone, Debug)]
pub struct XiSpec {
    pub design: Design,
    pub alpha: Vec<f64>,
    pub law: ErrorLaw,
    pub beta_true: Vec<f64>,
}

impl XiSpec {
    pub fn new(design: Design, alpha: Vec<f64>, law: ErrorLaw) -> Result<Self> {
        let p = design.p();
        Self::with_beta(design, alpha, law, vec![0.0; p])
    }

    pub fn with_beta(design: Design, alpha: Vec<f64>, law: ErrorLaw, beta_true: Vec<f64>) -> Result<Self> {
        if alpha.len() != design.p() || beta_true.len() != design.p() {
            return Err(Error::domain(format!(
                "alpha and beta must have length p = {}",
                design.p()
            )));
        }
        if alpha.iter().all(|&a| a == 0.0) {
            return Err(Error::domain("alpha must be nonzero"));
        }
        Ok(XiSpec { design, alpha, law, beta_true })
    }

    /// `alpha^T (n (X^T X)^{-1}) alpha`.
    pub fn scaled_inverse_form(&self) -> Result<f64> {
        let factor = SpdFactor::new(&gram(self.design.matrix()))?;
        let a = DVector::from_column_slice(&self.alpha);
        Ok(self.design.n() as f64 * factor.inverse_quadratic_form(&a))
    }

    /// Variance of the limiting normal law, `sigma^2 alpha^T V alpha`.
    pub fn limit_variance(&self) -> Result<f64> {
        let limit = self.design.spec().limit_gram().ok_or_else(|| {
            Error::domain("the design family does not determine lim X^T X / n")
        })?;
        let factor = SpdFactor::new(&limit)?;
        let a = DVector::from_column_slice(&self.alpha);
        Ok(self.law.sigma2() * factor.inverse_quadratic_form(&a))
    }
}

/// `b_i = sqrt(n) alpha^T (X^T X)^{-1} x_i`, so that `xi_n = sum_i b_i eps_i`.
///
/// Checks `sum b_i^2 = alpha^T (n (X^T X)^{-1}) alpha` to 1e-10 relative and
/// the leverage bound `sum b_i^2 <= p alpha^T (n (X^T X)^{-1}) alpha`.
pub fn xi_weights(spec: &XiSpec) -> Result<Vec<f64>> {
    let x = spec.design.matrix();
    let n = x.nrows() as f64;
    let factor = SpdFactor::new(&gram(x))?;
    let a = DVector::from_column_slice(&spec.alpha);
    let w = factor.solve(&a);
    let b: Vec<f64> = (x * &w).iter().map(|v| v * n.sqrt()).collect();
    let sum_sq = compensated_sum(b.iter().map(|v| v * v));
    let form = n * factor.inverse_quadratic_form(&a);
    if ((sum_sq - form) / form).abs() > 1e-10 {
        return Err(Error::numeric(format!(
            "sum b_i^2 = {sum_sq} differs from alpha^T n (X^T X)^-1 alpha = {form}"
        )));
    }
    if sum_sq > spec.design.p() as f64 * form * (1.0 + 1e-10) {
        return Err(Error::numeric("leverage bound on sum b_i^2 violated"));
    }
    Ok(b)
}

/// `E(xi_n^r)` through the weighted partition expansion.
pub fn xi_exact_moment(spec: &XiSpec, r: u32) -> Result<f64> {
    let b = xi_weights(spec)?;
    let central = spec.law.central_f64();
    weighted_moment_f64(r, &b, &central)
}

/// `E(xi_n^2) = sigma^2 sum b_i^2`.
pub fn xi_second_moment(spec: &XiSpec) -> Result<f64> {
    let b = xi_weights(spec)?;
    Ok(spec.law.sigma2() * compensated_sum(b.iter().map(|v| v * v)))
}

/// `E(xi_n^3) = mu_3 sum b_i^3`.
pub fn xi_third_moment(spec: &XiSpec) -> Result<f64> {
    let b = xi_weights(spec)?;
    Ok(spec.law.central_moment(3)? * compensated_sum(b.iter().map(|v| v * v * v)))
}

/// Cumulants `kappa_0..=kappa_R` of a centered law from its central moments.
pub fn cumulants(central: &[f64]) -> Vec<f64> {
    let mut kappa = vec![0.0; central.len()];
    for n in 2..central.len() {
        let mut k = central[n];
        for j in 2..n {
            let c = to_f64(&crate::exact::from_biguint(&binomial(n as u64 - 1, j as u64 - 1)));
            k -= c * kappa[j] * central[n - j];
        }
        kappa[n] = k;
    }
    kappa
}

/// Largest total degree accepted by [`joint_moment_exact`].
pub const MAX_JOINT_DEGREE: u32 = 12;

/// `E prod_j (w_j^T eps)^{r_j}` for iid centered `eps`, by the
/// moment-cumulant formula: joint cumulants of linear forms of independent
/// variables are `kappa_q sum_i prod_l w_{l,i}`.
pub fn joint_moment_exact(weights: &[Vec<f64>], powers: &[u32], central: &[f64]) -> Result<f64> {
    if weights.len() != powers.len() || weights.is_empty() {
        return Err(Error::domain("one power per weight vector is required"));
    }
    let n = weights[0].len();
    if weights.iter().any(|w| w.len() != n) {
        return Err(Error::domain("weight vectors must have equal length"));
    }
    let total: u32 = powers.iter().sum();
    if total > MAX_JOINT_DEGREE {
        return Err(Error::GuardExceeded {
            what: "joint moment set partitions",
            size: total as u128,
            limit: MAX_JOINT_DEGREE as u128,
        });
    }
    if central.len() <= total as usize {
        return Err(Error::InsufficientMoments {
            requested: total as usize,
            available: central.len().saturating_sub(1),
        });
    }
    let kappa = cumulants(central);
    let forms: Vec<usize> = powers
        .iter()
        .enumerate()
        .flat_map(|(j, &r)| std::iter::repeat(j).take(r as usize))
        .collect();
    let mut block_cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut sum = CompensatedSum::new();
    for partition in set_partitions(forms.len()) {
        if partition.iter().any(|b| b.len() < 2) {
            continue;
        }
        let mut prod = 1.0;
        for block in &partition {
            let mut key: Vec<usize> = block.iter().map(|&l| forms[l]).collect();
            key.sort_unstable();
            let value = *block_cache.entry(key.clone()).or_insert_with(|| {
                kappa[key.len()]
                    * compensated_sum((0..n).map(|i| key.iter().map(|&j| weights[j][i]).product::<f64>()))
            });
            prod *= value;
        }
        sum.add(prod);
    }
    Ok(sum.value())
}
