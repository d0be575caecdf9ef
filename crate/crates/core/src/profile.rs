//! Moment profiles of an error (or observation) law.

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact::{format_rational, half_power, int, parse_rational, pow_int, rational, to_f64};
use crate::exact::{ExactRational, Radical};
use crate::error::{Error, Result};

/// Central moments `mu_2 .. mu_R` of a law, with `sigma^2 = mu_2`.
///
/// Standardized moments `mu_v / sigma^v` are derived exactly; they are
/// rational for even `v` and may carry `sqrt(sigma^2)` for odd `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentProfile {
    name: String,
    /// `central[v]` for `v = 0..=R`; `central[0] = 1`, `central[1] = 0`.
    central: Vec<ExactRational>,
}

impl MomentProfile {
    /// Builds a profile from central moments listed from order 2 upward.
    pub fn from_central(name: impl Into<String>, moments: Vec<ExactRational>) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::InvalidProfile("at least the variance is required".into()));
        }
        if !moments[0].is_positive() {
            return Err(Error::InvalidProfile(format!(
                "variance must be positive, got {}",
                format_rational(&moments[0])
            )));
        }
        let mut central = vec![ExactRational::one(), ExactRational::zero()];
        central.extend(moments);
        let profile = MomentProfile {
            name: name.into(),
            central,
        };
        profile.check_hankel()?;
        Ok(profile)
    }

    /// Builds a unit-variance profile from standardized moments listed from
    /// order 2 upward (the first entry must be 1).
    pub fn from_standardized(name: impl Into<String>, moments: Vec<ExactRational>) -> Result<Self> {
        if moments.first().map(|m| !m.is_one()).unwrap_or(true) {
            return Err(Error::InvalidProfile(
                "standardized moments start at order 2 and must have standardized(2) = 1".into(),
            ));
        }
        Self::from_central(name, moments)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Highest available order `R`.
    pub fn max_order(&self) -> usize {
        self.central.len() - 1
    }

    pub fn sigma2(&self) -> &ExactRational {
        &self.central[2]
    }

    /// Central moment `mu_v`, with `mu_0 = 1` and `mu_1 = 0`.
    pub fn central(&self, order: usize) -> Result<&ExactRational> {
        self.central.get(order).ok_or(Error::InsufficientMoments {
            requested: order,
            available: self.max_order(),
        })
    }

    pub fn require(&self, order: usize) -> Result<()> {
        self.central(order).map(|_| ())
    }

    /// `mu_v / sigma^v`.
    pub fn standardized(&self, order: usize) -> Result<Radical> {
        let mu = self.central(order)?;
        Ok(half_power(self.sigma2(), -(order as i64)).mul_rational(mu))
    }

    /// Kurtosis `mu_4 / sigma^4`.
    pub fn kurtosis(&self) -> Result<ExactRational> {
        Ok(self.central(4)? / pow_int(self.sigma2(), 2))
    }

    /// Squared skewness `mu_3^2 / sigma^6`.
    pub fn skewness_squared(&self) -> Result<ExactRational> {
        let mu3 = self.central(3)?;
        Ok(mu3 * mu3 / pow_int(self.sigma2(), 3))
    }

    pub fn skewness(&self) -> Result<Radical> {
        self.standardized(3)
    }

    pub fn central_f64(&self) -> Vec<f64> {
        self.central.iter().map(to_f64).collect()
    }

    /// Odd central moments all vanish.
    pub fn is_symmetric(&self) -> bool {
        self.central.iter().skip(1).step_by(2).all(Zero::is_zero)
    }

    /// The Hankel matrix of standardized moments must be positive
    /// semidefinite; checked in floating point with tolerance 1e-10 * trace.
    fn check_hankel(&self) -> Result<()> {
        let half = self.max_order() / 2;
        let std: Vec<f64> = (0..=2 * half)
            .map(|v| self.standardized(v).map(|r| r.to_f64()))
            .collect::<Result<_>>()?;
        let hankel = DMatrix::from_fn(half + 1, half + 1, |i, j| std[i + j]);
        let trace = hankel.trace();
        let eig = SymmetricEigen::new(hankel);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 * trace {
            return Err(Error::InvalidProfile(format!(
                "moment sequence of {:?} is not realizable (Hankel eigenvalue {min:.3e})",
                self.name
            )));
        }
        Ok(())
    }

    /// The profile as a serializable table of exact central moments.
    pub fn to_spec(&self) -> ProfileSpec {
        ProfileSpec {
            name: self.name.clone(),
            central: self.central[2..].iter().map(format_rational).collect(),
        }
    }
}

/// Serializable profile: central moments from order 2, as exact strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub name: String,
    pub central: Vec<String>,
}

impl TryFrom<&ProfileSpec> for MomentProfile {
    type Error = Error;
    fn try_from(spec: &ProfileSpec) -> Result<Self> {
        let moments = spec
            .central
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()?;
        MomentProfile::from_central(spec.name.clone(), moments)
    }
}

/// Highest order carried by the bundled profiles.
pub const BUNDLED_ORDER: usize = 8;

/// Standard normal: `mu_v = (v-1)!!` for even `v`.
pub fn normal() -> MomentProfile {
    let moments = (2..=BUNDLED_ORDER)
        .map(|v| {
            if v % 2 == 1 {
                ExactRational::zero()
            } else {
                int((1..v as u64).step_by(2).product::<u64>())
            }
        })
        .collect();
    MomentProfile::from_central("normal", moments).expect("normal moments are valid")
}

/// Unit-variance uniform on `(-sqrt 3, sqrt 3)`: `mu_v = 3^(v/2) / (v+1)`.
pub fn uniform() -> MomentProfile {
    let moments = (2..=BUNDLED_ORDER)
        .map(|v| {
            if v % 2 == 1 {
                ExactRational::zero()
            } else {
                rational(3i64.pow(v as u32 / 2), v as i64 + 1)
            }
        })
        .collect();
    MomentProfile::from_central("uniform", moments).expect("uniform moments are valid")
}

/// Centered unit exponential `Exp(1) - 1`; central moments are the
/// subfactorials `!v` (skewness 2, kurtosis 9).
pub fn exp1() -> MomentProfile {
    let mut sub = vec![1i64, 0];
    for v in 2..=BUNDLED_ORDER as i64 {
        let next = (v - 1) * (sub[v as usize - 1] + sub[v as usize - 2]);
        sub.push(next);
    }
    let moments = sub[2..].iter().map(|&m| int(m)).collect();
    MomentProfile::from_central("exp1", moments).expect("exponential moments are valid")
}

/// Symmetric two-point law on `{-1, 1}`.
pub fn rademacher() -> MomentProfile {
    let moments = (2..=BUNDLED_ORDER)
        .map(|v| if v % 2 == 0 { int(1) } else { int(0) })
        .collect();
    MomentProfile::from_central("rademacher", moments).expect("rademacher moments are valid")
}

/// `B - q` for `B ~ Bernoulli(q)`: `mu_v = q (1-q)^v + (1-q) (-q)^v`,
/// variance `q (1 - q)`.
pub fn centered_bernoulli(q: &ExactRational) -> Result<MomentProfile> {
    if !q.is_positive() || *q >= ExactRational::one() {
        return Err(Error::domain(format!(
            "Bernoulli parameter must lie in (0, 1), got {}",
            format_rational(q)
        )));
    }
    let p = ExactRational::one() - q;
    let moments = (2..=BUNDLED_ORDER as i64)
        .map(|v| q * pow_int(&p, v) + &p * pow_int(&-q.clone(), v))
        .collect();
    MomentProfile::from_central(format!("bern({})", format_rational(q)), moments)
}

/// Looks up a bundled profile: `normal`, `uniform`, `exp1`, `rademacher` or
/// `bern(q)` / `bern:q` with `q` a decimal or fraction.
pub fn named(name: &str) -> Result<MomentProfile> {
    let name = name.trim();
    match name {
        "normal" => Ok(normal()),
        "uniform" => Ok(uniform()),
        "exp1" | "exponential" => Ok(exp1()),
        "rademacher" => Ok(rademacher()),
        _ => {
            let q = name
                .strip_prefix("bern(")
                .and_then(|rest| rest.strip_suffix(')'))
                .or_else(|| name.strip_prefix("bern:"));
            match q {
                Some(q) => centered_bernoulli(&parse_rational(q)?),
                None => Err(Error::domain(format!(
                    "unknown profile {name:?}; expected normal, uniform, exp1, rademacher or bern(q)"
                ))),
            }
        }
    }
}
