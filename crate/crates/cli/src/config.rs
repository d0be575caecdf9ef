//! Declarative run configurations. Every subcommand is first turned into a
//! [`RunConfig`], so flags and `--config FILE` go through one code path.

use momentrate::design::{AlphaRule, DesignSpec};
use momentrate::exact::parse_rational;
use momentrate::ols::{ErrorLaw, XiConfig};
use momentrate::profile::{self, MomentProfile};
use momentrate::Result;
use serde::{Deserialize, Serialize};

use crate::error::usage;

/// Schema version stamped on every JSON output.
pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Partitions { r: u32 },
    Moment {
        r: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
        profile: ProfileChoice,
    },
    Limits { k_min: u32, k_max: u32, profile: ProfileChoice },
    Rate(RateConfig),
    Simulate(SimulateConfig),
    Adversarial(AdversarialConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Partitions { .. } => "partitions",
            RunConfig::Moment { .. } => "moment",
            RunConfig::Limits { .. } => "limits",
            RunConfig::Rate(_) => "rate",
            RunConfig::Simulate(_) => "simulate",
            RunConfig::Adversarial(_) => "adversarial",
        }
    }
}

/// A bundled profile by name, or standardized moments `1, gamma, kappa, ..`
/// from order 2 on, each an exact decimal or fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileChoice {
    Named(String),
    Standardized(Vec<String>),
}

impl ProfileChoice {
    pub fn resolve(&self) -> Result<MomentProfile> {
        match self {
            ProfileChoice::Named(name) => profile::named(name),
            ProfileChoice::Standardized(values) => {
                let moments = values.iter().map(|v| parse_rational(v)).collect::<Result<Vec<_>>>()?;
                MomentProfile::from_standardized("inline", moments)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub r: u32,
    pub ngrid: Vec<u64>,
    pub source: RateSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// Exact `E(Z_n^r)` for a moment profile.
    Profile(ProfileChoice),
    /// Exact `E(xi_n^r)` along a deterministic design family.
    Xi(XiConfig),
    /// Monte Carlo `E(xi_n^r)`.
    Mc { xi: XiConfig, reps: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub design: DesignSpec,
    pub law: ErrorLaw,
    /// One `alpha` per functional; joint moments need two or more.
    pub functionals: Vec<Vec<f64>>,
    #[serde(default)]
    pub orders: Vec<u32>,
    /// Powers of a joint moment, one per functional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<u32>>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailConfig>,
}

impl SimulateConfig {
    pub fn xi(&self, index: usize) -> XiConfig {
        XiConfig {
            design: self.design.clone(),
            alpha: self.functionals[index].clone(),
            law: self.law.clone(),
            beta_true: None,
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        if self.functionals.is_empty() {
            return Err(usage("at least one functional is required"));
        }
        if self.orders.is_empty() && self.powers.is_none() && self.tail.is_none() {
            return Err(usage("nothing to simulate: give --r, --powers or --tail-thresholds"));
        }
        Ok(())
    }
}

/// Tail expectations `E|xi_n|^r 1{|xi_n| > K}` over an `n` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub r: u32,
    pub thresholds: Vec<f64>,
    pub ngrid: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "proposition", rename_all = "snake_case")]
pub enum AdversarialConfig {
    Prop1 { alpha: AlphaRule, ngrid: Vec<u64>, sigma2: f64, threshold: f64 },
    Prop2 { a: f64, mu3: f64, ngrid: Vec<u64>, threshold: f64 },
}

pub fn read_config(text: &str) -> crate::error::Result<RunConfig> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_config(config: &RunConfig) -> crate::error::Result<String> {
    Ok(serde_json::to_string_pretty(config)?)
}
