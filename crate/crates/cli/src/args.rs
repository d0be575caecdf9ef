//! Command-line flags and their translation into [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use momentrate::design::{AlphaRule, ColumnLaw, DesignFamily, DesignSpec, SequenceRule};
use momentrate::ols::{ErrorLaw, XiConfig};
use momentrate::rate::parse_grid;

use crate::error::{usage, Result};
use crate::config::{AdversarialConfig, ProfileChoice, RateConfig, RateSource, RunConfig, SimulateConfig, TailConfig};

#[derive(Debug, Parser)]
#[command(name = "momentrate", version, about = "Exact moments, convergence rates and adversarial designs for standardized sums and OLS functionals")]
pub struct Cli {
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Output path, or `-` for stdout.
    #[arg(long, global = true, default_value = "-")]
    pub output: String,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "MOMENTRATE_THREADS")]
    pub threads: Option<usize>,

    /// Read the run configuration from a JSON file instead of flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Where `rate` writes its fit as JSON.
    #[arg(long, global = true)]
    pub fit_output: Option<PathBuf>,

    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the partitions of r into parts >= 2 with their coefficients.
    Partitions {
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        r: u32,
    },
    /// Exact E(Z_n^r) and E(S_n^r) for a moment profile.
    Moment {
        #[arg(long)]
        r: u32,
        #[arg(long)]
        n: Option<u64>,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Limits of the scaled deltas, derived and printed variants side by side.
    Limits {
        /// `K` or `KMIN:KMAX`.
        #[arg(long, default_value = "1:4")]
        k: String,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Delta sequence, log-log rate fit and scaled-limit check.
    Rate(RateArgs),
    /// Monte Carlo moments of OLS functionals.
    Simulate(SimulateArgs),
    /// Divergence tables of the counterexample designs.
    Adversarial(AdversarialArgs),
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Bundled profile: normal, uniform, exp1, rademacher or bern(q).
    #[arg(long, conflicts_with = "moments")]
    pub profile: Option<String>,
    /// Standardized moments from order 2 on, comma separated (`1,2,9,...`).
    #[arg(long, value_delimiter = ',')]
    pub moments: Option<Vec<String>>,
}

impl ProfileArgs {
    fn choice(&self) -> Option<ProfileChoice> {
        match (&self.profile, &self.moments) {
            (Some(name), _) => Some(ProfileChoice::Named(name.clone())),
            (None, Some(m)) => Some(ProfileChoice::Standardized(m.clone())),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// canonical, convergent, prop1, prop2 or iid.
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns of an iid design.
    #[arg(long)]
    pub p: Option<usize>,
    /// Rate rule for prop1: sqrt, log, pow:S or table:a1,a2,...
    #[arg(long)]
    pub alpha: Option<String>,
    /// Exponent of the prop2 design, in (0, 1/2).
    #[arg(long)]
    pub a: Option<f64>,
    /// Convergent design `x_i = c + a / i^q`.
    #[arg(long, default_value_t = 2.0)]
    pub seq_c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub seq_a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub seq_q: f64,
    /// Column law of an iid design: normal, uniform or rademacher.
    #[arg(long, default_value = "normal")]
    pub column_law: String,
    /// First column of an iid design is all ones.
    #[arg(long)]
    pub intercept: bool,
    #[arg(long, default_value_t = 0)]
    pub design_seed: u64,
    /// Error law: normal, uniform, exp1, rademacher or bern(q).
    #[arg(long, default_value = "normal")]
    pub law: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Weights of a functional alpha^T beta, comma separated; repeat for
    /// several functionals.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append)]
    pub functional: Vec<f64>,
}

impl DesignArgs {
    fn spec(&self, n: usize) -> Result<DesignSpec> {
        let name = self.design.as_deref().ok_or_else(|| usage("--design is required"))?;
        let (family, p) = match name {
            "canonical" => (DesignFamily::Canonical, 1),
            "convergent" => (
                DesignFamily::Convergent(SequenceRule::Power { c: self.seq_c, a: self.seq_a, q: self.seq_q }),
                1,
            ),
            "prop1" => (DesignFamily::Prop1(self.alpha_rule()?), 1),
            "prop2" => (DesignFamily::Prop2 { a: self.a.ok_or_else(|| usage("prop2 needs --a"))? }, 1),
            "iid" | "iid_random" => {
                let column_law = match self.column_law.as_str() {
                    "normal" => ColumnLaw::Normal,
                    "uniform" => ColumnLaw::Uniform,
                    "rademacher" => ColumnLaw::Rademacher,
                    other => return Err(usage(format!("unknown column law {other:?}"))),
                };
                (DesignFamily::IidRandom { column_law, intercept: self.intercept }, self.p.unwrap_or(2))
            }
            other => return Err(usage(format!("unknown design family {other:?}"))),
        };
        Ok(DesignSpec::new(family, n, p, self.design_seed))
    }

    fn alpha_rule(&self) -> Result<AlphaRule> {
        Ok(AlphaRule::parse(self.alpha.as_deref().unwrap_or("sqrt"))?)
    }

    fn law(&self) -> Result<ErrorLaw> {
        Ok(ErrorLaw::parse(&self.law, self.sigma2)?)
    }

    /// Functionals as given, defaulting to the first coordinate.
    fn functionals(&self, p: usize) -> Result<Vec<Vec<f64>>> {
        if self.functional.is_empty() {
            let mut e1 = vec![0.0; p];
            e1[0] = 1.0;
            return Ok(vec![e1]);
        }
        if self.functional.len() % p != 0 {
            return Err(usage(format!("each --functional needs {p} weights")));
        }
        Ok(self.functional.chunks(p).map(<[f64]>::to_vec).collect())
    }

    fn xi(&self, n: usize) -> Result<XiConfig> {
        let design = self.spec(n)?;
        let alpha = self.functionals(design.p)?.remove(0);
        Ok(XiConfig { design, alpha, law: self.law()?, beta_true: None })
    }
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub r: u32,
    /// `START:END:xRATIO` or `n1,n2,...`.
    #[arg(long, default_value = "16:16384:x2")]
    pub ngrid: String,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Monte Carlo replications per grid point; exact when absent.
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Moment orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<u32>,
    /// Powers of a joint moment over the functionals, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub powers: Option<Vec<u32>>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Thresholds K of a tail diagnostic, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tail_thresholds: Option<Vec<f64>>,
    /// Order of the tail diagnostic.
    #[arg(long, default_value_t = 2)]
    pub tail_r: u32,
    /// Grid of the tail diagnostic.
    #[arg(long)]
    pub tail_ngrid: Option<String>,
}

#[derive(Debug, Args)]
pub struct AdversarialArgs {
    /// 1: even-moment counterexample, 2: sparse spikes.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub prop: u8,
    /// Rate rule of design 1.
    #[arg(long, default_value = "sqrt")]
    pub alpha: String,
    /// Spike exponent of design 2.
    #[arg(long, default_value_t = 0.25)]
    pub a: f64,
    /// Single sample size; overrides --ngrid.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub ngrid: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 2.0)]
    pub mu3: f64,
    /// Escape factor relative to the first value.
    #[arg(long, default_value_t = momentrate::rate::DEFAULT_ESCAPE_FACTOR)]
    pub threshold: f64,
}

fn parse_k(s: &str) -> Result<(u32, u32)> {
    let bad = || usage(format!("bad --k {s:?}; expected K or KMIN:KMAX"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let k = s.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

impl Command {
    pub fn into_config(self) -> Result<RunConfig> {
        Ok(match self {
            Command::Partitions { r } => RunConfig::Partitions { r },
            Command::Moment { r, n, profile } => RunConfig::Moment {
                r,
                n,
                profile: profile.choice().ok_or_else(|| usage("--profile or --moments is required"))?,
            },
            Command::Limits { k, profile } => {
                let (k_min, k_max) = parse_k(&k)?;
                RunConfig::Limits {
                    k_min,
                    k_max,
                    profile: profile.choice().ok_or_else(|| usage("--profile or --moments is required"))?,
                }
            }
            Command::Rate(a) => {
                let ngrid = parse_grid(&a.ngrid)?;
                let source = match (a.profile.choice(), a.reps) {
                    (Some(p), None) => RateSource::Profile(p),
                    (Some(_), Some(_)) => return Err(usage("--reps applies to design sources only")),
                    (None, reps) => {
                        let xi = a.design.xi(ngrid[0] as usize)?;
                        match reps {
                            Some(reps) => RateSource::Mc { xi, reps, seed: a.seed },
                            None => RateSource::Xi(xi),
                        }
                    }
                };
                RunConfig::Rate(RateConfig { r: a.r, ngrid, source })
            }
            Command::Simulate(a) => {
                let n = a.design.n.ok_or_else(|| usage("--n is required"))?;
                let design = a.design.spec(n)?;
                let functionals = a.design.functionals(design.p)?;
                let tail = match a.tail_thresholds {
                    Some(thresholds) => Some(TailConfig {
                        r: a.tail_r,
                        thresholds,
                        ngrid: match &a.tail_ngrid {
                            Some(g) => parse_grid(g)?,
                            None => vec![n as u64],
                        },
                    }),
                    None => None,
                };
                let config = SimulateConfig {
                    design,
                    law: a.design.law()?,
                    functionals,
                    orders: a.r,
                    powers: a.powers,
                    reps: a.reps,
                    seed: a.seed,
                    tail,
                };
                config.validate()?;
                RunConfig::Simulate(config)
            }
            Command::Adversarial(a) => {
                let ngrid = match (a.n, &a.ngrid) {
                    (Some(n), _) => vec![n],
                    (None, Some(g)) => parse_grid(g)?,
                    (None, None) => parse_grid("16:1048576:x2")?,
                };
                RunConfig::Adversarial(match a.prop {
                    1 => AdversarialConfig::Prop1 {
                        alpha: AlphaRule::parse(&a.alpha)?,
                        ngrid,
                        sigma2: a.sigma2,
                        threshold: a.threshold,
                    },
                    _ => AdversarialConfig::Prop2 { a: a.a, mu3: a.mu3, ngrid, threshold: a.threshold },
                })
            }
        })
    }
}
