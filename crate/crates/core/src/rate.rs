//! Delta sequences `E(Z_n^r) - E(Z^r)`, empirical convergence rates, scaled
//! limits and the divergence tables of the two counterexample designs.

use std::io::Write;

use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{prop1_design, prop2_spikes, AlphaRule, DesignFamily};
use crate::error::{Error, Result};
use crate::exact::{format_rational, half_power, int, rational, to_f64, ExactRational, Radical};
use crate::gaussian::GaussianLaw;
use crate::moments::{gaussian_moment, moment_z};
use crate::montecarlo::mc_xi_moments;
use crate::ols::{xi_exact_moment, xi_second_moment, ErrorLaw, XiConfig, XiSpec};
use crate::profile::MomentProfile;

/// Where the deltas of a table come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Exact,
    Mc,
}

/// A delta or scaled delta, exact when the inputs were exact.
#[derive(Clone, Debug, PartialEq)]
pub enum DeltaValue {
    Exact(Radical),
    Float(f64),
}

impl DeltaValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            DeltaValue::Exact(r) => r.to_f64(),
            DeltaValue::Float(v) => *v,
        }
    }

    pub fn exact(&self) -> Option<&Radical> {
        match self {
            DeltaValue::Exact(r) => Some(r),
            DeltaValue::Float(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DeltaValue::Exact(r) => r.is_zero(),
            DeltaValue::Float(v) => *v == 0.0,
        }
    }

    fn scale(&self, n: u64, s: &ExactRational) -> DeltaValue {
        match (self, half_integer(s)) {
            (DeltaValue::Exact(r), Some(h)) => DeltaValue::Exact(r.clone() * half_power(&int(n), h)),
            _ => DeltaValue::Float(self.to_f64() * (n as f64).powf(to_f64(s))),
        }
    }
}

impl Serialize for DeltaValue {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DeltaValue::Exact(r) => crate::exact::ExactReport::from(r).serialize(ser),
            DeltaValue::Float(v) => ser.serialize_f64(*v),
        }
    }
}

/// `2s` when it is an integer.
fn half_integer(s: &ExactRational) -> Option<i64> {
    let twice = s * int(2);
    if twice.is_integer() {
        i64::try_from(twice.to_integer()).ok()
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: u64,
    pub delta: DeltaValue,
    pub scaled: Option<DeltaValue>,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateTable {
    pub r: u32,
    pub source: Source,
    #[serde(serialize_with = "ser_rational")]
    pub scaling_exponent: ExactRational,
    pub rows: Vec<RateRow>,
    /// Every delta is exactly zero; such tables are not fitted.
    pub identically_zero: bool,
}

fn ser_rational<S: serde::Serializer>(q: &ExactRational, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(&format_rational(q))
}

/// Rate exponent under which `n^s Delta_n` has a finite nonzero limit in the
/// generic case: 1 for even orders, 1/2 for odd ones.
pub fn default_scaling(r: u32) -> ExactRational {
    if r % 2 == 0 {
        ExactRational::one()
    } else {
        rational(1, 2)
    }
}

impl RateTable {
    fn new(r: u32, source: Source, s: ExactRational, mut rows: Vec<RateRow>) -> Self {
        for row in &mut rows {
            row.scaled = Some(row.delta.scale(row.n, &s));
        }
        let identically_zero = rows.iter().all(|row| row.delta.is_zero());
        RateTable { r, source, scaling_exponent: s, rows, identically_zero }
    }

    pub fn ns(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta.to_f64()).collect()
    }

    pub fn scaled(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.scaled.as_ref().map_or(f64::NAN, DeltaValue::to_f64))
            .collect()
    }

    /// CSV with header `n,delta,scaled,std_error`; `std_error` is empty for
    /// exact tables.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "delta", "scaled", "std_error"])?;
        for row in &self.rows {
            w.write_record([
                row.n.to_string(),
                row.delta.to_f64().to_string(),
                row.scaled.as_ref().map(|s| s.to_f64().to_string()).unwrap_or_default(),
                row.std_error.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::domain("empty n grid"));
    }
    if n_grid[0] == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("n grid must be strictly increasing"));
    }
    Ok(())
}

/// `round(start * ratio^k)` for `k = 0, 1, ...` up to `end`, deduplicated.
pub fn geometric_grid(start: u64, end: u64, ratio: f64) -> Result<Vec<u64>> {
    if start == 0 || end < start || !(ratio > 1.0) {
        return Err(Error::domain(format!(
            "geometric grid needs 1 <= start <= end and ratio > 1, got {start}:{end}:x{ratio}"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0i32;
    loop {
        let v = (start as f64 * ratio.powi(k)).round();
        if v > end as f64 * (1.0 + 1e-12) {
            break;
        }
        let v = v as u64;
        if out.last() != Some(&v) {
            out.push(v);
        }
        k += 1;
    }
    Ok(out)
}

/// Parses `START:END:xRATIO` or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::domain(format!("bad n grid {s:?}; expected START:END:xRATIO or n1,n2,..."));
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start = parts[0].trim().parse().map_err(|_| bad())?;
        let end = parts[1].trim().parse().map_err(|_| bad())?;
        let ratio = parts[2].trim().strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        geometric_grid(start, end, ratio)?
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    check_grid(&grid)?;
    Ok(grid)
}

/// Exact `Delta_n = E(Z_n^r) - E(N(0,1)^r)` for a moment profile.
pub fn delta_sequence_profile(r: u32, profile: &MomentProfile, n_grid: &[u64]) -> Result<RateTable> {
    check_grid(n_grid)?;
    profile.require(r as usize)?;
    let limit = if r % 2 == 0 {
        Radical::rational(crate::exact::from_biguint(&gaussian_moment(r)))
    } else {
        Radical::zero()
    };
    let rows = n_grid
        .par_iter()
        .map(|&n| {
            let m = moment_z(r, n, profile)?;
            let delta = m
                .checked_sub(&limit)
                .ok_or_else(|| Error::numeric("irrational even moment; cannot subtract exactly"))?;
            Ok(RateRow { n, delta: DeltaValue::Exact(delta), scaled: None, std_error: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable::new(r, Source::Exact, default_scaling(r), rows))
}

fn deterministic(config: &XiConfig) -> Result<()> {
    if matches!(config.design.family, DesignFamily::IidRandom { .. }) {
        return Err(Error::domain(
            "exact delta sequences need a deterministic design family; use the Monte Carlo variant",
        ));
    }
    Ok(())
}

fn limit_moment(spec: &XiSpec, r: u32) -> Result<f64> {
    Ok(GaussianLaw::new(spec.limit_variance()?)?.moment(r))
}

/// `E(xi_n^r) - E(N(0, sigma^2 alpha^T V alpha)^r)` along a design family.
pub fn delta_sequence_xi(r: u32, config: &XiConfig, n_grid: &[u64]) -> Result<RateTable> {
    check_grid(n_grid)?;
    deterministic(config)?;
    let rows = n_grid
        .par_iter()
        .map(|&n| {
            let spec = config.at(n as usize)?;
            let delta = xi_exact_moment(&spec, r)? - limit_moment(&spec, r)?;
            Ok(RateRow { n, delta: DeltaValue::Float(delta), scaled: None, std_error: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable::new(r, Source::Exact, default_scaling(r), rows))
}

/// Monte Carlo counterpart of [`delta_sequence_xi`]; each `n` uses the same
/// seed.
pub fn delta_sequence_mc(r: u32, config: &XiConfig, n_grid: &[u64], reps: u64, seed: u64) -> Result<RateTable> {
    check_grid(n_grid)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let spec = config.at(n as usize)?;
        let est = &mc_xi_moments(&spec, &[r], reps, seed)?[0];
        rows.push(RateRow {
            n,
            delta: DeltaValue::Float(est.value - limit_moment(&spec, r)?),
            scaled: None,
            std_error: Some(est.std_error),
        });
    }
    let mut table = RateTable::new(r, Source::Mc, default_scaling(r), rows);
    // Monte Carlo noise is never exactly zero in a meaningful sense.
    table.identically_zero = false;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub points: usize,
    /// Sign changes of the fitted values; nonzero means `|delta|` was fitted.
    pub sign_changes: usize,
}

pub const MIN_FIT_POINTS: usize = 4;

/// Least squares of `log|y|` on `log x`, skipping zero `y`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<RateFit> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y != 0.0 && y.is_finite())
        .copied()
        .collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::domain(format!(
            "need at least {MIN_FIT_POINTS} points with nonzero delta, got {}",
            used.len()
        )));
    }
    let sign_changes = used.windows(2).filter(|w| (w[0].1 > 0.0) != (w[1].1 > 0.0)).count();
    let lx: Vec<f64> = used.iter().map(|(x, _)| x.ln()).collect();
    let ly: Vec<f64> = used.iter().map(|(_, y)| y.abs().ln()).collect();
    let m = used.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        n_min: used[0].0,
        n_max: used[used.len() - 1].0,
        points: used.len(),
        sign_changes,
    })
}

/// Empirical rate exponent of a delta table.
pub fn loglog_slope(table: &RateTable) -> Result<RateFit> {
    if table.identically_zero {
        return Err(Error::domain(format!(
            "delta sequence for r = {} is identically zero; there is no rate to fit",
            table.r
        )));
    }
    let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.n as f64, r.delta.to_f64())).collect();
    fit_loglog(&points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaledLimitReport {
    pub target: crate::exact::ExactReport,
    #[serde(serialize_with = "ser_rational")]
    pub scaling_exponent: ExactRational,
    pub n: Vec<u64>,
    pub scaled: Vec<f64>,
    /// Relative error against the target, or absolute error when the
    /// target is zero.
    pub errors: Vec<f64>,
    pub relative: bool,
    pub last_error: f64,
    /// Errors strictly decrease with `n`, or are exactly zero.
    pub error_monotone: bool,
}

/// Compares `n^s Delta_n` with its claimed limit.
pub fn scaled_limit_check(table: &RateTable, s: &ExactRational, target: &Radical) -> Result<ScaledLimitReport> {
    if table.rows.is_empty() {
        return Err(Error::domain("empty rate table"));
    }
    let relative = !target.is_zero();
    let t = target.to_f64();
    let mut scaled = Vec::with_capacity(table.rows.len());
    let mut errors = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let v = row.delta.scale(row.n, s);
        let diff = match &v {
            DeltaValue::Exact(e) => match e.checked_sub(target) {
                Some(d) => d.to_f64().abs(),
                None => (e.to_f64() - t).abs(),
            },
            DeltaValue::Float(f) => (f - t).abs(),
        };
        scaled.push(v.to_f64());
        errors.push(if relative { diff / t.abs() } else { diff });
    }
    let error_monotone = errors.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0);
    Ok(ScaledLimitReport {
        target: target.into(),
        scaling_exponent: s.clone(),
        n: table.ns(),
        last_error: *errors.last().unwrap(),
        scaled,
        errors,
        relative,
        error_monotone,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub n: u64,
    pub value: f64,
    /// Same quantity through the general moment route, when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub rows: Vec<DivergenceRow>,
    /// Values move strictly away from zero at every step.
    pub strictly_monotone: bool,
    /// Escape factor relative to the first value.
    pub threshold: f64,
    /// First `n` at which `|value|` exceeds `threshold * |value_0|`.
    pub escaped_at: Option<u64>,
}

pub const DEFAULT_ESCAPE_FACTOR: f64 = 10.0;

impl DivergenceReport {
    fn new(rows: Vec<DivergenceRow>, threshold: f64, upward: bool) -> Self {
        let strictly_monotone = rows
            .windows(2)
            .all(|w| if upward { w[1].value > w[0].value } else { w[1].value < w[0].value });
        let first = rows.first().map_or(0.0, |r| r.value.abs());
        let escaped_at = rows
            .iter()
            .find(|r| r.value.abs() > threshold * first)
            .map(|r| r.n);
        DivergenceReport { rows, strictly_monotone, threshold, escaped_at }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "value", "direct"])?;
        for row in &self.rows {
            w.write_record([
                row.n.to_string(),
                row.value.to_string(),
                row.direct.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest `n` at which the prop1 report also builds the design and
/// evaluates the second moment through the OLS weights.
pub const PROP1_DIRECT_LIMIT: u64 = 1 << 20;

/// `alpha_n (E(xi_n^2) - sigma^2) = -alpha_n^{1/2} sigma^2 / (1 + alpha_n^{-1/2})`
/// on the prop1 design with `alpha = 1`.
pub fn prop1_divergence_report(rule: &AlphaRule, n_grid: &[u64], sigma2: f64, threshold: f64) -> Result<DivergenceReport> {
    check_grid(n_grid)?;
    rule.validate()?;
    let law = ErrorLaw::parse("normal", sigma2)?;
    let rows = n_grid
        .par_iter()
        .map(|&n| {
            let alpha = rule.value(n as usize)?;
            let value = -alpha.sqrt() * sigma2 / (1.0 + alpha.powf(-0.5));
            let direct = if n <= PROP1_DIRECT_LIMIT {
                let spec = XiSpec::new(prop1_design(n as usize, rule)?, vec![1.0], law.clone())?;
                Some(alpha * (xi_second_moment(&spec)? - sigma2))
            } else {
                None
            };
            Ok(DivergenceRow { n, value, direct })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DivergenceReport::new(rows, threshold, false))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report {
    pub a: f64,
    pub mu3: f64,
    pub divergence: DivergenceReport,
    /// Log-log fit of `n^a E(xi_n^3)` against `n`; absent on grids too
    /// short to fit.
    pub fit: Option<RateFit>,
    /// `a(3 - 4a) / (4(1 - a))`.
    pub printed_exponent: f64,
    /// `a(1 - 2a) / (2(1 - a))`.
    pub derived_exponent: f64,
    /// Candidate nearer to the fitted slope: `"printed"` or `"derived"`.
    pub closer: Option<String>,
}

pub fn prop2_printed_exponent(a: f64) -> f64 {
    a * (3.0 - 4.0 * a) / (4.0 * (1.0 - a))
}

pub fn prop2_derived_exponent(a: f64) -> f64 {
    a * (1.0 - 2.0 * a) / (2.0 * (1.0 - a))
}

/// `n^a E(xi_n^3) = n^{a + 3/2} mu_3 sum x_i^3 / (sum x_i^2)^3` on the prop2
/// design, from the sparse list of nonzero rows.
pub fn prop2_divergence_report(a: f64, n_grid: &[u64], mu3: f64, threshold: f64) -> Result<Prop2Report> {
    check_grid(n_grid)?;
    if mu3 == 0.0 || !mu3.is_finite() {
        return Err(Error::domain("the third central moment must be nonzero"));
    }
    let n_max = *n_grid.last().unwrap();
    let spikes = prop2_spikes(n_max as usize, a)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    let (mut s2, mut s3) = (0.0f64, 0.0f64);
    let mut next = 0;
    for &n in n_grid {
        while next < spikes.len() && spikes[next].0 as u64 <= n {
            let x = spikes[next].1;
            s2 += x * x;
            s3 += x * x * x;
            next += 1;
        }
        let nf = n as f64;
        let value = nf.powf(a + 1.5) * mu3 * s3 / (s2 * s2 * s2);
        rows.push(DivergenceRow { n, value, direct: None });
    }
    let upward = mu3 > 0.0;
    let divergence = DivergenceReport::new(rows, threshold, upward);
    let points: Vec<(f64, f64)> = divergence.rows.iter().map(|r| (r.n as f64, r.value)).collect();
    let fit = if points.len() >= MIN_FIT_POINTS { Some(fit_loglog(&points)?) } else { None };
    let printed_exponent = prop2_printed_exponent(a);
    let derived_exponent = prop2_derived_exponent(a);
    let closer = fit.as_ref().map(|f| {
        if (f.slope - derived_exponent).abs() <= (f.slope - printed_exponent).abs() {
            "derived".to_string()
        } else {
            "printed".to_string()
        }
    });
    Ok(Prop2Report {
        a,
        mu3,
        divergence,
        fit,
        printed_exponent,
        derived_exponent,
        closer,
    })
}
