//! Executes a [`RunConfig`] and renders the result.

use std::fmt::Write as _;

use momentrate::combinat::{partition_weight, partitions_min2, symbolic_coefficient};
use momentrate::exact::{format_rational, ExactReport, Radical};
use momentrate::moments::{limit_even, limit_even_printed, limit_odd, moment_s, moment_z};
use momentrate::montecarlo::{joint_reference, mc_joint_moments, ui_tail_diagnostic, McReport};
use momentrate::ols::xi_exact_moment;
use momentrate::rate::{
    default_scaling, delta_sequence_mc, delta_sequence_profile, delta_sequence_xi, loglog_slope,
    prop1_divergence_report, prop2_divergence_report, scaled_limit_check, RateFit, RateTable,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::Format;
use crate::config::{AdversarialConfig, RateSource, RunConfig, SimulateConfig, SCHEMA};
use crate::error::{usage, Result};

/// Rendered output of one run.
pub struct Rendered {
    pub body: String,
    /// Fit of a rate run, for `--fit-output`.
    pub fit: Option<RateFit>,
}

/// Metadata kept apart from the numeric payload so reruns can be compared
/// after dropping it.
fn meta(command: &str) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "threads": rayon::current_num_threads(),
    })
}

fn envelope(command: &str, payload: impl Serialize) -> Result<String> {
    let mut map = Map::new();
    map.insert("schema".into(), json!(SCHEMA));
    map.insert("meta".into(), meta(command));
    match serde_json::to_value(payload)? {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(map))?;
    s.push('\n');
    Ok(s)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv is utf-8")
}

pub fn default_format(config: &RunConfig) -> Format {
    match config {
        RunConfig::Partitions { .. } | RunConfig::Moment { .. } | RunConfig::Limits { .. } => Format::Text,
        RunConfig::Rate(_) | RunConfig::Adversarial(_) => Format::Csv,
        RunConfig::Simulate(_) => Format::Json,
    }
}

pub fn execute(config: &RunConfig, format: Format) -> Result<Rendered> {
    let name = config.name();
    let body = match config {
        RunConfig::Partitions { r } => partitions(name, *r, format)?,
        RunConfig::Moment { r, n, profile } => {
            let profile = profile.resolve()?;
            profile.require(*r as usize)?;
            let n = n.ok_or_else(|| usage("--n is required"))?;
            moment(name, *r, n, &profile, format)?
        }
        RunConfig::Limits { k_min, k_max, profile } => limits(name, *k_min, *k_max, &profile.resolve()?, format)?,
        RunConfig::Rate(rate) => {
            let (table, target) = match &rate.source {
                RateSource::Profile(p) => {
                    let profile = p.resolve()?;
                    let table = delta_sequence_profile(rate.r, &profile, &rate.ngrid)?;
                    let target = match rate.r {
                        r if r >= 2 && r % 2 == 0 => Some(Radical::rational(limit_even(r / 2, &profile)?)),
                        r if r >= 3 => Some(limit_odd((r - 1) / 2, &profile)?),
                        _ => None,
                    };
                    (table, target)
                }
                RateSource::Xi(xi) => (delta_sequence_xi(rate.r, xi, &rate.ngrid)?, None),
                RateSource::Mc { xi, reps, seed } => (delta_sequence_mc(rate.r, xi, &rate.ngrid, *reps, *seed)?, None),
            };
            let fit = if table.identically_zero { None } else { loglog_slope(&table).ok() };
            let body = rate_output(name, &table, fit.as_ref(), target.as_ref(), format)?;
            return Ok(Rendered { body, fit });
        }
        RunConfig::Simulate(sim) => simulate(name, sim, format)?,
        RunConfig::Adversarial(adv) => adversarial(name, adv, format)?,
    };
    Ok(Rendered { body, fit: None })
}

fn partitions(name: &str, r: u32, format: Format) -> Result<String> {
    let parts = partitions_min2(r)?;
    let rows: Vec<(String, String, String)> = parts
        .iter()
        .map(|p| (p.to_string(), symbolic_coefficient(p), partition_weight(p).to_string()))
        .collect();
    Ok(match format {
        Format::Text => rows.iter().map(|(p, c, _)| format!("{p}: {c}\n")).collect(),
        Format::Csv => csv_text(
            &["partition", "coefficient", "weight"],
            &rows.iter().map(|(p, c, w)| vec![p.clone(), c.clone(), w.clone()]).collect::<Vec<_>>(),
        ),
        Format::Json => envelope(
            name,
            json!({
                "r": r,
                "partitions": parts.iter().zip(&rows).map(|(p, (_, c, w))| json!({
                    "parts": p.parts(),
                    "coefficient": c,
                    "weight": w,
                })).collect::<Vec<_>>(),
            }),
        )?,
    })
}

fn moment(name: &str, r: u32, n: u64, profile: &momentrate::profile::MomentProfile, format: Format) -> Result<String> {
    let z = ExactReport::from(&moment_z(r, n, profile)?);
    let s = ExactReport::from(&moment_s(r, n, profile)?);
    Ok(match format {
        Format::Text => format!(
            "E(Z_n^{r}) = {} ({})\nE(S_n^{r}) = {} ({})\n",
            z.exact, z.value, s.exact, s.value
        ),
        Format::Csv => csv_text(
            &["quantity", "r", "n", "exact", "value"],
            &[
                vec!["moment_z".into(), r.to_string(), n.to_string(), z.exact.clone(), z.value.to_string()],
                vec!["moment_s".into(), r.to_string(), n.to_string(), s.exact.clone(), s.value.to_string()],
            ],
        ),
        Format::Json => envelope(
            name,
            json!({"r": r, "n": n, "profile": profile.name(), "moment_z": z, "moment_s": s}),
        )?,
    })
}

#[derive(Serialize)]
struct LimitRow {
    k: u32,
    even_derived: ExactReport,
    even_printed: ExactReport,
    odd: ExactReport,
}

fn limits(name: &str, k_min: u32, k_max: u32, profile: &momentrate::profile::MomentProfile, format: Format) -> Result<String> {
    let rows = (k_min..=k_max)
        .map(|k| {
            Ok(LimitRow {
                k,
                even_derived: ExactReport::from(&Radical::rational(limit_even(k, profile)?)),
                even_printed: ExactReport::from(&Radical::rational(limit_even_printed(k, profile)?)),
                odd: ExactReport::from(&limit_odd(k, profile)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(match format {
        Format::Text => {
            let mut s = format!("{:>3}  {:>24}  {:>24}  {:>24}\n", "k", "even (derived)", "even (printed)", "odd");
            for row in &rows {
                let _ = writeln!(
                    s,
                    "{:>3}  {:>24}  {:>24}  {:>24}",
                    row.k, row.even_derived.exact, row.even_printed.exact, row.odd.exact
                );
            }
            s
        }
        Format::Csv => csv_text(
            &["k", "even_derived", "even_printed", "odd", "even_derived_value", "even_printed_value", "odd_value"],
            &rows
                .iter()
                .map(|row| {
                    vec![
                        row.k.to_string(),
                        row.even_derived.exact.clone(),
                        row.even_printed.exact.clone(),
                        row.odd.exact.clone(),
                        row.even_derived.value.to_string(),
                        row.even_printed.value.to_string(),
                        row.odd.value.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        Format::Json => envelope(name, json!({"profile": profile.name(), "limits": rows}))?,
    })
}

fn rate_output(
    name: &str,
    table: &RateTable,
    fit: Option<&RateFit>,
    target: Option<&Radical>,
    format: Format,
) -> Result<String> {
    let check = match target {
        Some(t) => Some(scaled_limit_check(table, &default_scaling(table.r), t)?),
        None => None,
    };
    Ok(match format {
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        Format::Json => envelope(name, json!({"table": table, "fit": fit, "scaled_limit": check}))?,
        Format::Text => {
            let mut s = format!(
                "r = {}, source = {:?}, scaling n^{}\n{:>12}  {:>24}  {:>24}\n",
                table.r,
                table.source,
                format_rational(&table.scaling_exponent),
                "n",
                "delta",
                "scaled"
            );
            for (row, scaled) in table.rows.iter().zip(table.scaled()) {
                let _ = writeln!(s, "{:>12}  {:>24.12e}  {:>24.12}", row.n, row.delta.to_f64(), scaled);
            }
            if table.identically_zero {
                s.push_str("delta is identically zero; no rate fitted\n");
            }
            if let Some(f) = fit {
                let _ = writeln!(s, "slope {:.6} (R^2 {:.6}, n in [{}, {}])", f.slope, f.r_squared, f.n_min, f.n_max);
            }
            if let Some(c) = &check {
                let _ = writeln!(
                    s,
                    "limit {} ; last {} error {:.3e}",
                    c.target.exact,
                    if c.relative { "relative" } else { "absolute" },
                    c.last_error
                );
            }
            s
        }
    })
}

#[derive(Serialize)]
struct EstimateRow {
    r: u32,
    value: f64,
    std_error: f64,
    /// Exact moment given the realized design.
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
}

fn simulate(name: &str, sim: &SimulateConfig, format: Format) -> Result<String> {
    sim.validate()?;
    let mut payload = Map::new();
    payload.insert("spec".into(), serde_json::to_value(sim)?);
    let mut csv_rows = Vec::new();
    if !sim.orders.is_empty() {
        let xi = sim.xi(0);
        let report = McReport::run(&xi, &sim.orders, sim.reps, sim.seed)?;
        let spec = xi.build()?;
        let rows: Vec<EstimateRow> = report
            .estimates
            .iter()
            .map(|e| {
                let r = e.r.expect("univariate estimate");
                EstimateRow { r, value: e.value, std_error: e.std_error, exact: xi_exact_moment(&spec, r).ok() }
            })
            .collect();
        for row in &rows {
            csv_rows.push(vec![
                row.r.to_string(),
                row.value.to_string(),
                row.std_error.to_string(),
                row.exact.map(|v| v.to_string()).unwrap_or_default(),
            ]);
        }
        payload.insert("orders".into(), json!(sim.orders));
        payload.insert("reps".into(), json!(sim.reps));
        payload.insert("seed".into(), json!(sim.seed));
        payload.insert("estimates".into(), serde_json::to_value(&rows)?);
    }
    if let Some(powers) = &sim.powers {
        let specs = (0..sim.functionals.len()).map(|i| sim.xi(i).build()).collect::<momentrate::Result<Vec<_>>>()?;
        let est = mc_joint_moments(&specs, powers, sim.reps, sim.seed)?;
        let reference = joint_reference(&specs, powers)?;
        csv_rows.push(vec![
            powers.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
            est.value.to_string(),
            est.std_error.to_string(),
            reference.exact.to_string(),
        ]);
        payload.insert("joint".into(), json!({"estimate": est, "reference": reference}));
    }
    if let Some(tail) = &sim.tail {
        let grid: Vec<usize> = tail.ngrid.iter().map(|&n| n as usize).collect();
        let table = ui_tail_diagnostic(&sim.xi(0), tail.r, &tail.thresholds, &grid, sim.reps, sim.seed)?;
        payload.insert("tail".into(), serde_json::to_value(table)?);
    }
    Ok(match format {
        Format::Json => envelope(name, Value::Object(payload))?,
        Format::Csv => csv_text(&["r", "value", "std_error", "exact"], &csv_rows),
        Format::Text => {
            let mut s = format!("{:>8}  {:>22}  {:>14}  {:>22}\n", "r", "value", "std_error", "exact");
            for row in &csv_rows {
                let _ = writeln!(s, "{:>8}  {:>22}  {:>14}  {:>22}", row[0], row[1], row[2], row[3]);
            }
            if let Some(tail) = payload.get("tail") {
                let _ = writeln!(s, "tail sup over n: {}", tail["sup_over_n"]);
            }
            s
        }
    })
}

fn adversarial(name: &str, adv: &AdversarialConfig, format: Format) -> Result<String> {
    let (report, extra) = match adv {
        AdversarialConfig::Prop1 { alpha, ngrid, sigma2, threshold } => {
            (prop1_divergence_report(alpha, ngrid, *sigma2, *threshold)?, None)
        }
        AdversarialConfig::Prop2 { a, mu3, ngrid, threshold } => {
            let rep = prop2_divergence_report(*a, ngrid, *mu3, *threshold)?;
            (rep.divergence.clone(), Some(rep))
        }
    };
    Ok(match format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        Format::Json => match &extra {
            Some(rep) => envelope(name, rep)?,
            None => envelope(name, &report)?,
        },
        Format::Text => {
            let mut s = format!("{:>12}  {:>24}\n", "n", "value");
            for row in &report.rows {
                let _ = writeln!(s, "{:>12}  {:>24.12}", row.n, row.value);
            }
            let _ = writeln!(
                s,
                "strictly monotone: {}; escaped past {}x at n = {}",
                report.strictly_monotone,
                report.threshold,
                report.escaped_at.map_or("-".to_string(), |n| n.to_string())
            );
            if let Some(rep) = &extra {
                if let Some(f) = &rep.fit {
                    let _ = writeln!(
                        s,
                        "fitted exponent {:.4}; printed candidate {:.4}; derived candidate {:.4}",
                        f.slope, rep.printed_exponent, rep.derived_exponent
                    );
                }
            }
            s
        }
    })
}
