//! Design matrix generators and the diagnostics behind the design
//! conditions: `X^T X / n` converging to a positive definite limit, and the
//! maximal leverage `max_i x_i^T (X^T X)^{-1} x_i` tending to zero.

use nalgebra::{ColPivQR, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{compensated_sum, CompensatedSum};
use crate::linalg::{gram, SpdFactor, MAX_COLUMNS};
use crate::rng::RngStream;

/// Rule for a covariate sequence `x_i -> c != 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SequenceRule {
    /// `x_i = c + a / i^q`.
    Power { c: f64, a: f64, q: f64 },
    /// Listed values; the list must cover every row.
    Explicit { values: Vec<f64> },
}

/// Rule for the rate sequence `alpha_n` of the even-moment counterexample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha_n = n^s`, `0 < s < 1`.
    Power { s: f64 },
    /// `alpha_n = log(n + 1)`.
    Log,
    /// `alpha_1, alpha_2, ...` listed explicitly.
    Table { values: Vec<f64> },
}

impl AlphaRule {
    pub fn sqrt() -> Self {
        AlphaRule::Power { s: 0.5 }
    }

    /// Parses `sqrt`, `log`, `pow:S` or `table:a1,a2,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let rule = match s {
            "sqrt" => AlphaRule::sqrt(),
            "log" => AlphaRule::Log,
            _ => {
                if let Some(exp) = s.strip_prefix("pow:") {
                    let s: f64 = exp
                        .parse()
                        .map_err(|_| Error::domain(format!("bad exponent in {s:?}")))?;
                    AlphaRule::Power { s }
                } else if let Some(list) = s.strip_prefix("table:") {
                    let values = list
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::domain(format!("bad alpha table {s:?}")))?;
                    AlphaRule::Table { values }
                } else {
                    return Err(Error::domain(format!(
                        "unknown alpha rule {s:?}; expected sqrt, log, pow:S or table:..."
                    )));
                }
            }
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AlphaRule::Power { s } if !(*s > 0.0 && *s < 1.0) => Err(Error::domain(format!(
                "alpha_n = n^s needs 0 < s < 1, got s = {s}"
            ))),
            AlphaRule::Table { values } => {
                if values.iter().any(|&a| !(a > 0.0)) {
                    return Err(Error::domain("alpha table entries must be positive"));
                }
                for (i, w) in values.windows(2).enumerate() {
                    let n = i as f64 + 1.0;
                    if w[1] < w[0] || (n + 1.0) / w[1] < n / w[0] {
                        return Err(Error::domain(format!(
                            "alpha table is not monotone at n = {}: need alpha_n and n/alpha_n nondecreasing",
                            i + 2
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `alpha_n` for `n >= 1`.
    pub fn value(&self, n: usize) -> Result<f64> {
        let nf = n as f64;
        match self {
            AlphaRule::Power { s } => Ok(nf.powf(*s)),
            AlphaRule::Log => Ok((nf + 1.0).ln()),
            AlphaRule::Table { values } => values.get(n - 1).copied().ok_or_else(|| {
                Error::domain(format!("alpha table has {} entries, n = {n} requested", values.len()))
            }),
        }
    }
}

/// Law of the random columns of an iid design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnLaw {
    Normal,
    /// Uniform on `(-1, 1)`.
    Uniform,
    Rademacher,
}

impl ColumnLaw {
    pub fn second_moment(&self) -> f64 {
        match self {
            ColumnLaw::Normal | ColumnLaw::Rademacher => 1.0,
            ColumnLaw::Uniform => 1.0 / 3.0,
        }
    }

    fn draw(&self, rng: &mut RngStream) -> f64 {
        match self {
            ColumnLaw::Normal => rng.standard_normal(),
            ColumnLaw::Uniform => 2.0 * rng.uniform() - 1.0,
            ColumnLaw::Rademacher => rng.sign(),
        }
    }
}

/// Design family and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum DesignFamily {
    /// A single column of ones.
    Canonical,
    Convergent(SequenceRule),
    /// `x_i = (1 + beta_i)^{1/2}` with telescoping `beta`.
    Prop1(AlphaRule),
    /// Sparse spikes `x_i = k^{b/2}` at `i = floor(k^{b+1})`, `b = (1-2a)/a`.
    Prop2 { a: f64 },
    IidRandom { column_law: ColumnLaw, intercept: bool },
    Explicit { rows: Vec<Vec<f64>> },
}

/// Everything needed to regenerate a design: `{family, params, n, p, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    #[serde(flatten)]
    pub family: DesignFamily,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(family: DesignFamily, n: usize, p: usize, seed: u64) -> Self {
        DesignSpec { family, n, p, seed }
    }

    /// The same family at another sample size.
    pub fn with_n(&self, n: usize) -> Self {
        DesignSpec { n, ..self.clone() }
    }

    pub fn build(&self) -> Result<Design> {
        let design = match &self.family {
            DesignFamily::Canonical => canonical_design(self.n)?,
            DesignFamily::Convergent(rule) => convergent_design(self.n, rule)?,
            DesignFamily::Prop1(rule) => prop1_design(self.n, rule)?,
            DesignFamily::Prop2 { a } => prop2_design(self.n, *a)?,
            DesignFamily::IidRandom { column_law, intercept } => {
                iid_random_design(self.n, self.p, *column_law, *intercept, self.seed)?
            }
            DesignFamily::Explicit { rows } => explicit_design(rows, self.n)?,
        };
        if design.p() != self.p {
            return Err(Error::domain(format!(
                "family {:?} produces {} columns but p = {}",
                family_name(&self.family),
                design.p(),
                self.p
            )));
        }
        Ok(Design { spec: self.clone(), ..design })
    }

    /// `V^{-1} = lim X^T X / n`, when the family determines it.
    pub fn limit_gram(&self) -> Option<DMatrix<f64>> {
        match &self.family {
            DesignFamily::Canonical | DesignFamily::Prop1(_) => Some(DMatrix::identity(1, 1)),
            DesignFamily::Convergent(SequenceRule::Power { c, .. }) => {
                Some(DMatrix::from_element(1, 1, c * c))
            }
            DesignFamily::Prop2 { a } => {
                let b = (1.0 - 2.0 * a) / a;
                Some(DMatrix::from_element(1, 1, 1.0 / (b + 1.0)))
            }
            DesignFamily::IidRandom { column_law, intercept } => {
                let mut v = DMatrix::identity(self.p, self.p) * column_law.second_moment();
                if *intercept {
                    v[(0, 0)] = 1.0;
                }
                Some(v)
            }
            DesignFamily::Convergent(SequenceRule::Explicit { .. }) | DesignFamily::Explicit { .. } => None,
        }
    }
}

pub fn family_name(f: &DesignFamily) -> &'static str {
    match f {
        DesignFamily::Canonical => "canonical",
        DesignFamily::Convergent(_) => "convergent",
        DesignFamily::Prop1(_) => "prop1",
        DesignFamily::Prop2 { .. } => "prop2",
        DesignFamily::IidRandom { .. } => "iid_random",
        DesignFamily::Explicit { .. } => "explicit",
    }
}

/// A materialized `n x p` design matrix.
#[derive(Clone, Debug)]
pub struct Design {
    spec: DesignSpec,
    x: DMatrix<f64>,
}

impl Design {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Row `i` (zero-based) as a vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    fn single_column(family: DesignFamily, values: Vec<f64>) -> Design {
        let n = values.len();
        Design {
            spec: DesignSpec::new(family, n, 1, 0),
            x: DMatrix::from_vec(n, 1, values),
        }
    }
}

fn check_n(n: usize, p: usize) -> Result<()> {
    if n <= p {
        return Err(Error::domain(format!("a full-rank design needs n > p, got n = {n}, p = {p}")));
    }
    Ok(())
}

pub fn canonical_design(n: usize) -> Result<Design> {
    check_n(n, 1)?;
    Ok(Design::single_column(DesignFamily::Canonical, vec![1.0; n]))
}

pub fn convergent_design(n: usize, rule: &SequenceRule) -> Result<Design> {
    check_n(n, 1)?;
    let values = match rule {
        SequenceRule::Power { c, a, q } => {
            if *c == 0.0 {
                return Err(Error::domain("convergent design needs a nonzero limit c"));
            }
            if !(*q > 0.0) {
                return Err(Error::domain(format!("convergent design needs q > 0, got {q}")));
            }
            (1..=n).map(|i| c + a / (i as f64).powf(*q)).collect()
        }
        SequenceRule::Explicit { values } => {
            if values.len() < n {
                return Err(Error::domain(format!(
                    "explicit sequence has {} values, n = {n} requested",
                    values.len()
                )));
            }
            if values.iter().all(|&v| v == 0.0) {
                return Err(Error::domain("explicit sequence is identically zero"));
            }
            values[..n].to_vec()
        }
    };
    Ok(Design::single_column(DesignFamily::Convergent(rule.clone()), values))
}

/// `beta_1 = alpha_1^{-1/2}`, `beta_i = i alpha_i^{-1/2} - (i-1) alpha_{i-1}^{-1/2}`,
/// so that `sum_{i<=n} beta_i = n alpha_n^{-1/2}`.
pub fn prop1_betas(n: usize, rule: &AlphaRule) -> Result<Vec<f64>> {
    rule.validate()?;
    let mut betas = Vec::with_capacity(n);
    let mut prev = 0.0;
    for i in 1..=n {
        let cur = i as f64 / rule.value(i)?.sqrt();
        let beta = cur - prev;
        if beta < 0.0 {
            return Err(Error::domain(format!(
                "alpha rule is not monotone: beta_{i} = {beta:.3e} < 0"
            )));
        }
        betas.push(beta);
        prev = cur;
    }
    Ok(betas)
}

pub fn prop1_design(n: usize, rule: &AlphaRule) -> Result<Design> {
    check_n(n, 1)?;
    let betas = prop1_betas(n, rule)?;
    let values: Vec<f64> = betas.iter().map(|b| (1.0 + b).sqrt()).collect();
    let xtx = compensated_sum(values.iter().map(|x| x * x));
    let want = n as f64 * (1.0 + rule.value(n)?.powf(-0.5));
    if ((xtx - want) / want).abs() > 1e-10 {
        return Err(Error::numeric(format!(
            "telescoping identity X^T X = n(1 + alpha_n^(-1/2)) failed: {xtx} vs {want}"
        )));
    }
    Ok(Design::single_column(DesignFamily::Prop1(rule.clone()), values))
}

fn check_prop2(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::domain(format!("prop2 design needs 0 < a < 1/2, got {a}")));
    }
    Ok((1.0 - 2.0 * a) / a)
}

/// `floor(k^e)`, exact when `e` is an integer.
fn floor_power(k: u64, e: f64) -> u128 {
    let rounded = e.round();
    if (e - rounded).abs() < 1e-12 && rounded >= 1.0 {
        (k as u128).saturating_pow(rounded as u32)
    } else {
        (k as f64).powf(e).floor() as u128
    }
}

/// Nonzero entries `(i, x_i)` (one-based `i <= n`) of the prop2 design, in
/// increasing `i`. When two `k` share an index the larger `k` wins.
pub fn prop2_spikes(n: usize, a: f64) -> Result<Vec<(usize, f64)>> {
    let b = check_prop2(a)?;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for k in 1u64.. {
        let idx = floor_power(k, b + 1.0);
        if idx > n as u128 {
            break;
        }
        let x = (k as f64).powf(b / 2.0);
        match out.last_mut() {
            Some(last) if last.0 == idx as usize => last.1 = x,
            _ => out.push((idx as usize, x)),
        }
    }
    Ok(out)
}

pub fn prop2_design(n: usize, a: f64) -> Result<Design> {
    check_n(n, 1)?;
    let mut values = vec![0.0; n];
    for (i, x) in prop2_spikes(n, a)? {
        values[i - 1] = x;
    }
    Ok(Design::single_column(DesignFamily::Prop2 { a }, values))
}

const IID_ATTEMPTS: u32 = 4;

/// Seeded iid design; attempt `t` draws from stream `t` of the seed and a
/// rank-deficient draw moves on to the next stream (three retries).
pub fn iid_random_design(n: usize, p: usize, law: ColumnLaw, intercept: bool, seed: u64) -> Result<Design> {
    if p == 0 || p > MAX_COLUMNS {
        return Err(Error::domain(format!("p must be in 1..={MAX_COLUMNS}, got {p}")));
    }
    check_n(n, p)?;
    for attempt in 0..IID_ATTEMPTS {
        let mut rng = RngStream::new(seed, attempt as u64);
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                x[(i, j)] = if intercept && j == 0 { 1.0 } else { law.draw(&mut rng) };
            }
        }
        if full_column_rank(&x) {
            return Ok(Design {
                spec: DesignSpec::new(DesignFamily::IidRandom { column_law: law, intercept }, n, p, seed),
                x,
            });
        }
    }
    Err(Error::RankDeficient { attempts: IID_ATTEMPTS })
}

fn full_column_rank(x: &DMatrix<f64>) -> bool {
    let qr = ColPivQR::new(x.clone());
    let r = qr.r();
    let diag: Vec<f64> = (0..x.ncols()).map(|i| r[(i, i)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    scale > 0.0 && diag.iter().all(|&d| d > scale * 1e-12 * x.nrows().max(1) as f64)
}

pub fn explicit_design(rows: &[Vec<f64>], n: usize) -> Result<Design> {
    let p = rows.first().map(Vec::len).unwrap_or(0);
    if rows.len() != n || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::domain(format!(
            "explicit design must have {n} rows of equal, nonzero length"
        )));
    }
    check_n(n, p)?;
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    if !full_column_rank(&x) {
        return Err(Error::RankDeficient { attempts: 1 });
    }
    Ok(Design {
        spec: DesignSpec::new(DesignFamily::Explicit { rows: rows.to_vec() }, n, p, 0),
        x,
    })
}

/// Gram matrix over `n`, maximal leverage and the trace of the hat matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    pub gram_over_n: Vec<Vec<f64>>,
    pub noether_max: f64,
    pub hat_trace: f64,
}

/// Leverages are computed row by row from the Cholesky factor of `X^T X`;
/// the hat matrix is never formed.
pub fn diagnostics(d: &Design) -> Result<DesignDiagnostics> {
    let g = gram(d.matrix());
    let factor = SpdFactor::new(&g)?;
    let mut trace = CompensatedSum::new();
    let mut noether_max: f64 = 0.0;
    for i in 0..d.n() {
        let h = factor.inverse_quadratic_form(&d.row(i));
        trace.add(h);
        noether_max = noether_max.max(h);
    }
    let n = d.n() as f64;
    let p = d.p();
    Ok(DesignDiagnostics {
        gram_over_n: (0..p).map(|i| (0..p).map(|j| g[(i, j)] / n).collect()).collect(),
        noether_max,
        hat_trace: trace.value(),
    })
}
