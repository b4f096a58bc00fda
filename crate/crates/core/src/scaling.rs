//! Scaling-factor sequences: the triangular arrays `alpha[l, L]` that multiply
//! the residual branches, and the scalars derived from them (S-norm, `h_L`,
//! partial energies `t_l`, depth error functional).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_prefix_sums, CompensatedSum};

/// Normalization tolerance for sequences given by a formula.
pub const ANALYTIC_TOL: f64 = 1e-12;
/// Normalization tolerance for user-supplied tables.
pub const CUSTOM_TOL: f64 = 1e-9;

/// A square-summable series `zeta_l`, used as a depth-independent scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesSpec {
    /// `zeta_l = l^{-p}`.
    InversePower { p: f64 },
    /// `zeta_l = (l * log^2(l + 1))^{-1/2}`.
    LogDamped,
    /// Finite list; `zeta_l = 0` past its end.
    Explicit(Vec<f64>),
}

impl SeriesSpec {
    pub fn zeta(&self, l: usize) -> f64 {
        debug_assert!(l >= 1);
        match self {
            SeriesSpec::InversePower { p } => (l as f64).powf(-p),
            SeriesSpec::LogDamped => {
                let lf = l as f64;
                let lg = (lf + 1.0).ln();
                1.0 / (lf * lg * lg).sqrt()
            }
            SeriesSpec::Explicit(v) => v.get(l - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn zeta_sq(&self, l: usize) -> f64 {
        match self {
            SeriesSpec::InversePower { p } => (l as f64).powf(-2.0 * p),
            SeriesSpec::LogDamped => {
                let lf = l as f64;
                let lg = (lf + 1.0).ln();
                1.0 / (lf * lg * lg)
            }
            SeriesSpec::Explicit(v) => v.get(l - 1).map_or(0.0, |z| z * z),
        }
    }

    pub fn is_square_summable(&self) -> bool {
        match self {
            SeriesSpec::InversePower { p } => 2.0 * p > 1.0,
            SeriesSpec::LogDamped | SeriesSpec::Explicit(_) => true,
        }
    }

    /// Upper bound on `sum_{l > depth} zeta_l^2`; `None` when the series diverges.
    ///
    /// Uses the integral test for the two decreasing closed forms; the explicit
    /// list is summed exactly.
    pub fn tail_sq_bound(&self, depth: usize) -> Option<f64> {
        match self {
            SeriesSpec::InversePower { p } => {
                if !self.is_square_summable() {
                    return None;
                }
                let e = 2.0 * p;
                if depth == 0 {
                    // zeta_1^2 = 1 plus the integral from 1.
                    return Some(1.0 + 1.0 / (e - 1.0));
                }
                Some((depth as f64).powf(1.0 - e) / (e - 1.0))
            }
            SeriesSpec::LogDamped => {
                // 1/(x ln^2(x+1)) <= 1/(x ln^2 x), whose integral from L is 1/ln L.
                match depth {
                    0 => Some(self.zeta_sq(1) + self.zeta_sq(2) + 1.0 / 2f64.ln()),
                    1 => Some(self.zeta_sq(2) + 1.0 / 2f64.ln()),
                    _ => Some(1.0 / (depth as f64).ln()),
                }
            }
            SeriesSpec::Explicit(v) => Some(
                v.iter()
                    .skip(depth)
                    .map(|z| z * z)
                    .collect::<CompensatedSum>()
                    .value(),
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SeriesSpec::InversePower { p } => {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::invalid("p", format!("must be a positive real, got {p}")));
                }
            }
            SeriesSpec::LogDamped => {}
            SeriesSpec::Explicit(v) => check_entries("values", v)?,
        }
        Ok(())
    }
}

/// Triangular table: each row of length `k` lists `alpha[1..=k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    rows: Vec<Vec<f64>>,
    flat: bool,
}

impl CustomTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = CustomTable { rows, flat: false };
        t.validate()?;
        Ok(t)
    }

    /// A single row, valid only at depth `values.len()`.
    pub fn single(values: Vec<f64>) -> Result<Self> {
        let t = CustomTable {
            rows: vec![values],
            flat: true,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn row(&self, depth: usize) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|r| r.len() == depth)
            .map(|r| r.as_slice())
    }

    pub fn depths(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|r| r.len())
    }

    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::invalid("table", "must contain at least one row"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.rows {
            if r.is_empty() {
                return Err(Error::invalid("table", "rows must be nonempty"));
            }
            if !seen.insert(r.len()) {
                return Err(Error::invalid(
                    "table",
                    format!("two rows describe depth {}", r.len()),
                ));
            }
            check_entries("table", r)?;
        }
        Ok(())
    }
}

fn check_entries(key: &str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::invalid(
            key,
            format!("entries must be finite and nonnegative, got {x}"),
        ));
    }
    Ok(())
}

/// A sequence of scaling factors `alpha[l, L]`, `1 <= l <= L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceDescriptor", into = "SequenceDescriptor")]
pub enum ScalingSequence {
    /// `alpha[l, L] = L^{-gamma}`.
    UniformPower { gamma: f64 },
    /// `alpha[l, L] = zeta_l`, independent of `L`.
    Series(SeriesSpec),
    Custom(CustomTable),
}

impl ScalingSequence {
    pub fn uniform(gamma: f64) -> Result<Self> {
        let s = ScalingSequence::UniformPower { gamma };
        s.validate()?;
        Ok(s)
    }

    /// `alpha[l, L] = L^{-1/2}`.
    pub fn normalized_uniform() -> Self {
        ScalingSequence::UniformPower { gamma: 0.5 }
    }

    pub fn inverse_power(p: f64) -> Result<Self> {
        let s = ScalingSequence::Series(SeriesSpec::InversePower { p });
        s.validate()?;
        Ok(s)
    }

    pub fn log_damped() -> Self {
        ScalingSequence::Series(SeriesSpec::LogDamped)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        let s = ScalingSequence::Series(SeriesSpec::Explicit(values));
        s.validate()?;
        Ok(s)
    }

    pub fn custom(rows: Vec<Vec<f64>>) -> Result<Self> {
        Ok(ScalingSequence::Custom(CustomTable::new(rows)?))
    }

    /// Tabulates `rule(l, L)` for every requested depth.
    pub fn custom_from_fn(
        depths: impl IntoIterator<Item = usize>,
        rule: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let rows = depths
            .into_iter()
            .map(|big_l| (1..=big_l).map(|l| rule(l, big_l)).collect())
            .collect();
        Self::custom(rows)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScalingSequence::UniformPower { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::invalid(
                        "gamma",
                        format!("must be a positive real, got {gamma}"),
                    ));
                }
                Ok(())
            }
            ScalingSequence::Series(s) => s.validate(),
            ScalingSequence::Custom(t) => t.validate(),
        }
    }

    pub fn series(&self) -> Option<&SeriesSpec> {
        match self {
            ScalingSequence::Series(s) => Some(s),
            _ => None,
        }
    }

    /// Tolerance used when checking `sum alpha^2 = 1`.
    pub fn default_tol(&self) -> f64 {
        match self {
            ScalingSequence::Custom(_) => CUSTOM_TOL,
            _ => ANALYTIC_TOL,
        }
    }

    fn check_index(l: usize, depth: usize) -> Result<()> {
        if depth == 0 {
            return Err(Error::Range {
                what: "L",
                value: 0,
                lo: 1,
                hi: usize::MAX,
            });
        }
        if l == 0 || l > depth {
            return Err(Error::Range {
                what: "l",
                value: l,
                lo: 1,
                hi: depth,
            });
        }
        Ok(())
    }

    fn custom_row(t: &CustomTable, depth: usize) -> Result<&[f64]> {
        t.row(depth).ok_or_else(|| {
            Error::domain(format!("custom table has no row for depth L = {depth}"))
        })
    }

    pub fn alpha_at(&self, l: usize, depth: usize) -> Result<f64> {
        Self::check_index(l, depth)?;
        Ok(match self {
            ScalingSequence::UniformPower { gamma } => {
                if *gamma == 0.5 {
                    1.0 / (depth as f64).sqrt()
                } else {
                    (depth as f64).powf(-gamma)
                }
            }
            ScalingSequence::Series(s) => s.zeta(l),
            ScalingSequence::Custom(t) => Self::custom_row(t, depth)?[l - 1],
        })
    }

    pub fn alpha_sq_at(&self, l: usize, depth: usize) -> Result<f64> {
        Self::check_index(l, depth)?;
        Ok(match self {
            ScalingSequence::UniformPower { gamma } => uniform_sq(*gamma, depth),
            ScalingSequence::Series(s) => s.zeta_sq(l),
            ScalingSequence::Custom(t) => {
                let a = Self::custom_row(t, depth)?[l - 1];
                a * a
            }
        })
    }

    /// `alpha[l, L]` for `l = 1..=L`.
    pub fn alphas(&self, depth: usize) -> Result<Vec<f64>> {
        Self::check_index(1, depth.max(1))?;
        match self {
            ScalingSequence::Custom(t) => Ok(Self::custom_row(t, depth)?.to_vec()),
            _ => (1..=depth).map(|l| self.alpha_at(l, depth)).collect(),
        }
    }

    /// `alpha[l, L]^2` for `l = 1..=L`.
    pub fn alphas_sq(&self, depth: usize) -> Result<Vec<f64>> {
        if depth == 0 {
            return Ok(Vec::new());
        }
        match self {
            ScalingSequence::UniformPower { gamma } => Ok(vec![uniform_sq(*gamma, depth); depth]),
            ScalingSequence::Series(s) => Ok((1..=depth).map(|l| s.zeta_sq(l)).collect()),
            ScalingSequence::Custom(t) => {
                Ok(Self::custom_row(t, depth)?.iter().map(|a| a * a).collect())
            }
        }
    }

    /// `t_l = sum_{k <= l} alpha[k, L]^2`; zero for `l = 0`.
    pub fn partial_energy(&self, l: usize, depth: usize) -> Result<f64> {
        if l > depth {
            return Err(Error::Range {
                what: "l",
                value: l,
                lo: 0,
                hi: depth,
            });
        }
        if l == 0 {
            return Ok(0.0);
        }
        match self {
            ScalingSequence::UniformPower { gamma } => Ok(uniform_energy(*gamma, l, depth)),
            _ => {
                let sq = self.alphas_sq(depth)?;
                Ok(sq[..l].iter().copied().collect::<CompensatedSum>().value())
            }
        }
    }

    /// The whole time grid `[t_0, t_1, ..., t_L]`.
    pub fn partial_energies(&self, depth: usize) -> Result<Vec<f64>> {
        match self {
            ScalingSequence::UniformPower { gamma } => Ok((0..=depth)
                .map(|l| if l == 0 { 0.0 } else { uniform_energy(*gamma, l, depth) })
                .collect()),
            _ => Ok(compensated_prefix_sums(&self.alphas_sq(depth)?)),
        }
    }

    pub fn is_normalized_at(&self, depth: usize, tol: f64) -> Result<bool> {
        Ok((self.partial_energy(depth, depth)? - 1.0).abs() <= tol)
    }

    pub fn stability_report(&self, depth: usize, scan_to: usize, tol: f64) -> Result<StabilityReport> {
        if depth == 0 {
            return Err(Error::Range {
                what: "L",
                value: 0,
                lo: 1,
                hi: usize::MAX,
            });
        }
        if scan_to < depth {
            return Err(Error::domain(format!(
                "scan bound {scan_to} must be at least the depth {depth}"
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }

        let sq = self.alphas_sq(depth)?;
        let h_l = sq.iter().copied().fold(0.0, f64::max);
        let grid = compensated_prefix_sums(&sq);
        let total = match self {
            ScalingSequence::UniformPower { gamma } => uniform_energy(*gamma, depth, depth),
            _ => grid[depth],
        };
        let is_normalized = (total - 1.0).abs() <= tol;

        let (s_norm_sq, s_norm_sq_upper, tail_sq) = match self {
            ScalingSequence::UniformPower { gamma } => {
                // sum_{l <= L'} L'^{-2 gamma} = L'^{1 - 2 gamma}, monotone in L'.
                let at_scan = uniform_energy(*gamma, scan_to, scan_to);
                let sup = if *gamma >= 0.5 { 1.0f64.max(at_scan) } else { at_scan };
                (sup, None, None)
            }
            ScalingSequence::Series(s) => {
                let mut acc = CompensatedSum::new();
                for l in 1..=scan_to {
                    acc.add(s.zeta_sq(l));
                }
                let partial = acc.value();
                let bound = s.tail_sq_bound(scan_to);
                let upper = bound.map(|b| partial + b);
                let tail = bound.map(|b| (partial - grid[depth]).max(0.0) + b);
                (partial, upper, tail)
            }
            ScalingSequence::Custom(t) => {
                let sup = t
                    .depths()
                    .filter(|&k| k <= scan_to)
                    .map(|k| {
                        t.row(k)
                            .unwrap()
                            .iter()
                            .map(|a| a * a)
                            .collect::<CompensatedSum>()
                            .value()
                    })
                    .fold(0.0, f64::max);
                (sup, None, None)
            }
        };

        let m = depth.min(256);
        let energy_profile = (0..=m)
            .map(|k| {
                let t = k as f64 / m as f64;
                let idx = k * depth / m;
                let e = match self {
                    ScalingSequence::UniformPower { gamma } if idx > 0 => {
                        uniform_energy(*gamma, idx, depth)
                    }
                    _ => grid[idx],
                };
                (t, e)
            })
            .collect();

        Ok(StabilityReport {
            depth,
            scanned_to: scan_to,
            s_norm_sq,
            s_norm_sq_upper,
            h_l,
            is_normalized,
            tail_sq,
            energy_profile,
        })
    }

    /// `R_L = h_L + L h_L^2 + r_L`, defined only on normalized sequences.
    pub fn depth_error_functional(&self, depth: usize, r_l: f64) -> Result<f64> {
        if !(r_l >= 0.0) {
            return Err(Error::invalid("r_L", "must be nonnegative"));
        }
        let report = self.stability_report(depth, depth, self.default_tol())?;
        if !report.is_normalized {
            return Err(Error::domain(format!(
                "depth error functional needs a normalized sequence; sum of squares at L = {depth} is {}",
                self.partial_energy(depth, depth)?
            )));
        }
        let h = report.h_l;
        Ok(h + depth as f64 * h * h + r_l)
    }

    /// Short human-readable description for manifests and plot headers.
    pub fn describe(&self) -> String {
        match self {
            ScalingSequence::UniformPower { gamma } => format!("uniform L^-{gamma}"),
            ScalingSequence::Series(SeriesSpec::InversePower { p }) => format!("series l^-{p}"),
            ScalingSequence::Series(SeriesSpec::LogDamped) => "series (l log^2(l+1))^-1/2".into(),
            ScalingSequence::Series(SeriesSpec::Explicit(v)) => {
                format!("explicit series ({} terms)", v.len())
            }
            ScalingSequence::Custom(t) => format!("custom table ({} rows)", t.rows.len()),
        }
    }
}

fn uniform_sq(gamma: f64, depth: usize) -> f64 {
    if gamma == 0.5 {
        1.0 / depth as f64
    } else {
        (depth as f64).powf(-2.0 * gamma)
    }
}

fn uniform_energy(gamma: f64, l: usize, depth: usize) -> f64 {
    if gamma == 0.5 {
        l as f64 / depth as f64
    } else {
        l as f64 * (depth as f64).powf(-2.0 * gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub depth: usize,
    pub scanned_to: usize,
    /// Max over `L' <= scanned_to` of `sum_l alpha[l, L']^2`; a lower bound on the
    /// squared S-norm.
    pub s_norm_sq: f64,
    /// `s_norm_sq` plus an analytic tail bound, when the sequence is a known series.
    pub s_norm_sq_upper: Option<f64>,
    pub h_l: f64,
    pub is_normalized: bool,
    /// Upper estimate of `sum_{l > L} zeta_l^2` for series-backed sequences.
    pub tail_sq: Option<f64>,
    /// `(t, t_{floor(t L)})` on a uniform grid of `[0, 1]`.
    pub energy_profile: Vec<(f64, f64)>,
}

/// Wire form of a sequence, as found in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableDescriptor {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl SequenceDescriptor {
    fn empty(kind: &str) -> Self {
        SequenceDescriptor {
            kind: kind.to_string(),
            gamma: None,
            series: None,
            p: None,
            values: None,
            table: None,
        }
    }
}

fn require<T>(v: Option<T>, key: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(key, format!("required for kind \"{kind}\"")))
}

fn forbid<T>(v: &Option<T>, key: &str, kind: &str) -> Result<()> {
    if v.is_some() {
        return Err(Error::invalid(key, format!("not allowed for kind \"{kind}\"")));
    }
    Ok(())
}

impl TryFrom<SequenceDescriptor> for ScalingSequence {
    type Error = Error;

    fn try_from(d: SequenceDescriptor) -> Result<Self> {
        let kind = d.kind.as_str();
        let seq = match kind {
            "uniform" => {
                forbid(&d.series, "series", kind)?;
                forbid(&d.p, "p", kind)?;
                forbid(&d.values, "values", kind)?;
                forbid(&d.table, "table", kind)?;
                ScalingSequence::UniformPower {
                    gamma: require(d.gamma, "gamma", kind)?,
                }
            }
            "series" => {
                forbid(&d.gamma, "gamma", kind)?;
                forbid(&d.table, "table", kind)?;
                let name = require(d.series, "series", kind)?;
                let spec = match name.as_str() {
                    "inverse_power" => {
                        forbid(&d.values, "values", "series/inverse_power")?;
                        SeriesSpec::InversePower {
                            p: require(d.p, "p", "series/inverse_power")?,
                        }
                    }
                    "log_damped" => {
                        forbid(&d.p, "p", "series/log_damped")?;
                        forbid(&d.values, "values", "series/log_damped")?;
                        SeriesSpec::LogDamped
                    }
                    "explicit" => {
                        forbid(&d.p, "p", "series/explicit")?;
                        SeriesSpec::Explicit(require(d.values, "values", "series/explicit")?)
                    }
                    other => {
                        return Err(Error::invalid(
                            "series",
                            format!("unknown series \"{other}\" (expected inverse_power, log_damped or explicit)"),
                        ))
                    }
                };
                ScalingSequence::Series(spec)
            }
            "custom" => {
                forbid(&d.gamma, "gamma", kind)?;
                forbid(&d.series, "series", kind)?;
                forbid(&d.p, "p", kind)?;
                forbid(&d.values, "values", kind)?;
                match require(d.table, "table", kind)? {
                    TableDescriptor::Flat(v) => ScalingSequence::Custom(CustomTable::single(v)?),
                    TableDescriptor::Rows(r) => ScalingSequence::Custom(CustomTable::new(r)?),
                }
            }
            other => {
                return Err(Error::invalid(
                    "kind",
                    format!("unknown sequence kind \"{other}\" (expected uniform, series or custom)"),
                ))
            }
        };
        seq.validate()?;
        Ok(seq)
    }
}

impl From<ScalingSequence> for SequenceDescriptor {
    fn from(s: ScalingSequence) -> Self {
        match s {
            ScalingSequence::UniformPower { gamma } => SequenceDescriptor {
                gamma: Some(gamma),
                ..SequenceDescriptor::empty("uniform")
            },
            ScalingSequence::Series(spec) => {
                let mut d = SequenceDescriptor::empty("series");
                match spec {
                    SeriesSpec::InversePower { p } => {
                        d.series = Some("inverse_power".into());
                        d.p = Some(p);
                    }
                    SeriesSpec::LogDamped => d.series = Some("log_damped".into()),
                    SeriesSpec::Explicit(v) => {
                        d.series = Some("explicit".into());
                        d.values = Some(v);
                    }
                }
                d
            }
            ScalingSequence::Custom(t) => SequenceDescriptor {
                table: Some(if t.flat {
                    TableDescriptor::Flat(t.rows.into_iter().next().unwrap_or_default())
                } else {
                    TableDescriptor::Rows(t.rows)
                }),
                ..SequenceDescriptor::empty("custom")
            },
        }
    }
}
