use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for the `f(0) = 0` check.
const ZERO_AT_ORIGIN_TOL: f64 = 1e-12;

/// Piecewise-linear time function given by `(t, value)` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTable {
    pub knots: Vec<(f64, f64)>,
}

impl TimeTable {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidTimeBasis("empty time table".into()));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidTimeBasis(
                "non-finite entry in time table".into(),
            ));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidTimeBasis("repeated t in time table".into()));
        }
        Ok(Self { knots })
    }

    /// Linear interpolation inside the knot range, NaN outside it.
    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        let first = k[0];
        let last = k[k.len() - 1];
        if t < first.0 || t > last.0 || !t.is_finite() {
            return f64::NAN;
        }
        match k.binary_search_by(|probe| probe.0.total_cmp(&t)) {
            Ok(i) => k[i].1,
            Err(i) => {
                let (t0, v0) = k[i - 1];
                let (t1, v1) = k[i];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// One prescribed time function `f_d`.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeBasisFn {
    /// `t^k`, `k ≥ 1`.
    Power(u32),
    /// `e^t − 1`.
    Expm1,
    /// `log(t + 1)`.
    Log1p,
    Table(TimeTable),
}

impl TimeBasisFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeBasisFn::Power(k) => t.powi(*k as i32),
            TimeBasisFn::Expm1 => t.exp_m1(),
            TimeBasisFn::Log1p => t.ln_1p(),
            TimeBasisFn::Table(tab) => tab.eval(t),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TimeBasisFn::Power(1) => "t".into(),
            TimeBasisFn::Power(k) => format!("t{k}"),
            TimeBasisFn::Expm1 => "expm1".into(),
            TimeBasisFn::Log1p => "log1p".into(),
            TimeBasisFn::Table(_) => "table".into(),
        }
    }
}

impl FromStr for TimeBasisFn {
    type Err = Error;

    /// Accepts `t`, `t<k>`, `t^<k>`, `expm1`, `log1p`.
    fn from_str(token: &str) -> Result<Self> {
        let token = token.trim();
        match token {
            "t" => return Ok(TimeBasisFn::Power(1)),
            "expm1" => return Ok(TimeBasisFn::Expm1),
            "log1p" => return Ok(TimeBasisFn::Log1p),
            _ => {}
        }
        let rest = token
            .strip_prefix('t')
            .map(|r| r.strip_prefix('^').unwrap_or(r))
            .ok_or_else(|| Error::InvalidTimeBasis(format!("unknown time function `{token}`")))?;
        let k: u32 = rest
            .parse()
            .map_err(|_| Error::InvalidTimeBasis(format!("unknown time function `{token}`")))?;
        if k == 0 || k > 16 {
            return Err(Error::InvalidTimeBasis(format!(
                "power must be in 1..=16, got {k}"
            )));
        }
        Ok(TimeBasisFn::Power(k))
    }
}

/// The prescribed functions `f_1..f_D` in `γ(t,s) = γ_0(s) + Σ f_d(t) γ_d(s)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeStructure {
    basis: Vec<TimeBasisFn>,
}

impl TimeStructure {
    pub fn new(basis: Vec<TimeBasisFn>) -> Result<Self> {
        for f in &basis {
            let at_zero = f.eval(0.0);
            if !(at_zero.abs() <= ZERO_AT_ORIGIN_TOL) {
                return Err(Error::InvalidTimeBasis(format!(
                    "{} evaluates to {at_zero} at t=0",
                    f.label()
                )));
            }
        }
        for (i, f) in basis.iter().enumerate() {
            if basis[..i].contains(f) {
                return Err(Error::InvalidTimeBasis(format!(
                    "{} listed twice",
                    f.label()
                )));
            }
        }
        Ok(Self { basis })
    }

    /// `D = 0`: the time-invariant model.
    pub fn constant() -> Self {
        Self { basis: Vec::new() }
    }

    /// `γ_0 + t γ_1`.
    pub fn linear() -> Self {
        Self {
            basis: vec![TimeBasisFn::Power(1)],
        }
    }

    /// Parses a comma separated list such as `t,t2`; `none` or an empty string
    /// give the time-invariant model.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.is_empty() || spec == "none" || spec == "0" {
            return Ok(Self::constant());
        }
        let basis = spec
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<TimeBasisFn>>>()?;
        Self::new(basis)
    }

    pub fn basis(&self) -> &[TimeBasisFn] {
        &self.basis
    }

    /// Number of time functions `D`.
    pub fn d(&self) -> usize {
        self.basis.len()
    }

    pub fn n_components(&self) -> usize {
        self.basis.len() + 1
    }

    /// `[1, f_1(t), …, f_D(t)]`.
    pub fn row(&self, t: f64) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.basis.iter().map(|f| f.eval(t)))
            .collect()
    }

    pub fn label(&self) -> String {
        if self.basis.is_empty() {
            "none".into()
        } else {
            self.basis
                .iter()
                .map(TimeBasisFn::label)
                .collect::<Vec<_>>()
                .join(",")
        }
    }
}

impl fmt::Display for TimeStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TimeBasisRepr {
    Token(String),
    Table { table: Vec<(f64, f64)> },
}

impl Serialize for TimeStructure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let reprs: Vec<TimeBasisRepr> = self
            .basis
            .iter()
            .map(|f| match f {
                TimeBasisFn::Table(tab) => TimeBasisRepr::Table {
                    table: tab.knots.clone(),
                },
                other => TimeBasisRepr::Token(other.label()),
            })
            .collect();
        reprs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TimeStructure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let reprs = Vec::<TimeBasisRepr>::deserialize(deserializer)?;
        let basis = reprs
            .into_iter()
            .map(|r| match r {
                TimeBasisRepr::Token(tok) => tok.parse(),
                TimeBasisRepr::Table { table } => TimeTable::new(table).map(TimeBasisFn::Table),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        TimeStructure::new(basis).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flag_forms() {
        let ts = TimeStructure::parse("t,t2").unwrap();
        assert_eq!(ts.basis(), &[TimeBasisFn::Power(1), TimeBasisFn::Power(2)]);
        assert_eq!(
            TimeStructure::parse("t^3").unwrap().basis(),
            &[TimeBasisFn::Power(3)]
        );
        assert_eq!(TimeStructure::parse("expm1").unwrap().d(), 1);
        assert_eq!(TimeStructure::parse("none").unwrap().d(), 0);
        assert!(TimeStructure::parse("exp").is_err());
        assert!(TimeStructure::parse("t0").is_err());
        assert!(TimeStructure::parse("t,t").is_err());
    }

    #[test]
    fn rejects_functions_nonzero_at_origin() {
        let tab = TimeTable::new(vec![(0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert!(TimeStructure::new(vec![TimeBasisFn::Table(tab)]).is_err());
    }

    #[test]
    fn table_interpolates_inside_and_is_nan_outside() {
        let tab = TimeTable::new(vec![(0.0, 0.0), (2.0, 4.0)]).unwrap();
        assert_eq!(tab.eval(1.0), 2.0);
        assert_eq!(tab.eval(2.0), 4.0);
        assert!(tab.eval(3.0).is_nan());
    }

    #[test]
    fn serde_round_trip() {
        let tab = TimeTable::new(vec![(0.0, 0.0), (1.0, 0.5)]).unwrap();
        let ts = TimeStructure::new(vec![TimeBasisFn::Power(1), TimeBasisFn::Table(tab)]).unwrap();
        let json = serde_json::to_string(&ts).unwrap();
        let back: TimeStructure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ts);
    }
}
