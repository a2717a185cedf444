//! Longitudinal functional observations and the design matrices built from them.
//!
//! Every subject-visit carries a scalar outcome `y`, `K` scalar covariates and
//! one predictor curve sampled on a grid shared by the whole dataset.

mod design;
mod io;
mod time;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{build_design, DesignMatrices, DesignOptions, Quadrature, RowIndex, SubjectBlock};
pub use io::{
    load_dataset, parse_curves, parse_dataset, parse_grid_spec, parse_outcomes, write_curves,
    write_dataset, write_outcomes, CurveRow, GridSpec, OutcomeTable,
};
pub use time::{TimeBasisFn, TimeStructure, TimeTable};

/// Sampling locations `s_1 < … < s_p` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SampleGrid {
    points: Vec<f64>,
}

impl SampleGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|s| !s.is_finite() || *s < 0.0 || *s > 1.0)
        {
            return Err(Error::InvalidGrid("points must lie in [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// `s_j = (j−1)/(p−1)`, `j = 1..p`.
    pub fn equispaced(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {p}"
            )));
        }
        let denom = (p - 1) as f64;
        Self::new((0..p).map(|j| j as f64 / denom).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SampleGrid {
    type Error = Error;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<SampleGrid> for Vec<f64> {
    fn from(g: SampleGrid) -> Self {
        g.points
    }
}

/// One subject-visit.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalRecord {
    pub subject: String,
    pub t: f64,
    pub y: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Columns entering `z_it`: an optional intercept plus a subset of the
/// scalar covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomEffectSpec {
    pub intercept: bool,
    pub covariates: Vec<usize>,
}

impl Default for RandomEffectSpec {
    fn default() -> Self {
        Self {
            intercept: true,
            covariates: Vec::new(),
        }
    }
}

impl RandomEffectSpec {
    /// Number of random effects per subject, `r`.
    pub fn r(&self) -> usize {
        usize::from(self.intercept) + self.covariates.len()
    }
}

/// Validated collection of records grouped by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    grid: SampleGrid,
    covariate_names: Vec<String>,
    random_effects: RandomEffectSpec,
    records: Vec<FunctionalRecord>,
    /// `(subject id, start, len)` into `records`.
    subjects: Vec<(String, usize, usize)>,
}

impl LongitudinalDataset {
    /// Groups records by subject (first-appearance order, visits sorted by
    /// `t`) and validates them.
    pub fn new(
        grid: SampleGrid,
        covariate_names: Vec<String>,
        records: Vec<FunctionalRecord>,
        random_effects: RandomEffectSpec,
    ) -> Result<Self> {
        let p = grid.len();
        let k = covariate_names.len();
        if records.is_empty() {
            return Err(Error::InvalidInput("dataset has no records".into()));
        }
        if random_effects.r() == 0 {
            return Err(Error::InvalidInput(
                "random-effect design has no columns".into(),
            ));
        }
        if let Some(&bad) = random_effects.covariates.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidInput(format!(
                "random-effect column {bad} is not a covariate (K={k})"
            )));
        }

        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<FunctionalRecord>> = HashMap::new();
        for rec in records {
            if rec.w.len() != p {
                return Err(Error::GridMismatch {
                    expected: p,
                    found: rec.w.len(),
                    context: format!("subject {} at t={}", rec.subject, rec.t),
                });
            }
            if rec.x.len() != k {
                return Err(Error::InvalidInput(format!(
                    "subject {} at t={} has {} covariates, expected {k}",
                    rec.subject,
                    rec.t,
                    rec.x.len()
                )));
            }
            if !rec.y.is_finite() || !rec.t.is_finite() {
                return Err(Error::NonFiniteValue(format!(
                    "outcome or time of subject {}",
                    rec.subject
                )));
            }
            if rec.x.iter().chain(&rec.w).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue(format!(
                    "covariates or curve of subject {} at t={}",
                    rec.subject, rec.t
                )));
            }
            if !groups.contains_key(&rec.subject) {
                order.push(rec.subject.clone());
            }
            groups.entry(rec.subject.clone()).or_default().push(rec);
        }

        let mut flat = Vec::new();
        let mut subjects = Vec::with_capacity(order.len());
        for id in order {
            let mut visits = groups.remove(&id).expect("grouped above");
            visits.sort_by(|a, b| a.t.total_cmp(&b.t));
            if let Some(w) = visits.windows(2).find(|w| w[0].t == w[1].t) {
                return Err(Error::DuplicateRecord {
                    subject: id,
                    t: w[0].t,
                });
            }
            subjects.push((id, flat.len(), visits.len()));
            flat.extend(visits);
        }

        Ok(Self {
            grid,
            covariate_names,
            random_effects,
            records: flat,
            subjects,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn random_effects(&self) -> &RandomEffectSpec {
        &self.random_effects
    }

    /// Records in subject-grouped order.
    pub fn records(&self) -> &[FunctionalRecord] {
        &self.records
    }

    /// Number of subjects `N`.
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Total number of visits `n•`.
    pub fn n_obs(&self) -> usize {
        self.records.len()
    }

    pub fn subjects(&self) -> impl Iterator<Item = (&str, &[FunctionalRecord])> {
        self.subjects
            .iter()
            .map(|(id, start, len)| (id.as_str(), &self.records[*start..*start + *len]))
    }

    /// Keeps only the named covariates (in the given order).
    pub fn select_covariates(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.covariate_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut re_cols = Vec::new();
        for &c in &self.random_effects.covariates {
            match idx.iter().position(|&i| i == c) {
                Some(pos) => re_cols.push(pos),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "random-effect covariate `{}` was dropped",
                        self.covariate_names[c]
                    )))
                }
            }
        }
        let records = self
            .records
            .iter()
            .map(|r| FunctionalRecord {
                x: idx.iter().map(|&i| r.x[i]).collect(),
                ..r.clone()
            })
            .collect();
        Self::new(
            self.grid.clone(),
            names.to_vec(),
            records,
            RandomEffectSpec {
                intercept: self.random_effects.intercept,
                covariates: re_cols,
            },
        )
    }
}
