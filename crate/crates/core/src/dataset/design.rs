use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LongitudinalDataset, TimeStructure};
use crate::error::{Error, Result};
use crate::linalg;

/// How a sampled curve enters the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Raw sampled values, `δ = 1`.
    #[default]
    Unit,
    /// Riemann sum over the grid, `δ = 1/p`.
    Riemann,
}

impl std::str::FromStr for Quadrature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Quadrature::Unit),
            "riemann" => Ok(Quadrature::Riemann),
            other => Err(Error::InvalidInput(format!("unknown quadrature `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub quadrature: Quadrature,
    /// Prepend an intercept column to `X`.
    pub intercept: bool,
    /// Subtract the pointwise grand mean of the curves.
    pub center: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            quadrature: Quadrature::Unit,
            intercept: true,
            center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowIndex {
    pub subject: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectBlock {
    pub id: String,
    pub start: usize,
    pub len: usize,
}

/// `y`, `X`, `W`, `Z` for `y = Xβ + Wγ + Zb + ε`, rows grouped by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub y: DVector<f64>,
    /// `n• × K` (intercept first when enabled).
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    /// `n• × (D+1)p`, row layout `[w', f_1(t)w', …, f_D(t)w']`.
    pub w: DMatrix<f64>,
    /// `n• × rN`, block-diagonal by subject.
    pub z: DMatrix<f64>,
    /// Per-row random-effect covariates `z_it` (`n• × r`).
    pub z_rows: DMatrix<f64>,
    pub rows: Vec<RowIndex>,
    pub subjects: Vec<SubjectBlock>,
    pub quadrature_weight: f64,
    pub grid: Vec<f64>,
    pub time_structure: TimeStructure,
    pub p: usize,
    pub n_components: usize,
    pub r: usize,
}

impl DesignMatrices {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// `(D+1)p`.
    pub fn n_functional(&self) -> usize {
        self.w.ncols()
    }

    /// Rows `start..start+len` of `z_rows` for one subject.
    pub fn subject_z(&self, i: usize) -> DMatrix<f64> {
        let b = &self.subjects[i];
        self.z_rows.rows(b.start, b.len).into_owned()
    }

    /// Same design with a replaced outcome vector.
    pub fn with_outcome(&self, y: DVector<f64>) -> Self {
        assert_eq!(y.len(), self.n_obs());
        Self { y, ..self.clone() }
    }
}

/// Assembles the design matrices for a dataset and time structure.
pub fn build_design(
    ds: &LongitudinalDataset,
    ts: &TimeStructure,
    opts: &DesignOptions,
) -> Result<DesignMatrices> {
    let n = ds.n_obs();
    let p = ds.grid().len();
    let comps = ts.n_components();
    let k_cov = ds.covariate_names().len();
    let k = k_cov + usize::from(opts.intercept);
    let re = ds.random_effects();
    let r = re.r();
    let n_subj = ds.n_subjects();

    // Rank of [1, f_1(t), …, f_D(t)] over the distinct observed times.
    let mut times: Vec<f64> = ds.records().iter().map(|rec| rec.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut tmat = DMatrix::zeros(times.len(), comps);
    for (i, &t) in times.iter().enumerate() {
        for (d, v) in ts.row(t).into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(format!(
                    "time function {} at t={t}",
                    ts.basis()[d - 1].label()
                )));
            }
            tmat[(i, d)] = v;
        }
    }
    let rank = linalg::numerical_rank(&tmat);
    if rank < comps {
        return Err(Error::RankDeficientTimeBasis {
            rank,
            required: comps,
        });
    }

    let delta = match opts.quadrature {
        Quadrature::Unit => 1.0,
        Quadrature::Riemann => 1.0 / p as f64,
    };

    let mean_curve: Option<Vec<f64>> = opts.center.then(|| {
        let mut m = vec![0.0; p];
        for rec in ds.records() {
            for (acc, v) in m.iter_mut().zip(&rec.w) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n as f64);
        m
    });

    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, k);
    let mut w = DMatrix::zeros(n, comps * p);
    let mut z = DMatrix::zeros(n, r * n_subj);
    let mut z_rows = DMatrix::zeros(n, r);
    let mut rows = Vec::with_capacity(n);
    let mut subjects = Vec::with_capacity(n_subj);

    let mut row = 0usize;
    for (si, (id, visits)) in ds.subjects().enumerate() {
        subjects.push(SubjectBlock {
            id: id.to_owned(),
            start: row,
            len: visits.len(),
        });
        for rec in visits {
            y[row] = rec.y;
            let mut col = 0;
            if opts.intercept {
                x[(row, 0)] = 1.0;
                col = 1;
            }
            for (j, v) in rec.x.iter().enumerate() {
                x[(row, col + j)] = *v;
            }
            let fvals = ts.row(rec.t);
            for (d, f) in fvals.iter().enumerate() {
                for j in 0..p {
                    let centered = match &mean_curve {
                        Some(m) => rec.w[j] - m[j],
                        None => rec.w[j],
                    };
                    w[(row, d * p + j)] = f * (delta * centered);
                }
            }
            let mut zc = 0;
            if re.intercept {
                z_rows[(row, 0)] = 1.0;
                zc = 1;
            }
            for (j, &c) in re.covariates.iter().enumerate() {
                z_rows[(row, zc + j)] = rec.x[c];
            }
            for a in 0..r {
                z[(row, si * r + a)] = z_rows[(row, a)];
            }
            rows.push(RowIndex {
                subject: si,
                t: rec.t,
            });
            row += 1;
        }
    }

    let mut x_names = Vec::with_capacity(k);
    if opts.intercept {
        x_names.push("(intercept)".to_owned());
    }
    x_names.extend(ds.covariate_names().iter().cloned());

    Ok(DesignMatrices {
        y,
        x,
        x_names,
        w,
        z,
        z_rows,
        rows,
        subjects,
        quadrature_weight: delta,
        grid: ds.grid().points().to_vec(),
        time_structure: ts.clone(),
        p,
        n_components: comps,
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FunctionalRecord, RandomEffectSpec, SampleGrid};

    fn dataset(visits: &[(f64, Vec<f64>)]) -> LongitudinalDataset {
        let p = visits[0].1.len();
        let recs = visits
            .iter()
            .map(|(t, w)| FunctionalRecord {
                subject: "s".into(),
                t: *t,
                y: 0.0,
                x: vec![],
                w: w.clone(),
            })
            .collect();
        LongitudinalDataset::new(
            SampleGrid::equispaced(p).unwrap(),
            vec![],
            recs,
            RandomEffectSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn linear_time_block_layout() {
        let ds = dataset(&[(0.0, vec![1.0, 2.0]), (1.0, vec![3.0, 4.0])]);
        let dm = build_design(&ds, &TimeStructure::linear(), &DesignOptions::default()).unwrap();
        assert_eq!(
            dm.w.row(0).iter().copied().collect::<Vec<_>>(),
            [1.0, 2.0, 0.0, 0.0]
        );
        assert_eq!(
            dm.w.row(1).iter().copied().collect::<Vec<_>>(),
            [3.0, 4.0, 3.0, 4.0]
        );
        assert_eq!(
            dm.x.column(0).iter().copied().collect::<Vec<_>>(),
            [1.0, 1.0]
        );
        assert_eq!(dm.z.ncols(), 1);
    }

    #[test]
    fn time_invariant_design_stacks_curves() {
        let ds = dataset(&[(0.0, vec![1.0, 2.0]), (1.0, vec![3.0, 4.0])]);
        let dm = build_design(&ds, &TimeStructure::constant(), &DesignOptions::default()).unwrap();
        assert_eq!(dm.w, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn all_visits_at_origin_is_rank_deficient() {
        let recs = vec![
            FunctionalRecord {
                subject: "a".into(),
                t: 0.0,
                y: 0.0,
                x: vec![],
                w: vec![1.0, 2.0],
            },
            FunctionalRecord {
                subject: "b".into(),
                t: 0.0,
                y: 0.0,
                x: vec![],
                w: vec![1.0, 2.0],
            },
        ];
        let ds = LongitudinalDataset::new(
            SampleGrid::equispaced(2).unwrap(),
            vec![],
            recs,
            RandomEffectSpec::default(),
        )
        .unwrap();
        assert!(matches!(
            build_design(&ds, &TimeStructure::linear(), &DesignOptions::default()),
            Err(Error::RankDeficientTimeBasis {
                rank: 1,
                required: 2
            })
        ));
    }

    #[test]
    fn riemann_scales_by_grid_size() {
        let ds = dataset(&[(0.0, vec![1.0, 2.0]), (1.0, vec![3.0, 4.0])]);
        let opts = DesignOptions {
            quadrature: Quadrature::Riemann,
            ..Default::default()
        };
        let dm = build_design(&ds, &TimeStructure::constant(), &opts).unwrap();
        assert_eq!(dm.quadrature_weight, 0.5);
        assert_eq!(dm.w[(1, 1)], 2.0);
    }

    #[test]
    fn centering_removes_grand_mean() {
        let ds = dataset(&[(0.0, vec![1.0, 2.0]), (1.0, vec![3.0, 4.0])]);
        let opts = DesignOptions {
            center: true,
            ..Default::default()
        };
        let dm = build_design(&ds, &TimeStructure::constant(), &opts).unwrap();
        assert_eq!(dm.w, DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, 1.0]));
    }
}
