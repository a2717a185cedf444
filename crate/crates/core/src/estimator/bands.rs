use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::covariance::CovarianceOperator;
use super::reml::FitResult;
use super::solve::hcat;
use crate::dataset::DesignMatrices;
use crate::error::{Error, Result};
use crate::penalty::BlockPenalty;

/// Pointwise band for `γ(t, ·)` on the sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub t: f64,
    pub level: f64,
    pub s: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BandEstimate {
    fn from_moments(
        t: f64,
        level: f64,
        s: Vec<f64>,
        estimate: Vec<f64>,
        var: Vec<f64>,
    ) -> Result<Self> {
        let z = z_value(level)?;
        let se: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
        let lower = estimate.iter().zip(&se).map(|(e, s)| e - z * s).collect();
        let upper = estimate.iter().zip(&se).map(|(e, s)| e + z * s).collect();
        Ok(Self {
            t,
            level,
            s,
            estimate,
            se,
            lower,
            upper,
        })
    }

    /// Whether the band contains zero at every grid point.
    pub fn contains_zero_everywhere(&self) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .all(|(l, u)| *l <= 0.0 && 0.0 <= *u)
    }

    /// Fraction of grid points whose band excludes zero.
    pub fn fraction_excluding_zero(&self) -> f64 {
        let n = self
            .lower
            .iter()
            .zip(&self.upper)
            .filter(|(l, u)| **l > 0.0 || **u < 0.0)
            .count();
        n as f64 / self.s.len() as f64
    }

    pub fn covers(&self, truth: &[f64]) -> Vec<bool> {
        truth
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(g, (l, u))| l <= g && g <= u)
            .collect()
    }

    /// CSV with header `s,estimate,se,lower,upper`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
        wtr.write_record(["s", "estimate", "se", "lower", "upper"])
            .map_err(err)?;
        for j in 0..self.s.len() {
            wtr.write_record([
                self.s[j].to_string(),
                self.estimate[j].to_string(),
                self.se[j].to_string(),
                self.lower[j].to_string(),
                self.upper[j].to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::io("<band csv>", e))
    }
}

/// Two-sided normal quantile; the 95% level uses the conventional 1.96.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level {level} is not in (0, 1)"
        )));
    }
    if (level - 0.95).abs() < 1e-12 {
        return Ok(1.96);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// `γ_(t) = Tγ̃` with `T = [1 f_1(t) … f_D(t)] ⊗ I_p` and its pointwise band.
pub fn gamma_at_time(fit: &FitResult, t: f64, level: f64) -> Result<BandEstimate> {
    let f = fit.time_structure.row(t);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!("time basis at t={t}")));
    }
    let p = fit.p();
    let mut est = vec![0.0; p];
    let mut var = vec![0.0; p];
    for j in 0..p {
        for (d, fd) in f.iter().enumerate() {
            est[j] += fd * fit.gamma[d * p + j];
            for (e, fe) in f.iter().enumerate() {
                var[j] += fd * fe * fit.gamma_cov[(d * p + j, e * p + j)];
            }
        }
    }
    BandEstimate::from_moments(t, level, fit.grid.clone(), est, var)
}

/// Band for the single component `γ_d` (the band used for dropping terms).
pub fn component_band(fit: &FitResult, d: usize, level: f64) -> Result<BandEstimate> {
    if d >= fit.n_components() {
        return Err(Error::InvalidInput(format!(
            "component {d} requested but the model has {}",
            fit.n_components()
        )));
    }
    let p = fit.p();
    let est = fit.gamma.rows(d * p, p).iter().copied().collect();
    let var = (0..p)
        .map(|j| fit.gamma_cov[(d * p + j, d * p + j)])
        .collect();
    BandEstimate::from_moments(f64::NAN, level, fit.grid.clone(), est, var)
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub fitted: DVector<f64>,
    /// `Cov(ỹ|γ)`, `n• × n•`.
    pub cov: DMatrix<f64>,
}

/// `ỹ = Xβ̃ + Wγ̃ + Zb̃` and its covariance, from the linear map `y ↦ ỹ`.
///
/// With `e = y − Xβ̃ − Wγ̃` one has `Zb̃ = e − σ²V⁻¹e`, so
/// `A_y = I − σ²V⁻¹ + σ²(V⁻¹C)T⁻¹(V⁻¹C)'`.
pub fn predict(dm: &DesignMatrices, bp: &BlockPenalty, fit: &FitResult) -> Result<Prediction> {
    let vc = &fit.vc;
    let cov = vc.covariance(dm)?;
    let n = dm.n_obs();
    let k = dm.n_fixed();
    let c = hcat(&dm.x, &dm.w);
    let vinv_c = cov.solve(&c);
    let mut t = c.transpose() * &vinv_c;
    let mut tb = t.view_mut((k, k), (dm.n_functional(), dm.n_functional()));
    tb += &bp.gram;
    crate::linalg::symmetrize(&mut t);
    let chol = t
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("penalized normal equations".into()))?;
    let s2 = vc.sigma_eps_sq;
    let vinv = cov.solve(&DMatrix::identity(n, n));
    let a_y = DMatrix::identity(n, n) - &vinv * s2 + &vinv_c * chol.solve(&vinv_c.transpose()) * s2;
    let middle = match fit.covariance_kind {
        super::reml::CovarianceKind::Conditional => cov.apply(&a_y.transpose()),
        super::reml::CovarianceKind::Unconditional => {
            let ginv = bp.require_gram_inverse()?;
            let at = a_y.transpose();
            cov.apply(&at) + &dm.w * (ginv * (dm.w.transpose() * &at))
        }
    };
    let mut cov_y = &a_y * middle;
    crate::linalg::symmetrize(&mut cov_y);
    let fitted = &a_y * &dm.y;
    Ok(Prediction { fitted, cov: cov_y })
}
