//! Penalized estimation of the functional coefficients, REML tuning,
//! coefficient covariances and confidence bands.

mod bands;
mod covariance;
pub mod nelder_mead;
mod reml;
mod solve;

use nalgebra::DMatrix;

pub use bands::{component_band, gamma_at_time, predict, z_value, BandEstimate, Prediction};
pub use covariance::{CovarianceOperator, DenseCovariance, SubjectCovariance, VarianceComponents};
pub use reml::{
    count_parameters, fit_at, reml_fit, CovarianceKind, FitResult, PreparedPenalty, ProfiledEval,
    RemlOptions, RemlWorkspace, SIGMA_B_FLOOR,
};
pub use solve::{
    blup, blup_with, conditional_covariances, conditional_covariances_with, expected_bias,
    expected_bias_with, objective, objective_with, restricted_loglik, restricted_loglik_with,
    ridge_solve, ridge_solve_with, Blup, Covariances, Estimate,
};

use crate::dataset::DesignMatrices;
use crate::error::Result;
use crate::penalty::BlockPenalty;

/// Dense `V = ZΣ_bZ' + σ_ε²I` and `V₁ = V + W(L'L)⁻¹W'`, for small problems
/// and diagnostics.
#[derive(Debug, Clone)]
pub struct CovarianceStructures {
    pub v: DMatrix<f64>,
    pub v1: DMatrix<f64>,
}

impl CovarianceStructures {
    pub fn dense(dm: &DesignMatrices, bp: &BlockPenalty, vc: &VarianceComponents) -> Result<Self> {
        let v = vc.covariance(dm)?.to_dense();
        let ginv = bp.require_gram_inverse()?;
        let mut v1 = &v + &dm.w * ginv * dm.w.transpose();
        crate::linalg::symmetrize(&mut v1);
        Ok(Self { v, v1 })
    }
}
