use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::DesignMatrices;
use crate::error::{Error, Result};
use crate::linalg;

/// Tuning values `λ_d`, residual variance `σ_ε²` and random-effect
/// covariance `Σ_b` shared by all subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub lambda: Vec<f64>,
    pub sigma_eps_sq: f64,
    #[serde(with = "crate::serde_util::matrix")]
    pub sigma_b: DMatrix<f64>,
}

impl VarianceComponents {
    /// Random intercept model with scalar `σ_b²`.
    pub fn new(lambda: Vec<f64>, sigma_eps_sq: f64, sigma_b_sq: f64) -> Self {
        Self {
            lambda,
            sigma_eps_sq,
            sigma_b: DMatrix::from_element(1, 1, sigma_b_sq),
        }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "tuning values must be positive, got {:?}",
                self.lambda
            )));
        }
        if !(self.sigma_eps_sq > 0.0 && self.sigma_eps_sq.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "residual variance must be positive, got {}",
                self.sigma_eps_sq
            )));
        }
        if self.sigma_b.shape() != (r, r) {
            return Err(Error::InvalidInput(format!(
                "random-effect covariance is {}x{}, expected {r}x{r}",
                self.sigma_b.nrows(),
                self.sigma_b.ncols()
            )));
        }
        if !linalg::is_symmetric(&self.sigma_b, 1e-10) {
            return Err(Error::InvalidInput(
                "random-effect covariance is not symmetric".into(),
            ));
        }
        let min_eig = self.sigma_b.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 * linalg::max_abs(&self.sigma_b).max(1.0) {
            return Err(Error::InvalidInput(
                "random-effect covariance is not positive semi-definite".into(),
            ));
        }
        Ok(())
    }

    /// `V = ZΣ_bZ' + σ_ε²I` in per-subject form.
    pub fn covariance(&self, dm: &DesignMatrices) -> Result<SubjectCovariance> {
        self.validate(dm.r)?;
        SubjectCovariance::new(
            dm.subjects.iter().map(|s| (s.start, s.len)).collect(),
            dm.z_rows.clone(),
            self.sigma_b.clone(),
            self.sigma_eps_sq,
        )
    }
}

/// A symmetric positive-definite `n• × n•` covariance seen through the
/// operations the estimator needs.
pub trait CovarianceOperator: Sync {
    fn dim(&self) -> usize;
    /// `V⁻¹ · rhs`.
    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64>;
    /// `V · rhs`.
    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64>;
    fn logdet(&self) -> f64;

    fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        self.solve(&m).column(0).into_owned()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.apply(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// Arbitrary dense SPD covariance, factored once.
#[derive(Debug, Clone)]
pub struct DenseCovariance {
    v: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl DenseCovariance {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if !linalg::is_symmetric(&v, 1e-10) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        let chol = v.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { v, chol })
    }
}

impl CovarianceOperator for DenseCovariance {
    fn dim(&self) -> usize {
        self.v.nrows()
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        &self.v * rhs
    }

    fn logdet(&self) -> f64 {
        linalg::chol_logdet(&self.chol)
    }
}

struct Block {
    start: usize,
    len: usize,
    z: DMatrix<f64>,
    /// `Σ_b (σ²I + Z_i'Z_iΣ_b)⁻¹`, so that `V_i⁻¹ = σ⁻²[I − Z_i K_i Z_i']`.
    k: DMatrix<f64>,
    logdet: f64,
}

/// `V = blockdiag_i(Z_iΣ_bZ_i' + σ²I)`, never formed densely.
pub struct SubjectCovariance {
    blocks: Vec<Block>,
    sigma_b: DMatrix<f64>,
    sigma_sq: f64,
    n: usize,
}

impl SubjectCovariance {
    pub fn new(
        ranges: Vec<(usize, usize)>,
        z_rows: DMatrix<f64>,
        sigma_b: DMatrix<f64>,
        sigma_sq: f64,
    ) -> Result<Self> {
        let r = z_rows.ncols();
        let n = z_rows.nrows();
        let mut blocks = Vec::with_capacity(ranges.len());
        for (start, len) in ranges {
            let z = z_rows.rows(start, len).into_owned();
            let ztz = z.transpose() * &z;
            let core = DMatrix::identity(r, r) * sigma_sq + &ztz * &sigma_b;
            let lu = core.lu();
            let inv = lu.try_inverse().ok_or(Error::NotPositiveDefinite)?;
            let k = &sigma_b * inv;
            // |σ²I + ZΣZ'| = σ^{2n} |I + Z'ZΣ/σ²|
            let small = DMatrix::identity(r, r) + &ztz * &sigma_b / sigma_sq;
            let det = small.determinant();
            if !(det > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            blocks.push(Block {
                start,
                len,
                z,
                k,
                logdet: len as f64 * sigma_sq.ln() + det.ln(),
            });
        }
        Ok(Self {
            blocks,
            sigma_b,
            sigma_sq,
            n,
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// `Σ_b Z_i' V_i⁻¹ e_i` stacked over subjects.
    pub fn predict_random_effects(&self, v_inv_resid: &DVector<f64>) -> DVector<f64> {
        let r = self.sigma_b.nrows();
        let mut out = DVector::zeros(r * self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let e = v_inv_resid.rows(b.start, b.len);
            let bi = &self.sigma_b * (b.z.transpose() * e);
            out.rows_mut(i * r, r).copy_from(&bi);
        }
        out
    }

    /// `Z b` for stacked per-subject effects.
    pub fn z_times(&self, b: &DVector<f64>) -> DVector<f64> {
        let r = self.sigma_b.nrows();
        let mut out = DVector::zeros(self.n);
        for (i, blk) in self.blocks.iter().enumerate() {
            let zb = &blk.z * b.rows(i * r, r);
            out.rows_mut(blk.start, blk.len).copy_from(&zb);
        }
        out
    }
}

impl CovarianceOperator for SubjectCovariance {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = rhs / self.sigma_sq;
        for b in &self.blocks {
            let rb = rhs.rows(b.start, b.len);
            let corr = &b.z * (&b.k * (b.z.transpose() * rb)) / self.sigma_sq;
            let mut ob = out.rows_mut(b.start, b.len);
            ob -= corr;
        }
        out
    }

    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = rhs * self.sigma_sq;
        for b in &self.blocks {
            let rb = rhs.rows(b.start, b.len);
            let add = &b.z * (&self.sigma_b * (b.z.transpose() * rb));
            let mut ob = out.rows_mut(b.start, b.len);
            ob += add;
        }
        out
    }

    fn logdet(&self) -> f64 {
        self.blocks.iter().map(|b| b.logdet).sum()
    }
}
