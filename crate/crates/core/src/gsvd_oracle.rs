//! The penalized estimate, its bias and its variance written as filtered
//! expansions in generalized singular vectors.
//!
//! After whitening `W̃ = V^{-1/2}W`, `ỹ = V^{-1/2}y` and writing the penalty as
//! `L = λ_0 L^s`, the GSVD `W̃ = U[0 S]G⁻¹`, `L^s = V[M 0]G⁻¹` diagonalizes the
//! problem. Columns of `G` are indexed so that the first `p̃ − n•` are not seen
//! by the data and the last `c` span the null space of `L^s`.
//!
//! This path is a cross-check; the production solver lives in
//! [`crate::estimator`].

use nalgebra::{DMatrix, DVector};

use crate::dataset::DesignMatrices;
use crate::error::{Error, Result};
use crate::estimator::{ridge_solve_with, CovarianceOperator, DenseCovariance, VarianceComponents};
use crate::linalg::{self, GsvdFactors};
use crate::penalty::BlockPenalty;

#[derive(Debug, Clone)]
pub struct ScaledProblem {
    pub w_tilde: DMatrix<f64>,
    pub y_tilde: DVector<f64>,
    /// `L^s = L/λ_0`; its leading block is `L_0`.
    pub l_scaled: DMatrix<f64>,
    pub lambda0: f64,
}

/// Whitens with the symmetric inverse square root of `V`.
pub fn scale_problem_with(
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    l_assembled: &DMatrix<f64>,
    lambda0: f64,
    v: &DMatrix<f64>,
) -> Result<ScaledProblem> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "λ_0 must be positive, got {lambda0}"
        )));
    }
    let v_isqrt = linalg::spd_inverse_sqrt(v)?;
    Ok(ScaledProblem {
        w_tilde: &v_isqrt * w,
        y_tilde: &v_isqrt * y,
        l_scaled: l_assembled / lambda0,
        lambda0,
    })
}

/// Scaled problem for a design without fixed effects, or whose fixed
/// effects are `V⁻¹`-orthogonal to `W`.
pub fn scale_problem(
    dm: &DesignMatrices,
    bp: &BlockPenalty,
    vc: &VarianceComponents,
) -> Result<ScaledProblem> {
    let cov = vc.covariance(dm)?;
    if dm.n_fixed() > 0 {
        let cross = dm.x.transpose() * cov.solve(&dm.w);
        let scale = dm.x.norm() * dm.w.norm() / vc.sigma_eps_sq;
        if linalg::max_abs(&cross) > 1e-10 * scale.max(1.0) {
            return Err(Error::InvalidInput(
                "fixed effects are not V⁻¹-orthogonal to W; use the general-X check".into(),
            ));
        }
    }
    scale_problem_with(&dm.w, &dm.y, &bp.assembled, vc.lambda[0], &cov.to_dense())
}

/// GSVD of `(W̃, L^s)` under `n• ≤ m ≤ p̃ ≤ m + n•`.
pub fn factorize(sp: &ScaledProblem) -> Result<GsvdFactors> {
    let (n, p) = sp.w_tilde.shape();
    let m = sp.l_scaled.nrows();
    if !(n <= m && m <= p && p <= m + n) {
        return Err(Error::ShapeAssumptionViolated(format!(
            "need n <= m <= p <= m + n, got n={n}, m={m}, p={p}"
        )));
    }
    linalg::gsvd_pair(&sp.w_tilde, &sp.l_scaled)
}

fn check(sp: &ScaledProblem, gf: &GsvdFactors) -> Result<()> {
    if gf.n != sp.w_tilde.nrows() || gf.p != sp.w_tilde.ncols() || gf.m != sp.l_scaled.nrows() {
        return Err(Error::ShapeAssumptionViolated(
            "factors do not belong to this problem".into(),
        ));
    }
    if gf.n > gf.m {
        return Err(Error::ShapeAssumptionViolated(format!(
            "need n <= m, got n={}, m={}",
            gf.n, gf.m
        )));
    }
    Ok(())
}

/// `σ_k² / (σ_k² + λ_0²μ_k²)` for every column index; zero where the data
/// carry no information, one on the null space of the penalty.
pub fn filter_factors(gf: &GsvdFactors, lambda0: f64) -> Vec<f64> {
    let offset = gf.first_paired();
    (0..gf.p)
        .map(|k| {
            if k < offset {
                0.0
            } else if k >= gf.m {
                1.0
            } else {
                let (s, mu) = (gf.sigma_all[k], gf.mu_all[k]);
                s * s / (s * s + lambda0 * lambda0 * mu * mu)
            }
        })
        .collect()
}

/// `γ̂ = Σ σ_k/(σ_k²+λ_0²μ_k²)·(u_k'ỹ)·g_k + Σ_{null} (u_k'ỹ)·g_k`.
pub fn peer_estimate(sp: &ScaledProblem, gf: &GsvdFactors) -> Result<DVector<f64>> {
    check(sp, gf)?;
    let offset = gf.first_paired();
    let lam2 = sp.lambda0 * sp.lambda0;
    let uty = gf.u.transpose() * &sp.y_tilde;
    let mut gamma = DVector::zeros(gf.p);
    for k in offset..gf.m {
        let (s, mu) = (gf.sigma_all[k], gf.mu_all[k]);
        let coeff = s / (s * s + lam2 * mu * mu) * uty[k - offset];
        gamma.axpy(coeff, &gf.g.column(k), 1.0);
    }
    for k in gf.m..gf.p {
        gamma.axpy(uty[k - offset], &gf.g.column(k), 1.0);
    }
    Ok(gamma)
}

/// `(I − W^#W̃)γ = γ − E[γ̂]`.
pub fn bias_gsvd(
    sp: &ScaledProblem,
    gf: &GsvdFactors,
    gamma_true: &DVector<f64>,
) -> Result<DVector<f64>> {
    check(sp, gf)?;
    let offset = gf.first_paired();
    let lam2 = sp.lambda0 * sp.lambda0;
    let coords = &gf.g_inv * gamma_true;
    let mut bias = DVector::zeros(gf.p);
    for k in 0..offset {
        bias.axpy(coords[k], &gf.g.column(k), 1.0);
    }
    for k in offset..gf.m {
        let (s, mu) = (gf.sigma_all[k], gf.mu_all[k]);
        let weight = lam2 * mu * mu / (s * s + lam2 * mu * mu);
        bias.axpy(weight * coords[k], &gf.g.column(k), 1.0);
    }
    Ok(bias)
}

/// `W^# (W^#)'` in whitened units, i.e. `Var[γ̂]`.
pub fn variance_gsvd(sp: &ScaledProblem, gf: &GsvdFactors) -> Result<DMatrix<f64>> {
    check(sp, gf)?;
    let offset = gf.first_paired();
    let lam2 = sp.lambda0 * sp.lambda0;
    let mut var = DMatrix::zeros(gf.p, gf.p);
    for k in offset..gf.p {
        let weight = if k < gf.m {
            let (s, mu) = (gf.sigma_all[k], gf.mu_all[k]);
            s * s / (s * s + lam2 * mu * mu).powi(2)
        } else {
            1.0
        };
        let g = gf.g.column(k);
        var.ger(weight, &g, &g, 1.0);
    }
    linalg::symmetrize(&mut var);
    Ok(var)
}

/// `γ̂ = −A_1X'V⁻¹y + A_2W'V⁻¹y` with
/// `A_2 = (W'V⁻¹W + L'L − W'V⁻¹X(X'V⁻¹X)⁻¹X'V⁻¹W)⁻¹` and
/// `A_1 = A_2W'V⁻¹X(X'V⁻¹X)⁻¹`.
pub fn general_x_estimate(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    gram: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let cov = DenseCovariance::new(v.clone())?;
    let vinv_x = cov.solve(x);
    let vinv_w = cov.solve(w);
    let vinv_y = cov.solve_vec(y);
    let xvx = x.transpose() * &vinv_x;
    let xvx_inv = linalg::spd_inverse(&xvx).map_err(|_| Error::SingularSystem("X'V⁻¹X".into()))?;
    let wvx = w.transpose() * &vinv_x;
    let mut a2_inner = w.transpose() * &vinv_w + gram - &wvx * &xvx_inv * wvx.transpose();
    linalg::symmetrize(&mut a2_inner);
    let a2 = linalg::spd_inverse(&a2_inner).map_err(|_| Error::SingularSystem("A_2".into()))?;
    let a1 = &a2 * &wvx * &xvx_inv;
    Ok(-(a1 * (x.transpose() * &vinv_y)) + a2 * (w.transpose() * vinv_y))
}

/// Relative discrepancies between the GSVD expansions and the direct solver.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CrossCheck {
    pub n: usize,
    pub p_tilde: usize,
    pub m: usize,
    pub estimate: f64,
    pub variance: f64,
    pub bias: f64,
    pub general_x: Option<f64>,
}

impl CrossCheck {
    pub fn max_discrepancy(&self) -> f64 {
        [
            self.estimate,
            self.variance,
            self.bias,
            self.general_x.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Compares estimate, bias (for `gamma_true`) and variance of the GSVD path
/// with the direct normal-equation solver at `X = 0`; if `x` has columns the
/// general-X identity is also compared with the direct solver.
pub fn cross_check(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    bp: &BlockPenalty,
    v: &DMatrix<f64>,
    gamma_true: &DVector<f64>,
) -> Result<CrossCheck> {
    let lambda0 = bp.blocks[0].0;
    let sp = scale_problem_with(w, y, &bp.assembled, lambda0, v)?;
    let gf = factorize(&sp)?;
    let cov = DenseCovariance::new(v.clone())?;
    let no_x = DMatrix::zeros(w.nrows(), 0);
    let direct = ridge_solve_with(&no_x, w, y, &bp.gram, &cov)?;
    let peer = peer_estimate(&sp, &gf)?;

    let direct_var =
        crate::estimator::conditional_covariances_with(&no_x, w, &bp.gram, None, &cov, false)?
            .gamma;
    let var = variance_gsvd(&sp, &gf)?;

    let direct_bias = -crate::estimator::expected_bias_with(&no_x, w, &bp.gram, &cov, gamma_true)?;
    let bias = bias_gsvd(&sp, &gf, gamma_true)?;

    let general_x = if x.ncols() > 0 {
        let gx = general_x_estimate(x, w, y, &bp.gram, v)?;
        let full = ridge_solve_with(x, w, y, &bp.gram, &cov)?;
        Some(rel_vec(&gx, &full.gamma))
    } else {
        None
    };
    Ok(CrossCheck {
        n: gf.n,
        p_tilde: gf.p,
        m: gf.m,
        estimate: rel_vec(&peer, &direct.gamma),
        variance: rel(&var, &direct_var),
        bias: rel_vec(&bias, &direct_bias),
        general_x,
    })
}
