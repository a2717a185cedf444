//! Closed-form estimators at fixed variance components.
//!
//! Every routine has a `*_with` form taking raw `X`, `W`, `y`, the penalty
//! Gram matrix `L'L` and any [`CovarianceOperator`] for `V`, and a
//! design-level form building `V` from [`VarianceComponents`].

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::covariance::{CovarianceOperator, VarianceComponents};
use crate::dataset::DesignMatrices;
use crate::error::{Error, Result};
use crate::linalg;
use crate::penalty::BlockPenalty;

/// Fixed effects and functional coefficients (all components stacked).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blup {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    /// Per-subject random effects, `r` entries per subject.
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariances {
    pub beta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

pub(crate) fn hcat(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let (k, p) = (x.ncols(), w.ncols());
    let mut c = DMatrix::zeros(n, k + p);
    c.columns_mut(0, k).copy_from(x);
    c.columns_mut(k, p).copy_from(w);
    c
}

fn check_shapes(x: &DMatrix<f64>, w: &DMatrix<f64>, gram: &DMatrix<f64>, n: usize) -> Result<()> {
    if x.nrows() != n || w.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "design has {} / {} rows but covariance is {n}x{n}",
            x.nrows(),
            w.nrows()
        )));
    }
    if gram.shape() != (w.ncols(), w.ncols()) {
        return Err(Error::InvalidInput(format!(
            "penalty is {}x{} but W has {} columns",
            gram.nrows(),
            gram.ncols(),
            w.ncols()
        )));
    }
    Ok(())
}

/// `T = C'V⁻¹C + blockdiag{0, L'L}` with `C = [X W]`, plus the pieces reused
/// by the covariance formulas.
struct Normal {
    k: usize,
    ctvc: DMatrix<f64>,
    ctvy: DVector<f64>,
    vinv_c: DMatrix<f64>,
    t_chol: Cholesky<f64, Dyn>,
}

fn normal_system(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: Option<&DVector<f64>>,
    gram: &DMatrix<f64>,
    cov: &dyn CovarianceOperator,
) -> Result<Normal> {
    check_shapes(x, w, gram, cov.dim())?;
    let k = x.ncols();
    let c = hcat(x, w);
    let vinv_c = cov.solve(&c);
    let mut ctvc = c.transpose() * &vinv_c;
    linalg::symmetrize(&mut ctvc);
    let ctvy = match y {
        Some(y) => vinv_c.transpose() * y,
        None => DVector::zeros(c.ncols()),
    };
    let mut t = ctvc.clone();
    let mut tb = t.view_mut((k, k), (w.ncols(), w.ncols()));
    tb += gram;
    linalg::symmetrize(&mut t);
    let t_chol = t.cholesky().ok_or_else(|| {
        Error::SingularSystem("penalized normal equations are not positive definite".into())
    })?;
    Ok(Normal {
        k,
        ctvc,
        ctvy,
        vinv_c,
        t_chol,
    })
}

fn split(sol: &DVector<f64>, k: usize) -> Estimate {
    Estimate {
        beta: sol.rows(0, k).into_owned(),
        gamma: sol.rows(k, sol.len() - k).into_owned(),
    }
}

/// `(C'V⁻¹C + blockdiag{0, L'L})⁻¹ C'V⁻¹ y`.
pub fn ridge_solve_with(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    gram: &DMatrix<f64>,
    cov: &dyn CovarianceOperator,
) -> Result<Estimate> {
    let ns = normal_system(x, w, Some(y), gram, cov)?;
    Ok(split(&ns.t_chol.solve(&ns.ctvy), ns.k))
}

/// Mixed-model route through `V₁ = V + W(L'L)⁻¹W'`, with `V₁⁻¹` applied by
/// the Woodbury identity. Returns the estimate and `V₁⁻¹(y − Xβ̃)`.
pub fn blup_with(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    gram: &DMatrix<f64>,
    gram_inverse: &DMatrix<f64>,
    cov: &dyn CovarianceOperator,
) -> Result<(Estimate, DVector<f64>)> {
    check_shapes(x, w, gram, cov.dim())?;
    let vinv_w = cov.solve(w);
    let mut m = gram + w.transpose() * &vinv_w;
    linalg::symmetrize(&mut m);
    let m_chol = m
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("L'L + W'V⁻¹W is singular".into()))?;
    let v1_solve = |a: &DMatrix<f64>| -> DMatrix<f64> {
        let vinv_a = cov.solve(a);
        let inner = m_chol.solve(&(vinv_w.transpose() * a));
        vinv_a - &vinv_w * inner
    };

    let k = x.ncols();
    let beta = if k == 0 {
        DVector::zeros(0)
    } else {
        let v1_x = v1_solve(x);
        let mut xtx = x.transpose() * &v1_x;
        linalg::symmetrize(&mut xtx);
        let chol = xtx
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("X'V₁⁻¹X is singular".into()))?;
        chol.solve(&(v1_x.transpose() * y))
    };
    let resid = y - x * &beta;
    let rmat = DMatrix::from_column_slice(resid.len(), 1, resid.as_slice());
    let v1_resid = v1_solve(&rmat).column(0).into_owned();
    let gamma = gram_inverse * (w.transpose() * &v1_resid);
    Ok((Estimate { beta, gamma }, v1_resid))
}

/// `Cov(β̃|γ)` and `Cov(γ̃|γ)` as `T⁻¹ (C'V⁻¹C) T⁻¹`; the unconditional
/// variant replaces `V` by `V₁` in the middle factor.
pub fn conditional_covariances_with(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    gram_inverse: Option<&DMatrix<f64>>,
    cov: &dyn CovarianceOperator,
    unconditional: bool,
) -> Result<Covariances> {
    let ns = normal_system(x, w, None, gram, cov)?;
    let mut middle = ns.ctvc.clone();
    if unconditional {
        let ginv = gram_inverse.ok_or(Error::SingularBlockForMixedModel(0))?;
        let ctvw = ns.vinv_c.transpose() * w;
        middle += &ctvw * ginv * ctvw.transpose();
    }
    let t_inv = ns.t_chol.inverse();
    let mut full = &t_inv * middle * &t_inv;
    linalg::symmetrize(&mut full);
    let k = ns.k;
    let p = w.ncols();
    Ok(Covariances {
        beta: full.view((0, 0), (k, k)).into_owned(),
        gamma: full.view((k, k), (p, p)).into_owned(),
    })
}

/// `ℓ_R = −½[log|V₁| + log|X'V₁⁻¹X| + (y−Xβ̃)'V₁⁻¹(y−Xβ̃) + (n•−K) log 2π]`.
pub fn restricted_loglik_with(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    gram: &DMatrix<f64>,
    cov: &dyn CovarianceOperator,
) -> Result<f64> {
    let ns = normal_system(x, w, Some(y), gram, cov)?;
    let gram_logdet = linalg::spd_logdet(gram).map_err(|_| Error::SingularBlockForMixedModel(0))?;
    let vinv_y = cov.solve_vec(y);
    let sol = ns.t_chol.solve(&ns.ctvy);
    let quad = y.dot(&vinv_y) - ns.ctvy.dot(&sol);
    // log|V₁| + log|X'V₁⁻¹X| = log|V| − log|L'L| + log|T|
    let logdets = cov.logdet() - gram_logdet + linalg::chol_logdet(&ns.t_chol);
    let dof = (cov.dim() - ns.k) as f64;
    Ok(-0.5 * (logdets + quad + dof * (2.0 * PI).ln()))
}

/// `‖y − Xβ − Wγ‖²_{V⁻¹} + γ'L'Lγ`.
pub fn objective_with(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    gram: &DMatrix<f64>,
    cov: &dyn CovarianceOperator,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
) -> f64 {
    let resid = y - x * beta - w * gamma;
    resid.dot(&cov.solve_vec(&resid)) + gamma.dot(&(gram * gamma))
}

/// `E[γ̃] − γ` for fixed variance components.
pub fn expected_bias_with(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    cov: &dyn CovarianceOperator,
    gamma: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mean_y = w * gamma;
    let est = ridge_solve_with(x, w, &mean_y, gram, cov)?;
    Ok(est.gamma - gamma)
}

pub fn ridge_solve(
    dm: &DesignMatrices,
    bp: &BlockPenalty,
    vc: &VarianceComponents,
) -> Result<Estimate> {
    let cov = vc.covariance(dm)?;
    ridge_solve_with(&dm.x, &dm.w, &dm.y, &bp.gram, &cov)
}

/// `β̃ = (X'V₁⁻¹X)⁻¹X'V₁⁻¹y`, `γ̃ = (L'L)⁻¹W'V₁⁻¹(y−Xβ̃)`, `b̃ = Σ_bZ'V₁⁻¹(y−Xβ̃)`.
pub fn blup(dm: &DesignMatrices, bp: &BlockPenalty, vc: &VarianceComponents) -> Result<Blup> {
    let ginv = bp.require_gram_inverse()?;
    let cov = vc.covariance(dm)?;
    let (est, v1_resid) = blup_with(&dm.x, &dm.w, &dm.y, &bp.gram, ginv, &cov)?;
    let b = cov.predict_random_effects(&v1_resid);
    Ok(Blup {
        beta: est.beta,
        gamma: est.gamma,
        b,
    })
}

pub fn conditional_covariances(
    dm: &DesignMatrices,
    bp: &BlockPenalty,
    vc: &VarianceComponents,
    unconditional: bool,
) -> Result<Covariances> {
    let cov = vc.covariance(dm)?;
    conditional_covariances_with(
        &dm.x,
        &dm.w,
        &bp.gram,
        bp.gram_inverse.as_ref(),
        &cov,
        unconditional,
    )
}

pub fn restricted_loglik(
    dm: &DesignMatrices,
    bp: &BlockPenalty,
    vc: &VarianceComponents,
) -> Result<f64> {
    bp.require_gram_inverse()?;
    let cov = vc.covariance(dm)?;
    restricted_loglik_with(&dm.x, &dm.w, &dm.y, &bp.gram, &cov)
}

pub fn objective(
    dm: &DesignMatrices,
    bp: &BlockPenalty,
    vc: &VarianceComponents,
    est: &Estimate,
) -> Result<f64> {
    let cov = vc.covariance(dm)?;
    Ok(objective_with(
        &dm.x, &dm.w, &dm.y, &bp.gram, &cov, &est.beta, &est.gamma,
    ))
}

pub fn expected_bias(
    dm: &DesignMatrices,
    bp: &BlockPenalty,
    vc: &VarianceComponents,
    gamma: &DVector<f64>,
) -> Result<DVector<f64>> {
    let cov = vc.covariance(dm)?;
    expected_bias_with(&dm.x, &dm.w, &bp.gram, &cov, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::covariance::DenseCovariance;
    use crate::penalty::make_ridge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = random(rng, n, n);
        let mut v = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        linalg::symmetrize(&mut v);
        v
    }

    #[test]
    fn exact_fixed_part_interpolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 8, 2);
        let w = random(&mut rng, 8, 3);
        let beta0 = DVector::from_vec(vec![0.5, -1.5]);
        let y = &x * &beta0;
        let cov = DenseCovariance::new(random_spd(&mut rng, 8)).unwrap();
        let est = ridge_solve_with(&x, &w, &y, &DMatrix::identity(3, 3), &cov).unwrap();
        assert!((est.beta - beta0).norm() < 1e-10);
        assert!(est.gamma.norm() < 1e-10);
    }

    #[test]
    fn heavy_penalty_shrinks_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 10, 1);
        let w = random(&mut rng, 10, 4);
        let y = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let gram = DMatrix::identity(4, 4) * 1e16;
        let cov = DenseCovariance::new(DMatrix::identity(10, 10)).unwrap();
        let est = ridge_solve_with(&x, &w, &y, &gram, &cov).unwrap();
        assert!(est.gamma.norm() < 1e-6 * y.norm());
    }

    #[test]
    fn matches_normal_equation_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_element(6, 1, 1.0);
        let w = random(&mut rng, 6, 3);
        let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let gram = make_ridge(3).l * 0.7;
        let cov = DenseCovariance::new(DMatrix::identity(6, 6)).unwrap();
        let est = ridge_solve_with(&x, &w, &y, &gram, &cov).unwrap();

        let c = hcat(&x, &w);
        let mut d = DMatrix::zeros(4, 4);
        d.view_mut((1, 1), (3, 3)).copy_from(&gram);
        let oracle = (c.transpose() * &c + d).try_inverse().unwrap() * c.transpose() * &y;
        let got = DVector::from_iterator(4, est.beta.iter().chain(est.gamma.iter()).copied());
        assert!((got - &oracle).norm() < 1e-10 * oracle.norm());
    }

    #[test]
    fn blup_agrees_with_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = random(&mut rng, 12, 2);
            let w = random(&mut rng, 12, 5);
            let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            let l = random_spd(&mut rng, 5);
            let gram = l.transpose() * &l;
            let ginv = linalg::spd_inverse(&gram).unwrap();
            let cov = DenseCovariance::new(random_spd(&mut rng, 12)).unwrap();
            let ridge = ridge_solve_with(&x, &w, &y, &gram, &cov).unwrap();
            let (bl, _) = blup_with(&x, &w, &y, &gram, &ginv, &cov).unwrap();
            assert!((&ridge.beta - &bl.beta).norm() <= 1e-9 * ridge.beta.norm());
            assert!((&ridge.gamma - &bl.gamma).norm() <= 1e-9 * ridge.gamma.norm());
        }
    }

    #[test]
    fn zero_outcome_gives_zero_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 7, 1);
        let w = random(&mut rng, 7, 3);
        let y = DVector::zeros(7);
        let gram = DMatrix::identity(3, 3);
        let cov = DenseCovariance::new(random_spd(&mut rng, 7)).unwrap();
        let (bl, v1r) = blup_with(&x, &w, &y, &gram, &gram, &cov).unwrap();
        assert_eq!(bl.beta.norm(), 0.0);
        assert_eq!(bl.gamma.norm(), 0.0);
        assert_eq!(v1r.norm(), 0.0);
    }

    #[test]
    fn explicit_residual_projector_form_of_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 9;
        let x = random(&mut rng, n, 2);
        let w = random(&mut rng, n, 4);
        let l = random_spd(&mut rng, 4);
        let gram = l.transpose() * &l;
        let ginv = linalg::spd_inverse(&gram).unwrap();
        let v = random_spd(&mut rng, n);
        let cov = DenseCovariance::new(v.clone()).unwrap();
        let v1 = &v + &w * &ginv * w.transpose();
        let v1i = v1.clone().try_inverse().unwrap();
        let xv1x_inv = (x.transpose() * &v1i * &x).try_inverse().unwrap();
        let a_gamma = &ginv * w.transpose() * (&v1i - &v1i * &x * &xv1x_inv * x.transpose() * &v1i);
        let a_beta = &xv1x_inv * x.transpose() * &v1i;

        let got = conditional_covariances_with(&x, &w, &gram, Some(&ginv), &cov, false).unwrap();
        let want_g = &a_gamma * &v * a_gamma.transpose();
        let want_b = &a_beta * &v * a_beta.transpose();
        assert!((&got.gamma - &want_g).norm() < 1e-9 * want_g.norm());
        assert!((&got.beta - &want_b).norm() < 1e-9 * want_b.norm());

        let unc = conditional_covariances_with(&x, &w, &gram, Some(&ginv), &cov, true).unwrap();
        let want_u = &a_gamma * &v1 * a_gamma.transpose();
        assert!((&unc.gamma - &want_u).norm() < 1e-9 * want_u.norm());
        let diff = &unc.gamma - &got.gamma;
        assert!(diff.symmetric_eigen().eigenvalues.min() > -1e-10);
    }

    #[test]
    fn no_fixed_effects_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 8;
        let x = DMatrix::zeros(n, 0);
        let w = random(&mut rng, n, 3);
        let gram = DMatrix::identity(3, 3) * 2.0;
        let ginv = DMatrix::identity(3, 3) * 0.5;
        let v = random_spd(&mut rng, n);
        let cov = DenseCovariance::new(v.clone()).unwrap();
        let v1i = (&v + &w * &ginv * w.transpose()).try_inverse().unwrap();
        let want = &ginv * w.transpose() * &v1i * &v * &v1i * &w * &ginv;
        let got = conditional_covariances_with(&x, &w, &gram, Some(&ginv), &cov, false).unwrap();
        assert!((got.gamma - &want).norm() < 1e-9 * want.norm());
    }

    #[test]
    fn restricted_loglik_matches_direct_determinants() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 8;
        let x = random(&mut rng, n, 1);
        let w = random(&mut rng, n, 3);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let l = random_spd(&mut rng, 3);
        let gram = l.transpose() * &l;
        let v = random_spd(&mut rng, n);
        let cov = DenseCovariance::new(v.clone()).unwrap();
        let got = restricted_loglik_with(&x, &w, &y, &gram, &cov).unwrap();

        let v1 = &v + &w * gram.clone().try_inverse().unwrap() * w.transpose();
        let v1i = v1.clone().try_inverse().unwrap();
        let xtx = x.transpose() * &v1i * &x;
        let beta = xtx.clone().try_inverse().unwrap() * x.transpose() * &v1i * &y;
        let r = &y - &x * beta;
        let want = -0.5
            * (v1.determinant().ln()
                + xtx.determinant().ln()
                + (r.transpose() * &v1i * &r)[(0, 0)]
                + (n - 1) as f64 * (2.0 * PI).ln());
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn minimizer_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, 10, 2);
        let w = random(&mut rng, 10, 4);
        let y = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let gram = DMatrix::identity(4, 4) * 0.3;
        let cov = DenseCovariance::new(random_spd(&mut rng, 10)).unwrap();
        let est = ridge_solve_with(&x, &w, &y, &gram, &cov).unwrap();
        let best = objective_with(&x, &w, &y, &gram, &cov, &est.beta, &est.gamma);
        for _ in 0..50 {
            let db: DVector<f64> = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let dg: DVector<f64> = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let scale = 1e-3 / (db.norm_squared() + dg.norm_squared()).sqrt();
            let f = objective_with(
                &x,
                &w,
                &y,
                &gram,
                &cov,
                &(&est.beta + db * scale),
                &(&est.gamma + dg * scale),
            );
            assert!(f >= best);
        }
    }
}
