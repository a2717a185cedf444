//! Restricted maximum likelihood for the mixed-model form of the penalized fit.
//!
//! The residual variance is profiled out: with `H = V₁/σ²` the criterion
//! depends only on the ratios `ρ_d = σ²λ_d²` and `ψ_a = Σ_b[a,a]/σ²`, which are
//! optimized on the log scale. Cross products of `[X W]` are formed once per
//! dataset so each evaluation costs one `(K+P)`-sized Cholesky factorization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::{CovarianceOperator, VarianceComponents};
use super::nelder_mead::{self, NelderMeadOptions};
use super::solve;
use crate::dataset::{DesignMatrices, TimeStructure};
use crate::error::{Error, Result};
use crate::linalg;
use crate::penalty::{BlockPenalty, PenaltyMatrix, PenaltySpec};

/// Lower bound of the random-effect variance relative to `var(y)`.
pub const SIGMA_B_FLOOR: f64 = 1e-10;

const LOG_RHO_HALF_WIDTH: f64 = 25.0;
const LOG_PSI_BOUNDS: (f64, f64) = (-23.0, 18.5);
const BOUNDARY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RemlOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub ftol: f64,
    /// Skip optimization and evaluate everything at these components.
    pub fixed: Option<VarianceComponents>,
    /// Use `V₁` instead of `V` in the coefficient covariance.
    pub unconditional: bool,
}

impl Default for RemlOptions {
    fn default() -> Self {
        Self {
            starts: 3,
            max_iter: 500,
            ftol: 1e-8,
            fixed: None,
            unconditional: false,
        }
    }
}

/// Everything reported by a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub x_names: Vec<String>,
    #[serde(with = "crate::serde_util::vector")]
    pub beta: DVector<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub beta_cov: DMatrix<f64>,
    pub grid: Vec<f64>,
    pub time_structure: TimeStructure,
    /// `γ̃_0, …, γ̃_D` stacked, `p` values each.
    #[serde(with = "crate::serde_util::vector")]
    pub gamma: DVector<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub gamma_cov: DMatrix<f64>,
    pub covariance_kind: CovarianceKind,
    #[serde(with = "crate::serde_util::vector")]
    pub blup_b: DVector<f64>,
    pub subjects: Vec<String>,
    pub vc: VarianceComponents,
    pub reml_loglik: f64,
    pub aic: f64,
    pub paper_aic: f64,
    pub n_params: usize,
    #[serde(with = "crate::serde_util::vector")]
    pub fitted: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub boundary: bool,
    pub penalties: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Conditional,
    Unconditional,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.grid.len()
    }

    pub fn n_components(&self) -> usize {
        self.time_structure.n_components()
    }

    pub fn gamma_component(&self, d: usize) -> DVector<f64> {
        self.gamma.rows(d * self.p(), self.p()).into_owned()
    }

    pub fn gamma_component_cov(&self, d: usize) -> DMatrix<f64> {
        let p = self.p();
        self.gamma_cov.view((d * p, d * p), (p, p)).into_owned()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result is always serializable")
    }
}

/// AIC parameter count: one `λ` per component, `σ_ε²`, the diagonal of `Σ_b`
/// and the fixed effects.
pub fn count_parameters(n_components: usize, r: usize, k: usize) -> usize {
    n_components + 1 + r + k
}

/// Evaluation of the profiled criterion at one point.
#[derive(Debug, Clone)]
pub struct ProfiledEval {
    /// `−2ℓ_R` at the profiled `σ̂²`, constants included.
    pub neg2_loglik: f64,
    pub sigma_sq: f64,
}

/// Cross products of the design that do not depend on the variance
/// components or the penalty. Reusable across penalty candidates.
pub struct RemlWorkspace {
    n: usize,
    k: usize,
    p: usize,
    n_components: usize,
    r: usize,
    ctc: DMatrix<f64>,
    cty: DVector<f64>,
    yty: f64,
    /// Per subject: `Z_i'C_i`, `Z_i'y_i`, `Z_i'Z_i`.
    subj: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)>,
    var_y: f64,
}

/// Penalty blocks prepared for the profiled criterion.
pub struct PreparedPenalty {
    blocks: Vec<PenaltyMatrix>,
    grams: Vec<DMatrix<f64>>,
    logdets: Vec<f64>,
}

impl PreparedPenalty {
    pub fn new(blocks: Vec<PenaltyMatrix>) -> Result<Self> {
        let mut grams = Vec::with_capacity(blocks.len());
        let mut logdets = Vec::with_capacity(blocks.len());
        for (d, b) in blocks.iter().enumerate() {
            if !b.is_invertible() {
                return Err(Error::SingularBlockForMixedModel(d));
            }
            let mut g = b.l.transpose() * &b.l;
            linalg::symmetrize(&mut g);
            let ld = linalg::spd_logdet(&g).map_err(|_| Error::SingularBlockForMixedModel(d))?;
            grams.push(g);
            logdets.push(ld);
        }
        Ok(Self {
            blocks,
            grams,
            logdets,
        })
    }

    pub fn from_specs(specs: &[PenaltySpec], p: usize) -> Result<Self> {
        Self::new(specs.iter().map(|s| s.build(p)).collect::<Result<_>>()?)
    }

    pub fn blocks(&self) -> &[PenaltyMatrix] {
        &self.blocks
    }
}

impl RemlWorkspace {
    pub fn new(dm: &DesignMatrices) -> Self {
        let c = solve::hcat(&dm.x, &dm.w);
        let mut ctc = c.tr_mul(&c);
        linalg::symmetrize(&mut ctc);
        let cty = c.tr_mul(&dm.y);
        let subj = dm
            .subjects
            .iter()
            .map(|s| {
                let z = dm.z_rows.rows(s.start, s.len);
                let ci = c.rows(s.start, s.len);
                let yi = dm.y.rows(s.start, s.len);
                (z.tr_mul(&ci), z.tr_mul(&yi), z.tr_mul(&z))
            })
            .collect();
        let n = dm.n_obs();
        let mean = dm.y.mean();
        let var_y = if n > 1 {
            dm.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            n,
            k: dm.n_fixed(),
            p: dm.p,
            n_components: dm.n_components,
            r: dm.r,
            ctc,
            cty,
            yty: dm.y.norm_squared(),
            subj,
            var_y,
        }
    }

    pub fn n_theta(&self) -> usize {
        self.n_components + self.r
    }

    /// Profiled `−2ℓ_R` at `θ = (log ρ_0..log ρ_D, log ψ_1..log ψ_r)`.
    pub fn evaluate(&self, pen: &PreparedPenalty, theta: &[f64]) -> Option<ProfiledEval> {
        let (nc, r, k, p) = (self.n_components, self.r, self.k, self.p);
        let dim = k + nc * p;
        let sqrt_psi: Vec<f64> = theta[nc..].iter().map(|l| (0.5 * l).exp()).collect();
        let n_subj = self.subj.len();

        let mut b = DMatrix::zeros(n_subj * r, dim);
        let mut by = DVector::zeros(n_subj * r);
        let mut logdet_r0 = 0.0;
        for (i, (ztc, zty, ztz)) in self.subj.iter().enumerate() {
            let a = DMatrix::from_fn(r, r, |u, v| {
                f64::from(u8::from(u == v)) + sqrt_psi[u] * ztz[(u, v)] * sqrt_psi[v]
            });
            let chol = a.cholesky()?;
            logdet_r0 += linalg::chol_logdet(&chol);
            let l = chol.l();
            let mut sc = ztc.clone();
            let mut sy = zty.clone();
            for u in 0..r {
                sc.row_mut(u).scale_mut(sqrt_psi[u]);
                sy[u] *= sqrt_psi[u];
            }
            l.solve_lower_triangular_mut(&mut sc);
            l.solve_lower_triangular_mut(&mut sy);
            b.rows_mut(i * r, r).copy_from(&sc);
            by.rows_mut(i * r, r).copy_from(&sy);
        }

        let mut t = &self.ctc - b.tr_mul(&b);
        let rhs = &self.cty - b.tr_mul(&by);
        let yry = self.yty - by.norm_squared();
        let mut logdet_g = 0.0;
        for d in 0..nc {
            let rho = theta[d].exp();
            let mut blk = t.view_mut((k + d * p, k + d * p), (p, p));
            blk += &pen.grams[d] * rho;
            logdet_g -= p as f64 * theta[d] + pen.logdets[d];
        }
        linalg::symmetrize(&mut t);
        let chol = t.cholesky()?;
        let sol = chol.solve(&rhs);
        let quad = yry - rhs.dot(&sol);
        let dof = (self.n - k) as f64;
        if !(quad > 0.0) || dof <= 0.0 {
            return None;
        }
        let sigma_sq = quad / dof;
        let neg2 = dof * sigma_sq.ln()
            + logdet_r0
            + logdet_g
            + linalg::chol_logdet(&chol)
            + dof
            + dof * (2.0 * PI).ln();
        neg2.is_finite().then_some(ProfiledEval {
            neg2_loglik: neg2,
            sigma_sq,
        })
    }

    /// `trace((L_d'L_d)⁻¹ W_d'W_d)/n•`: the ratio at which the functional term
    /// and the noise contribute comparable variance.
    fn reference_log_rho(&self, pen: &PreparedPenalty) -> Vec<f64> {
        (0..self.n_components)
            .map(|d| {
                let off = self.k + d * self.p;
                let wtw = self.ctc.view((off, off), (self.p, self.p)).into_owned();
                let tr = linalg::solve_spd(&pen.grams[d], &wtw)
                    .map(|m| m.trace())
                    .unwrap_or(1.0);
                let v = tr / self.n as f64;
                if v > 0.0 && v.is_finite() {
                    v.ln()
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn bounds(&self, pen: &PreparedPenalty) -> (Vec<f64>, Vec<f64>) {
        let reference = self.reference_log_rho(pen);
        let mut lo: Vec<f64> = reference.iter().map(|c| c - LOG_RHO_HALF_WIDTH).collect();
        let mut hi: Vec<f64> = reference.iter().map(|c| c + LOG_RHO_HALF_WIDTH).collect();
        lo.extend(std::iter::repeat_n(LOG_PSI_BOUNDS.0, self.r));
        hi.extend(std::iter::repeat_n(LOG_PSI_BOUNDS.1, self.r));
        (lo, hi)
    }

    fn starts(&self, pen: &PreparedPenalty, count: usize) -> Vec<Vec<f64>> {
        let reference = self.reference_log_rho(pen);
        // Offsets in log units for (ρ, ψ): the reference point, then a
        // stronger-penalty/weaker-subject start and the reverse.
        let offsets = [(0.0, 0.0), (3.0, -2.3), (-3.0, 2.3)];
        (0..count.max(1))
            .map(|i| {
                let (dr, dp) = offsets[i % offsets.len()];
                let spread = (i / offsets.len()) as f64 + 1.0;
                reference
                    .iter()
                    .map(|c| c + dr * spread)
                    .chain(std::iter::repeat_n(dp * spread, self.r))
                    .collect()
            })
            .collect()
    }

    /// Full REML fit for one penalty candidate.
    pub fn fit(
        &self,
        dm: &DesignMatrices,
        pen: &PreparedPenalty,
        opts: &RemlOptions,
    ) -> Result<FitResult> {
        if pen.blocks.len() != self.n_components {
            return Err(Error::InvalidInput(format!(
                "{} penalty blocks for {} functional components",
                pen.blocks.len(),
                self.n_components
            )));
        }
        if let Some(vc) = &opts.fixed {
            return fit_at(dm, &pen.blocks, vc, 0, true, false, opts.unconditional);
        }

        let (lo, hi) = self.bounds(pen);
        let objective = |x: &[f64]| -> f64 {
            let mut excess = 0.0;
            let clamped: Vec<f64> = x
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(v, (l, h))| {
                    let c = v.clamp(*l, *h);
                    excess += (v - c).powi(2);
                    c
                })
                .collect();
            match self.evaluate(pen, &clamped) {
                Some(e) => e.neg2_loglik + excess,
                None => f64::INFINITY,
            }
        };

        let nm = NelderMeadOptions {
            max_iter: opts.max_iter,
            ftol: opts.ftol,
            step: 1.0,
        };
        let mut best: Option<(Vec<f64>, f64, bool)> = None;
        let mut iterations = 0;
        for start in self.starts(pen, opts.starts) {
            let first = nelder_mead::minimize(objective, &start, &nm);
            // Restarting from the best vertex guards against a collapsed simplex.
            let polish =
                nelder_mead::minimize(objective, &first.x, &NelderMeadOptions { step: 0.25, ..nm });
            iterations += first.iterations + polish.iterations;
            let (x, f) = if polish.f <= first.f {
                (polish.x, polish.f)
            } else {
                (first.x, first.f)
            };
            let converged = first.converged && polish.converged;
            if best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((x, f, converged));
            }
        }
        let (x, f, converged) = best.expect("at least one start");
        if !f.is_finite() {
            return Err(Error::SingularSystem(
                "restricted likelihood could not be evaluated at any start".into(),
            ));
        }
        let theta: Vec<f64> = x
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect();
        let mut boundary = theta
            .iter()
            .zip(lo.iter().zip(&hi))
            .any(|(v, (l, h))| v - l < BOUNDARY_TOL || h - v < BOUNDARY_TOL);
        let eval = self
            .evaluate(pen, &theta)
            .ok_or_else(|| Error::SingularSystem("optimum is not evaluable".into()))?;
        let sigma_sq = eval.sigma_sq;
        let nc = self.n_components;
        let lambda: Vec<f64> = theta[..nc]
            .iter()
            .map(|l| (l.exp() / sigma_sq).sqrt())
            .collect();
        let floor = SIGMA_B_FLOOR * self.var_y.max(f64::MIN_POSITIVE);
        let diag: Vec<f64> = theta[nc..]
            .iter()
            .map(|l| {
                let v = l.exp() * sigma_sq;
                if v < floor {
                    boundary = true;
                    floor
                } else {
                    v
                }
            })
            .collect();
        let vc = VarianceComponents {
            lambda,
            sigma_eps_sq: sigma_sq,
            sigma_b: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        };
        fit_at(
            dm,
            &pen.blocks,
            &vc,
            iterations,
            converged,
            boundary,
            opts.unconditional,
        )
    }
}

/// Estimates, covariances and criteria at fixed variance components.
pub fn fit_at(
    dm: &DesignMatrices,
    blocks: &[PenaltyMatrix],
    vc: &VarianceComponents,
    iterations: usize,
    converged: bool,
    boundary: bool,
    unconditional: bool,
) -> Result<FitResult> {
    let bp = BlockPenalty::assemble(blocks, &vc.lambda)?;
    let cov = vc.covariance(dm)?;
    let est = solve::ridge_solve_with(&dm.x, &dm.w, &dm.y, &bp.gram, &cov)?;
    let linear = &dm.x * &est.beta + &dm.w * &est.gamma;
    let resid = &dm.y - &linear;
    let blup_b = cov.predict_random_effects(&cov.solve_vec(&resid));
    let fitted = linear + cov.z_times(&blup_b);
    let covs = solve::conditional_covariances_with(
        &dm.x,
        &dm.w,
        &bp.gram,
        bp.gram_inverse.as_ref(),
        &cov,
        unconditional,
    )?;
    let reml_loglik = match bp.gram_inverse {
        Some(_) => solve::restricted_loglik_with(&dm.x, &dm.w, &dm.y, &bp.gram, &cov)?,
        None => f64::NAN,
    };
    let n_params = count_parameters(dm.n_components, dm.r, dm.n_fixed());
    let aic = -2.0 * reml_loglik + 2.0 * n_params as f64;
    Ok(FitResult {
        x_names: dm.x_names.clone(),
        beta: est.beta,
        beta_cov: covs.beta,
        grid: dm.grid.clone(),
        time_structure: dm.time_structure.clone(),
        gamma: est.gamma,
        gamma_cov: covs.gamma,
        covariance_kind: if unconditional {
            CovarianceKind::Unconditional
        } else {
            CovarianceKind::Conditional
        },
        blup_b,
        subjects: dm.subjects.iter().map(|s| s.id.clone()).collect(),
        vc: vc.clone(),
        reml_loglik,
        aic,
        paper_aic: -aic / 2.0,
        n_params,
        fitted,
        converged,
        iterations,
        boundary,
        penalties: blocks
            .iter()
            .map(|b| format!("{}x{} (null dim {})", b.l.nrows(), b.l.ncols(), b.null_dim))
            .collect(),
    })
}

/// Fits the model with REML-chosen tuning values and variance components.
pub fn reml_fit(
    dm: &DesignMatrices,
    specs: &[PenaltySpec],
    opts: &RemlOptions,
) -> Result<FitResult> {
    let pen = PreparedPenalty::from_specs(specs, dm.p)?;
    let mut fit = RemlWorkspace::new(dm).fit(dm, &pen, opts)?;
    fit.penalties = specs.iter().map(PenaltySpec::label).collect();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        build_design, DesignOptions, FunctionalRecord, LongitudinalDataset, RandomEffectSpec,
        SampleGrid,
    };
    use crate::estimator::solve::{blup, ridge_solve};
    use crate::penalty::make_ridge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(
        seed: u64,
        n_subj: usize,
        visits: usize,
        p: usize,
        ts: TimeStructure,
        noise: f64,
    ) -> DesignMatrices {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        for i in 0..n_subj {
            let b: f64 = rng.sample::<f64, _>(StandardNormal) * 0.3;
            for t in 0..visits {
                let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let signal: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (j as f64 * 0.3).sin())
                    .sum();
                let e: f64 = rng.sample(StandardNormal);
                recs.push(FunctionalRecord {
                    subject: format!("s{i}"),
                    t: t as f64,
                    y: 1.0 + signal + b + noise * e,
                    x: vec![rng.random_range(-1.0..1.0)],
                    w,
                });
            }
        }
        let ds = LongitudinalDataset::new(
            SampleGrid::equispaced(p).unwrap(),
            vec!["age".into()],
            recs,
            RandomEffectSpec::default(),
        )
        .unwrap();
        build_design(&ds, &ts, &DesignOptions::default()).unwrap()
    }

    #[test]
    fn profiled_criterion_matches_generic_loglik() {
        let dm = design(1, 6, 3, 4, TimeStructure::linear(), 0.5);
        let ws = RemlWorkspace::new(&dm);
        let pen = PreparedPenalty::new(vec![make_ridge(4), make_ridge(4)]).unwrap();
        let theta = [0.3, -0.4, 0.2];
        let ev = ws.evaluate(&pen, &theta).unwrap();
        let vc = VarianceComponents {
            lambda: theta[..2]
                .iter()
                .map(|l| (l.exp() / ev.sigma_sq).sqrt())
                .collect(),
            sigma_eps_sq: ev.sigma_sq,
            sigma_b: DMatrix::from_element(1, 1, theta[2].exp() * ev.sigma_sq),
        };
        let bp = BlockPenalty::assemble(pen.blocks(), &vc.lambda).unwrap();
        let ll = solve::restricted_loglik(&dm, &bp, &vc).unwrap();
        assert!((-2.0 * ll - ev.neg2_loglik).abs() < 1e-9 * ll.abs().max(1.0));
    }

    #[test]
    fn fixed_components_reproduce_ridge_and_blup() {
        let dm = design(2, 5, 3, 4, TimeStructure::constant(), 0.5);
        let vc = VarianceComponents::new(vec![1.3], 0.4, 0.2);
        let opts = RemlOptions {
            fixed: Some(vc.clone()),
            ..Default::default()
        };
        let fit = reml_fit(&dm, &[PenaltySpec::ridge()], &opts).unwrap();
        let bp = BlockPenalty::assemble(&[make_ridge(4)], &vc.lambda).unwrap();
        let ridge = ridge_solve(&dm, &bp, &vc).unwrap();
        let bl = blup(&dm, &bp, &vc).unwrap();
        assert!((&fit.gamma - &ridge.gamma).norm() <= 1e-9 * ridge.gamma.norm());
        assert!((&fit.beta - &ridge.beta).norm() <= 1e-9 * ridge.beta.norm());
        assert!((&fit.blup_b - &bl.b).norm() <= 1e-9 * bl.b.norm().max(1e-12));
    }

    #[test]
    fn reml_recovers_pure_noise_variance() {
        // γ = 0, b = 0: the noise variance estimate should be close to truth.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 5;
        let mut recs = Vec::new();
        for i in 0..60 {
            for t in 0..4 {
                recs.push(FunctionalRecord {
                    subject: format!("s{i}"),
                    t: t as f64,
                    y: 0.5 * rng.sample::<f64, _>(StandardNormal),
                    x: vec![],
                    w: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                });
            }
        }
        let ds = LongitudinalDataset::new(
            SampleGrid::equispaced(p).unwrap(),
            vec![],
            recs,
            RandomEffectSpec::default(),
        )
        .unwrap();
        let dm = build_design(&ds, &TimeStructure::constant(), &DesignOptions::default()).unwrap();
        let fit = reml_fit(&dm, &[PenaltySpec::ridge()], &RemlOptions::default()).unwrap();
        // sd of s² with 240 observations is about 0.25·sqrt(2/240) ≈ 0.023
        assert!(
            (fit.vc.sigma_eps_sq - 0.25).abs() < 3.0 * 0.023,
            "{}",
            fit.vc.sigma_eps_sq
        );
        assert!(fit.reml_loglik.is_finite());
        assert_eq!(fit.paper_aic, -fit.aic / 2.0);
    }

    #[test]
    fn optimum_is_not_worse_than_starts() {
        let dm = design(3, 20, 3, 6, TimeStructure::constant(), 0.3);
        let ws = RemlWorkspace::new(&dm);
        let pen = PreparedPenalty::new(vec![make_ridge(6)]).unwrap();
        let fit = ws.fit(&dm, &pen, &RemlOptions::default()).unwrap();
        for s in ws.starts(&pen, 3) {
            let e = ws.evaluate(&pen, &s).unwrap();
            assert!(-2.0 * fit.reml_loglik <= e.neg2_loglik + 1e-6);
        }
    }

    #[test]
    fn singular_block_is_rejected() {
        let dm = design(4, 4, 2, 5, TimeStructure::constant(), 0.3);
        assert!(matches!(
            reml_fit(
                &dm,
                &[PenaltySpec::second_difference()],
                &RemlOptions::default()
            ),
            Err(Error::SingularBlockForMixedModel(0))
        ));
    }

    #[test]
    fn fit_json_round_trip() {
        let dm = design(5, 4, 2, 3, TimeStructure::constant(), 0.3);
        let opts = RemlOptions {
            fixed: Some(VarianceComponents::new(vec![1.0], 0.5, 0.1)),
            ..Default::default()
        };
        let fit = reml_fit(&dm, &[PenaltySpec::ridge()], &opts).unwrap();
        let back: FitResult = serde_json::from_str(&fit.to_json()).unwrap();
        assert_eq!(back, fit);
    }
}
