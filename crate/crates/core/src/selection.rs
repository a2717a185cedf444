//! AIC-based choice of the decomposition weight `φ_a` and of the time
//! structure, with band diagnostics for dropping components.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_design, DesignMatrices, DesignOptions, LongitudinalDataset, TimeStructure,
};
use crate::error::{Error, Result};
use crate::estimator::{component_band, FitResult, PreparedPenalty, RemlOptions, RemlWorkspace};
use crate::penalty::{PenaltyKind, PenaltySpec};

/// AIC differences below this are treated as ties.
pub const AIC_TIE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptions {
    pub reml: RemlOptions,
    pub design: DesignOptions,
    /// Band level for the nullity diagnostics.
    pub level: f64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            reml: RemlOptions::default(),
            design: DesignOptions::default(),
            level: 0.95,
        }
    }
}

/// `10^k` for `k = 0, 0.25, …, 3`.
pub fn default_phi_grid() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(i as f64 * 0.25)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub covariates: Vec<String>,
    pub time_structure: TimeStructure,
    pub phi_a: Option<f64>,
    pub phi_b: Option<f64>,
    pub aic: Option<f64>,
    pub paper_aic: Option<f64>,
    pub reml_loglik: Option<f64>,
    pub converged: bool,
    /// Per component, fraction of grid points whose band excludes zero.
    pub band_nullity: Vec<f64>,
    /// Per component, whether the band contains zero on the whole grid.
    pub all_null: Vec<bool>,
    pub error: Option<String>,
}

impl Candidate {
    fn n_components(&self) -> usize {
        self.time_structure.n_components()
    }

    fn tie_key(&self) -> (f64, usize) {
        (self.phi_a.unwrap_or(0.0), self.n_components())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Ordered by AIC; failed fits last.
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
    /// Components of the chosen model whose band contains zero everywhere.
    pub drop_recommendations: Vec<usize>,
    pub level: f64,
}

impl SelectionReport {
    pub fn chosen(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }

    fn assemble(mut candidates: Vec<Candidate>, level: f64) -> Result<Self> {
        candidates.sort_by(|a, b| {
            let ka = a.aic.unwrap_or(f64::INFINITY);
            let kb = b.aic.unwrap_or(f64::INFINITY);
            ka.total_cmp(&kb)
                .then(a.tie_key().0.total_cmp(&b.tie_key().0))
                .then(a.tie_key().1.cmp(&b.tie_key().1))
                .then(a.label.cmp(&b.label))
        });
        let ok: Vec<usize> = (0..candidates.len())
            .filter(|&i| candidates[i].aic.is_some_and(f64::is_finite))
            .collect();
        if ok.is_empty() {
            return Err(Error::AllCandidatesFailed);
        }
        let converged: Vec<usize> = ok
            .iter()
            .copied()
            .filter(|&i| candidates[i].converged)
            .collect();
        let pool = if converged.is_empty() { ok } else { converged };
        let best = pool
            .iter()
            .map(|&i| candidates[i].aic.expect("filtered"))
            .fold(f64::INFINITY, f64::min);
        let chosen = pool
            .into_iter()
            .filter(|&i| candidates[i].aic.expect("filtered") < best + AIC_TIE)
            .min_by(|&a, &b| {
                let (pa, da) = candidates[a].tie_key();
                let (pb, db) = candidates[b].tie_key();
                pa.total_cmp(&pb).then(da.cmp(&db))
            })
            .expect("pool contains the minimizer");
        let drop_recommendations = candidates[chosen]
            .all_null
            .iter()
            .enumerate()
            .filter(|(_, n)| **n)
            .map(|(d, _)| d)
            .collect();
        Ok(Self {
            candidates,
            chosen,
            drop_recommendations,
            level,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    /// Table with columns `covariates,time_structure,phi_a,aic,paper_aic,converged,chosen`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
        wtr.write_record([
            "covariates",
            "time_structure",
            "phi_a",
            "aic",
            "paper_aic",
            "converged",
            "chosen",
        ])
        .map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, c) in self.candidates.iter().enumerate() {
            wtr.write_record([
                c.covariates.join(";"),
                c.time_structure.label(),
                opt(c.phi_a),
                opt(c.aic),
                opt(c.paper_aic),
                c.converged.to_string(),
                (i == self.chosen).to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::io("<selection csv>", e))
    }
}

fn phis(spec: &PenaltySpec) -> (Option<f64>, Option<f64>) {
    match &spec.kind {
        PenaltyKind::Decomposition { phi_a, phi_b, .. } => (Some(*phi_a), Some(*phi_b)),
        _ => (None, None),
    }
}

fn candidate_from(
    label: String,
    dm: &DesignMatrices,
    spec: &PenaltySpec,
    fit: Result<FitResult>,
    level: f64,
) -> Candidate {
    let (phi_a, phi_b) = phis(spec);
    let mut c = Candidate {
        label,
        covariates: dm.x_names.clone(),
        time_structure: dm.time_structure.clone(),
        phi_a,
        phi_b,
        aic: None,
        paper_aic: None,
        reml_loglik: None,
        converged: false,
        band_nullity: Vec::new(),
        all_null: Vec::new(),
        error: None,
    };
    let bands = fit.and_then(|f| {
        let b = (0..f.n_components())
            .map(|d| component_band(&f, d, level))
            .collect::<Result<Vec<_>>>()?;
        Ok((f, b))
    });
    match bands {
        Ok((f, b)) => {
            c.aic = Some(f.aic).filter(|a| a.is_finite());
            c.paper_aic = Some(f.paper_aic).filter(|a| a.is_finite());
            c.reml_loglik = Some(f.reml_loglik).filter(|a| a.is_finite());
            c.converged = f.converged;
            c.band_nullity = b.iter().map(|x| x.fraction_excluding_zero()).collect();
            c.all_null = b.iter().map(|x| x.contains_zero_everywhere()).collect();
        }
        Err(e) => c.error = Some(e.to_string()),
    }
    c
}

/// Grid search over `φ_a` with `φ_b = 1` on a prepared design.
pub fn phi_grid_search_design(
    dm: &DesignMatrices,
    q: &DMatrix<f64>,
    grid: &[f64],
    opts: &SelectionOptions,
) -> Result<SelectionReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("phi_a grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositivePhi {
            phi_a: *bad,
            phi_b: 1.0,
        });
    }
    let ws = RemlWorkspace::new(dm);
    let candidates = grid
        .par_iter()
        .map(|&phi_a| {
            let spec = PenaltySpec::decomposition(q.clone(), phi_a, 1.0);
            let fit = PreparedPenalty::from_specs(&vec![spec.clone(); dm.n_components], dm.p)
                .and_then(|pen| ws.fit(dm, &pen, &opts.reml));
            candidate_from(format!("phi_a={phi_a}"), dm, &spec, fit, opts.level)
        })
        .collect();
    SelectionReport::assemble(candidates, opts.level)
}

pub fn phi_grid_search(
    ds: &LongitudinalDataset,
    ts: &TimeStructure,
    q: &DMatrix<f64>,
    grid: &[f64],
    opts: &SelectionOptions,
) -> Result<SelectionReport> {
    let dm = build_design(ds, ts, &opts.design)?;
    phi_grid_search_design(&dm, q, grid, opts)
}

/// Fits each time structure with the same per-component penalty.
pub fn compare_time_structures(
    ds: &LongitudinalDataset,
    candidates: &[TimeStructure],
    spec: &PenaltySpec,
    opts: &SelectionOptions,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no time structures to compare".into()));
    }
    let results: Vec<Result<Candidate>> = candidates
        .par_iter()
        .map(|ts| {
            let dm = build_design(ds, ts, &opts.design)?;
            let specs = vec![spec.clone(); dm.n_components];
            let fit = PreparedPenalty::from_specs(&specs, dm.p).and_then(|pen| {
                let mut f = RemlWorkspace::new(&dm).fit(&dm, &pen, &opts.reml)?;
                f.penalties = specs.iter().map(PenaltySpec::label).collect();
                Ok(f)
            });
            Ok(candidate_from(ts.label(), &dm, spec, fit, opts.level))
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (ts, r) in candidates.iter().zip(results) {
        out.push(r.unwrap_or_else(|e| Candidate {
            label: ts.label(),
            covariates: ds.covariate_names().to_vec(),
            time_structure: ts.clone(),
            phi_a: phis(spec).0,
            phi_b: phis(spec).1,
            aic: None,
            paper_aic: None,
            reml_loglik: None,
            converged: false,
            band_nullity: Vec::new(),
            all_null: Vec::new(),
            error: Some(e.to_string()),
        }));
    }
    SelectionReport::assemble(out, opts.level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit_at, reml_fit, restricted_loglik};
    use crate::penalty::BlockPenalty;
    use crate::simulate::{generate, SimulationScenario};

    fn scenario(n: usize) -> SimulationScenario {
        SimulationScenario {
            n_subjects: n,
            p: 20,
            ..SimulationScenario::time_varying(n, 0.9)
        }
    }

    #[test]
    fn default_grid_is_quarter_decades() {
        let g = default_phi_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 1.0);
        assert!((g[4] - 10.0).abs() < 1e-12);
        assert!((g[12] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn single_grid_point_is_chosen() {
        let sc = scenario(15);
        let rep = generate(&sc, 0).unwrap();
        let r = phi_grid_search(
            &rep.dataset,
            &TimeStructure::linear(),
            &sc.q_basis(),
            &[3.0],
            &SelectionOptions::default(),
        )
        .unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.chosen().phi_a, Some(3.0));
    }

    #[test]
    fn grid_aic_matches_independent_evaluation() {
        let sc = scenario(12);
        let rep = generate(&sc, 1).unwrap();
        let opts = SelectionOptions::default();
        let dm = build_design(&rep.dataset, &TimeStructure::linear(), &opts.design).unwrap();
        let r = phi_grid_search_design(&dm, &sc.q_basis(), &[1.0, 10.0, 100.0], &opts).unwrap();
        for c in &r.candidates {
            let spec = PenaltySpec::decomposition(sc.q_basis(), c.phi_a.unwrap(), 1.0);
            let fit = reml_fit(&dm, &[spec.clone(), spec.clone()], &opts.reml).unwrap();
            let blocks: Vec<_> = (0..2).map(|_| spec.build(20).unwrap()).collect();
            let bp = BlockPenalty::assemble(&blocks, &fit.vc.lambda).unwrap();
            let ll = restricted_loglik(&dm, &bp, &fit.vc).unwrap();
            let aic = -2.0 * ll + 2.0 * fit.n_params as f64;
            assert!((c.aic.unwrap() - aic).abs() < 1e-9 * aic.abs());
            assert_eq!(c.paper_aic.unwrap(), -c.aic.unwrap() / 2.0);
            let again = fit_at(&dm, &blocks, &fit.vc, 0, true, false, false).unwrap();
            assert_eq!(again.aic, fit.aic);
        }
        for w in r.candidates.windows(2) {
            assert!(w[0].aic.unwrap() <= w[1].aic.unwrap());
        }
    }

    #[test]
    fn permuting_candidates_keeps_choice() {
        let sc = scenario(12);
        let rep = generate(&sc, 2).unwrap();
        let opts = SelectionOptions::default();
        let spec = PenaltySpec::decomposition(sc.q_basis(), 10.0, 1.0);
        let cands = vec![
            TimeStructure::constant(),
            TimeStructure::linear(),
            TimeStructure::parse("t,t2").unwrap(),
        ];
        let a = compare_time_structures(&rep.dataset, &cands, &spec, &opts).unwrap();
        let rev: Vec<_> = cands.iter().rev().cloned().collect();
        let b = compare_time_structures(&rep.dataset, &rev, &spec, &opts).unwrap();
        assert_eq!(a.chosen().time_structure, b.chosen().time_structure);
        assert_eq!(a, b);
    }

    #[test]
    fn single_structure_is_trivially_chosen() {
        let sc = scenario(10);
        let rep = generate(&sc, 3).unwrap();
        let r = compare_time_structures(
            &rep.dataset,
            &[TimeStructure::constant()],
            &PenaltySpec::ridge(),
            &SelectionOptions::default(),
        )
        .unwrap();
        assert_eq!(r.chosen, 0);
        assert_eq!(r.chosen().band_nullity.len(), 1);
    }

    #[test]
    fn all_failures_are_reported() {
        let sc = scenario(10);
        let rep = generate(&sc, 4).unwrap();
        let r = compare_time_structures(
            &rep.dataset,
            &[TimeStructure::constant()],
            &PenaltySpec::second_difference(),
            &SelectionOptions::default(),
        );
        assert!(matches!(r, Err(Error::AllCandidatesFailed)));
    }

    fn candidate(label: &str, phi: f64, aic: f64, ts: TimeStructure) -> Candidate {
        Candidate {
            label: label.into(),
            covariates: vec![],
            time_structure: ts,
            phi_a: Some(phi),
            phi_b: Some(1.0),
            aic: Some(aic),
            paper_aic: Some(-aic / 2.0),
            reml_loglik: None,
            converged: true,
            band_nullity: vec![],
            all_null: vec![false],
            error: None,
        }
    }

    #[test]
    fn ties_prefer_smaller_phi_then_simpler_structure() {
        let r = SelectionReport::assemble(
            vec![
                candidate("b", 10.0, -100.0, TimeStructure::constant()),
                candidate("a", 1.0, -100.0 + 5e-7, TimeStructure::constant()),
                candidate("c", 100.0, -99.0, TimeStructure::constant()),
            ],
            0.95,
        )
        .unwrap();
        assert_eq!(r.chosen().phi_a, Some(1.0));
        let r = SelectionReport::assemble(
            vec![
                candidate("lin", 1.0, -50.0, TimeStructure::linear()),
                candidate("const", 1.0, -50.0 + 1e-7, TimeStructure::constant()),
            ],
            0.95,
        )
        .unwrap();
        assert_eq!(r.chosen().label, "const");
    }

    #[test]
    fn unconverged_candidates_are_skipped_when_possible() {
        let mut bad = candidate("x", 1.0, -200.0, TimeStructure::constant());
        bad.converged = false;
        let r = SelectionReport::assemble(
            vec![bad, candidate("y", 10.0, -100.0, TimeStructure::constant())],
            0.95,
        )
        .unwrap();
        assert_eq!(r.chosen().label, "y");
    }

    #[test]
    fn csv_has_table_columns() {
        let r = SelectionReport::assemble(
            vec![candidate("a", 10.0, 1.0, TimeStructure::linear())],
            0.95,
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("covariates,time_structure,phi_a,aic,paper_aic,converged,chosen\n")
        );
        let back: SelectionReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
