use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, Replicate, SimulationScenario};
use crate::dataset::{build_design, DesignOptions, TimeStructure};
use crate::error::{Error, Result};
use crate::estimator::{component_band, reml_fit, FitResult, RemlOptions};
use crate::penalty::PenaltySpec;

/// What an estimator returns for one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateEstimate {
    pub gammas: Vec<DVector<f64>>,
    /// Pointwise band limits per component, when available.
    pub bands: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    /// `Xβ̃ + Wγ̃` at the observed rows.
    pub marginal_fitted: DVector<f64>,
}

pub trait StudyEstimator: Sync {
    fn estimate(&self, scenario: &SimulationScenario, rep: &Replicate)
        -> Result<ReplicateEstimate>;
}

/// Returns the true coefficients and signal. Has no bands.
pub struct TruthEstimator;

impl StudyEstimator for TruthEstimator {
    fn estimate(&self, _: &SimulationScenario, rep: &Replicate) -> Result<ReplicateEstimate> {
        Ok(ReplicateEstimate {
            gammas: rep.gammas.clone(),
            bands: None,
            marginal_fitted: DVector::from_vec(rep.signal.clone()),
        })
    }
}

/// Decomposition-penalized fit with REML tuning.
#[derive(Debug, Clone)]
pub struct PeerEstimator {
    pub specs: Vec<PenaltySpec>,
    pub time_structure: TimeStructure,
    pub design: DesignOptions,
    pub reml: RemlOptions,
    pub level: f64,
}

impl PeerEstimator {
    pub fn from_scenario(sc: &SimulationScenario) -> Self {
        let ts = sc.fit_structure().clone();
        let spec = PenaltySpec::decomposition(sc.q_basis(), sc.phi_a, sc.phi_b);
        Self {
            specs: vec![spec; ts.n_components()],
            time_structure: ts,
            design: DesignOptions {
                quadrature: sc.quadrature,
                ..DesignOptions::default()
            },
            reml: RemlOptions::default(),
            level: sc.level,
        }
    }
}

impl PeerEstimator {
    pub fn fit_replicate(&self, rep: &Replicate) -> Result<FitResult> {
        let dm = build_design(&rep.dataset, &self.time_structure, &self.design)?;
        reml_fit(&dm, &self.specs, &self.reml)
    }
}

impl StudyEstimator for PeerEstimator {
    fn estimate(&self, _: &SimulationScenario, rep: &Replicate) -> Result<ReplicateEstimate> {
        let dm = build_design(&rep.dataset, &self.time_structure, &self.design)?;
        let fit = reml_fit(&dm, &self.specs, &self.reml)?;
        let nc = fit.n_components();
        let bands = (0..nc)
            .map(|d| component_band(&fit, d, self.level).map(|b| (b.lower, b.upper)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReplicateEstimate {
            gammas: (0..nc).map(|d| fit.gamma_component(d)).collect(),
            bands: Some(bands),
            marginal_fitted: &dm.x * &fit.beta + &dm.w * &fit.gamma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub component: usize,
    /// Average of `‖γ_d − γ̃_d‖²` over successful replicates.
    pub mse: f64,
    /// Sum over the grid of the (1/R) empirical variance of `γ̃_d`.
    pub trace_var: f64,
    /// `‖mean γ̃_d − γ_d‖²`.
    pub sq_bias: f64,
    pub mse_per_replicate: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    /// Per grid point fraction of replicates whose band covers the truth;
    /// `None` when the estimator reports no bands.
    pub coverage: Option<Vec<f64>>,
    pub mean_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    pub scenario: String,
    pub seed: u64,
    pub replicates: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub grid: Vec<f64>,
    /// Average of `‖y − ỹ‖²/N` with `ỹ = Xβ̃ + Wγ̃`.
    pub sspe: f64,
    /// Average of `‖y − ỹ‖²` without the division by `N`.
    pub sum_sq_prediction_error: f64,
    pub sspe_per_replicate: Vec<f64>,
    pub components: Vec<ComponentMetrics>,
}

/// Pairwise summation.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

struct Scored {
    gammas: Vec<DVector<f64>>,
    covered: Option<Vec<Vec<bool>>>,
    sspe: f64,
}

fn score(sc: &SimulationScenario, rep: &Replicate, est: ReplicateEstimate) -> Scored {
    let y: Vec<f64> = rep.dataset.records().iter().map(|r| r.y).collect();
    let sq: Vec<f64> = y
        .iter()
        .zip(est.marginal_fitted.iter())
        .map(|(a, b)| (a - b).powi(2))
        .collect();
    let truth = |d: usize| {
        rep.gammas
            .get(d)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(sc.p))
    };
    let covered = est.bands.map(|bands| {
        bands
            .iter()
            .enumerate()
            .map(|(d, (lo, hi))| {
                let g = truth(d);
                (0..sc.p).map(|j| lo[j] <= g[j] && g[j] <= hi[j]).collect()
            })
            .collect()
    });
    Scored {
        gammas: est.gammas,
        covered,
        sspe: pairwise_sum(&sq) / sc.n_subjects as f64,
    }
}

/// Generates, fits and scores `replicates` datasets. Replicates run in
/// parallel; the reduction follows replicate order.
pub fn run_study(
    scenario: &SimulationScenario,
    replicates: usize,
    estimator: &dyn StudyEstimator,
) -> Result<StudyMetrics> {
    if replicates == 0 {
        return Err(Error::InvalidInput("replicates must be at least 1".into()));
    }
    scenario.validate()?;
    let outcomes: Vec<Result<Scored>> = (0..replicates as u64)
        .into_par_iter()
        .map(|k| {
            let rep = generate(scenario, k)?;
            let est = estimator.estimate(scenario, &rep)?;
            Ok(score(scenario, &rep, est))
        })
        .collect();

    let mut ok = Vec::new();
    let mut failure_messages = Vec::new();
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => ok.push(s),
            Err(e) => failure_messages.push(format!("replicate {k}: {e}")),
        }
    }
    if ok.is_empty() {
        return Err(Error::SingularSystem(format!(
            "every replicate failed; first: {}",
            failure_messages[0]
        )));
    }

    let grid = scenario.grid().points().to_vec();
    let p = grid.len();
    let n_comp = ok[0].gammas.len();
    let r = ok.len() as f64;
    let true_gammas = scenario.true_gammas();
    let components = (0..n_comp)
        .map(|d| {
            let truth = true_gammas
                .get(d)
                .cloned()
                .unwrap_or_else(|| DVector::zeros(p));
            let mse_per_replicate: Vec<f64> = ok
                .iter()
                .map(|s| (&s.gammas[d] - &truth).norm_squared())
                .collect();
            let mut mean_estimate = Vec::with_capacity(p);
            let mut var_terms = Vec::with_capacity(p);
            for j in 0..p {
                let col: Vec<f64> = ok.iter().map(|s| s.gammas[d][j]).collect();
                let m = mean(&col);
                let dev: Vec<f64> = col.iter().map(|v| (v - m).powi(2)).collect();
                var_terms.push(pairwise_sum(&dev) / r);
                mean_estimate.push(m);
            }
            let sq_bias = pairwise_sum(
                &mean_estimate
                    .iter()
                    .zip(truth.iter())
                    .map(|(m, g)| (m - g).powi(2))
                    .collect::<Vec<_>>(),
            );
            let coverage: Option<Vec<f64>> = if ok.iter().all(|s| s.covered.is_some()) {
                Some(
                    (0..p)
                        .map(|j| {
                            let hits = ok
                                .iter()
                                .filter(|s| s.covered.as_ref().expect("checked")[d][j])
                                .count();
                            hits as f64 / r
                        })
                        .collect(),
                )
            } else {
                None
            };
            ComponentMetrics {
                component: d,
                mse: mean(&mse_per_replicate),
                trace_var: pairwise_sum(&var_terms),
                sq_bias,
                mse_per_replicate,
                truth: truth.iter().copied().collect(),
                mean_estimate,
                mean_coverage: coverage.as_ref().map(|c| mean(c)),
                coverage,
            }
        })
        .collect();
    let sspe_per_replicate: Vec<f64> = ok.iter().map(|s| s.sspe).collect();
    Ok(StudyMetrics {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        replicates,
        failures: failure_messages.len(),
        failure_messages,
        grid,
        sspe: mean(&sspe_per_replicate),
        sum_sq_prediction_error: mean(&sspe_per_replicate) * scenario.n_subjects as f64,
        sspe_per_replicate,
        components,
    })
}

impl StudyMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics are always serializable")
    }

    /// Tidy CSV `component,s,coverage`.
    pub fn write_coverage_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
        wtr.write_record(["component", "s", "coverage"])
            .map_err(err)?;
        for c in &self.components {
            if let Some(cov) = &c.coverage {
                for (s, v) in self.grid.iter().zip(cov) {
                    wtr.write_record([c.component.to_string(), s.to_string(), v.to_string()])
                        .map_err(err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<coverage csv>", e))
    }

    /// Tidy CSV `component,s,truth,mean_estimate`.
    pub fn write_estimates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
        wtr.write_record(["component", "s", "truth", "mean_estimate"])
            .map_err(err)?;
        for c in &self.components {
            for j in 0..self.grid.len() {
                wtr.write_record([
                    c.component.to_string(),
                    self.grid[j].to_string(),
                    c.truth[j].to_string(),
                    c.mean_estimate[j].to_string(),
                ])
                .map_err(err)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<estimates csv>", e))
    }

    /// Writes `metrics.json`, `coverage.csv` and `estimates.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(path.display().to_string(), e))
        };
        let mut m = create("metrics.json")?;
        writeln!(m, "{}", self.to_json()).map_err(|e| Error::io("metrics.json", e))?;
        self.write_coverage_csv(create("coverage.csv")?)?;
        self.write_estimates_csv(create("estimates.csv")?)
    }
}
