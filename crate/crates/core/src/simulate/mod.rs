//! Seeded generators for bumpy predictor curves and outcomes, and a study
//! harness that scores repeated fits against the known truth.
//!
//! Random streams: a replicate `k` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! with stream `16·k + purpose`, where purpose 0 generates curves, 1 the
//! subject effects and 2 the outcome noise. Any replicate can therefore be
//! regenerated on its own.

mod study;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    FunctionalRecord, LongitudinalDataset, Quadrature, RandomEffectSpec, SampleGrid, TimeStructure,
};
use crate::error::{Error, Result};

pub use study::{
    run_study, ComponentMetrics, PeerEstimator, ReplicateEstimate, StudyEstimator, StudyMetrics,
    TruthEstimator,
};

/// One Gaussian bump `a·exp(−width·(u − h/100)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    /// Center in index units, `0..=100`.
    pub center: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Bump {
    pub fn new(center: f64, amplitude: f64, width: f64) -> Self {
        Self {
            center,
            amplitude,
            width,
        }
    }

    /// Unit-amplitude shape at `u`.
    pub fn shape(&self, u: f64) -> f64 {
        (-self.width * (u - self.center / 100.0).powi(2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BumpTable {
    pub entries: Vec<Bump>,
}

impl BumpTable {
    pub fn new(entries: Vec<Bump>) -> Self {
        Self { entries }
    }

    fn group(width: f64, pairs: &[(f64, f64)]) -> Vec<Bump> {
        pairs.iter().map(|&(h, a)| Bump::new(h, a, width)).collect()
    }

    /// Predictor bumps: `H₁` (width 2500), `H₂` (width 1000) and the
    /// fixed bump at 50 (width 250).
    pub fn default_predictor() -> Self {
        let mut e = Self::group(2500.0, &[(15.0, 0.10), (5.0, 0.10)]);
        e.extend(Self::group(
            1000.0,
            &[(30.0, 0.60), (70.0, 0.50), (80.0, 0.50), (90.0, 0.40)],
        ));
        e.push(Bump::new(50.0, 0.9, 250.0));
        Self::new(e)
    }

    pub fn default_gamma0() -> Self {
        Self::new(Self::group(
            2500.0,
            &[(15.0, 0.20), (50.0, -0.15), (80.0, 0.15)],
        ))
    }

    pub fn default_gamma1() -> Self {
        Self::new(Self::group(2500.0, &[(30.0, 0.06), (70.0, -0.06)]))
    }

    /// Sum of the bumps on `grid`.
    pub fn evaluate(&self, grid: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            grid.len(),
            grid.iter()
                .map(|&u| self.entries.iter().map(|b| b.amplitude * b.shape(u)).sum()),
        )
    }

    /// One column per bump, unit amplitude: a basis for the preferred space.
    pub fn shapes(&self, grid: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(grid.len(), self.entries.len(), |j, k| {
            self.entries[k].shape(grid[j])
        })
    }
}

/// `γ(u_j) = Σ a_h exp(−width·(u_j − h/100)²)`.
pub fn gen_gamma(table: &BumpTable, grid: &[f64]) -> DVector<f64> {
    table.evaluate(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    SigmaEps(f64),
    /// `σ_ε` is solved per replicate from `R² = s_y²/(s_y² + σ_ε²)`.
    TargetR2(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationScenario {
    pub name: String,
    pub n_subjects: usize,
    pub visit_times: Vec<f64>,
    pub p: usize,
    pub beta0: f64,
    pub noise: NoiseLevel,
    pub sigma_b: f64,
    pub predictor_noise_sd: f64,
    /// Upper end of the `U(0, ξ_max)` amplitude jitter of each predictor bump.
    pub xi_max: f64,
    pub seed: u64,
    pub predictor: BumpTable,
    /// True `γ_0, …, γ_D`.
    pub gammas: Vec<BumpTable>,
    pub time_structure: TimeStructure,
    /// Bumps whose shapes span the preferred space of the penalty.
    pub q_bumps: BumpTable,
    pub phi_a: f64,
    pub phi_b: f64,
    pub quadrature: Quadrature,
    /// Time structure used by the fit; defaults to the true one.
    pub fit_time_structure: Option<TimeStructure>,
    pub level: f64,
}

impl Default for SimulationScenario {
    fn default() -> Self {
        Self::time_invariant()
    }
}

impl SimulationScenario {
    /// Time-invariant coefficient, `σ_ε = 0.02`.
    pub fn time_invariant() -> Self {
        Self {
            name: "time-invariant".into(),
            n_subjects: 100,
            visit_times: vec![0.0, 1.0, 2.0, 3.0],
            p: 100,
            beta0: 0.06,
            noise: NoiseLevel::SigmaEps(0.02),
            sigma_b: 0.05,
            predictor_noise_sd: 0.01,
            xi_max: 0.1,
            seed: 0,
            predictor: BumpTable::default_predictor(),
            gammas: vec![BumpTable::default_gamma0()],
            time_structure: TimeStructure::constant(),
            q_bumps: default_q_bumps(),
            phi_a: 10.0,
            phi_b: 1.0,
            quadrature: Quadrature::Unit,
            fit_time_structure: None,
            level: 0.95,
        }
    }

    /// `γ_0(s) + tγ_1(s)` with noise set by a target `R²`.
    pub fn time_varying(n_subjects: usize, r2: f64) -> Self {
        Self {
            name: format!("time-varying-n{n_subjects}-r2{r2}"),
            n_subjects,
            noise: NoiseLevel::TargetR2(r2),
            gammas: vec![BumpTable::default_gamma0(), BumpTable::default_gamma1()],
            time_structure: TimeStructure::linear(),
            ..Self::time_invariant()
        }
    }

    /// Time-varying design at `R² = 0.9` used for band coverage.
    pub fn coverage(n_subjects: usize) -> Self {
        Self {
            name: format!("coverage-n{n_subjects}"),
            ..Self::time_varying(n_subjects, 0.9)
        }
    }

    /// Preferred space missing the feature at `s = 0.5`.
    pub fn partial_information(n_subjects: usize) -> Self {
        let mut q = default_q_bumps();
        q.entries.retain(|b| b.center != 50.0);
        Self {
            name: format!("partial-information-n{n_subjects}"),
            q_bumps: q,
            phi_a: 10f64.powf(0.75),
            ..Self::time_varying(n_subjects, 0.9)
        }
    }

    /// Looks up a named preset: `time-invariant`, `time-varying`,
    /// `coverage`, `partial-information`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "time-invariant" => Some(Self::time_invariant()),
            "time-varying" => Some(Self::time_varying(100, 0.9)),
            "coverage" => Some(Self::coverage(100)),
            "partial-information" => Some(Self::partial_information(100)),
            _ => None,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let s: Self =
            serde_json::from_str(json).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_subjects < 2 {
            return bad(format!("need at least 2 subjects, got {}", self.n_subjects));
        }
        if self.visit_times.is_empty() || self.visit_times.iter().any(|t| !t.is_finite()) {
            return bad("visit times must be finite and nonempty".into());
        }
        if self.p < 2 {
            return Err(Error::GridTooSmall(self.p));
        }
        match self.noise {
            NoiseLevel::SigmaEps(s) if !(s >= 0.0 && s.is_finite()) => {
                return bad(format!("sigma_eps must be nonnegative, got {s}"))
            }
            NoiseLevel::TargetR2(r) if !(r > 0.0 && r < 1.0) => {
                return bad(format!("target R² must be in (0, 1), got {r}"))
            }
            _ => {}
        }
        for (name, v) in [
            ("sigma_b", self.sigma_b),
            ("predictor_noise_sd", self.predictor_noise_sd),
            ("xi_max", self.xi_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.phi_a > 0.0 && self.phi_b > 0.0) {
            return Err(Error::NonPositivePhi {
                phi_a: self.phi_a,
                phi_b: self.phi_b,
            });
        }
        if self.gammas.len() != self.time_structure.n_components() {
            return bad(format!(
                "{} coefficient tables for {} time components",
                self.gammas.len(),
                self.time_structure.n_components()
            ));
        }
        if self.q_bumps.entries.is_empty() {
            return Err(Error::ZeroBasis);
        }
        let all = self
            .predictor
            .entries
            .iter()
            .chain(self.q_bumps.entries.iter())
            .chain(self.gammas.iter().flat_map(|g| g.entries.iter()));
        for b in all {
            if !(0.0..=100.0).contains(&b.center) || !(b.width >= 0.0) || !b.amplitude.is_finite() {
                return bad(format!("bump {b:?} out of range"));
            }
        }
        crate::estimator::z_value(self.level)?;
        Ok(())
    }

    pub fn grid(&self) -> SampleGrid {
        SampleGrid::equispaced(self.p).expect("validated grid size")
    }

    pub fn fit_structure(&self) -> &TimeStructure {
        self.fit_time_structure
            .as_ref()
            .unwrap_or(&self.time_structure)
    }

    /// `p × J` preferred-space basis on the scenario grid.
    pub fn q_basis(&self) -> DMatrix<f64> {
        self.q_bumps.shapes(self.grid().points())
    }

    pub fn true_gammas(&self) -> Vec<DVector<f64>> {
        let grid = self.grid();
        self.gammas
            .iter()
            .map(|g| gen_gamma(g, grid.points()))
            .collect()
    }
}

/// Unit bumps at the predictor bump centers with matching widths.
pub fn default_q_bumps() -> BumpTable {
    BumpTable::new(
        BumpTable::default_predictor()
            .entries
            .into_iter()
            .map(|b| Bump::new(b.center, 1.0, b.width))
            .collect(),
    )
}

/// Stream offsets inside a replicate.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Purpose {
    Predictor = 0,
    RandomEffect = 1,
    Noise = 2,
}

pub fn stream_rng(seed: u64, replicate: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate * 16 + purpose as u64);
    rng
}

/// One predictor curve: bump amplitudes jittered by `U(0, ξ_max)` and white
/// noise added pointwise.
pub fn gen_predictor<R: Rng>(scenario: &SimulationScenario, grid: &[f64], rng: &mut R) -> Vec<f64> {
    let amps: Vec<f64> = scenario
        .predictor
        .entries
        .iter()
        .map(|b| {
            let xi = if scenario.xi_max > 0.0 {
                rng.random_range(0.0..scenario.xi_max)
            } else {
                0.0
            };
            b.amplitude + xi
        })
        .collect();
    let noise = Normal::new(0.0, scenario.predictor_noise_sd).expect("validated sd");
    grid.iter()
        .map(|&u| {
            let s: f64 = scenario
                .predictor
                .entries
                .iter()
                .zip(&amps)
                .map(|(b, a)| a * b.shape(u))
                .sum();
            if scenario.predictor_noise_sd > 0.0 {
                s + noise.sample(rng)
            } else {
                s
            }
        })
        .collect()
}

/// Average over visits of the across-subject sample variance of `values`
/// laid out subject-major with `visits` entries per subject.
pub fn average_visit_variance(values: &[f64], visits: usize) -> f64 {
    let n = values.len() / visits;
    if n < 2 {
        return 0.0;
    }
    let total: f64 = (0..visits)
        .map(|t| {
            let col: Vec<f64> = (0..n).map(|i| values[i * visits + t]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .sum();
    total / visits as f64
}

/// Generated data for one replicate together with the truth.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: u64,
    pub dataset: LongitudinalDataset,
    pub gammas: Vec<DVector<f64>>,
    /// `β_0 + δ·w'γ_(t)` per observation, subject-major.
    pub signal: Vec<f64>,
    /// `signal + b_i`.
    pub noiseless: Vec<f64>,
    pub sigma_eps: f64,
}

/// Outcome vectors for one replicate, subject-major.
#[derive(Debug, Clone)]
pub struct Outcomes {
    pub y: Vec<f64>,
    /// `β_0 + δ·w'γ_(t)`.
    pub signal: Vec<f64>,
    /// `signal + b_i`.
    pub noiseless: Vec<f64>,
    pub sigma_eps: f64,
}

/// Outcomes `y = β_0 + δ·w'γ_(t) + b_i + ε` for curves laid out subject-major.
pub fn gen_outcomes(
    scenario: &SimulationScenario,
    curves: &[Vec<f64>],
    gammas: &[DVector<f64>],
    replicate: u64,
) -> Outcomes {
    let visits = scenario.visit_times.len();
    let delta = match scenario.quadrature {
        Quadrature::Unit => 1.0,
        Quadrature::Riemann => 1.0 / scenario.p as f64,
    };
    let mut b_rng = stream_rng(scenario.seed, replicate, Purpose::RandomEffect);
    let b_dist = Normal::new(0.0, scenario.sigma_b).expect("validated sd");
    let b: Vec<f64> = (0..scenario.n_subjects)
        .map(|_| b_dist.sample(&mut b_rng))
        .collect();

    let signal: Vec<f64> = curves
        .iter()
        .enumerate()
        .map(|(row, w)| {
            let f = scenario
                .time_structure
                .row(scenario.visit_times[row % visits]);
            let lin: f64 = f
                .iter()
                .zip(gammas)
                .map(|(fd, g)| fd * w.iter().zip(g.iter()).map(|(a, c)| a * c).sum::<f64>())
                .sum();
            scenario.beta0 + delta * lin
        })
        .collect();
    let noiseless: Vec<f64> = signal
        .iter()
        .enumerate()
        .map(|(row, s)| s + b[row / visits])
        .collect();

    let sigma_eps = match scenario.noise {
        NoiseLevel::SigmaEps(s) => s,
        NoiseLevel::TargetR2(r2) => {
            let sy2 = average_visit_variance(&noiseless, visits);
            (sy2 * (1.0 - r2) / r2).sqrt()
        }
    };
    let mut e_rng = stream_rng(scenario.seed, replicate, Purpose::Noise);
    let e_dist = Normal::new(0.0, sigma_eps).expect("finite sd");
    let y = noiseless
        .iter()
        .map(|s| s + e_dist.sample(&mut e_rng))
        .collect();
    Outcomes {
        y,
        signal,
        noiseless,
        sigma_eps,
    }
}

/// Generates replicate `index` of the scenario.
pub fn generate(scenario: &SimulationScenario, index: u64) -> Result<Replicate> {
    scenario.validate()?;
    let grid = scenario.grid();
    let gammas = scenario.true_gammas();
    let mut w_rng = stream_rng(scenario.seed, index, Purpose::Predictor);
    let visits = scenario.visit_times.len();
    let curves: Vec<Vec<f64>> = (0..scenario.n_subjects * visits)
        .map(|_| gen_predictor(scenario, grid.points(), &mut w_rng))
        .collect();
    let out = gen_outcomes(scenario, &curves, &gammas, index);
    let width = scenario.n_subjects.to_string().len();
    let records = curves
        .into_iter()
        .zip(&out.y)
        .enumerate()
        .map(|(row, (w, y))| FunctionalRecord {
            subject: format!("s{:0width$}", row / visits + 1),
            t: scenario.visit_times[row % visits],
            y: *y,
            x: Vec::new(),
            w,
        })
        .collect();
    let dataset = LongitudinalDataset::new(grid, Vec::new(), records, RandomEffectSpec::default())?;
    Ok(Replicate {
        index,
        dataset,
        gammas,
        signal: out.signal,
        noiseless: out.noiseless,
        sigma_eps: out.sigma_eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_peaks_and_closed_form() {
        let grid = SampleGrid::equispaced(101).unwrap();
        let g0 = gen_gamma(&BumpTable::default_gamma0(), grid.points());
        assert!((g0[15] - 0.20).abs() < 1e-3);
        assert!((g0[50] + 0.15).abs() < 1e-3);
        assert!((g0[80] - 0.15).abs() < 1e-3);
        assert!(gen_gamma(&BumpTable::default(), grid.points())
            .iter()
            .all(|v| *v == 0.0));

        let t = BumpTable::new(vec![Bump::new(50.0, 1.0, 2500.0)]);
        let d = (2.0f64 / 2500.0).sqrt();
        let v = t.evaluate(&[0.5, 0.5 + d, 0.5 - d]);
        assert_eq!(v[0], 1.0);
        assert!((v[1] - (-2.0f64).exp()).abs() < 1e-12);
        assert!((d - 0.0283).abs() < 1e-4);
        assert!((v[1] - 0.135).abs() < 1e-3);
    }

    #[test]
    fn deterministic_predictor_without_jitter() {
        let sc = SimulationScenario {
            xi_max: 0.0,
            predictor_noise_sd: 0.0,
            ..SimulationScenario::time_invariant()
        };
        let grid = sc.grid();
        let mut rng = stream_rng(1, 0, Purpose::Predictor);
        let w = gen_predictor(&sc, grid.points(), &mut rng);
        let expected = sc.predictor.evaluate(grid.points());
        for (a, b) in w.iter().zip(expected.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn predictor_streams_are_reproducible() {
        let sc = SimulationScenario::time_invariant();
        let grid = sc.grid();
        let a = gen_predictor(
            &sc,
            grid.points(),
            &mut stream_rng(9, 3, Purpose::Predictor),
        );
        let b = gen_predictor(
            &sc,
            grid.points(),
            &mut stream_rng(9, 3, Purpose::Predictor),
        );
        let c = gen_predictor(
            &sc,
            grid.points(),
            &mut stream_rng(9, 4, Purpose::Predictor),
        );
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn predictor_mean_matches_expectation() {
        let sc = SimulationScenario::time_invariant();
        let u = 0.3;
        let draws = 10_000;
        let mut rng = stream_rng(5, 0, Purpose::Predictor);
        let vals: Vec<f64> = (0..draws)
            .map(|_| gen_predictor(&sc, &[u], &mut rng)[0])
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        let expected: f64 = sc
            .predictor
            .entries
            .iter()
            .map(|b| (b.amplitude + 0.05) * b.shape(u))
            .sum();
        assert!(
            (mean - expected).abs() < 3.0 * sd / (draws as f64).sqrt(),
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn noiseless_outcome_is_intercept() {
        let sc = SimulationScenario {
            sigma_b: 0.0,
            noise: NoiseLevel::SigmaEps(0.0),
            gammas: vec![BumpTable::default()],
            n_subjects: 5,
            ..SimulationScenario::time_invariant()
        };
        let rep = generate(&sc, 0).unwrap();
        assert!(rep.dataset.records().iter().all(|r| r.y == 0.06));
    }

    #[test]
    fn target_r2_is_realized() {
        let sc = SimulationScenario::time_varying(200, 0.9);
        let rep = generate(&sc, 0).unwrap();
        let y: Vec<f64> = rep.dataset.records().iter().map(|r| r.y).collect();
        let visits = sc.visit_times.len();
        let r2 =
            average_visit_variance(&rep.noiseless, visits) / average_visit_variance(&y, visits);
        assert!((r2 - 0.9).abs() < 0.02, "{r2}");
    }

    #[test]
    fn noise_sd_for_time_invariant_design() {
        let sc = SimulationScenario::time_invariant();
        let rep = generate(&sc, 2).unwrap();
        assert_eq!(rep.sigma_eps, 0.02);
        let resid: Vec<f64> = rep
            .dataset
            .records()
            .iter()
            .zip(&rep.noiseless)
            .map(|(r, s)| r.y - s)
            .collect();
        let var = resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64;
        // 400 draws: sd of the variance estimate is about 0.0004·sqrt(2/400)
        assert!(
            (var - 0.0004).abs() < 4.0 * 0.0004 * (2.0f64 / 400.0).sqrt(),
            "{var}"
        );
    }

    #[test]
    fn scenario_json_round_trip_and_validation() {
        let sc = SimulationScenario::partial_information(50);
        assert_eq!(sc.q_bumps.entries.len(), 6);
        assert_eq!(default_q_bumps().entries.len(), 7);
        let back = SimulationScenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc);

        let partial =
            SimulationScenario::from_json(r#"{"n_subjects": 20, "noise": {"target_r2": 0.6}}"#)
                .unwrap();
        assert_eq!(partial.n_subjects, 20);
        assert_eq!(partial.noise, NoiseLevel::TargetR2(0.6));
        assert!(SimulationScenario::from_json(r#"{"n_subject": 20}"#).is_err());
        assert!(SimulationScenario::from_json(r#"{"noise": {"target_r2": 1.5}}"#).is_err());
        assert!(SimulationScenario::from_json(r#"{"gammas": []}"#).is_err());
    }

    #[test]
    fn exported_dataset_round_trips() {
        let sc = SimulationScenario {
            n_subjects: 4,
            ..SimulationScenario::time_invariant()
        };
        let rep = generate(&sc, 0).unwrap();
        let dir = std::env::temp_dir().join(format!("longpeer-sim-{}", std::process::id()));
        crate::dataset::write_dataset(&rep.dataset, &dir).unwrap();
        let back = crate::dataset::load_dataset(
            &dir.join("outcomes.csv"),
            &dir.join("curves.csv"),
            rep.dataset.grid().clone(),
            RandomEffectSpec::default(),
        )
        .unwrap();
        std::fs::remove_dir_all(&dir).ok();
        assert_eq!(back.records(), rep.dataset.records());
    }
}
