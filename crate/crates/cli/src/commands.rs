use std::path::Path;

use longpeer::dataset::{
    build_design, load_dataset, parse_grid_spec, write_dataset, DesignOptions, LongitudinalDataset,
    RandomEffectSpec, TimeStructure,
};
use longpeer::estimator::{
    component_band, gamma_at_time, reml_fit, RemlOptions, VarianceComponents,
};
use longpeer::gsvd_oracle::cross_check;
use longpeer::penalty::{
    make_decomposition, make_ridge, make_second_difference, read_q_basis, write_q_basis,
    BlockPenalty, PenaltyMatrix, PenaltySpec,
};
use longpeer::selection::{
    compare_time_structures, default_phi_grid, phi_grid_search, SelectionOptions,
};
use longpeer::simulate::{generate, run_study, PeerEstimator, SimulationScenario};
use longpeer::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::Staging;
use crate::{DataArgs, FitArgs, GsvdArgs, PenaltyArgs, SelectArgs, SimulateArgs};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn load(data: &DataArgs) -> Result<LongitudinalDataset> {
    let grid = parse_grid_spec(&read_text(&data.grid)?)?;
    let ds = load_dataset(
        &data.outcomes,
        &data.curves,
        grid,
        RandomEffectSpec::default(),
    )?;
    match &data.covariates {
        Some(names) => ds.select_covariates(names),
        None => Ok(ds),
    }
}

fn design_options(data: &DataArgs) -> Result<DesignOptions> {
    Ok(DesignOptions {
        quadrature: data.quadrature.parse()?,
        center: data.center,
        ..DesignOptions::default()
    })
}

fn data_inputs(st: &mut Staging, data: &DataArgs, pen: &PenaltyArgs) -> Result<()> {
    st.add_input(&data.outcomes)?;
    st.add_input(&data.curves)?;
    st.add_input(&data.grid)?;
    if let Some(q) = &pen.q_basis {
        st.add_input(q)?;
    }
    Ok(())
}

fn load_q(pen: &PenaltyArgs, p: usize) -> Result<DMatrix<f64>> {
    let path = pen
        .q_basis
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("the decomposition penalty needs --q-basis".into()))?;
    let q = read_q_basis(path)?;
    if q.nrows() != p {
        return Err(Error::GridMismatch {
            expected: p,
            found: q.nrows(),
            context: "Q basis rows".into(),
        });
    }
    Ok(q)
}

fn penalty_spec(pen: &PenaltyArgs, p: usize) -> Result<PenaltySpec> {
    let kind = pen.penalty.clone().unwrap_or_else(|| {
        if pen.q_basis.is_some() {
            "decomposition"
        } else {
            "ridge"
        }
        .to_string()
    });
    match kind.as_str() {
        "ridge" => Ok(PenaltySpec::ridge()),
        "second-difference" => Ok(PenaltySpec::second_difference()),
        "decomposition" => Ok(PenaltySpec::decomposition(
            load_q(pen, p)?,
            pen.phi_a,
            pen.phi_b,
        )),
        other => Err(Error::InvalidInput(format!("unknown penalty `{other}`"))),
    }
}

fn fmt_t(t: f64) -> String {
    t.to_string()
}

pub fn fit(a: &FitArgs) -> Result<u8> {
    let ds = load(&a.data)?;
    let ts = TimeStructure::parse(&a.time_basis)?;
    let spec = penalty_spec(&a.penalty, ds.grid().len())?;
    longpeer::estimator::z_value(a.level)?;
    let dm = build_design(&ds, &ts, &design_options(&a.data)?)?;
    let opts = RemlOptions {
        unconditional: a.unconditional,
        ..RemlOptions::default()
    };
    let fit = reml_fit(&dm, &vec![spec; ts.n_components()], &opts)?;

    let mut st = Staging::new(&a.out, a.force)?;
    data_inputs(&mut st, &a.data, &a.penalty)?;
    st.write("fit.json", &(fit.to_json() + "\n"))?;
    for &t in &a.t_values {
        let band = gamma_at_time(&fit, t, a.level)?;
        band.write_csv(st.create(&format!("band_t{}.csv", fmt_t(t)))?)?;
    }
    for d in 0..fit.n_components() {
        component_band(&fit, d, a.level)?
            .write_csv(st.create(&format!("band_component{d}.csv"))?)?;
    }
    let marginal = &dm.x * &fit.beta + &dm.w * &fit.gamma;
    let mut wtr = csv::Writer::from_writer(st.create("residuals.csv")?);
    let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
    wtr.write_record([
        "subject",
        "t",
        "observed",
        "fitted",
        "residual",
        "population_fitted",
    ])
    .map_err(err)?;
    for (i, row) in dm.rows.iter().enumerate() {
        wtr.write_record([
            dm.subjects[row.subject].id.clone(),
            row.t.to_string(),
            dm.y[i].to_string(),
            fit.fitted[i].to_string(),
            (dm.y[i] - fit.fitted[i]).to_string(),
            marginal[i].to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "residuals.csv".into(),
        source: e,
    })?;
    drop(wtr);
    let out = st.finish("fit", a.seed)?;
    println!("wrote {}", out.display());
    Ok(0)
}

fn resolve_scenario(name: &str, st: &mut Staging) -> Result<SimulationScenario> {
    let path = Path::new(name);
    if path.is_file() {
        st.add_input(path)?;
        return SimulationScenario::from_json(&read_text(path)?);
    }
    match SimulationScenario::preset(name) {
        Some(sc) => {
            st.add_named_input(&format!("preset:{name}"), sc.to_json().as_bytes());
            Ok(sc)
        }
        None => Err(Error::InvalidInput(format!(
            "scenario `{name}` is neither a readable file nor a preset"
        ))),
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<u8> {
    let mut st = Staging::new(&a.out, a.force)?;
    let mut sc = resolve_scenario(&a.scenario, &mut st)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    sc.validate()?;
    println!("seed: {}", sc.seed);
    let est = PeerEstimator::from_scenario(&sc);
    let metrics = run_study(&sc, a.replicates as usize, &est)?;
    st.write("scenario.json", &(sc.to_json() + "\n"))?;
    metrics.write_outputs(st.dir())?;

    let mut wtr = csv::Writer::from_writer(st.create("table.csv")?);
    let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
    wtr.write_record(["quantity", "component", "value"])
        .map_err(err)?;
    for c in &metrics.components {
        let d = c.component.to_string();
        for (q, v) in [
            ("mse", c.mse),
            ("trace_variance", c.trace_var),
            ("squared_bias_norm", c.sq_bias),
        ] {
            wtr.write_record([q, d.as_str(), &v.to_string()])
                .map_err(err)?;
        }
        if let Some(cov) = c.mean_coverage {
            wtr.write_record(["mean_coverage", d.as_str(), &cov.to_string()])
                .map_err(err)?;
        }
    }
    wtr.write_record(["sspe", "", &metrics.sspe.to_string()])
        .map_err(err)?;
    wtr.write_record([
        "sum_sq_prediction_error",
        "",
        &metrics.sum_sq_prediction_error.to_string(),
    ])
    .map_err(err)?;
    wtr.flush().map_err(|e| Error::Io {
        path: "table.csv".into(),
        source: e,
    })?;
    drop(wtr);

    if let Some(k) = a.export_replicate {
        let rep = generate(&sc, k)?;
        let rel = format!("replicate_{k}");
        let dir = st.dir().join(&rel);
        write_dataset(&rep.dataset, &dir)?;
        write_q_basis(&sc.q_basis(), st.create(&format!("{rel}/q_basis.csv"))?)?;
        let fit = est.fit_replicate(&rep)?;
        st.write(&format!("{rel}/fit.json"), &(fit.to_json() + "\n"))?;
    }
    for c in &metrics.components {
        print!(
            "component {}: mse={:.6} trace_var={:.6} sq_bias={:.6}",
            c.component, c.mse, c.trace_var, c.sq_bias
        );
        match c.mean_coverage {
            Some(v) => println!(" coverage={v:.4}"),
            None => println!(),
        }
    }
    println!("sspe={:.6} failures={}", metrics.sspe, metrics.failures);
    st.finish("simulate", Some(sc.seed))?;
    Ok(0)
}

pub fn select(a: &SelectArgs) -> Result<u8> {
    let ds = load(&a.data)?;
    let p = ds.grid().len();
    let opts = SelectionOptions {
        design: design_options(&a.data)?,
        level: a.level,
        ..SelectionOptions::default()
    };
    longpeer::estimator::z_value(a.level)?;
    let report = match &a.compare {
        Some(list) => {
            let candidates = list
                .split(';')
                .map(TimeStructure::parse)
                .collect::<Result<Vec<_>>>()?;
            let spec = penalty_spec(&a.penalty, p)?;
            compare_time_structures(&ds, &candidates, &spec, &opts)?
        }
        None => {
            if a.penalty
                .penalty
                .as_deref()
                .is_some_and(|k| k != "decomposition")
            {
                return Err(Error::InvalidInput(
                    "the phi_a search needs the decomposition penalty".into(),
                ));
            }
            let q = load_q(&a.penalty, p)?;
            let grid = a.phi_grid.clone().unwrap_or_else(default_phi_grid);
            let ts = TimeStructure::parse(&a.time_basis)?;
            phi_grid_search(&ds, &ts, &q, &grid, &opts)?
        }
    };
    let mut st = Staging::new(&a.out, a.force)?;
    data_inputs(&mut st, &a.data, &a.penalty)?;
    st.write("selection.json", &(report.to_json() + "\n"))?;
    report.write_csv(st.create("selection.csv")?)?;
    let c = report.chosen();
    println!(
        "chosen: {} (time structure {}, phi_a {}, aic {})",
        c.label,
        c.time_structure.label(),
        c.phi_a.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
        c.aic.map(|v| v.to_string()).unwrap_or_default()
    );
    st.finish("select", a.seed)?;
    Ok(0)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn penalty_block(kind: &str, p: usize, rng: &mut ChaCha8Rng) -> Result<PenaltyMatrix> {
    match kind {
        "ridge" => Ok(make_ridge(p)),
        "second-difference" => make_second_difference(p),
        "decomposition" => make_decomposition(&random_matrix(rng, p, (p / 3).max(1)), 10.0, 1.0),
        other => Err(Error::InvalidInput(format!("unknown penalty `{other}`"))),
    }
}

pub fn gsvd_check(a: &GsvdArgs) -> Result<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (x, w, y, bp, v) = match &a.dataset_dir {
        Some(dir) => {
            let grid = parse_grid_spec(&read_text(&dir.join("grid.json"))?)?;
            let ds = load_dataset(
                &dir.join("outcomes.csv"),
                &dir.join("curves.csv"),
                grid,
                RandomEffectSpec::default(),
            )?;
            let ts = TimeStructure::parse(&a.time_basis)?;
            let dm = build_design(&ds, &ts, &DesignOptions::default())?;
            let blocks = (0..dm.n_components)
                .map(|_| penalty_block(&a.penalty, dm.p, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let vc = VarianceComponents::new(
                vec![a.lambda; dm.n_components],
                a.sigma_eps_sq,
                a.sigma_b_sq,
            );
            let v = vc.covariance(&dm)?;
            let bp = BlockPenalty::assemble(&blocks, &vc.lambda)?;
            use longpeer::estimator::CovarianceOperator;
            (dm.x.clone(), dm.w.clone(), dm.y.clone(), bp, v.to_dense())
        }
        None => {
            if a.n == 0 || a.p == 0 {
                return Err(Error::InvalidInput("--n and --p must be positive".into()));
            }
            let w = random_matrix(&mut rng, a.n, a.p);
            let x = random_matrix(&mut rng, a.n, a.k);
            let y = DVector::from_fn(a.n, |_, _| rng.random_range(-1.0..1.0));
            let m = random_matrix(&mut rng, a.n, a.n);
            let v = &m * m.transpose() / a.n as f64 + DMatrix::identity(a.n, a.n);
            let block = penalty_block(&a.penalty, a.p, &mut rng)?;
            let bp = BlockPenalty::assemble(&[block], &[a.lambda])?;
            (x, w, y, bp, v)
        }
    };
    let gamma_true = DVector::from_fn(w.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let check = cross_check(&x, &w, &y, &bp, &v, &gamma_true)?;
    let worst = check.max_discrepancy();
    let pass = worst < a.tolerance;
    let body = serde_json::json!({
        "seed": a.seed,
        "check": check,
        "max_discrepancy": worst,
        "tolerance": a.tolerance,
        "pass": pass,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&body).expect("serializable")
    );
    Ok(if pass { 0 } else { 1 })
}
