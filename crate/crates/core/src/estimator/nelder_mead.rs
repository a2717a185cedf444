//! Derivative-free simplex minimization.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Relative spread of simplex values at which the search stops.
    pub ftol: f64,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-8,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite()
            && 2.0 * (worst - best).abs() <= opts.ftol * (best.abs() + worst.abs()) + 1e-300
        {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let towards = |t: f64, x: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(x)
                .map(|(c, v)| c + t * (v - c))
                .collect()
        };

        let xr = towards(-1.0, &simplex[n].0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = towards(-2.0, &simplex[n].0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = towards(-0.5, &simplex[n].0);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = towards(0.5, &simplex[n].0);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let xs: Vec<f64> = x_best
                        .iter()
                        .zip(&entry.0)
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    let fs = eval(&xs);
                    *entry = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let res = minimize(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + 3.0,
            &[0.0, 0.0],
            &NelderMeadOptions {
                ftol: 1e-14,
                ..Default::default()
            },
        );
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-5);
        assert!((res.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock() {
        let res = minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2) + 1.0,
            &[-1.2, 1.0],
            &NelderMeadOptions {
                max_iter: 2000,
                ftol: 1e-15,
                step: 0.5,
            },
        );
        assert!((res.x[0] - 1.0).abs() < 1e-3, "{:?}", res.x);
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let res = minimize(
            |x| x[0].abs().sqrt() + x[1].abs() + 1.0,
            &[5.0, 5.0],
            &NelderMeadOptions {
                max_iter: 3,
                ftol: 0.0,
                step: 1.0,
            },
        );
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn one_dimensional() {
        let res = minimize(
            |x| (x[0] - 3.0).powi(2) + 1.0,
            &[0.0],
            &NelderMeadOptions::default(),
        );
        assert!((res.x[0] - 3.0).abs() < 1e-3);
    }
}
