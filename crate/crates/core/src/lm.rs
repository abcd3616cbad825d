//! Damped Gauss-Newton (Levenberg-Marquardt) with a central-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub(crate) struct LmSettings {
    pub max_iter: usize,
    pub step_tol: f64,
    pub jac_step: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_step: f64,
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian, one column per parameter.
pub(crate) fn jacobian(residuals: &impl Fn(&[f64]) -> Vec<f64>, p: &[f64], h: f64) -> DMatrix<f64> {
    let m = residuals(p).len();
    let mut jac = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        q[k] = p[k] + h;
        let plus = residuals(&q);
        q[k] = p[k] - h;
        let minus = residuals(&q);
        q[k] = p[k];
        for i in 0..m {
            jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimise `sum r_i(p)^2` starting from `start`.
pub(crate) fn minimize(residuals: impl Fn(&[f64]) -> Vec<f64>, start: &[f64], settings: LmSettings) -> LmOutcome {
    let mut p = start.to_vec();
    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut damping = 1e-3;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iter {
        iterations += 1;
        let jac = jacobian(&residuals, &p, settings.jac_step);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);

        // Retry with heavier damping until the cost drops.
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += damping * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial);
            let ct = cost(&rt);
            last_step = delta.norm();
            if ct <= c {
                p = trial;
                r = rt;
                c = ct;
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            damping *= 4.0;
            if last_step < settings.step_tol {
                break;
            }
        }
        if last_step < settings.step_tol {
            converged = true;
            break;
        }
        if !accepted {
            break;
        }
    }
    LmOutcome {
        params: p,
        cost: c,
        iterations,
        converged,
        last_step,
    }
}
