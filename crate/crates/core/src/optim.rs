//! Small dense optimizers: box-bounded Nelder–Mead and Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below
    /// `f_tol * (|f_best| + f_tol)`.
    pub f_tol: f64,
    /// ... and the simplex diameter falls below `x_tol`.
    pub x_tol: f64,
    /// Initial simplex edge along each coordinate.
    pub initial_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Nelder–Mead with dimension-adaptive coefficients; trial points are
/// projected onto the box `[lower, upper]`.
pub fn nelder_mead<F>(
    f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
    let (rho, sigma) = (0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&start);
    simplex.push((start.clone(), v0));
    for i in 0..n {
        let mut p = start.clone();
        let step = opts.initial_step.get(i).copied().unwrap_or(0.1);
        p[i] += step;
        if p[i] > upper[i] {
            p[i] = start[i] - step;
        }
        clamp_into(&mut p, lower, upper);
        let v = eval(&p);
        simplex.push((p, v));
    }

    let mut converged = false;
    while evals.get() < opts.max_evals {
        // stable sort keeps ties deterministic
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.f_tol * (best.abs() + opts.f_tol) && diameter <= opts.x_tol
        {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (p, v) in simplex.iter_mut().skip(1) {
                    for (pi, bi) in p.iter_mut().zip(&best) {
                        *pi = bi + sigma * (*pi - bi);
                    }
                    *v = eval(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals: evals.get(),
        converged,
    }
}

/// Result of a weighted least-squares fit.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub params: Vec<f64>,
    /// `(J^T J)^-1` of the whitened residuals.
    pub covariance: DMatrix<f64>,
    /// Sum of squared whitened residuals.
    pub chi2: f64,
    pub iterations: usize,
}

/// Outcome of [`lm_minimize`].
#[derive(Debug, Clone)]
pub struct LmState {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn forward_jacobian<F>(residuals: &F, p: &[f64], r: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(r.len(), p.len());
    for k in 0..p.len() {
        let h = 1e-7 * p[k].abs().max(1e-8);
        let mut q = p.to_vec();
        q[k] += h;
        let rq = DVector::from_vec(residuals(&q));
        jac.set_column(k, &((rq - r) / h));
    }
    jac
}

/// Levenberg–Marquardt iterations on residuals `r(p)` with a
/// forward-difference Jacobian. Parameters are projected onto
/// `[lower, upper]` after each step. Never fails; `converged` reports
/// whether the step or cost change fell below tolerance.
pub fn lm_minimize<F>(
    residuals: F,
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iter: usize,
) -> LmState
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = p0.len();
    let mut p = p0.to_vec();
    clamp_into(&mut p, lower, upper);
    let mut r = DVector::from_vec(residuals(&p));
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return LmState {
            params: p,
            cost,
            iterations: 0,
            converged: false,
        };
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let jac = forward_jacobian(&residuals, &p, &r);
        let mut jtj = jac.transpose() * &jac;
        let mut grad = jac.transpose() * &r;
        // freeze parameters pinned at a bound by a gradient pointing outward
        for k in 0..np {
            let pinned = (p[k] <= lower[k] && grad[k] > 0.0) || (p[k] >= upper[k] && grad[k] < 0.0);
            if pinned {
                grad[k] = 0.0;
                jtj.row_mut(k).fill(0.0);
                jtj.column_mut(k).fill(0.0);
                jtj[(k, k)] = 1.0;
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for k in 0..np {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp_into(&mut trial, lower, upper);
            let rt = DVector::from_vec(residuals(&trial));
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(1e-300);
                let moved = trial
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1e-12))
                    .fold(0.0, f64::max);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-10 || moved < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || converged || cost < 1e-28 {
            converged = true;
            break;
        }
    }
    LmState {
        params: p,
        cost,
        iterations,
        converged,
    }
}

/// [`lm_minimize`] plus the covariance `(J^T J)^-1` at the optimum; fails
/// when the iteration limit is hit or the normal matrix is singular.
pub fn levenberg_marquardt<F>(
    residuals: F,
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iter: usize,
) -> Result<LeastSquaresFit>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let state = lm_minimize(&residuals, p0, lower, upper, max_iter);
    if !state.cost.is_finite() {
        return Err(Error::invalid(
            "least-squares residuals are not finite at the start point",
        ));
    }
    if !state.converged {
        return Err(Error::NonConvergence {
            what: "Levenberg-Marquardt fit",
            residual: state.cost,
        });
    }
    let r = DVector::from_vec(residuals(&state.params));
    let jac = forward_jacobian(&residuals, &state.params, &r);
    let covariance = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or(Error::Singular("least-squares normal matrix"))?;
    Ok(LeastSquaresFit {
        params: state.params,
        covariance,
        chi2: state.cost,
        iterations: state.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 5000,
            f_tol: 1e-14,
            x_tol: 1e-8,
            initial_step: vec![0.5, 0.5],
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!(m.converged);
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(m.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 2000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            initial_step: vec![0.3, 0.3],
        };
        let m = nelder_mead(f, &[0.0, 0.0], &[-1.0, -0.5], &[1.0, 1.0], &opts);
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(m.x[1], -0.5, epsilon = 1e-6);
    }

    #[test]
    fn lm_recovers_exponential() {
        let ts: Vec<f64> = (0..15).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 0.8 * (-t / 1.3f64).exp()).collect();
        let fit = levenberg_marquardt(
            |p| {
                ts.iter()
                    .zip(&ys)
                    .map(|(t, y)| (p[0] * (-t / p[1]).exp() - y) / 0.01)
                    .collect()
            },
            &[1.0, 0.5],
            &[0.0, 1e-6],
            &[2.0, 100.0],
            200,
        )
        .unwrap();
        assert_relative_eq!(fit.params[0], 0.8, max_relative = 1e-7);
        assert_relative_eq!(fit.params[1], 1.3, max_relative = 1e-7);
        assert!(fit.covariance[(1, 1)] > 0.0);
    }
}
