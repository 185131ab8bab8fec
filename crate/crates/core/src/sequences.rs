//! Dynamic-decoupling pulse timings.
//!
//! All timings are normalized to the total free-evolution time, so a pulse
//! at `alpha` fires at physical time `alpha * tau`. Polynomial drifts are
//! expressed against the same normalized time `t = time / tau`, which makes
//! every sequence here independent of `tau`.
//!
//! The segment before the first pulse carries sign `+1`; each pulse flips it.
//! An empty timing list denotes plain Ramsey free evolution.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A π-pulse train between the two Ramsey π/2 pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub label: String,
    pub n: usize,
    pub alphas: Vec<f64>,
    #[serde(rename = "tau_s")]
    pub tau: f64,
    #[serde(rename = "pulse_duration_s")]
    pub pulse_duration: f64,
    #[serde(rename = "pulse_phases_rad")]
    pub pulse_phases: Vec<f64>,
}

impl PulseSequence {
    /// Builds a validated sequence with zero drive phases.
    pub fn new(
        label: impl Into<String>,
        alphas: Vec<f64>,
        tau: f64,
        pulse_duration: f64,
    ) -> Result<Self> {
        let n = alphas.len();
        let seq = PulseSequence {
            label: label.into(),
            n,
            alphas,
            tau,
            pulse_duration,
            pulse_phases: vec![0.0; n],
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Ramsey free evolution (no π-pulses).
    pub fn ramsey(tau: f64) -> Result<Self> {
        Self::new("ramsey", Vec::new(), tau, 0.0)
    }

    pub fn udd(n: usize, tau: f64, pulse_duration: f64) -> Result<Self> {
        Self::new(format!("udd-{n}"), udd_times(n)?, tau, pulse_duration)
    }

    pub fn cpmg(n: usize, tau: f64, pulse_duration: f64) -> Result<Self> {
        Self::new(format!("cpmg-{n}"), cpmg_times(n)?, tau, pulse_duration)
    }

    /// Checks every structural invariant; deserialized values should be
    /// passed through here before use.
    pub fn validate(&self) -> Result<()> {
        validate_alphas(&self.alphas)?;
        if self.n != self.alphas.len() {
            return Err(Error::invalid(format!(
                "n = {} but {} pulse times given",
                self.n,
                self.alphas.len()
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.pulse_duration >= 0.0 && self.pulse_duration.is_finite()) {
            return Err(Error::invalid(format!(
                "pulse duration must be non-negative, got {}",
                self.pulse_duration
            )));
        }
        if self.n as f64 * self.pulse_duration >= self.tau {
            return Err(Error::invalid(format!(
                "{} pulses of {} s do not fit in tau = {} s",
                self.n, self.pulse_duration, self.tau
            )));
        }
        if self.pulse_phases.len() != self.n {
            return Err(Error::invalid(format!(
                "expected {} pulse phases, got {}",
                self.n,
                self.pulse_phases.len()
            )));
        }
        Ok(())
    }

    /// Same timings, rescaled to a new total duration.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut out = self.clone();
        out.tau = tau;
        out.validate()?;
        Ok(out)
    }

    pub fn with_pulse_duration(&self, pulse_duration: f64) -> Result<Self> {
        let mut out = self.clone();
        out.pulse_duration = pulse_duration;
        out.validate()?;
        Ok(out)
    }

    /// Pulse duration as a fraction of `tau`.
    pub fn pulse_fraction(&self) -> f64 {
        self.pulse_duration / self.tau
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let seq: PulseSequence = serde_json::from_str(text)?;
        seq.validate()?;
        Ok(seq)
    }
}

/// Coefficients of a frequency drift `delta(t) = sum_j coeffs[j] t^j` in
/// normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPolynomial {
    coeffs: Vec<f64>,
}

impl DriftPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid(
                "drift polynomial needs at least one coefficient",
            ));
        }
        Ok(DriftPolynomial { coeffs })
    }

    /// `t^degree`.
    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = 1.0;
        DriftPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * t + c / (j + 1) as f64)
            * t
    }
}

/// Rejects timings that are not strictly increasing inside (0, 1).
pub fn validate_alphas(alphas: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (i, &a) in alphas.iter().enumerate() {
        if !a.is_finite() || a <= prev || a >= 1.0 {
            return Err(Error::invalid(format!(
                "pulse times must be strictly increasing in (0, 1); entry {i} is {a}"
            )));
        }
        prev = a;
    }
    Ok(())
}

/// Uhrig timings `sin^2(pi i / (2(n+1)))`.
pub fn udd_times(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("a UDD sequence needs at least one pulse"));
    }
    let denom = (n + 1) as f64;
    Ok((1..=n)
        .map(|i| (FRAC_PI_2 * i as f64 / denom).sin().powi(2))
        .collect())
}

/// Equally spaced timings `(i - 1/2) / n`.
pub fn cpmg_times(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("a CPMG sequence needs at least one pulse"));
    }
    let nf = n as f64;
    Ok((1..=n).map(|i| (i as f64 - 0.5) / nf).collect())
}

/// `(-1)^n - 2 sum_i (-1)^i alpha_i^j`, the coefficient multiplying
/// `p_{j-1} / j` in the accumulated phase. Zero means drift of degree `j - 1`
/// is cancelled.
pub fn cancellation_residual(alphas: &[f64], j: u32) -> f64 {
    let n = alphas.len();
    let end = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let sum: f64 = alphas
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let sign = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
            sign * a.powi(j as i32)
        })
        .sum();
    end - 2.0 * sum
}

/// Largest `|cancellation_residual|` over `j = 1..=n`.
pub fn max_cancellation_residual(alphas: &[f64]) -> f64 {
    (1..=alphas.len() as u32)
        .map(|j| cancellation_residual(alphas, j).abs())
        .fold(0.0, f64::max)
}

/// Signed phase accumulated under `poly`, in units of `tau` (multiply by
/// `tau` for radians). Evaluated exactly from the antiderivative.
pub fn phase_error(alphas: &[f64], poly: &DriftPolynomial) -> f64 {
    let mut total = 0.0;
    let mut sign = 1.0;
    let mut start = 0.0;
    for &end in alphas.iter().chain(std::iter::once(&1.0)) {
        total += sign * (poly.integral(end) - poly.integral(start));
        sign = -sign;
        start = end;
    }
    total
}

/// Outcome of the Newton solve of the cancellation system.
#[derive(Debug, Clone)]
pub struct CancellationSolution {
    pub alphas: Vec<f64>,
    pub iterations: usize,
    /// `|residual_j|` for `j = 1..=n` at the returned point.
    pub residuals: Vec<f64>,
}

impl CancellationSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

const SOLVE_MAX_ITER: usize = 200;
const SOLVE_TOL: f64 = 1e-10;

/// Solves the `n` cancellation equations for the pulse times by damped
/// Newton iteration with the analytic Jacobian, starting from
/// `initial_guess`. Steps are halved until the iterate stays ordered and
/// interior and the residual norm does not grow.
pub fn solve_polynomial_cancellation(
    n: usize,
    initial_guess: &[f64],
) -> Result<CancellationSolution> {
    if n == 0 {
        return Err(Error::invalid("cancellation system needs n >= 1"));
    }
    if initial_guess.len() != n {
        return Err(Error::invalid(format!(
            "initial guess has {} entries, expected {n}",
            initial_guess.len()
        )));
    }
    validate_alphas(initial_guess)?;

    let residual_vec = |a: &[f64]| -> DVector<f64> {
        DVector::from_iterator(n, (1..=n as u32).map(|j| cancellation_residual(a, j)))
    };

    let mut alphas = initial_guess.to_vec();
    let mut r = residual_vec(&alphas);
    let mut norm = r.amax();
    let mut iterations = 0;

    while norm >= SOLVE_TOL * 1e-2 && iterations < SOLVE_MAX_ITER {
        iterations += 1;
        let jac = DMatrix::from_fn(n, n, |row, col| {
            let j = (row + 1) as f64;
            let sign = if (col + 1) % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * sign * j * alphas[col].powi(row as i32)
        });
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::Singular("cancellation Jacobian"))?;

        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = alphas
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + damping * s)
                .collect();
            if validate_alphas(&trial).is_ok() {
                let r_trial = residual_vec(&trial);
                let trial_norm = r_trial.amax();
                if trial_norm < norm || damping < 1e-6 {
                    alphas = trial;
                    r = r_trial;
                    norm = trial_norm;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            break;
        }
        // full-precision stop: further steps cannot reduce the residual
        if norm < SOLVE_TOL && step.amax() < 1e-15 {
            break;
        }
    }

    if !(norm < SOLVE_TOL) {
        return Err(Error::NonConvergence {
            what: "polynomial cancellation solve",
            residual: norm,
        });
    }
    Ok(CancellationSolution {
        residuals: r.iter().map(|v| v.abs()).collect(),
        alphas,
        iterations,
    })
}

/// Mirror image `alpha -> 1 - alpha` of a timing list, re-sorted.
pub fn mirrored(alphas: &[f64]) -> Vec<f64> {
    alphas.iter().rev().map(|a| 1.0 - a).collect()
}

/// Roots of the Chebyshev polynomial of the second kind `U_n`, mapped from
/// `[-1, 1]` onto `[0, 1]` and sorted.
pub fn chebyshev_u_roots_unit(n: usize) -> Vec<f64> {
    let mut roots: Vec<f64> = (1..=n)
        .map(|k| 0.5 * (1.0 + (k as f64 * PI / (n + 1) as f64).cos()))
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}
