use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Natural cubic spline through `(log omega, log S)` knots (natural logs).
///
/// Below the first knot the spectrum is held flat; above the last knot the
/// final segment's log-log slope is continued up to `omega_max`, beyond
/// which the spectrum is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineRepr", into = "SplineRepr")]
pub struct LogLogSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
    omega_max: f64,
}

#[derive(Serialize, Deserialize)]
struct SplineRepr {
    knots: Vec<[f64; 2]>,
    omega_max: f64,
}

impl TryFrom<SplineRepr> for LogLogSpline {
    type Error = Error;
    fn try_from(r: SplineRepr) -> Result<Self> {
        let (x, y) = r.knots.iter().map(|k| (k[0], k[1])).unzip();
        LogLogSpline::new(x, y, r.omega_max)
    }
}

impl From<LogLogSpline> for SplineRepr {
    fn from(s: LogLogSpline) -> Self {
        SplineRepr {
            knots: s.x.iter().zip(&s.y).map(|(&a, &b)| [a, b]).collect(),
            omega_max: s.omega_max,
        }
    }
}

impl LogLogSpline {
    pub const MIN_KNOTS: usize = 4;

    pub fn new(log_omega: Vec<f64>, log_s: Vec<f64>, omega_max: f64) -> Result<Self> {
        if log_omega.len() != log_s.len() {
            return Err(Error::invalid(
                "spline abscissae and ordinates differ in length",
            ));
        }
        if log_omega.len() < Self::MIN_KNOTS {
            return Err(Error::invalid(format!(
                "spline needs at least {} knots, got {}",
                Self::MIN_KNOTS,
                log_omega.len()
            )));
        }
        if log_omega.windows(2).any(|w| !(w[1] > w[0]))
            || log_omega.iter().chain(&log_s).any(|v| !v.is_finite())
        {
            return Err(Error::invalid(
                "spline knots must be finite and strictly increasing in log omega",
            ));
        }
        let last = *log_omega.last().unwrap();
        if !(omega_max.ln() >= last) {
            return Err(Error::invalid(
                "spline cutoff must not lie below the last knot",
            ));
        }
        let m = natural_second_derivatives(&log_omega, &log_s);
        Ok(LogLogSpline {
            x: log_omega,
            y: log_s,
            m,
            omega_max,
        })
    }

    /// Knots placed log-uniformly over `[omega_lo, omega_hi]`, cut off at `omega_hi`.
    pub fn log_uniform(omega_lo: f64, omega_hi: f64, log_s: Vec<f64>) -> Result<Self> {
        let k = log_s.len();
        if k < 2 || !(omega_lo > 0.0 && omega_hi > omega_lo) {
            return Err(Error::invalid(
                "log-uniform knots need 0 < omega_lo < omega_hi",
            ));
        }
        let (a, b) = (omega_lo.ln(), omega_hi.ln());
        let x = (0..k)
            .map(|i| a + (b - a) * i as f64 / (k - 1) as f64)
            .collect();
        Self::new(x, log_s, omega_hi)
    }

    pub fn log_omega(&self) -> &[f64] {
        &self.x
    }

    pub fn log_s(&self) -> &[f64] {
        &self.y
    }

    pub fn knot_frequencies(&self) -> Vec<f64> {
        self.x.iter().map(|v| v.exp()).collect()
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// log S at log omega, including extrapolation but ignoring the cutoff.
    pub fn eval_log(&self, lx: f64) -> f64 {
        let n = self.x.len();
        if lx <= self.x[0] {
            return self.y[0];
        }
        if lx >= self.x[n - 1] {
            let h = self.x[n - 1] - self.x[n - 2];
            // end slope of the natural spline
            let slope = (self.y[n - 1] - self.y[n - 2]) / h
                + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0;
            return self.y[n - 1] + slope * (lx - self.x[n - 1]);
        }
        let i = match self.x.binary_search_by(|v| v.total_cmp(&lx)) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - lx) / h;
        let b = (lx - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn eval(&self, omega: f64) -> f64 {
        if omega > self.omega_max {
            return 0.0;
        }
        self.eval_log(omega.ln()).exp()
    }
}

fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_straight_line_exactly() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 4.0 * v).collect();
        let s = LogLogSpline::new(x, y, 1e9).unwrap();
        for lx in [0.3, 1.7, 4.9, 7.0] {
            assert_relative_eq!(s.eval_log(lx), 2.0 - 4.0 * lx, epsilon = 1e-12);
        }
        // flat below the first knot
        assert_relative_eq!(s.eval_log(-3.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolates_knots_and_cuts_off() {
        let s =
            LogLogSpline::new(vec![0.0, 1.0, 2.5, 3.0], vec![1.0, -1.0, 0.5, 0.0], 30.0).unwrap();
        assert_relative_eq!(s.eval_log(2.5), 0.5, epsilon = 1e-14);
        assert_relative_eq!(s.eval(1.0f64.exp()), (-1.0f64).exp(), max_relative = 1e-12);
        assert_eq!(s.eval(31.0), 0.0);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(LogLogSpline::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], 100.0).is_err());
        assert!(LogLogSpline::new(vec![0.0, 1.0, 1.0, 2.0], vec![0.0; 4], 100.0).is_err());
        assert!(LogLogSpline::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0; 4], 2.0).is_err());
    }

    #[test]
    fn json_round_trip_recomputes_curvature() {
        let s = LogLogSpline::log_uniform(10.0, 1e4, vec![0.0, -3.0, -5.0, -9.0, -12.0]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("knots"));
        let back: LogLogSpline = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
