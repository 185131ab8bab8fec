use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::spline::LogLogSpline;
use crate::error::{Error, Result};
use crate::quadrature;

/// One-sided power spectral density of the frequency offset `delta(t)`.
///
/// Convention: `<delta(t) delta(t+u)> = (1/pi) int_0^inf S(w) cos(w u) dw`,
/// with `w` in rad/s and `S` in rad^2/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum NoiseSpectrum {
    /// `amplitude * w^-exponent` on `[omega_min, omega_max]`, zero outside.
    PowerLaw {
        amplitude: f64,
        exponent: f64,
        omega_min: f64,
        omega_max: f64,
    },
    /// Ornstein–Uhlenbeck process: autocovariance `variance * exp(-rate |u|)`.
    Lorentzian {
        variance: f64,
        rate: f64,
    },
    /// Constant `s0`, optionally cut off above `omega_max`.
    White {
        s0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega_max: Option<f64>,
    },
    LoglogSpline(LogLogSpline),
    /// Piecewise-linear samples; zero outside the sampled range.
    Tabulated {
        omega: Vec<f64>,
        s: Vec<f64>,
    },
    /// Non-negative combination of other spectra.
    Sum {
        terms: Vec<WeightedSpectrum>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpectrum {
    pub weight: f64,
    pub spectrum: NoiseSpectrum,
}

impl NoiseSpectrum {
    pub fn zero() -> Self {
        NoiseSpectrum::White {
            s0: 0.0,
            omega_max: None,
        }
    }

    pub fn white(s0: f64) -> Self {
        NoiseSpectrum::White {
            s0,
            omega_max: None,
        }
    }

    pub fn power_law(
        amplitude: f64,
        exponent: f64,
        omega_min: f64,
        omega_max: f64,
    ) -> Result<Self> {
        let s = NoiseSpectrum::PowerLaw {
            amplitude,
            exponent,
            omega_min,
            omega_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn lorentzian(variance: f64, rate: f64) -> Result<Self> {
        let s = NoiseSpectrum::Lorentzian { variance, rate };
        s.validate()?;
        Ok(s)
    }

    /// `a * self + b * other`.
    pub fn combine(a: f64, first: NoiseSpectrum, b: f64, second: NoiseSpectrum) -> Self {
        NoiseSpectrum::Sum {
            terms: vec![
                WeightedSpectrum {
                    weight: a,
                    spectrum: first,
                },
                WeightedSpectrum {
                    weight: b,
                    spectrum: second,
                },
            ],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
                omega_min,
                omega_max,
            } => NoiseSpectrum::PowerLaw {
                amplitude: amplitude * factor,
                exponent: *exponent,
                omega_min: *omega_min,
                omega_max: *omega_max,
            },
            NoiseSpectrum::White { s0, omega_max } => NoiseSpectrum::White {
                s0: s0 * factor,
                omega_max: *omega_max,
            },
            NoiseSpectrum::Lorentzian { variance, rate } => NoiseSpectrum::Lorentzian {
                variance: variance * factor,
                rate: *rate,
            },
            other => NoiseSpectrum::Sum {
                terms: vec![WeightedSpectrum {
                    weight: factor,
                    spectrum: other.clone(),
                }],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{what} must be finite and non-negative, got {v}"
                )))
            }
        };
        match self {
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
                omega_min,
                omega_max,
            } => {
                finite_nonneg(*amplitude, "power-law amplitude")?;
                if !exponent.is_finite() {
                    return Err(Error::invalid("power-law exponent must be finite"));
                }
                if !(*omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
                    return Err(Error::invalid(format!(
                        "power-law band must satisfy 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
                    )));
                }
            }
            NoiseSpectrum::Lorentzian { variance, rate } => {
                finite_nonneg(*variance, "Lorentzian variance")?;
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::invalid("Lorentzian rate must be positive"));
                }
            }
            NoiseSpectrum::White { s0, omega_max } => {
                finite_nonneg(*s0, "white level")?;
                if let Some(w) = omega_max {
                    if !(*w > 0.0) {
                        return Err(Error::invalid("white-noise cutoff must be positive"));
                    }
                }
            }
            NoiseSpectrum::LoglogSpline(_) => {}
            NoiseSpectrum::Tabulated { omega, s } => {
                if omega.len() != s.len() || omega.len() < 2 {
                    return Err(Error::invalid(
                        "tabulated spectrum needs >= 2 matching samples",
                    ));
                }
                if omega.windows(2).any(|w| !(w[1] > w[0])) || omega[0] < 0.0 {
                    return Err(Error::invalid(
                        "tabulated frequencies must be increasing and >= 0",
                    ));
                }
                for &v in s {
                    finite_nonneg(v, "tabulated spectrum value")?;
                }
            }
            NoiseSpectrum::Sum { terms } => {
                for t in terms {
                    finite_nonneg(t.weight, "spectrum weight")?;
                    t.spectrum.validate()?;
                }
            }
        }
        Ok(())
    }

    /// `S(omega)` for `omega > 0`.
    pub fn eval(&self, omega: f64) -> f64 {
        match self {
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
                omega_min,
                omega_max,
            } => {
                if omega < *omega_min || omega > *omega_max {
                    0.0
                } else {
                    amplitude * omega.powf(-exponent)
                }
            }
            NoiseSpectrum::Lorentzian { variance, rate } => {
                2.0 * variance * rate / (rate * rate + omega * omega)
            }
            NoiseSpectrum::White { s0, omega_max } => match omega_max {
                Some(w) if omega > *w => 0.0,
                _ => *s0,
            },
            NoiseSpectrum::LoglogSpline(spline) => spline.eval(omega),
            NoiseSpectrum::Tabulated { omega: xs, s } => {
                if omega < xs[0] || omega > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&x| x <= omega).clamp(1, xs.len() - 1);
                let t = (omega - xs[i - 1]) / (xs[i] - xs[i - 1]);
                s[i - 1] + t * (s[i] - s[i - 1])
            }
            NoiseSpectrum::Sum { terms } => terms
                .iter()
                .map(|t| t.weight * t.spectrum.eval(omega))
                .sum(),
        }
    }

    /// Interval outside which `S` vanishes identically (upper end may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match self {
            NoiseSpectrum::PowerLaw {
                omega_min,
                omega_max,
                ..
            } => (*omega_min, *omega_max),
            NoiseSpectrum::Lorentzian { .. } => (0.0, f64::INFINITY),
            NoiseSpectrum::White { s0, omega_max } => {
                if *s0 == 0.0 {
                    (0.0, 0.0)
                } else {
                    (0.0, omega_max.unwrap_or(f64::INFINITY))
                }
            }
            NoiseSpectrum::LoglogSpline(sp) => (0.0, sp.omega_max()),
            NoiseSpectrum::Tabulated { omega, .. } => (omega[0], omega[omega.len() - 1]),
            NoiseSpectrum::Sum { terms } => terms
                .iter()
                .filter(|t| t.weight > 0.0)
                .map(|t| t.spectrum.support())
                .filter(|(lo, hi)| hi > lo)
                .fold((f64::INFINITY, 0.0), |(lo, hi), (a, b)| {
                    (lo.min(a), hi.max(b))
                }),
        }
    }

    pub fn is_zero(&self) -> bool {
        let (lo, hi) = self.support();
        !(hi > lo)
    }

    /// Frequencies where `S` or its slope is discontinuous, or where it
    /// changes character (knots, corner frequencies).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            NoiseSpectrum::PowerLaw {
                omega_min,
                omega_max,
                ..
            } => vec![*omega_min, *omega_max],
            NoiseSpectrum::Lorentzian { rate, .. } => vec![*rate],
            NoiseSpectrum::White { omega_max, .. } => omega_max.iter().cloned().collect(),
            NoiseSpectrum::LoglogSpline(sp) => {
                let mut v = sp.knot_frequencies();
                v.push(sp.omega_max());
                v
            }
            NoiseSpectrum::Tabulated { omega, .. } => vec![omega[0], omega[omega.len() - 1]],
            NoiseSpectrum::Sum { terms } => terms
                .iter()
                .flat_map(|t| t.spectrum.breakpoints())
                .collect(),
        };
        out.retain(|w| w.is_finite() && *w > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// `(1/pi) int_lo^hi S dw`, the variance contributed by a band.
    pub fn band_variance(&self, lo: f64, hi: f64) -> f64 {
        let (s_lo, s_hi) = self.support();
        let lo = lo.max(s_lo);
        let hi = hi.min(s_hi);
        if !(hi > lo) {
            return 0.0;
        }
        let mut edges = vec![lo];
        edges.extend(self.breakpoints().into_iter().filter(|&w| w > lo && w < hi));
        edges.push(hi);
        let f = |w: f64| self.eval(w);
        let total: f64 = edges
            .windows(2)
            .map(|e| quadrature::integrate(&f, e[0], e[1], 1e-10, 0.0, 200).value)
            .sum();
        total / PI
    }

    /// Total variance of `delta`; infinite for spectra that do not decay.
    pub fn variance(&self) -> f64 {
        match self {
            NoiseSpectrum::Lorentzian { variance, .. } => *variance,
            NoiseSpectrum::White { s0, omega_max } => match omega_max {
                Some(w) => s0 * w / PI,
                None if *s0 == 0.0 => 0.0,
                None => f64::INFINITY,
            },
            NoiseSpectrum::PowerLaw {
                amplitude,
                exponent,
                omega_min,
                omega_max,
            } => {
                let e = 1.0 - exponent;
                let integral = if e.abs() < 1e-12 {
                    (omega_max / omega_min).ln()
                } else {
                    (omega_max.powf(e) - omega_min.powf(e)) / e
                };
                amplitude * integral / PI
            }
            NoiseSpectrum::Sum { terms } => {
                terms.iter().map(|t| t.weight * t.spectrum.variance()).sum()
            }
            _ => {
                let (lo, hi) = self.support();
                if hi.is_finite() {
                    self.band_variance(lo, hi)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: NoiseSpectrum = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}
