//! JSON run configuration. Every field is optional; command-line flags win
//! over the file, and built-in defaults fill whatever is left.

use std::fs;
use std::path::{Path, PathBuf};

use decouple_core::montecarlo::PiPulseAxis;
use decouple_core::{NoiseSpectrum, PulseSequence};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub sequence: SequenceSection,
    pub predict: PredictSection,
    pub simulate: SimulateSection,
    pub fit: FitSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    pub n: Option<usize>,
    pub tau_s: Option<f64>,
    pub pulse_duration_s: Option<f64>,
    pub guess: Option<Guess>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub sequence: Option<SequenceSource>,
    pub spectrum: Option<SpectrumSource>,
    pub normalization: Option<f64>,
    pub taus_s: Option<Vec<f64>>,
    pub tau_min_s: Option<f64>,
    pub tau_max_s: Option<f64>,
    pub tau_points: Option<usize>,
    pub filter_points: Option<usize>,
    pub filter_x_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub sequences: Option<Vec<SequenceSource>>,
    pub spectrum: Option<SpectrumSource>,
    pub taus_s: Option<Vec<f64>>,
    pub tau_min_s: Option<f64>,
    pub tau_max_s: Option<f64>,
    pub tau_points: Option<usize>,
    pub shots: Option<u64>,
    pub phases: Option<usize>,
    pub bootstrap: Option<usize>,
    pub rabi_hz: Option<f64>,
    pub axis: Option<PiPulseAxis>,
    pub readout_error: Option<f64>,
    pub instantaneous: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub curves: Option<PathBuf>,
    pub knots: Option<usize>,
    pub omega_min_hz: Option<f64>,
    pub omega_max_hz: Option<f64>,
    pub starts: Option<usize>,
    pub max_evals: Option<usize>,
    pub smoothness: Option<f64>,
    pub spectrum_samples: Option<usize>,
}

/// Initial guess for `sequence solve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Guess {
    Cpmg,
    Udd,
}

/// A sequence given as `ramsey`, `udd:<n>`, `cpmg:<n>`, a JSON file path,
/// or (config only) an inline object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SequenceSource {
    Named(String),
    Inline(PulseSequence),
}

/// A spectrum given as a JSON file path or (config only) an inline object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSource {
    Path(PathBuf),
    Inline(NoiseSpectrum),
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Nominal duration given to shorthand sequences; downstream commands
/// rescale timings to their own tau grid.
const NOMINAL_TAU: f64 = 1e-3;

impl SequenceSource {
    pub fn resolve(&self) -> CliResult<PulseSequence> {
        match self {
            SequenceSource::Inline(seq) => {
                seq.validate()?;
                Ok(seq.clone())
            }
            SequenceSource::Named(text) => {
                if let Some(seq) = parse_shorthand(text)? {
                    return Ok(seq);
                }
                let path = Path::new(text);
                let body = read_text(path)?;
                let seq: PulseSequence =
                    serde_json::from_str(&body).map_err(|source| CliError::Parse {
                        path: path.to_path_buf(),
                        source,
                    })?;
                seq.validate()?;
                Ok(seq)
            }
        }
    }
}

fn parse_shorthand(text: &str) -> CliResult<Option<PulseSequence>> {
    if text == "ramsey" {
        return Ok(Some(PulseSequence::ramsey(NOMINAL_TAU)?));
    }
    let Some((kind, count)) = text.split_once(':') else {
        return Ok(None);
    };
    let build = match kind {
        "udd" => PulseSequence::udd,
        "cpmg" => PulseSequence::cpmg,
        _ => return Ok(None),
    };
    let n: usize = count
        .parse()
        .map_err(|_| CliError::usage(format!("bad pulse count in sequence '{text}'")))?;
    if n == 0 {
        return Ok(Some(PulseSequence::ramsey(NOMINAL_TAU)?));
    }
    Ok(Some(build(n, NOMINAL_TAU, 0.0)?))
}

impl SpectrumSource {
    pub fn resolve(&self) -> CliResult<NoiseSpectrum> {
        let spectrum = match self {
            SpectrumSource::Inline(s) => s.clone(),
            SpectrumSource::Path(path) => {
                let body = read_text(path)?;
                serde_json::from_str(&body).map_err(|source| CliError::Parse {
                    path: path.clone(),
                    source,
                })?
            }
        };
        spectrum.validate()?;
        Ok(spectrum)
    }
}

/// Explicit list, or `points` log-spaced values over `[min, max]`.
pub fn tau_grid(
    taus: Option<Vec<f64>>,
    min: Option<f64>,
    max: Option<f64>,
    points: Option<usize>,
) -> CliResult<Option<Vec<f64>>> {
    if let Some(taus) = taus {
        if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::usage("taus must be positive"));
        }
        if taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::usage("taus must be strictly increasing"));
        }
        return Ok(Some(taus));
    }
    match (min, max) {
        (None, None) => Ok(None),
        (Some(lo), Some(hi)) => {
            let points = points.unwrap_or(12);
            if !(lo > 0.0 && hi > lo && hi.is_finite()) || points < 2 {
                return Err(CliError::usage(
                    "need 0 < tau-min < tau-max and at least 2 tau points",
                ));
            }
            Ok(Some(log_space(lo, hi, points)))
        }
        _ => Err(CliError::usage(
            "tau-min and tau-max must be given together",
        )),
    }
}

pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    (0..points)
        .map(|i| lo * (ratio * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_sequences() {
        let s = SequenceSource::Named("udd:2".into()).resolve().unwrap();
        assert_eq!(s.n, 2);
        assert!((s.alphas[0] - 0.25).abs() < 1e-15);
        assert_eq!(
            SequenceSource::Named("ramsey".into()).resolve().unwrap().n,
            0
        );
        assert_eq!(
            SequenceSource::Named("cpmg:0".into()).resolve().unwrap().n,
            0
        );
        assert!(matches!(
            SequenceSource::Named("udd:x".into()).resolve(),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let err = serde_json::from_str::<FileConfig>(r#"{"seed": 1, "sede": 2}"#);
        assert!(err.is_err());
        let ok: FileConfig = serde_json::from_str(r#"{"seed": 1, "fit": {"knots": 6}}"#).unwrap();
        assert_eq!(ok.fit.knots, Some(6));
    }

    #[test]
    fn grid_forms() {
        assert_eq!(tau_grid(None, None, None, None).unwrap(), None);
        let g = tau_grid(None, Some(1e-3), Some(1e-1), Some(3))
            .unwrap()
            .unwrap();
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!(tau_grid(Some(vec![2.0, 1.0]), None, None, None).is_err());
        assert!(tau_grid(None, Some(1.0), None, None).is_err());
    }
}
