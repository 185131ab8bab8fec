use std::path::PathBuf;

use clap::{Args, ValueEnum};
use decouple_core::dephasing::{coherence_time, min_feasible_tau};
use decouple_core::montecarlo::{
    coherence_curve_mc, default_phases, derive_seed, CurveSimulation, FringeFitOptions, PiPulseAxis,
};
use decouple_core::spectroscopy::CurveSource;
use decouple_core::{CoherenceModel, NoiseSpectrum, PulseParams, PulseSequence};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{log_space, tau_grid, FileConfig, SequenceSource, SpectrumSource};
use crate::error::{CliError, CliResult};
use crate::output::{to_value, OutputDir, RunInfo};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    /// π-pulses about the π/2 axis (CP).
    X,
    /// π-pulses about the quadrature axis (CPMG).
    Y,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sequence JSON file, or `ramsey`, `udd:<n>`, `cpmg:<n>`; repeat for
    /// several curves.
    #[arg(long = "sequence")]
    pub sequences: Vec<String>,
    /// Noise spectrum JSON file.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Explicit tau values in seconds, comma separated, shared by all curves.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Lower end of a log-spaced tau grid, seconds.
    #[arg(long)]
    pub tau_min: Option<f64>,
    /// Upper end of the tau grid, seconds.
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Number of tau grid points.
    #[arg(long)]
    pub tau_points: Option<usize>,
    /// Shots per phase point.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Phase points per fringe.
    #[arg(long)]
    pub phases: Option<usize>,
    /// Bootstrap resamples per fringe fit.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Rabi frequency in Hz.
    #[arg(long)]
    pub rabi_hz: Option<f64>,
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    /// Symmetric readout bit-flip probability.
    #[arg(long)]
    pub readout_error: Option<f64>,
    /// Ideal instantaneous pulses.
    #[arg(long)]
    pub instantaneous: bool,
}

#[derive(Debug, Serialize)]
struct CurvePlan {
    sequence: PulseSequence,
    taus_s: Vec<f64>,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct Resolved {
    spectrum: NoiseSpectrum,
    pulses: PulseParams,
    shots: u64,
    phases: usize,
    bootstrap: usize,
    curves: Vec<CurvePlan>,
}

/// One entry of `curves.json`: a coherence-curve CSV and the sequence
/// family that produced it. Paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveEntry {
    pub file: PathBuf,
    pub sequence: PulseSequence,
    #[serde(default = "ingested")]
    pub source: CurveSource,
}

fn ingested() -> CurveSource {
    CurveSource::Ingested
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveManifest {
    pub curves: Vec<CurveEntry>,
}

/// Default grid: `--tau-points` (else `AUTO_POINTS`) values from `AUTO_LO` to `AUTO_HI` times the
/// analytic 1/e time of each sequence.
const AUTO_LO: f64 = 0.3;
const AUTO_HI: f64 = 3.0;
const AUTO_POINTS: usize = 12;

pub fn run(
    args: SimulateArgs,
    cfg: &FileConfig,
    out: &mut OutputDir,
    run: &RunInfo,
) -> CliResult<Value> {
    let section = &cfg.simulate;
    let sources: Vec<SequenceSource> = if args.sequences.is_empty() {
        section.sequences.clone().unwrap_or_default()
    } else {
        args.sequences
            .into_iter()
            .map(SequenceSource::Named)
            .collect()
    };
    if sources.is_empty() {
        return Err(CliError::usage("at least one --sequence is required"));
    }
    let spectrum = match args.spectrum {
        Some(p) => SpectrumSource::Path(p),
        None => section
            .spectrum
            .clone()
            .ok_or_else(|| CliError::usage("--spectrum is required"))?,
    }
    .resolve()?;

    let defaults = PulseParams::default();
    let pulses = PulseParams {
        rabi_frequency: 2.0
            * std::f64::consts::PI
            * args.rabi_hz.or(section.rabi_hz).unwrap_or(18e3),
        pi_pulse_phase_mode: args
            .axis
            .map(|a| match a {
                Axis::X => PiPulseAxis::FixedX,
                Axis::Y => PiPulseAxis::QuadratureY,
            })
            .or(section.axis)
            .unwrap_or(defaults.pi_pulse_phase_mode),
        readout_error: args
            .readout_error
            .or(section.readout_error)
            .unwrap_or(defaults.readout_error),
        instantaneous: args.instantaneous || section.instantaneous.unwrap_or(false),
    };
    pulses.validate()?;
    let shots = args.shots.or(section.shots).unwrap_or(200);
    let phases = args.phases.or(section.phases).unwrap_or(20);
    let bootstrap = args.bootstrap.or(section.bootstrap).unwrap_or(500);
    if shots == 0 {
        return Err(CliError::usage("shots must be at least 1"));
    }

    let tau_points = args.tau_points.or(section.tau_points);
    let shared = tau_grid(
        args.taus.or(section.taus_s.clone()),
        args.tau_min.or(section.tau_min_s),
        args.tau_max.or(section.tau_max_s),
        tau_points,
    )?;

    let mut plans = Vec::with_capacity(sources.len());
    for (k, src) in sources.iter().enumerate() {
        let sequence = src.resolve()?.with_pulse_duration(0.0)?;
        let d = pulses.pi_duration();
        let floor = min_feasible_tau(&sequence.alphas, d);
        let taus = match &shared {
            Some(g) => g.clone(),
            None => {
                let timed = sequence
                    .with_tau(sequence.tau.max(floor * 2.0))?
                    .with_pulse_duration(d)?;
                let model = CoherenceModel::new(1.0, timed, spectrum.clone())?;
                let tc = coherence_time(&model).map_err(|e| match e {
                    e if e.is_numerical() => CliError::usage(format!(
                        "{}: cannot place a default tau grid ({e}); pass --taus or --tau-min/--tau-max",
                        sequence.label
                    )),
                    e => e.into(),
                })?;
                log_space(
                    (AUTO_LO * tc).max(floor * 1.01),
                    AUTO_HI * tc,
                    tau_points.unwrap_or(AUTO_POINTS).max(2),
                )
            }
        };
        if let Some(t) = taus.iter().find(|&&t| t <= floor) {
            return Err(CliError::usage(format!(
                "{}: tau = {t} s is too short for {} pulses of {d} s",
                sequence.label, sequence.n
            )));
        }
        plans.push(CurvePlan {
            sequence,
            taus_s: taus,
            seed: derive_seed(run.seed, k as u64, u64::MAX),
        });
    }

    let mut entries = Vec::with_capacity(plans.len());
    for (k, plan) in plans.iter().enumerate() {
        let sim = CurveSimulation {
            phases: default_phases(phases),
            shots_per_phase: shots,
            seed: plan.seed,
            fit: FringeFitOptions {
                n_bootstrap: bootstrap,
                seed: plan.seed,
            },
            ..Default::default()
        };
        let (curve, points) =
            coherence_curve_mc(&plan.sequence, &pulses, &spectrum, &plan.taus_s, &sim)?;
        let stem = format!("{k:02}_{}", plan.sequence.label);
        for (i, p) in points.iter().enumerate() {
            out.write_with(&format!("fringes/{stem}/tau_{i:03}.csv"), |w| {
                p.fringe.write_csv(w)
            })?;
        }
        let mut fits =
            String::from("tau_s,contrast,phase_offset_rad,uncertainty,n_bootstrap,at_bound\n");
        for p in &points {
            let e = &p.estimate;
            fits.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.tau, e.contrast, e.phase_offset, e.uncertainty, e.n_bootstrap, e.at_bound
            ));
        }
        out.write_bytes(&format!("fringe_fits_{stem}.csv"), fits.as_bytes())?;
        let file = format!("curve_{stem}.csv");
        out.write_with(&file, |w| curve.write_csv(w))?;
        println!(
            "{}: {} taus, contrast {:.3} .. {:.3}",
            plan.sequence.label,
            curve.points.len(),
            curve.points[0].contrast,
            curve.points[curve.points.len() - 1].contrast
        );
        entries.push(CurveEntry {
            file: file.into(),
            sequence: curve.sequence.clone(),
            source: CurveSource::Simulated,
        });
    }
    out.write_json("curves.json", &CurveManifest { curves: entries })?;

    Ok(to_value(&Resolved {
        spectrum,
        pulses,
        shots,
        phases,
        bootstrap,
        curves: plans,
    }))
}
