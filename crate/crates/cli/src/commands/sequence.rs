use clap::{Args, ValueEnum};
use decouple_core::sequences::{cpmg_times, solve_polynomial_cancellation, udd_times};
use decouple_core::PulseSequence;
use serde::Serialize;
use serde_json::Value;

use crate::config::{FileConfig, Guess};
use crate::error::{CliError, CliResult};
use crate::output::{to_value, OutputDir, RunInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Closed-form Uhrig timings.
    Udd,
    /// Equally spaced timings.
    Cpmg,
    /// Newton solve of the polynomial-cancellation equations.
    Solve,
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    pub kind: Kind,
    /// Number of π-pulses.
    #[arg(long)]
    pub n: Option<usize>,
    /// Total free-evolution time in seconds.
    #[arg(long)]
    pub tau: Option<f64>,
    /// π-pulse length in seconds (0 for instantaneous).
    #[arg(long)]
    pub pulse_duration: Option<f64>,
    /// Starting timings for `solve`.
    #[arg(long, value_enum)]
    pub guess: Option<Guess>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    kind: Kind,
    n: usize,
    tau_s: f64,
    pulse_duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    guess: Option<Guess>,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    n: usize,
    guess: Guess,
    iterations: usize,
    residuals: Vec<f64>,
    max_residual: f64,
    /// Largest `|alpha_i - sin^2(pi i / (2n + 2))|`.
    max_deviation_from_closed_form: f64,
}

pub fn run(
    args: SequenceArgs,
    cfg: &FileConfig,
    out: &mut OutputDir,
    _run: &RunInfo,
) -> CliResult<Value> {
    let n = args
        .n
        .or(cfg.sequence.n)
        .ok_or_else(|| CliError::usage("--n is required"))?;
    let resolved = Resolved {
        kind: args.kind,
        n,
        tau_s: args.tau.or(cfg.sequence.tau_s).unwrap_or(1e-3),
        pulse_duration_s: args
            .pulse_duration
            .or(cfg.sequence.pulse_duration_s)
            .unwrap_or(0.0),
        guess: (args.kind == Kind::Solve)
            .then(|| args.guess.or(cfg.sequence.guess).unwrap_or(Guess::Cpmg)),
    };
    let (tau, d) = (resolved.tau_s, resolved.pulse_duration_s);

    let seq = match resolved.kind {
        Kind::Udd => PulseSequence::udd(n, tau, d)?,
        Kind::Cpmg => PulseSequence::cpmg(n, tau, d)?,
        Kind::Solve => {
            let guess = resolved.guess.unwrap_or(Guess::Cpmg);
            let start = match guess {
                Guess::Cpmg => cpmg_times(n)?,
                Guess::Udd => udd_times(n)?,
            };
            let sol = solve_polynomial_cancellation(n, &start)?;
            let closed = udd_times(n)?;
            let report = SolveReport {
                n,
                guess,
                iterations: sol.iterations,
                max_residual: sol.max_residual(),
                max_deviation_from_closed_form: sol
                    .alphas
                    .iter()
                    .zip(&closed)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
                residuals: sol.residuals.clone(),
            };
            println!("max cancellation residual {:.3e}", report.max_residual);
            println!(
                "max deviation from closed-form UDD {:.3e}",
                report.max_deviation_from_closed_form
            );
            out.write_json("solve_report.json", &report)?;
            PulseSequence::new(format!("solved-{n}"), sol.alphas, tau, d)?
        }
    };
    out.write_json("sequence.json", &seq)?;
    println!("{}: {} pulses", seq.label, seq.n);
    Ok(to_value(&resolved))
}
