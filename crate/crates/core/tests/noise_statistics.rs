use std::f64::consts::PI;

use decouple_core::noise::{estimate_psd, estimate_psd_with, synthesize_trajectory, NoiseSpectrum};

fn tabulated(s: &NoiseSpectrum) -> (&[f64], &[f64]) {
    match s {
        NoiseSpectrum::Tabulated { omega, s } => (omega, s),
        other => panic!("expected a tabulated estimate, got {other:?}"),
    }
}

fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (mean, var, m4 / (var * var) - 3.0)
}

#[test]
fn white_variance_follows_the_convention() {
    let (s0, wmax) = (2.0, 2.0 * PI * 1e4);
    let dt = PI / wmax;
    let spectrum = NoiseSpectrum::White {
        s0,
        omega_max: Some(wmax),
    };
    let traj = synthesize_trajectory(&spectrum, dt, 1e6 * dt, 3).unwrap();
    assert_eq!(traj.len(), 1_000_000);
    let (_, var, kurtosis) = moments(&traj.samples);
    let expect = s0 * wmax / PI;
    assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
    assert!(kurtosis.abs() < 0.1, "excess kurtosis {kurtosis}");
}

#[test]
fn white_estimate_is_flat_in_band() {
    let (s0, wmax) = (5.0, 2.0 * PI * 1e4);
    let dt = PI / wmax;
    let spectrum = NoiseSpectrum::White {
        s0,
        omega_max: Some(wmax),
    };
    let traj = synthesize_trajectory(&spectrum, dt, 2f64.powi(18) * dt, 8).unwrap();
    let est = estimate_psd(&traj).unwrap();
    let (omega, s) = tabulated(&est);
    let band: Vec<f64> = omega
        .iter()
        .zip(s)
        .filter(|(w, _)| **w > 0.05 * wmax && **w < 0.9 * wmax)
        .map(|(_, v)| *v)
        .collect();
    let mean = band.iter().sum::<f64>() / band.len() as f64;
    assert!((mean / s0 - 1.0).abs() < 0.1, "{mean}");
}

#[test]
fn power_law_periodogram_slope() {
    let (lo, hi) = (2.0 * PI * 20.0, 2.0 * PI * 2e4);
    let spectrum = NoiseSpectrum::power_law(1e9, 2.0, lo, hi).unwrap();
    let dt = PI / hi;
    let traj = synthesize_trajectory(&spectrum, dt, 2f64.powi(20) * dt, 21).unwrap();
    let est = estimate_psd_with(&traj, 8192).unwrap();
    let (omega, s) = tabulated(&est);
    let pts: Vec<(f64, f64)> = omega
        .iter()
        .zip(s)
        .filter(|(w, _)| **w > 10.0 * lo && **w < 0.3 * hi)
        .map(|(w, v)| (w.ln(), v.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 2.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn synthesis_round_trip_per_family() {
    let hi = 2.0 * PI * 1e4;
    let dt = PI / hi;
    let families = [
        NoiseSpectrum::White {
            s0: 3.0,
            omega_max: Some(hi),
        },
        NoiseSpectrum::lorentzian(1e6, 2.0 * PI * 800.0).unwrap(),
        NoiseSpectrum::power_law(1e8, 1.0, 2.0 * PI * 10.0, hi).unwrap(),
    ];
    for (f, spectrum) in families.iter().enumerate() {
        let traj = synthesize_trajectory(spectrum, dt, 2f64.powi(20) * dt, 40 + f as u64).unwrap();
        let est = estimate_psd_with(&traj, 4096).unwrap();
        let (omega, s) = tabulated(&est);
        // groups of 8 neighbouring bins inside [200 Hz, 0.5 w_max]
        let inside: Vec<(f64, f64)> = omega
            .iter()
            .zip(s)
            .filter(|(w, _)| **w > 2.0 * PI * 200.0 && **w < 0.5 * hi)
            .map(|(w, v)| (*w, *v))
            .collect();
        for chunk in inside.chunks_exact(8) {
            let est_mean = chunk.iter().map(|c| c.1).sum::<f64>() / 8.0;
            let true_mean = chunk.iter().map(|c| spectrum.eval(c.0)).sum::<f64>() / 8.0;
            let rel = (est_mean / true_mean - 1.0).abs();
            assert!(
                rel < 0.15,
                "family {f} at {:.0} rad/s: {rel:.3}",
                chunk[0].0
            );
        }
    }
}

#[test]
fn seeds_are_reproducible_and_independent() {
    let hi = 2.0 * PI * 1e4;
    let dt = PI / hi;
    let spectrum = NoiseSpectrum::White {
        s0: 1.0,
        omega_max: Some(hi),
    };
    let a = synthesize_trajectory(&spectrum, dt, 1e5 * dt, 1).unwrap();
    let again = synthesize_trajectory(&spectrum, dt, 1e5 * dt, 1).unwrap();
    let b = synthesize_trajectory(&spectrum, dt, 1e5 * dt, 2).unwrap();
    assert_eq!(a.samples, again.samples);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let r = dot(&a.samples, &b.samples)
        / (dot(&a.samples, &a.samples) * dot(&b.samples, &b.samples)).sqrt();
    assert!(r.abs() < 0.05, "cross-correlation {r}");
}
