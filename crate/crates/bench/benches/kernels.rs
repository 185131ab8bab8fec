use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use decouple_bench::{cpmg, power_law_spectrum, udd, white_spectrum};
use decouple_core::chi;
use decouple_core::dephasing::FilterKernel;
use decouple_core::montecarlo::{evolve_bloch, PulseParams};
use decouple_core::noise::TrajectorySynthesizer;
use decouple_core::sequences::{cpmg_times, solve_polynomial_cancellation};

fn filter(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter_eval");
    for n in [1usize, 10, 40] {
        let kernel = FilterKernel::instantaneous(&udd(n, 1e-3).alphas).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &kernel, |b, k| {
            b.iter(|| {
                (0..256)
                    .map(|i| k.eval(black_box(0.37 * i as f64)))
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn dephasing(c: &mut Criterion) {
    let spectrum = power_law_spectrum();
    let mut group = c.benchmark_group("chi");
    group.sample_size(20);
    for n in [0usize, 4, 20] {
        let seq = if n == 0 {
            decouple_core::PulseSequence::ramsey(2e-3).unwrap()
        } else {
            cpmg(n, 2e-3)
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &seq, |b, s| {
            b.iter(|| chi(s, black_box(2e-3), &spectrum).unwrap())
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    c.bench_function("solve_cancellation_n12", |b| {
        let start = cpmg_times(12).unwrap();
        b.iter(|| solve_polynomial_cancellation(12, black_box(&start)).unwrap())
    });
}

fn synthesis(c: &mut Criterion) {
    let synth = TrajectorySynthesizer::new(&white_spectrum(), 2e-6, 4e-3).unwrap();
    c.bench_function("synthesize_2k_samples", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            synth.generate(black_box(seed))
        })
    });
}

fn bloch(c: &mut Criterion) {
    let params = PulseParams::default();
    let seq = udd(8, 2e-3)
        .with_pulse_duration(params.pi_duration())
        .unwrap();
    let synth =
        TrajectorySynthesizer::new(&white_spectrum(), 5e-7, params.shot_duration(2e-3)).unwrap();
    let traj = synth.generate(7);
    c.bench_function("evolve_udd8_finite_pulses", |b| {
        b.iter(|| evolve_bloch(&seq, &params, black_box(&traj), 0.3).unwrap())
    });
}

criterion_group!(benches, filter, dephasing, solve, synthesis, bloch);
criterion_main!(benches);
