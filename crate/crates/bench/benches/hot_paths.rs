//! Microbenchmarks for the per-sample and per-trial inner loops.
//!
//! `sliding_dft_update` dominates the monitor's cost when it tracks a wide
//! band; `shiryaev_update` runs once per slot inside every Monte Carlo
//! trial; the plant step and the onset-state fit bound the simulation and
//! window-classification throughput respectively.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use pycra_core::detect::{chi2_statistic, estimate_onset_state};
use pycra_core::dft::SlidingDft;
use pycra_core::plant::StateSpaceModel;
use pycra_core::qcd::{shiryaev_update, QcdProblem};
use pycra_core::rng::RngStream;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    (0..len).map(|_| rng.normal(0.0, 1.0)).collect()
}

fn sliding_dft_update(c: &mut Criterion) {
    let samples = noise(4096, 7);
    for (label, lo, hi) in [("narrow_band", 10, 26), ("wide_band", 2, 130)] {
        let mut dft = SlidingDft::with_band(2500, lo, hi).unwrap();
        for &y in &samples {
            dft.update(y);
        }
        let mut i = 0;
        c.bench_function(&format!("sliding_dft_update/{label}"), |b| {
            b.iter(|| {
                dft.update(black_box(samples[i & 4095]));
                i += 1;
            })
        });
    }
}

fn shiryaev_step(c: &mut Criterion) {
    let p = QcdProblem::new(0.5, 1.0, 0.05, 0.999).unwrap();
    let xs = noise(1024, 11);
    let mut i = 0;
    let mut posterior = 0.0;
    c.bench_function("shiryaev_update", |b| {
        b.iter(|| {
            posterior = shiryaev_update(&p, black_box(posterior), xs[i & 1023]);
            if posterior > 0.9 {
                posterior = 0.0;
            }
            i += 1;
        })
    });
}

fn plant_step(c: &mut Criterion) {
    let mut plant = StateSpaceModel::resonant(180.0, 0.035, 10_000.0, 0.0, 0.01).unwrap();
    let ws = noise(1024, 13);
    let mut i = 0;
    c.bench_function("plant_step_resonant", |b| {
        b.iter(|| {
            let y = plant.step(black_box(1.0), ws[i & 1023]);
            i += 1;
            y
        })
    });
}

fn onset_fit(c: &mut Criterion) {
    let model = StateSpaceModel::resonant(180.0, 0.035, 10_000.0, 0.0, 0.01).unwrap();
    let m = 1000;
    let drive: Vec<f64> = (0..m).map(|k| if (k / 250) % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let y = noise(m, 17);
    c.bench_function("onset_state_fit_1000", |b| {
        b.iter_batched(
            || (y.clone(), drive.clone()),
            |(y, drive)| estimate_onset_state(&model, &y, &drive, 71.0, 10_000.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn chi2_window(c: &mut Criterion) {
    let z = noise(512, 19);
    c.bench_function("chi2_statistic_50", |b| {
        b.iter(|| chi2_statistic(black_box(&z[..50]), 50).unwrap())
    });
}

criterion_group!(
    benches,
    sliding_dft_update,
    shiryaev_step,
    plant_step,
    onset_fit,
    chi2_window
);
criterion_main!(benches);
