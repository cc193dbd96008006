use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use pareto_witness::detector::{sample_psi, NoiseModel};
use pareto_witness::dro::{run_exchange, DroConfig};
use pareto_witness::frontier::{solve_weighted_sum_smooth, FwOptions, WeightVector};
use pareto_witness::simgen::{add_noise, gen_coordinating, ScenarioConfig};
use pareto_witness::uavsim::{solve_are, LinearGaussianModel, ARE_MAX_ITER, ARE_TOL};
use pareto_witness::{proximity, test_feasibility, Probe, RngSeed, SmoothObjective};

fn afriat(c: &mut Criterion) {
    let clean = gen_coordinating(&ScenarioConfig::reference(10, 1)).unwrap().dataset;
    let noisy = add_noise(&clean, 0.05, RngSeed(1)).unwrap();
    c.bench_function("test_feasibility T=10 M=3", |b| b.iter(|| test_feasibility(&clean).unwrap()));
    c.bench_function("proximity T=10 M=3 noisy", |b| b.iter(|| proximity(&noisy, false).unwrap()));
}

fn forward(c: &mut Criterion) {
    let objs = SmoothObjective::reference_trio();
    let mu = WeightVector::uniform(3);
    let probe = Probe::new(vec![0.4, 0.9]).unwrap();
    let opts = FwOptions::default();
    c.bench_function("frank_wolfe reference trio", |b| b.iter(|| solve_weighted_sum_smooth(&objs, &mu, &probe, &opts).unwrap()));
}

fn detector(c: &mut Criterion) {
    let d = gen_coordinating(&ScenarioConfig::reference(10, 2)).unwrap().dataset;
    let noise = NoiseModel::gaussian(0.05).unwrap();
    c.bench_function("sample_psi L=500 T=10", |b| b.iter(|| sample_psi(d.probes(), &noise, 500, 3, RngSeed(2)).unwrap()));
}

fn dro(c: &mut Criterion) {
    let clean = gen_coordinating(&ScenarioConfig::reference(5, 3)).unwrap().dataset;
    let noisy = add_noise(&clean, 1.0, RngSeed(3)).unwrap();
    let cfg = DroConfig::new(0.2, 0.1);
    let mut g = c.benchmark_group("dro");
    g.sample_size(10);
    g.bench_function("exchange T=5 sigma2=1", |b| b.iter_batched(|| noisy.clone(), |nd| run_exchange(&nd, &cfg).unwrap(), BatchSize::SmallInput));
    g.finish();
}

fn riccati(c: &mut Criterion) {
    let model = LinearGaussianModel::diagonal(
        nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
        nalgebra::DMatrix::identity(2, 2),
    )
    .unwrap();
    c.bench_function("solve_are 2x2", |b| b.iter(|| solve_are(&model, &[1.0, 1.0], &[0.5, 0.5], ARE_TOL, ARE_MAX_ITER).unwrap()));
}

criterion_group!(benches, afriat, forward, detector, dro, riccati);
criterion_main!(benches);
