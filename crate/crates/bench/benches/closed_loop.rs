use criterion::{black_box, criterion_group, criterion_main, Criterion};
use diffusion_esc::{
    design_dither, run_esc, simulate_average_system, AverageSettings, BacksteppingKernel, DitherParams,
    Grid, Scheme, SolverConfig,
};
use diffusion_esc_bench::short_scenario;

fn dither(c: &mut Criterion) {
    let p = DitherParams::new(0.2, 10.0, 1.0).unwrap();
    c.bench_function("design_dither", |b| b.iter(|| design_dither(black_box(p))));
}

fn esc_loop(c: &mut Criterion) {
    let config = short_scenario(1.0);
    let mut group = c.benchmark_group("loop");
    group.sample_size(20);
    group.bench_function("run_esc_1s", |b| b.iter(|| run_esc(black_box(&config)).unwrap()));
    let kernel = BacksteppingKernel::new(-0.4, 1.0).unwrap();
    let settings = AverageSettings {
        grid: Grid::new(1.0, 101).unwrap(),
        solver: SolverConfig::new(1e-3, Scheme::CrankNicolson),
        t_final: 1.0,
        record_every: 10,
    };
    let u0 = vec![0.0; 101];
    group.bench_function("average_system_1s", |b| {
        b.iter(|| simulate_average_system(&kernel, 0.2, -2.0, settings, 1.0, black_box(&u0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dither, esc_loop);
criterion_main!(benches);
