use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use labelnorm::admm::phi_solve;
use labelnorm::energy::{AdmmState, ModelParams, ShapeModel};
use labelnorm::exec::Exec;
use labelnorm::gen::{add_noise, gen_fibonacci_labels, gen_icosphere, NoiseSpec};
use labelnorm::mesh::GeometryCache;
use labelnorm::prox::{u_update, w_update};

fn policies(c: &mut Criterion) {
    let mesh = gen_icosphere(5, 1.0);
    let noisy = add_noise(
        &mesh,
        &NoiseSpec {
            variance_factor: 0.01,
            seed: 0,
        },
    );
    let labels = gen_fibonacci_labels(20);
    let data = noisy.positions().to_vec();
    let state = AdmmState::initial(&mesh, data.clone(), &labels);
    let cache = GeometryCache::compute(&mesh, &data);

    for exec in [Exec::Sequential, Exec::Parallel] {
        let mut params = ModelParams::sphere(1.0, 0.01);
        params.exec = exec;
        let name = format!("{exec:?}").to_lowercase();

        let mut group = c.benchmark_group("shape_model");
        group.sample_size(10);
        group.bench_function(BenchmarkId::new("gradient", &name), |b| {
            b.iter(|| {
                ShapeModel::new(&state, &mesh, &labels, &params, &data)
                    .gradient(&data)
                    .unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("hessian", &name), |b| {
            b.iter(|| {
                ShapeModel::new(&state, &mesh, &labels, &params, &data)
                    .hessian(&data)
                    .unwrap()
            })
        });
        group.finish();

        let mut group = c.benchmark_group("splits");
        group.bench_function(BenchmarkId::new("u_update", &name), |b| {
            b.iter(|| u_update(&state, &cache, &labels, &params))
        });
        group.bench_function(BenchmarkId::new("w_update", &name), |b| {
            b.iter(|| w_update(&state, exec))
        });
        group.finish();

        let mut group = c.benchmark_group("phi");
        group.sample_size(10);
        group.bench_function(BenchmarkId::new("phi_solve", &name), |b| {
            b.iter(|| phi_solve(&state, &mesh, &cache, &params).unwrap())
        });
        group.finish();
    }
}

criterion_group!(benches, policies);
criterion_main!(benches);
