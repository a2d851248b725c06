use constellation_bench::{series, PERIOD};
use constellation_core::cache::{CacheModel, Cyclic, ModelSpec, PolynomialRegression};
use constellation_core::harness::{run_cache_experiment, CacheGrid};
use constellation_core::value::Value;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn fill(model: &mut dyn CacheModel, n: usize) {
    for (t, v) in &series("diurnal", n).points {
        model.add_point(*t, Value::Double(*v)).unwrap();
    }
}

fn predict(c: &mut Criterion) {
    let mut g = c.benchmark_group("predict");
    let mut lin = PolynomialRegression::linear(20).unwrap();
    fill(&mut lin, 20);
    let mut quad = PolynomialRegression::new(2, 20).unwrap();
    fill(&mut quad, 20);
    let mut cyc = Cyclic::new(2, Some(96), 300).unwrap();
    fill(&mut cyc, 300);
    let at = 301 * PERIOD;
    for (name, m) in [("linear", &lin as &dyn CacheModel), ("quadratic", &quad), ("cyclic", &cyc)] {
        g.bench_function(name, |b| b.iter(|| black_box(m.predict_value(black_box(at)).unwrap())));
    }
    g.finish();
}

fn replay(c: &mut Criterion) {
    let mut g = c.benchmark_group("replay 1000 lookups");
    g.sample_size(20);
    let s = series("diurnal", 1000);
    for model in ["Consistent", "LinearRegression", "Cyclic"] {
        let grid = CacheGrid {
            models: vec![ModelSpec::named(model)],
            deltas: vec![Some(4 * PERIOD)],
            errors: vec![Some(1.0)],
            period: Some(PERIOD),
        };
        g.bench_with_input(BenchmarkId::from_parameter(model), &grid, |b, grid| {
            b.iter(|| black_box(run_cache_experiment(&s, grid).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, predict, replay);
criterion_main!(benches);
