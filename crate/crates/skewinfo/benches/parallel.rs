//! Sequential vs parallel lanes for the three hot paths: score-product
//! evaluation on quadrature-sized grids, batch density evaluation, and
//! substream sampling. Run with `cargo bench`; the lanes share inputs so
//! the two timings in each group are directly comparable.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use skewinfo::density::{SkewModel, ThetaPoint};
use skewinfo::exec;
use skewinfo::fisher::{Part, ScoreAtSymmetry};
use skewinfo::models::{Outer, Rule, SkewingFunction, SymmetricKernel};

fn tuned<'a>(
    c: &'a mut Criterion,
    name: &str,
) -> criterion::BenchmarkGroup<'a, criterion::measurement::WallTime> {
    let mut group = c.benchmark_group(name);
    group.sample_size(20);
    group.warm_up_time(Duration::from_millis(300));
    group.measurement_time(Duration::from_millis(800));
    group
}

fn score_product_grid(c: &mut Criterion) {
    let model = SkewModel::new(
        SymmetricKernel::product(vec![
            SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
            SymmetricKernel::logistic(Rule::UnitVariance).unwrap(),
        ])
        .unwrap(),
        SkewingFunction::linear(Outer::NormalCdf),
    )
    .unwrap();
    let theta0 = ThetaPoint::symmetric(2);
    let score = ScoreAtSymmetry::new(&model, &theta0).unwrap();
    let kernel = model.kernel();

    let side = 64usize;
    let node = |i: usize| {
        let x = -6.0 + 12.0 * (i % side) as f64 / (side - 1) as f64;
        let y = -6.0 + 12.0 * (i / side) as f64 / (side - 1) as f64;
        [x, y]
    };
    let eval = |i: usize| {
        let z = node(i);
        let mut s = [0.0; 4];
        score.eval_standardized(&z, Part::Reduced, &mut s);
        let fz = kernel.log_density(&z).exp();
        let mut acc = 0.0;
        for a in 0..4 {
            for b in a..4 {
                acc += s[a] * s[b] * fz;
            }
        }
        acc
    };
    let n = side * side;

    let mut group = tuned(c, "score_product_grid");
    group.bench_function("sequential", |b| {
        b.iter(|| exec::sum_pairwise(&exec::map_indexed_seq(n, |i| black_box(eval(i)))))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| exec::sum_pairwise(&exec::map_indexed_par(n, |i| black_box(eval(i)))))
    });
    group.finish();
}

fn batch_pdf(c: &mut Criterion) {
    let model = SkewModel::new(
        SymmetricKernel::student(1, 5.0, Rule::UnitVariance).unwrap(),
        SkewingFunction::t_type(5.0, Outer::NormalCdf).unwrap(),
    )
    .unwrap();
    let theta = ThetaPoint::symmetric(1)
        .with_delta(nalgebra::DVector::from_row_slice(&[1.0]))
        .unwrap();
    let frozen = model.at(&theta).unwrap();

    let n = 32_768usize;
    let x_of = |i: usize| -8.0 + 16.0 * i as f64 / (n - 1) as f64;

    let mut group = tuned(c, "batch_pdf");
    group.bench_function("sequential", |b| {
        b.iter(|| exec::sum_pairwise(&exec::map_indexed_seq(n, |i| frozen.pdf(&[x_of(i)]))))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| exec::sum_pairwise(&exec::map_indexed_par(n, |i| frozen.pdf(&[x_of(i)]))))
    });
    group.finish();
}

fn substream_sampling(c: &mut Criterion) {
    let model = SkewModel::new(
        SymmetricKernel::gaussian(2, Rule::UnitVariance).unwrap(),
        SkewingFunction::linear(Outer::NormalCdf),
    )
    .unwrap();
    let theta0 = ThetaPoint::symmetric(2);
    let frozen = model.at(&theta0).unwrap();

    let n = 65_536usize;
    let draw = |i: usize| {
        let mut rng = exec::substream(42, i as u64);
        let mut out = [0.0; 2];
        frozen.sample_into(&mut rng, &mut out).unwrap();
        out[0] + out[1]
    };

    let mut group = tuned(c, "substream_sampling");
    group.bench_function("sequential", |b| {
        b.iter(|| exec::sum_pairwise(&exec::map_indexed_seq(n, |i| black_box(draw(i)))))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| exec::sum_pairwise(&exec::map_indexed_par(n, |i| black_box(draw(i)))))
    });
    group.finish();
}

criterion_group!(benches, score_product_grid, batch_pdf, substream_sampling);
criterion_main!(benches);
