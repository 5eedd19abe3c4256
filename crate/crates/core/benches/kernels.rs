use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tentspace::atomic::decompose;
use tentspace::corpus::{CorpusBuilder, FieldKind};
use tentspace::embed::{embed_j, project_n, SliceKernel, SmoothCutoff};
use tentspace::gamma::GammaEngine;
use tentspace::par;
use tentspace::tentnorm::TentNorms;
use tentspace::{HalfSpaceGrid, NormedSpace};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", true), ("sequential", false)]
}

fn run<R>(parallel: bool, f: impl FnOnce() -> R) -> R {
    if parallel { f() } else { par::sequential(f) }
}

fn kernels(c: &mut Criterion) {
    let grid = Arc::new(HalfSpaceGrid::new(1, 4.0, 1.0 / 16.0, 2.0, 5).unwrap());
    let space = NormedSpace::euclidean(2);
    let engine = GammaEngine::new(space);
    let norms = TentNorms::new(engine);
    let f = CorpusBuilder::new(grid.clone(), space, 1)
        .with_kinds(&[FieldKind::TentField])
        .unwrap()
        .entry(0, &engine)
        .unwrap()
        .field;
    let psi = SmoothCutoff::build(1, 4.0).unwrap();
    let kernel = SliceKernel::cell_average(&grid, &psi).unwrap();
    let embedded = embed_j(&f, &kernel, psi.alpha, false).unwrap();

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, parallel) in modes() {
        group.bench_with_input(BenchmarkId::new("tent_norm_t1", name), &parallel, |b, &p| {
            b.iter(|| run(p, || norms.tent_norm_p(black_box(&f), 1.0).unwrap().value))
        });
        group.bench_with_input(BenchmarkId::new("decompose", name), &parallel, |b, &p| {
            b.iter(|| run(p, || decompose(&engine, black_box(&f)).unwrap().terms.len()))
        });
        group.bench_with_input(BenchmarkId::new("project_n", name), &parallel, |b, &p| {
            b.iter(|| run(p, || project_n(black_box(&embedded), &kernel).unwrap().max_abs()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
