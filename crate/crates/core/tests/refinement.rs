//! Grid-refinement behavior of quantities that should converge.

use std::sync::Arc;

use tentspace::atomic::validate_atom;
use tentspace::corpus::{CorpusBuilder, Placement};
use tentspace::embed::{h1_atom_image_check, SliceKernel, SmoothCutoff};
use tentspace::gamma::GammaEngine;
use tentspace::{HalfSpaceGrid, NormedSpace};

fn line() -> Arc<HalfSpaceGrid> {
    Arc::new(HalfSpaceGrid::new(1, 4.0, 1.0 / 16.0, 2.0, 5).unwrap())
}

fn integral(g: &HalfSpaceGrid, f: impl Fn(f64, f64) -> f64) -> f64 {
    (0..g.len())
        .map(|c| {
            let (y, t) = g.cell_point(c);
            f(y[0], t) * g.measure(c)
        })
        .sum()
}

#[test]
fn smooth_integrals_converge_under_refinement() {
    let coarse = line();
    let fine = coarse.refined().unwrap();
    let finer = fine.refined().unwrap();
    let f = |y: f64, t: f64| t * t * (-y * y).exp() * (1.0 - t / 4.0);
    let (a, b, c) = (integral(&coarse, f), integral(&fine, f), integral(&finer, f));
    let h = coarse.base().h();
    assert!((a - b).abs() <= h * b.abs(), "{a} {b}");
    assert!((b - c).abs() <= (a - b).abs() + 1e-15, "{a} {b} {c}");
}

#[test]
fn atom_image_constant_is_refinement_stable() {
    let g = line();
    let fine = Arc::new(g.refined().unwrap());
    let space = NormedSpace::euclidean(1);
    let engine = GammaEngine::new(space);
    let psi = SmoothCutoff::build(1, 4.0).unwrap();
    let builder = CorpusBuilder::new(g.clone(), space, 77)
        .with_placement(Placement { center_reach: 0.5, radius_range: (0.25, 0.5) });
    let mut worst = [0.0f64; 2];
    for (level, grid) in [g.clone(), fine].into_iter().enumerate() {
        let kernel = SliceKernel::cell_average(&grid, &psi).unwrap();
        for i in 0..6 {
            let spec = builder.profile_spec(i);
            let raw = spec.render(&grid, space).unwrap();
            let atom = raw.scaled(validate_atom(&engine, &raw, &spec.ball).normalization.sqrt().recip());
            assert!(validate_atom(&engine, &atom, &spec.ball).valid);
            let report = h1_atom_image_check(&atom, &spec.ball, &psi, &kernel).unwrap();
            assert_eq!(report.support_violations, 0);
            assert!(report.max_slice_mean < 1e-10);
            worst[level] = worst[level].max(report.normalization);
        }
    }
    assert!(worst[0] > 0.0);
    assert!((worst[1] / worst[0] - 1.0).abs() <= 0.2, "{worst:?}");
}
