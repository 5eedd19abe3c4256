use serde::Serialize;

use super::{less_eq, Ball, OpenSet};
use crate::halfspace::{dist, HalfSpaceGrid};

/// Disjoint balls inside an open set, in selection order, together with the
/// supremum `d_j` of admissible radii (over cell-center centers, before
/// snapping to the radius lattice) at each step.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BallCover {
    pub balls: Vec<Ball>,
    pub sup_radii: Vec<f64>,
}

/// Greedy selection of disjoint balls in `e`.
///
/// Candidates have cell-center centers and radii on the lattice of
/// multiples of `h/2` (capped at `L`) merged with `extra_radii`. Passing the
/// grid's t-level centers there makes every tent cell `(y, t)` of `e` a
/// candidate ball itself, so the dilated tents cover the tent of `e`
/// exactly. At each step the largest admissible candidate is taken, ties
/// going to the smallest cell index.
pub fn greedy_ball_cover(e: &OpenSet, extra_radii: &[f64]) -> BallCover {
    let grid = e.grid();
    let cap = grid.half_width();
    let kmax = (2.0 * cap / grid.h()).round() as usize;
    let mut lattice: Vec<f64> = (1..=kmax).map(|k| 0.5 * k as f64 * grid.h()).collect();
    lattice.extend(extra_radii.iter().copied().filter(|&r| r > 0.0 && r <= cap));
    lattice.sort_by(f64::total_cmp);
    lattice.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));

    let floor = |avail: f64| -> Option<f64> {
        let k = lattice.partition_point(|&r| less_eq(r, avail));
        (k > 0).then(|| lattice[k - 1])
    };

    let centers: Vec<_> = (0..grid.len()).map(|c| grid.center(c)).collect();
    let mut avail = e.center_distances();
    let mut cover = BallCover::default();
    loop {
        let mut best: Option<(usize, f64)> = None;
        let mut sup = 0.0f64;
        for (c, &a) in avail.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            sup = sup.max(a);
            if let Some(r) = floor(a) {
                if best.is_none_or(|(_, br)| r > br) {
                    best = Some((c, r));
                }
            }
        }
        let Some((c, r)) = best else { break };
        let ball = Ball::new(centers[c], r);
        cover.balls.push(ball);
        cover.sup_radii.push(sup);
        for (k, a) in avail.iter_mut().enumerate() {
            if *a > 0.0 {
                *a = a.min(dist(&centers[k], &ball.center) - r);
            }
        }
    }
    cover
}

/// Outcome of the exhaustive cover check.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CoverReport {
    /// Half-space cells whose representative point lies in the tent of `E`.
    pub tent_cells: usize,
    /// Tent cells not in the tent of any `5 B^j`.
    pub uncovered: Vec<usize>,
    /// Pairs of balls that intersect.
    pub overlapping: Vec<(usize, usize)>,
    /// Balls not contained in `E`.
    pub escaping: Vec<usize>,
    /// Steps where the chosen radius is not above half the available supremum.
    pub radius_failures: Vec<usize>,
}

impl CoverReport {
    pub fn passed(&self) -> bool {
        self.uncovered.is_empty()
            && self.overlapping.is_empty()
            && self.escaping.is_empty()
            && self.radius_failures.is_empty()
    }
}

pub fn verify_ball_cover(e: &OpenSet, cover: &BallCover, grid: &HalfSpaceGrid) -> CoverReport {
    let base = grid.base();
    let depth = e.center_distances();
    let mut report = CoverReport::default();
    for (i, b) in cover.balls.iter().enumerate() {
        if !less_eq(b.radius, e.dist_to_complement(&b.center)) {
            report.escaping.push(i);
        }
        for (j, other) in cover.balls.iter().enumerate().skip(i + 1) {
            if !b.is_disjoint(other) {
                report.overlapping.push((i, j));
            }
        }
        if !(b.radius > 0.5 * cover.sup_radii[i]) {
            report.radius_failures.push(i);
        }
    }
    let dilated: Vec<Ball> = cover.balls.iter().map(|b| b.dilate(5.0)).collect();
    for cell in 0..grid.len() {
        let (b, level) = grid.split(cell);
        let t = grid.t_center(level);
        if depth[b] <= 0.0 || !less_eq(t, depth[b]) {
            continue;
        }
        report.tent_cells += 1;
        let y = base.center(b);
        if !dilated.iter().any(|d| d.tent_contains(&y, t)) {
            report.uncovered.push(cell);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfspace::HalfSpaceGrid;

    fn grid() -> HalfSpaceGrid {
        HalfSpaceGrid::new(1, 4.0, 1.0 / 16.0, 2.0, 5).unwrap()
    }

    #[test]
    fn single_interval() {
        let g = grid();
        let e = OpenSet::interval(g.base().clone(), 0.0, 1.0);
        let cover = greedy_ball_cover(&e, &g.t_centers());
        assert!(!cover.balls.is_empty());
        // The deepest center is at distance 15/32 from the ends.
        assert!(cover.balls[0].radius >= 0.25);
        assert!((cover.balls[0].radius - 15.0 / 32.0).abs() < 1e-12);
        let report = verify_ball_cover(&e, &cover, &g);
        assert!(report.passed(), "{report:?}");
        assert!(report.tent_cells > 0);
    }

    #[test]
    fn two_components_get_one_ball_each_first() {
        let g = grid();
        let base = g.base().clone();
        let e = OpenSet::interval(base.clone(), -3.0, -2.0)
            .union(&OpenSet::interval(base, 2.0, 3.0))
            .unwrap();
        let cover = greedy_ball_cover(&e, &g.t_centers());
        let (a, b) = (cover.balls[0], cover.balls[1]);
        assert!(a.center[0] < 0.0 && b.center[0] > 0.0);
        assert!(a.radius > 0.25 && b.radius > 0.25);
        assert!(verify_ball_cover(&e, &cover, &g).passed());
    }

    #[test]
    fn empty_set_gives_no_balls() {
        let g = grid();
        let e = OpenSet::empty(g.base().clone());
        assert!(greedy_ball_cover(&e, &g.t_centers()).balls.is_empty());
    }

    #[test]
    fn planar_blob() {
        let g = HalfSpaceGrid::new(2, 2.0, 0.125, 1.0, 4).unwrap();
        let base = g.base().clone();
        let e = OpenSet::from_centers(base, |p| {
            (p[0] - 0.3).hypot(p[1]) < 0.7 || (p[0].abs() < 1.2 && (p[1] + 0.8).abs() < 0.2)
        });
        let cover = greedy_ball_cover(&e, &g.t_centers());
        let report = verify_ball_cover(&e, &cover, &g);
        assert!(report.passed(), "{report:?}");
    }
}
