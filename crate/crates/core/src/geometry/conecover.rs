//! Boundary points whose cones cover a cone minus a tent, and sampled
//! checks of the sector and cone-covering properties.
//!
//! The minimal boundary point in a direction set `S_m` is computed exactly:
//! the wedge `x + {v : v . v_m >= cos 30}` is clipped against every closed
//! complement cell touching the set (and against the exterior of the box),
//! and the nearest point of the clipped polygons is taken.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{less_eq, DirectionNet, OpenSet};
use crate::error::{Error, Result};
use crate::halfspace::{dist, BaseGrid, Point};

/// Points `x_1..x_N` on the boundary, one per direction set.
#[derive(Clone, Debug, Serialize)]
pub struct ConeCover {
    pub vertex: Point,
    pub points: Vec<Point>,
    /// `t_m = |x_m - x|`.
    pub distances: Vec<f64>,
    /// Directions in which the nearest boundary point is on the box
    /// boundary: the set may continue past the truncation there.
    pub flagged: Vec<bool>,
}

impl ConeCover {
    pub fn any_flagged(&self) -> bool {
        self.flagged.iter().any(|&f| f)
    }

    /// `(y, t)` lies in some `Gamma(x_m)`.
    pub fn covers(&self, y: &Point, t: f64) -> bool {
        self.points.iter().any(|p| dist(p, y) < t)
    }
}

type Rect = ([f64; 2], [f64; 2]);

fn rotate(v: Point, deg: f64) -> Point {
    let (s, c) = deg.to_radians().sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn clip_half_plane(poly: &[Point], x: &Point, normal: &Point) -> Vec<Point> {
    let side = |p: &Point| dot(&sub(p, x), normal);
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sa, sb) = (side(&a), side(&b));
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            let u = sa / (sa - sb);
            out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
        }
    }
    out
}

fn nearest_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return *a;
    }
    let u = (dot(&sub(p, a), &ab) / len2).clamp(0.0, 1.0);
    [a[0] + u * ab[0], a[1] + u * ab[1]]
}

/// Nearest point to `x` of `rect` within the 60 degree wedge around `v`.
fn wedge_rect_nearest(x: &Point, v: &Point, rect: &Rect, two_d: bool) -> Option<Point> {
    let (lo, hi) = rect;
    if !two_d {
        return if v[0] > 0.0 && lo[0] >= x[0] {
            Some([lo[0], 0.0])
        } else if v[0] < 0.0 && hi[0] <= x[0] {
            Some([hi[0], 0.0])
        } else {
            None
        };
    }
    let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    for normal in [rotate(*v, -60.0), rotate(*v, 60.0)] {
        poly = clip_half_plane(&poly, x, &normal);
        if poly.is_empty() {
            return None;
        }
    }
    let mut best = poly[0];
    for i in 0..poly.len() {
        let q = nearest_on_segment(x, &poly[i], &poly[(i + 1) % poly.len()]);
        if dist(x, &q) < dist(x, &best) {
            best = q;
        }
    }
    Some(best)
}

fn exterior_rects(grid: &BaseGrid) -> Vec<Rect> {
    let l = grid.half_width();
    let far = 11.0 * l;
    if grid.dim() == 1 {
        vec![([l, 0.0], [far, 0.0]), ([-far, 0.0], [-l, 0.0])]
    } else {
        vec![
            ([l, -far], [far, far]),
            ([-far, -far], [-l, far]),
            ([-far, l], [far, far]),
            ([-far, -far], [far, -l]),
        ]
    }
}

/// For each direction set `S_m`, the nearest boundary point of `e` seen from
/// `x` in a direction of `S_m`.
pub fn cone_cover_points(e: &OpenSet, net: &DirectionNet, x: Point) -> Result<ConeCover> {
    let grid = e.grid();
    if net.dim() != grid.dim() {
        return Err(Error::InvalidParameter("direction net and grid dimensions differ".into()));
    }
    if !e.contains_point(&x) {
        return Err(Error::PointOutsideSet(x));
    }
    let two_d = grid.dim() == 2;
    let rim: Vec<Rect> = e.rim().iter().map(|&c| grid.cell_bounds(c)).collect();
    let outside = exterior_rects(grid);
    let nearest = |rects: &[Rect], v: &Point| -> Option<Point> {
        rects
            .iter()
            .filter_map(|r| wedge_rect_nearest(&x, v, r, two_d))
            .min_by(|a, b| dist(&x, a).total_cmp(&dist(&x, b)))
    };
    let mut cover = ConeCover { vertex: x, points: vec![], distances: vec![], flagged: vec![] };
    for v in net.vectors() {
        let inner = nearest(&rim, v);
        let edge = nearest(&outside, v).expect("the box exterior surrounds every direction");
        let (p, flagged) = match inner {
            Some(p) if dist(&x, &p) < dist(&x, &edge) => (p, false),
            _ => (edge, true),
        };
        cover.distances.push(dist(&x, &p));
        cover.points.push(p);
        cover.flagged.push(flagged);
    }
    Ok(cover)
}

/// Distance along the ray `x + s v` to the first point outside `e`
/// (the box exterior counts as outside).
pub fn ray_exit_distance(e: &OpenSet, x: &Point, v: &Point) -> f64 {
    let grid = e.grid();
    let n = grid.dim();
    let slab = |lo: &Point, hi: &Point| -> Option<f64> {
        let (mut a, mut b) = (0.0f64, f64::INFINITY);
        for k in 0..n {
            if v[k].abs() < 1e-300 {
                if x[k] < lo[k] || x[k] > hi[k] {
                    return None;
                }
            } else {
                let (s0, s1) = ((lo[k] - x[k]) / v[k], (hi[k] - x[k]) / v[k]);
                a = a.max(s0.min(s1));
                b = b.min(s0.max(s1));
            }
        }
        (a <= b).then_some(a)
    };
    let mut best = f64::INFINITY;
    for &c in e.rim() {
        let (lo, hi) = grid.cell_bounds(c);
        if let Some(s) = slab(&lo, &hi) {
            best = best.min(s);
        }
    }
    let l = grid.half_width();
    for k in 0..n {
        if v[k] > 0.0 {
            best = best.min((l - x[k]) / v[k]);
        } else if v[k] < 0.0 {
            best = best.min((-l - x[k]) / v[k]);
        }
    }
    best.max(0.0)
}

/// Tent membership against an open set with cached center depths: the
/// distance to the complement is 1-Lipschitz, so the exact computation is
/// only needed within a half cell diagonal of the cached value.
struct TentOracle<'a> {
    set: &'a OpenSet,
    depth: Vec<f64>,
    slack: f64,
}

impl<'a> TentOracle<'a> {
    fn new(set: &'a OpenSet) -> Self {
        let g = set.grid();
        let slack = 0.5 * g.h() * (g.dim() as f64).sqrt() + 1e-12;
        Self { set, depth: set.center_distances(), slack }
    }

    fn depth(&self, y: &Point) -> f64 {
        self.set.dist_to_complement(y)
    }

    fn contains(&self, y: &Point, t: f64) -> bool {
        let Some(cell) = self.set.grid().locate(y) else {
            return false;
        };
        let d = self.depth[cell];
        if d <= 0.0 || t > d + self.slack {
            return false;
        }
        if t < d - self.slack {
            return true;
        }
        less_eq(t, self.depth(y))
    }
}

/// Outcome of the sampled check `Gamma(x) \ tent(E*) inside union Gamma(x_m)`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ContainmentReport {
    pub proposals: usize,
    pub accepted: usize,
    pub covered: usize,
    /// Uncovered samples within the margin of a cone or tent boundary.
    pub near_boundary: usize,
    /// Uncovered samples relying on a flagged direction.
    pub skipped_flagged: usize,
    pub violations: usize,
    pub first_violations: Vec<(Point, f64)>,
}

impl ContainmentReport {
    pub fn near_fraction(&self) -> f64 {
        if self.accepted == 0 { 0.0 } else { self.near_boundary as f64 / self.accepted as f64 }
    }

    fn merge(&mut self, other: ContainmentReport) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.covered += other.covered;
        self.near_boundary += other.near_boundary;
        self.skipped_flagged += other.skipped_flagged;
        self.violations += other.violations;
        let room = 8usize.saturating_sub(self.first_violations.len());
        self.first_violations.extend(other.first_violations.into_iter().take(room));
    }
}

fn sample_cone_point<R: Rng + ?Sized>(rng: &mut R, x: &Point, two_d: bool, tmin: f64, tmax: f64) -> (Point, f64) {
    let t = (tmin.ln() + (tmax / tmin).ln() * rng.random::<f64>()).exp();
    let y = if two_d {
        let r = t * rng.random::<f64>().sqrt();
        let a = std::f64::consts::TAU * rng.random::<f64>();
        [x[0] + r * a.cos(), x[1] + r * a.sin()]
    } else {
        [x[0] + t * (2.0 * rng.random::<f64>() - 1.0), 0.0]
    };
    (y, t)
}

/// Samples `(y, t)` in `Gamma(x)` with `t` log-uniform in `[h/8, 2L]`,
/// rejects those in the tent over `e_star`, and checks that every accepted
/// sample lies in some `Gamma(x_m)`. Uncovered samples within `margin` of a
/// cone boundary `|y - x_m| = t` or of the tent boundary are counted as
/// near-boundary rather than as violations.
pub fn check_cone_containment(
    e_star: &OpenSet,
    cover: &ConeCover,
    samples: usize,
    margin: f64,
    seed: u64,
) -> ContainmentReport {
    const CHUNK: usize = 4096;
    let grid = e_star.grid();
    let two_d = grid.dim() == 2;
    let (tmin, tmax) = (grid.h() / 8.0, 2.0 * grid.half_width());
    let oracle = TentOracle::new(e_star);
    let chunks = samples.div_ceil(CHUNK);
    let parts = crate::par::map_range(chunks, |ci| {
        let quota = CHUNK.min(samples - ci * CHUNK);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ci as u64);
        let mut rep = ContainmentReport::default();
        let cap = 1000 * quota.max(1);
        while rep.accepted < quota && rep.proposals < cap {
            rep.proposals += 1;
            let (y, t) = sample_cone_point(&mut rng, &cover.vertex, two_d, tmin, tmax);
            if oracle.contains(&y, t) {
                continue;
            }
            rep.accepted += 1;
            if cover.covers(&y, t) {
                rep.covered += 1;
                continue;
            }
            if cover.any_flagged() {
                rep.skipped_flagged += 1;
                continue;
            }
            let cone_gap = cover.points.iter().map(|p| dist(p, &y) - t).fold(f64::INFINITY, f64::min);
            let tent_gap = t - oracle.depth(&y);
            if cone_gap < margin || tent_gap < margin {
                rep.near_boundary += 1;
            } else {
                rep.violations += 1;
                if rep.first_violations.len() < 8 {
                    rep.first_violations.push((y, t));
                }
            }
        }
        rep
    });
    let mut total = ContainmentReport::default();
    for p in parts {
        total.merge(p);
    }
    total
}

/// Outcome of the sampled sector check `y in R_m(x, t) inside E  =>  B(y, t) inside E*`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SectorLemmaReport {
    pub trials: usize,
    pub holds: usize,
    /// Failures by less than one cell diagonal.
    pub within_grid_tolerance: usize,
    pub violations: usize,
}

/// Draws `x` uniformly in `e`, a direction `m` and the largest radius
/// `t <= t_m` with `R_m(x, t)` inside `e`, scaled by a uniform factor, then
/// samples `y` in the sector and compares `t` with the depth of `y` in `e_star`.
pub fn check_sector_lemma(
    e: &OpenSet,
    e_star: &OpenSet,
    net: &DirectionNet,
    trials: usize,
    seed: u64,
) -> Result<SectorLemmaReport> {
    let grid = e.grid();
    let cells = e.cells();
    let mut report = SectorLemmaReport::default();
    if cells.is_empty() {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = grid.h() * (grid.dim() as f64).sqrt();
    while report.trials < trials {
        let c = cells[rng.random_range(0..cells.len())];
        let (lo, hi) = grid.cell_bounds(c);
        let x = [
            lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
            lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
        ];
        if !e.contains_point(&x) {
            continue;
        }
        let cover = cone_cover_points(e, net, x)?;
        let m = rng.random_range(0..net.len());
        if cover.flagged[m] {
            continue;
        }
        let t = cover.distances[m] * rng.random::<f64>().max(1e-3);
        let y = net.sample_sector(&mut rng, &x, t, m);
        report.trials += 1;
        let depth = e_star.dist_to_complement(&y);
        if less_eq(t, depth) {
            report.holds += 1;
        } else if t - depth < diag {
            report.within_grid_tolerance += 1;
        } else {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfspace::BaseGrid;

    #[test]
    fn interval_endpoints() {
        let g = BaseGrid::new(1, 4.0, 1.0 / 16.0).unwrap();
        let e = OpenSet::interval(g, 0.0, 1.0);
        let net = DirectionNet::build(1).unwrap();
        let cover = cone_cover_points(&e, &net, [0.5, 0.0]).unwrap();
        assert_eq!(cover.points, vec![[1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(cover.distances, vec![0.5, 0.5]);
        assert!(!cover.any_flagged());
    }

    #[test]
    fn interval_cover_holds_without_extension() {
        let g = BaseGrid::new(1, 4.0, 1.0 / 16.0).unwrap();
        let e = OpenSet::interval(g, 0.0, 1.0);
        let net = DirectionNet::build(1).unwrap();
        let cover = cone_cover_points(&e, &net, [0.5, 0.0]).unwrap();
        let rep = check_cone_containment(&e, &cover, 20_000, 0.0, 11);
        assert_eq!(rep.accepted, 20_000);
        assert_eq!(rep.violations + rep.near_boundary, 0, "{rep:?}");
    }

    #[test]
    fn disk_gives_six_points_at_unit_distance() {
        let g = BaseGrid::new(2, 2.0, 1.0 / 64.0).unwrap();
        let e = OpenSet::ball(g, [0.0, 0.0], 1.0);
        let net = DirectionNet::build(2).unwrap();
        let cover = cone_cover_points(&e, &net, [0.0, 0.0]).unwrap();
        assert_eq!(cover.points.len(), 6);
        for (m, &t) in cover.distances.iter().enumerate() {
            assert!(t <= 1.0 + 1e-12 && t > 1.0 - 2.0 / 64.0, "m={m}: {t}");
        }
    }

    #[test]
    fn exact_minimum_is_below_every_sampled_ray() {
        let g = BaseGrid::new(2, 2.0, 1.0 / 8.0).unwrap();
        let e = OpenSet::from_centers(g, |p| p[0].abs() < 0.9 && p[1].abs() < 0.5 || p[0].hypot(p[1] - 0.6) < 0.4);
        let net = DirectionNet::build(2).unwrap();
        let x = [0.1, 0.05];
        let cover = cone_cover_points(&e, &net, x).unwrap();
        for (m, v) in net.vectors().iter().enumerate() {
            let mut sampled = f64::INFINITY;
            for k in -30..=30 {
                let u = rotate(*v, k as f64);
                sampled = sampled.min(ray_exit_distance(&e, &x, &u));
            }
            assert!(cover.distances[m] <= sampled + 1e-12);
            assert!(sampled - cover.distances[m] < 0.05, "m={m}");
        }
    }

    #[test]
    fn outside_point_is_rejected() {
        let g = BaseGrid::new(1, 4.0, 1.0 / 16.0).unwrap();
        let e = OpenSet::interval(g, 0.0, 1.0);
        let net = DirectionNet::build(1).unwrap();
        assert!(matches!(cone_cover_points(&e, &net, [2.0, 0.0]), Err(Error::PointOutsideSet(_))));
    }

    #[test]
    fn flags_directions_reaching_the_box() {
        let g = BaseGrid::new(1, 4.0, 1.0 / 16.0).unwrap();
        let e = OpenSet::interval(g, 0.0, 4.0);
        let net = DirectionNet::build(1).unwrap();
        let cover = cone_cover_points(&e, &net, [1.0, 0.0]).unwrap();
        assert_eq!(cover.flagged, vec![true, false]);
    }
}
