//! Seeded test fields: impulses, random tent-supported fields, atoms and
//! smooth profiles. Every field is supported in the tent over a ball that
//! sits well inside the base box, so cone shadows and maximal extensions
//! stay on the grid.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atomic::validate_atom;
use crate::error::{Error, Result};
use crate::gamma::GammaEngine;
use crate::geometry::{Ball, OpenSet};
use crate::halfspace::{dist, BaseGrid, GridFunction, HalfSpaceGrid, NormedSpace, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Impulse,
    TentField,
    Atom,
    SmoothProfile,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [FieldKind::Impulse, FieldKind::TentField, FieldKind::Atom, FieldKind::SmoothProfile];
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub kind: FieldKind,
    pub ball: Ball,
    pub field: GridFunction,
}

/// Where balls may be placed: centers within `center_reach` of the origin,
/// radii in `radius_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub center_reach: f64,
    pub radius_range: (f64, f64),
}

impl Placement {
    /// Keeps the ball and a maximal extension at threshold 1/4 (roughly four
    /// radii) inside the box.
    pub fn for_grid(grid: &HalfSpaceGrid) -> Self {
        let l = grid.base().half_width();
        let h = grid.base().h();
        let r_max = (l / 5.0).min(grid.top() / 1.5);
        let r_min = (4.0 * h).min(r_max / 2.0);
        Self { center_reach: (l - 4.5 * r_max).max(0.0), radius_range: (r_min, r_max) }
    }
}

/// A grid-independent field `xi (1 - s^2)^2 cos(phase + 4 t / r)` with
/// `s = (|y - c| + t) / r`, supported in the tent over `B(c, r)`. Rendering
/// the same spec on a grid and its refinement gives comparable fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub ball: Ball,
    pub xi: Vec<f64>,
    pub phase: f64,
}

impl ProfileSpec {
    pub fn render(&self, grid: &Arc<HalfSpaceGrid>, space: NormedSpace) -> Result<GridFunction> {
        if self.xi.len() != space.d {
            return Err(Error::ValueLength { expected: space.d, got: self.xi.len() });
        }
        let (c0, r) = (self.ball.center, self.ball.radius);
        GridFunction::from_fn(grid.clone(), space, |c, v| {
            let (y, t) = grid.cell_point(c);
            if self.ball.tent_contains(&y, t) {
                let s = (dist(&y, &c0) + t) / r;
                let w = (1.0 - s * s).max(0.0).powi(2) * (self.phase + 4.0 * t / r).cos();
                for (o, x) in v.iter_mut().zip(&self.xi) {
                    *o = w * x;
                }
            }
        })
    }
}

pub struct CorpusBuilder {
    grid: Arc<HalfSpaceGrid>,
    space: NormedSpace,
    placement: Placement,
    seed: u64,
    kinds: Vec<FieldKind>,
}

fn entry_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

impl CorpusBuilder {
    pub fn new(grid: Arc<HalfSpaceGrid>, space: NormedSpace, seed: u64) -> Self {
        let placement = Placement::for_grid(&grid);
        Self { grid, space, placement, seed, kinds: FieldKind::ALL.to_vec() }
    }

    pub fn with_kinds(mut self, kinds: &[FieldKind]) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::InvalidParameter("corpus needs at least one field kind".into()));
        }
        self.kinds = kinds.to_vec();
        Ok(self)
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    fn random_ball(&self, rng: &mut ChaCha8Rng) -> Ball {
        let (lo, hi) = self.placement.radius_range;
        let reach = self.placement.center_reach;
        let mut center = [0.0; 2];
        for c in center.iter_mut().take(self.grid.dim()) {
            *c = if reach > 0.0 { rng.random_range(-reach..=reach) } else { 0.0 };
        }
        Ball::new(center, rng.random_range(lo..=hi))
    }

    fn random_vector(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.space.d).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    fn tent_field(&self, ball: &Ball, xi: &[f64], shape: impl Fn(&Point, f64) -> f64) -> Result<GridFunction> {
        let g = &self.grid;
        GridFunction::from_fn(g.clone(), self.space, |c, v| {
            let (y, t) = g.cell_point(c);
            if ball.tent_contains(&y, t) {
                let s = shape(&y, t);
                for (o, x) in v.iter_mut().zip(xi) {
                    *o = s * x;
                }
            }
        })
    }

    /// Entry `index` of the corpus; independent of the other entries.
    pub fn entry(&self, index: usize, engine: &GammaEngine) -> Result<CorpusEntry> {
        let mut rng = entry_rng(self.seed, index);
        let kind = self.kinds[index % self.kinds.len()];
        let mut ball = self.random_ball(&mut rng);
        let mut xi = self.random_vector(&mut rng);
        if xi.iter().all(|&v| v == 0.0) {
            xi[0] = 1.0;
        }
        let field = match kind {
            FieldKind::Impulse => {
                let g = &self.grid;
                let cells: Vec<usize> = (0..g.len())
                    .filter(|&c| {
                        let (y, t) = g.cell_point(c);
                        ball.tent_contains(&y, t)
                    })
                    .collect();
                if cells.is_empty() {
                    return Err(Error::InvalidParameter("ball too small for any tent cell".into()));
                }
                let cell = cells[rng.random_range(0..cells.len())];
                let (y, t) = g.cell_point(cell);
                // Shrink to the smallest ball around the cell's center whose tent holds it.
                let cb = g.base().center(g.split(cell).0);
                ball = Ball::new(cb, (dist(&y, &cb) + t) * (1.0 + 1e-6));
                GridFunction::impulse(g.clone(), self.space, cell, &xi)?
            }
            FieldKind::TentField => {
                let noise: Vec<f64> = (0..self.grid.len()).map(|_| rng.random_range(0.25..=1.75)).collect();
                let r = ball.radius;
                let c0 = ball.center;
                self.tent_field(&ball, &xi, |y, t| 1.0 - (dist(y, &c0) + t) / (2.0 * r))?.multiplied(|c| noise[c])
            }
            FieldKind::Atom => {
                let c0 = ball.center;
                let r = ball.radius;
                let raw = self.tent_field(&ball, &xi, |y, t| (t / r).sqrt() * (1.0 - dist(y, &c0) / r))?;
                let report = validate_atom(engine, &raw, &ball);
                if report.normalization <= 0.0 {
                    return Err(Error::InvalidParameter("atom candidate vanishes on the grid".into()));
                }
                raw.scaled(report.normalization.sqrt().recip())
            }
            FieldKind::SmoothProfile => {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                ProfileSpec { ball, xi, phase }.render(&self.grid, self.space)?
            }
        };
        Ok(CorpusEntry { name: format!("{index:04}_{}", kind_name(kind)), kind, ball, field })
    }

    /// The spec behind entry `index` when it is drawn as a smooth profile.
    pub fn profile_spec(&self, index: usize) -> ProfileSpec {
        let mut rng = entry_rng(self.seed, index);
        let ball = self.random_ball(&mut rng);
        let mut xi = self.random_vector(&mut rng);
        if xi.iter().all(|&v| v == 0.0) {
            xi[0] = 1.0;
        }
        ProfileSpec { ball, xi, phase: rng.random_range(0.0..std::f64::consts::TAU) }
    }

    pub fn build(&self, count: usize, engine: &GammaEngine) -> Result<Vec<CorpusEntry>> {
        crate::par::map_range(count, |i| self.entry(i, engine)).into_iter().collect()
    }
}

/// Union of one to three intervals (n = 1) or disks (n = 2) near the
/// origin. Sizes scale with the box so that maximal extensions at thresholds
/// down to 1/12 stay inside it.
pub fn random_open_set(rng: &mut ChaCha8Rng, base: &BaseGrid) -> OpenSet {
    let l = base.half_width();
    let (reach, rmin, rmax) = if base.dim() == 1 { (0.375 * l, 0.025 * l, 0.1 * l) } else { (0.2 * l, 0.075 * l, 0.15 * l) };
    let pieces = rng.random_range(1..=3);
    loop {
        let shapes: Vec<(Point, f64)> = (0..pieces)
            .map(|_| {
                let mut c = [0.0; 2];
                for v in c.iter_mut().take(base.dim()) {
                    *v = rng.random_range(-reach..=reach);
                }
                (c, rng.random_range(rmin..=rmax))
            })
            .collect();
        let e = OpenSet::from_centers(base.clone(), |p| shapes.iter().any(|(c, r)| dist(p, c) < *r));
        if !e.is_empty() {
            return e;
        }
    }
}

/// Uniform point of `e` (rejection from its cells).
pub fn random_point_in(rng: &mut ChaCha8Rng, e: &OpenSet) -> Result<Point> {
    let cells = e.cells();
    if cells.is_empty() {
        return Err(Error::InvalidParameter("cannot sample a point of an empty set".into()));
    }
    let grid = e.grid();
    loop {
        let (lo, hi) = grid.cell_bounds(cells[rng.random_range(0..cells.len())]);
        let mut x = [0.0; 2];
        for k in 0..grid.dim() {
            x[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
        }
        if e.contains_point(&x) {
            return Ok(x);
        }
    }
}

fn kind_name(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::Impulse => "impulse",
        FieldKind::TentField => "tent_field",
        FieldKind::Atom => "atom",
        FieldKind::SmoothProfile => "smooth_profile",
    }
}
