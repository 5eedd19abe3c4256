//! Cones, tents, balls, sectors and the covering constructions.
//!
//! Membership of a grid cell in a cone or tent is decided at its
//! representative point `(base center, t_center)`. Strict inequalities are
//! evaluated with a small relative tolerance so that exact geometric ties
//! (common on dyadic grids) resolve the same way everywhere.

mod conecover;
mod cover;
mod family;
mod net;
mod openset;

pub use conecover::{
    check_cone_containment, check_sector_lemma, cone_cover_points, ray_exit_distance,
    ConeCover, ContainmentReport, SectorLemmaReport,
};
pub use cover::{greedy_ball_cover, verify_ball_cover, BallCover, CoverReport};
pub use family::{disk_area_in_rect, disk_spans, BallFamily, OverlapKernel, RowMax, RowPrefix};
pub use net::{sector_constant, sector_fraction_mc, DirectionNet, COS_30};
pub use openset::OpenSet;

use serde::{Deserialize, Serialize};

use crate::halfspace::{dist, Point};

pub(crate) const EPS: f64 = 1e-9;

/// `a < b` with ties (up to rounding) counted as false.
pub(crate) fn strictly_less(a: f64, b: f64) -> bool {
    a < b - EPS * (1.0 + b.abs())
}

/// `a <= b` with ties (up to rounding) counted as true.
pub(crate) fn less_eq(a: f64, b: f64) -> bool {
    a <= b + EPS * (1.0 + b.abs())
}

/// Open Euclidean ball (an open interval when `n = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: &Point) -> bool {
        strictly_less(dist(p, &self.center), self.radius)
    }

    pub fn dilate(&self, k: f64) -> Ball {
        Ball { center: self.center, radius: k * self.radius }
    }

    /// `(y, t)` lies in the tent over the ball iff `B(y, t)` is inside it.
    pub fn tent_contains(&self, y: &Point, t: f64) -> bool {
        less_eq(t, self.radius - dist(y, &self.center))
    }

    pub fn is_disjoint(&self, other: &Ball) -> bool {
        less_eq(self.radius + other.radius, dist(&self.center, &other.center))
    }

    /// Lebesgue measure in `R^n`.
    pub fn volume(&self, n: usize) -> f64 {
        crate::halfspace::unit_ball_volume(n) * self.radius.powi(n as i32)
    }
}

/// `Gamma_alpha(x; r) = {(y, t) : |x - y| < alpha t, t < r}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cone {
    pub vertex: Point,
    pub aperture: f64,
    pub height: Option<f64>,
}

impl Cone {
    pub fn new(vertex: Point, aperture: f64) -> Self {
        Self { vertex, aperture, height: None }
    }

    pub fn truncated(vertex: Point, aperture: f64, height: f64) -> Self {
        Self { vertex, aperture, height: Some(height) }
    }

    pub fn contains(&self, y: &Point, t: f64) -> bool {
        strictly_less(dist(&self.vertex, y), self.aperture * t)
            && self.height.is_none_or(|r| strictly_less(t, r))
    }
}
