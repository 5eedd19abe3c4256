//! Discretized upper half-space and cell-constant vector fields on it.
//!
//! The base box `[-L, L]^n` is split into cubes of side `h`; the height axis
//! into dyadic levels `[T 2^-(j+1), T 2^-j)`, `j = 0..J`. A cell is a product
//! of one base cube and one level, and carries the exact measure of
//! `dy dt / t^(n+1)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the base space. For `n = 1` the second coordinate is zero, so
/// the Euclidean distance is the same formula in both dimensions.
pub type Point = [f64; 2];

pub fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unreachable!("dimension validated at grid construction"),
    }
}

/// Uniform cube grid on `[-L, L]^n`, `n` in {1, 2}.
///
/// Cells are stored row-major: `index = row * cols + col`. For `n = 1` there
/// is a single row and the coordinate comes from the column.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseGrid {
    n: usize,
    half_width: f64,
    h: f64,
    per_axis: usize,
}

impl BaseGrid {
    pub fn new(n: usize, half_width: f64, h: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half-width L = {half_width} must be positive")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("mesh width h = {h} must be positive")));
        }
        let ratio = 2.0 * half_width / h;
        let per_axis = ratio.round();
        if (ratio - per_axis).abs() > 1e-9 * ratio.max(1.0) || per_axis < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "2L/h = {ratio} must be a positive integer"
            )));
        }
        Ok(Self { n, half_width, h, per_axis: per_axis as usize })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn rows(&self) -> usize {
        if self.n == 1 { 1 } else { self.per_axis }
    }

    pub fn cols(&self) -> usize {
        self.per_axis
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^n`, the volume of one base cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    pub fn box_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.n as i32)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols(), index % self.cols())
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols() + col
    }

    pub fn center(&self, index: usize) -> Point {
        let (row, col) = self.row_col(index);
        if self.n == 1 {
            [self.axis_coord(col), 0.0]
        } else {
            [self.axis_coord(row), self.axis_coord(col)]
        }
    }

    /// Closed cell `[lo, hi]` per coordinate.
    pub fn cell_bounds(&self, index: usize) -> ([f64; 2], [f64; 2]) {
        let c = self.center(index);
        let hh = 0.5 * self.h;
        if self.n == 1 {
            ([c[0] - hh, 0.0], [c[0] + hh, 0.0])
        } else {
            ([c[0] - hh, c[1] - hh], [c[0] + hh, c[1] + hh])
        }
    }

    /// Distance from `p` to the closed cell.
    pub fn distance_to_cell(&self, p: &Point, index: usize) -> f64 {
        let (lo, hi) = self.cell_bounds(index);
        let mut s = 0.0;
        for k in 0..self.n {
            let d = (lo[k] - p[k]).max(0.0).max(p[k] - hi[k]);
            s += d * d;
        }
        s.sqrt()
    }

    /// Cell containing `p`, or `None` outside the box. Points on a shared
    /// face resolve to the upper neighbour.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let axis = |x: f64| -> Option<usize> {
            let u = (x + self.half_width) / self.h;
            if !(u >= 0.0) || u >= self.per_axis as f64 {
                return None;
            }
            Some((u.floor() as usize).min(self.per_axis - 1))
        };
        if self.n == 1 {
            axis(p[0])
        } else {
            Some(self.index(axis(p[0])?, axis(p[1])?))
        }
    }

    /// Distance from `p` to the complement of the open box.
    pub fn distance_to_box_exterior(&self, p: &Point) -> f64 {
        let mut d = f64::INFINITY;
        for k in 0..self.n {
            d = d.min(self.half_width - p[k].abs());
        }
        d.max(0.0)
    }

    /// Whether the open ball `B(p, r)` lies inside the box.
    pub fn contains_ball(&self, p: &Point, r: f64) -> bool {
        r <= self.distance_to_box_exterior(p) * (1.0 + 1e-12) + 1e-12
    }

    /// Exact measure of the union of the listed cells intersected with the
    /// open ball is not needed here; see `geometry::family` for overlaps.
    pub fn same_as(&self, other: &BaseGrid) -> bool {
        self == other
    }
}

/// The truncated half-space grid: base cells times dyadic height levels.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpaceGrid {
    base: BaseGrid,
    top: f64,
    levels: usize,
    level_measure: Vec<f64>,
}

impl HalfSpaceGrid {
    /// `n`, `L`, `h`, top scale `T`, number of dyadic levels `J`.
    pub fn new(n: usize, half_width: f64, h: f64, top: f64, levels: usize) -> Result<Self> {
        let base = BaseGrid::new(n, half_width, h)?;
        if !(top > 0.0 && top.is_finite()) {
            return Err(Error::InvalidGrid(format!("top scale T = {top} must be positive")));
        }
        if levels == 0 {
            return Err(Error::InvalidGrid("need at least one t-level (J >= 1)".into()));
        }
        if levels > 60 {
            return Err(Error::InvalidGrid(format!("J = {levels} is unreasonably large")));
        }
        if half_width < top {
            return Err(Error::InvalidGrid(format!(
                "L = {half_width} must be at least T = {top}"
            )));
        }
        let nf = n as f64;
        let level_measure = (0..levels)
            .map(|j| {
                let (lo, hi) = level_bounds(top, j);
                base.cell_volume() * (lo.powf(-nf) - hi.powf(-nf)) / nf
            })
            .collect();
        Ok(Self { base, top, levels, level_measure })
    }

    pub fn base(&self) -> &BaseGrid {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.n
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.base.len() * self.levels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, base: usize, level: usize) -> usize {
        level * self.base.len() + base
    }

    /// `(base index, level)` of a cell.
    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell % self.base.len(), cell / self.base.len())
    }

    /// `[t_lo, t_hi)` of a level.
    pub fn level_bounds(&self, level: usize) -> (f64, f64) {
        level_bounds(self.top, level)
    }

    /// Representative height of a level (interval midpoint); cone and tent
    /// membership of a cell is decided at `(base center, t_center)`.
    pub fn t_center(&self, level: usize) -> f64 {
        let (lo, hi) = self.level_bounds(level);
        0.5 * (lo + hi)
    }

    pub fn t_centers(&self) -> Vec<f64> {
        (0..self.levels).map(|j| self.t_center(j)).collect()
    }

    /// `mu(C) = int_C dy dt / t^(n+1)`, closed form.
    pub fn level_measure(&self, level: usize) -> f64 {
        self.level_measure[level]
    }

    pub fn measure(&self, cell: usize) -> f64 {
        self.level_measure[cell / self.base.len()]
    }

    /// `int_C dy dt / t`, the measure used by the duality pairing.
    pub fn pairing_measure(&self, level: usize) -> f64 {
        let (lo, hi) = self.level_bounds(level);
        self.base.cell_volume() * (hi / lo).ln()
    }

    /// Representative point `(y_C, t_C)` of a cell.
    pub fn cell_point(&self, cell: usize) -> (Point, f64) {
        let (b, j) = self.split(cell);
        (self.base.center(b), self.t_center(j))
    }

    /// Sum of cell measures over a set of cells.
    pub fn measure_of(&self, cells: impl IntoIterator<Item = usize>) -> f64 {
        cells.into_iter().map(|c| self.measure(c)).sum()
    }

    /// Parameters `(n, L, h, T, J)`.
    pub fn params(&self) -> GridParams {
        GridParams {
            n: self.base.n,
            l: self.base.half_width,
            h: self.base.h,
            t: self.top,
            j: self.levels,
        }
    }

    /// The same grid with the base mesh width halved.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.base.n, self.base.half_width, self.base.h / 2.0, self.top, self.levels)
    }
}

fn level_bounds(top: f64, level: usize) -> (f64, f64) {
    let hi = top * 0.5f64.powi(level as i32);
    (0.5 * hi, hi)
}

/// Serializable grid parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub h: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "J")]
    pub j: usize,
}

impl GridParams {
    pub fn build(&self) -> Result<HalfSpaceGrid> {
        HalfSpaceGrid::new(self.n, self.l, self.h, self.t, self.j)
    }
}

/// Norm selector on `R^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    /// Hilbert norm; gamma norms are computed exactly.
    Euclidean,
    /// `l^p` norm, `1 <= p < inf`; gamma norms go through Monte Carlo.
    Pnorm(f64),
    /// `l^inf` norm.
    Max,
}

impl NormTag {
    /// The dual norm tag: `p <-> p'`, euclidean is self-dual.
    pub fn dual(self) -> NormTag {
        match self {
            NormTag::Euclidean => NormTag::Euclidean,
            NormTag::Max => NormTag::Pnorm(1.0),
            NormTag::Pnorm(p) if p == 1.0 => NormTag::Max,
            NormTag::Pnorm(p) => NormTag::Pnorm(p / (p - 1.0)),
        }
    }
}

/// `R^d` with a norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormedSpace {
    pub d: usize,
    pub norm: NormTag,
}

impl NormedSpace {
    pub fn new(d: usize, norm: NormTag) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpace("dimension d must be at least 1".into()));
        }
        let norm = match norm {
            NormTag::Pnorm(p) if p.is_infinite() && p > 0.0 => NormTag::Max,
            NormTag::Pnorm(p) if !(p >= 1.0) => {
                return Err(Error::InvalidSpace(format!("p = {p} must satisfy p >= 1")))
            }
            other => other,
        };
        Ok(Self { d, norm })
    }

    pub fn euclidean(d: usize) -> Self {
        Self { d, norm: NormTag::Euclidean }
    }

    /// True when gamma norms have the closed form `sum mu |f|^2`.
    pub fn is_hilbert(&self) -> bool {
        self.norm == NormTag::Euclidean
    }

    pub fn dual(&self) -> Self {
        Self { d: self.d, norm: self.norm.dual() }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.d);
        match self.norm {
            NormTag::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormTag::Max => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            NormTag::Pnorm(p) if p == 1.0 => v.iter().map(|x| x.abs()).sum(),
            NormTag::Pnorm(p) if p == 2.0 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormTag::Pnorm(p) => {
                let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }
}

/// A cell-constant `R^d`-valued function on a [`HalfSpaceGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Arc<HalfSpaceGrid>,
    space: NormedSpace,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Arc<HalfSpaceGrid>, space: NormedSpace) -> Self {
        let len = grid.len() * space.d;
        Self { grid, space, values: vec![0.0; len] }
    }

    /// Values in cell-major order (`cell * d + component`).
    pub fn from_values(grid: Arc<HalfSpaceGrid>, space: NormedSpace, values: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * space.d;
        if values.len() != expected {
            return Err(Error::ValueLength { expected, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell: i / space.d, component: i % space.d });
        }
        Ok(Self { grid, space, values })
    }

    /// Builds a function from a per-cell closure.
    pub fn from_fn(
        grid: Arc<HalfSpaceGrid>,
        space: NormedSpace,
        mut f: impl FnMut(usize, &mut [f64]),
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, space);
        for (cell, v) in out.values.chunks_mut(space.d).enumerate() {
            f(cell, v);
        }
        if let Some(i) = out.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell: i / space.d, component: i % space.d });
        }
        Ok(out)
    }

    /// `1_C (x) xi`.
    pub fn impulse(grid: Arc<HalfSpaceGrid>, space: NormedSpace, cell: usize, xi: &[f64]) -> Result<Self> {
        if xi.len() != space.d {
            return Err(Error::ValueLength { expected: space.d, got: xi.len() });
        }
        if cell >= grid.len() {
            return Err(Error::InvalidParameter(format!("cell {cell} out of range")));
        }
        let mut f = Self::zeros(grid, space);
        f.value_mut(cell).copy_from_slice(xi);
        Ok(f)
    }

    pub fn grid(&self) -> &HalfSpaceGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }

    pub fn space(&self) -> NormedSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, cell: usize) -> &[f64] {
        let d = self.space.d;
        &self.values[cell * d..(cell + 1) * d]
    }

    pub fn value_mut(&mut self, cell: usize) -> &mut [f64] {
        let d = self.space.d;
        &mut self.values[cell * d..(cell + 1) * d]
    }

    pub fn is_nonzero_at(&self, cell: usize) -> bool {
        self.value(cell).iter().any(|&v| v != 0.0)
    }

    /// Cells where the function is not identically zero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&c| self.is_nonzero_at(c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `1_R f` for the cell predicate `region`.
    pub fn restrict(&self, region: impl Fn(usize) -> bool) -> GridFunction {
        let d = self.space.d;
        let mut values = self.values.clone();
        for (cell, v) in values.chunks_mut(d).enumerate() {
            if !region(cell) {
                v.fill(0.0);
            }
        }
        GridFunction { grid: self.grid.clone(), space: self.space, values }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        let values = self.values.iter().map(|v| v * c).collect();
        GridFunction { grid: self.grid.clone(), space: self.space, values }
    }

    /// Cell-wise scalar multiplier `m(C) f(C)`.
    pub fn multiplied(&self, m: impl Fn(usize) -> f64) -> GridFunction {
        let d = self.space.d;
        let mut values = self.values.clone();
        for (cell, v) in values.chunks_mut(d).enumerate() {
            let s = m(cell);
            v.iter_mut().for_each(|x| *x *= s);
        }
        GridFunction { grid: self.grid.clone(), space: self.space, values }
    }

    pub fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if *self.grid != *other.grid {
            return Err(Error::GridMismatch("grids differ".into()));
        }
        if self.space.d != other.space.d {
            return Err(Error::GridMismatch(format!(
                "value dimensions differ: {} vs {}",
                self.space.d, other.space.d
            )));
        }
        Ok(())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(GridFunction { grid: self.grid.clone(), space: self.space, values })
    }

    pub fn with_space(&self, space: NormedSpace) -> Result<GridFunction> {
        if space.d != self.space.d {
            return Err(Error::InvalidSpace("cannot change dimension".into()));
        }
        Ok(GridFunction { grid: self.grid.clone(), space, values: self.values.clone() })
    }

    /// `int ||f||^2 dmu` with the Euclidean norm of each cell value.
    pub fn l2_energy(&self) -> f64 {
        (0..self.grid.len())
            .map(|c| self.grid.measure(c) * self.value(c).iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Largest relative cell-wise deviation `max |f - g| / max(|f|)`.
    pub fn max_relative_difference(&self, other: &GridFunction) -> Result<f64> {
        self.check_compatible(other)?;
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let diff = self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(diff / scale)
    }
}
