//! Smooth cutoff `psi`, the embedding `J_psi`, the averaging projection
//! `N_psi`, kernel probes, mean oscillation and atom images.
//!
//! Fields live on the product of the base grid (the `x` variable) with the
//! half-space grid (the `(y, t)` variable). For each slice `(y, t)` the `x`
//! weights `w(x; y, t)` are either cell averages of `psi(|. - y| / t)`
//! (exact in `n = 1`, so slice integrals of the zero-mean profile vanish to
//! rounding) or point values at centers (for the rough cutoffs used with
//! cones). `N` normalizes each slice by `c_h = sum_x h^n w^2` rather than
//! `c_psi t^n`, which makes `N N = N` and `N J = J` hold exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gamma::BaseOperator;
use crate::geometry::{less_eq, strictly_less, Ball, BallFamily, RowPrefix};
use crate::halfspace::{dist, GridFunction, HalfSpaceGrid, NormedSpace, Point};
use crate::tentnorm::{Cutoff, RadialProfile};

/// Knots on the outer part `[1, alpha]` of the profile.
pub const PROFILE_KNOTS: usize = 1024;
/// Largest product-grid array (entries, i.e. cells times `d`).
pub const PRODUCT_LIMIT: usize = 1 << 25;

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Surface measure of the unit sphere `S^{n-1}`.
fn sphere_measure(n: usize) -> f64 {
    if n == 1 { 2.0 } else { 2.0 * PI }
}

/// `psi = 1` on `[0, 1]`, a steep smoothstep descent to 0 of width
/// `(alpha - 1) / 60`, then a wide negative plateau of depth `beta` whose
/// smoothstep edges have width `(alpha - 1) / 6`. `beta` is solved so that
/// the tabulated profile has zero mean against `r^{n-1}`. The steep descent
/// keeps the plateau shallow, so the slopes that meet far-apart points stay
/// small next to `sup |psi'|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothCutoff {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c_psi: f64,
    /// `int_{R^n} psi(|x|) dx` of the tabulated profile.
    pub mean: f64,
    profile: RadialProfile,
}

fn pieces(alpha: f64) -> Result<(RadialProfile, RadialProfile)> {
    let drop = (alpha - 1.0) / 60.0;
    let edge = (alpha - 1.0) / 6.0;
    let mut knots = vec![0.0];
    knots.extend((0..PROFILE_KNOTS).map(|k| 1.0 + (alpha - 1.0) * k as f64 / (PROFILE_KNOTS - 1) as f64));
    let pos: Vec<f64> = knots.iter().map(|&r| if r <= 1.0 { 1.0 } else { 1.0 - smoothstep((r - 1.0) / drop) }).collect();
    let mut neg: Vec<f64> = knots
        .iter()
        .map(|&r| {
            if r < 1.0 + drop {
                0.0
            } else if r < 1.0 + drop + edge {
                -smoothstep((r - 1.0 - drop) / edge)
            } else if r < alpha - edge {
                -1.0
            } else {
                -smoothstep((alpha - r) / edge)
            }
        })
        .collect();
    *neg.last_mut().unwrap() = 0.0;
    Ok((RadialProfile::new(knots.clone(), pos)?, RadialProfile::new(knots, neg)?))
}

fn solve_beta(n: usize, alpha: f64) -> Result<(f64, RadialProfile, RadialProfile)> {
    let (pos, neg) = pieces(alpha)?;
    let (p1, _) = pos.radial_moments(n);
    let (q1, _) = neg.radial_moments(n);
    Ok((-p1 / q1, pos, neg))
}

/// Smallest aperture for which the plateau depth stays within 1.
pub fn minimal_feasible_alpha(n: usize) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    let (mut lo, mut hi) = (1.0 + 1e-6, 64.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if solve_beta(n, mid)?.0 <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl SmoothCutoff {
    pub fn build(n: usize, alpha: f64) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(alpha > 2.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("smooth cutoff needs alpha > 2, got {alpha}")));
        }
        let (beta, pos, neg) = solve_beta(n, alpha)?;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InfeasibleCutoff { alpha, min_alpha: minimal_feasible_alpha(n)? });
        }
        let values: Vec<f64> = pos.values().iter().zip(neg.values()).map(|(p, q)| p + beta * q).collect();
        let profile = RadialProfile::new(pos.knots().to_vec(), values)?;
        let (m1, m2) = profile.radial_moments(n);
        let cutoff = Self { n, alpha, beta, c_psi: sphere_measure(n) * m2, mean: sphere_measure(n) * m1, profile };
        Cutoff::profile(cutoff.profile.clone())?;
        Ok(cutoff)
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn value(&self, r: f64) -> f64 {
        self.profile.value(r)
    }

    pub fn slope(&self, r: f64) -> f64 {
        self.profile.slope(r)
    }

    pub fn max_slope(&self) -> f64 {
        self.profile.max_slope()
    }

    pub fn as_cutoff(&self) -> Cutoff {
        Cutoff::Profile(self.profile.clone())
    }

    /// `int_0^s psi(r) dr`, exact for the tabulated profile.
    fn primitive(&self, s: f64) -> f64 {
        let knots = self.profile.knots();
        let vals = self.profile.values();
        let s = s.clamp(0.0, self.alpha);
        let mut acc = 0.0;
        for k in 1..knots.len() {
            let (a, b) = (knots[k - 1], knots[k]);
            if s <= a {
                break;
            }
            let e = s.min(b);
            let slope = (vals[k] - vals[k - 1]) / (b - a);
            acc += vals[k - 1] * (e - a) + 0.5 * slope * (e - a) * (e - a);
        }
        acc
    }

    fn odd_primitive(&self, s: f64) -> f64 {
        s.signum() * self.primitive(s.abs())
    }
}

/// Translation-invariant slice weights, one offset table per t-level.
#[derive(Clone, Debug)]
pub struct SliceKernel {
    grid: Arc<HalfSpaceGrid>,
    reach: Vec<i64>,
    tables: Vec<Vec<f64>>,
}

impl SliceKernel {
    fn build(grid: &Arc<HalfSpaceGrid>, alpha: f64, weight: impl Fn(f64, f64, f64, usize) -> f64) -> Self {
        let base = grid.base();
        let h = base.h();
        let two_d = base.dim() == 2;
        let mut reach = Vec::new();
        let mut tables = Vec::new();
        for j in 0..grid.levels() {
            let t = grid.t_center(j);
            let k = (alpha * t / h).ceil() as i64 + 1;
            let side = (2 * k + 1) as usize;
            let rows = if two_d { side } else { 1 };
            let mut table = vec![0.0; rows * side];
            for r in 0..rows {
                for c in 0..side {
                    let dy = if two_d { (r as i64 - k) as f64 * h } else { 0.0 };
                    let dx = (c as i64 - k) as f64 * h;
                    table[r * side + c] = weight(dx, dy, t, j);
                }
            }
            reach.push(k);
            tables.push(table);
        }
        Self { grid: grid.clone(), reach, tables }
    }

    /// Cell averages of `psi(|. - y| / t)`; exact in `n = 1`, an 8 x 8
    /// midpoint rule in `n = 2`.
    pub fn cell_average(grid: &Arc<HalfSpaceGrid>, psi: &SmoothCutoff) -> Result<Self> {
        if psi.n != grid.dim() {
            return Err(Error::GridMismatch("cutoff and grid dimensions differ".into()));
        }
        let h = grid.base().h();
        let n = grid.dim();
        Ok(Self::build(grid, psi.alpha, |dx, dy, t, _| {
            if n == 1 {
                t / h * (psi.odd_primitive((dx + h / 2.0) / t) - psi.odd_primitive((dx - h / 2.0) / t))
            } else {
                const M: usize = 8;
                let mut s = 0.0;
                for a in 0..M {
                    for b in 0..M {
                        let u = dx + h * ((a as f64 + 0.5) / M as f64 - 0.5);
                        let v = dy + h * ((b as f64 + 0.5) / M as f64 - 0.5);
                        s += psi.value(u.hypot(v) / t);
                    }
                }
                s / (M * M) as f64
            }
        }))
    }

    /// Point values at centers with the cone boundary convention.
    pub fn point(grid: &Arc<HalfSpaceGrid>, cutoff: &Cutoff) -> Self {
        let alpha = cutoff.aperture();
        Self::build(grid, alpha, |dx, dy, t, _| {
            let d = dx.hypot(dy);
            if strictly_less(d, alpha * t) { cutoff.value(d / t) } else { 0.0 }
        })
    }

    pub fn grid(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }

    /// `w(x; y_b, t_j)`.
    pub fn weight(&self, x: usize, b: usize, j: usize) -> f64 {
        let base = self.grid.base();
        let (xr, xc) = base.row_col(x);
        let (br, bc) = base.row_col(b);
        let k = self.reach[j];
        let dr = xr as i64 - br as i64;
        let dc = xc as i64 - bc as i64;
        if dr.abs() > k || dc.abs() > k {
            return 0.0;
        }
        let side = 2 * k + 1;
        let row = if base.dim() == 2 { dr + k } else { 0 };
        self.tables[j][(row * side + dc + k) as usize]
    }

    /// Base cells with a possibly nonzero weight for the slice `(b, j)`.
    pub fn footprint(&self, b: usize, j: usize) -> Vec<usize> {
        let base = self.grid.base();
        let (br, bc) = base.row_col(b);
        let k = self.reach[j];
        let (rows, cols) = (base.rows() as i64, base.cols() as i64);
        let row_range = if base.dim() == 2 { -k..=k } else { 0..=0 };
        let mut out = Vec::new();
        for dr in row_range {
            let r = br as i64 + dr;
            if r < 0 || r >= rows {
                continue;
            }
            for c in (bc as i64 - k).max(0)..=(bc as i64 + k).min(cols - 1) {
                out.push(base.index(r as usize, c as usize));
            }
        }
        out
    }

    /// `c_h = sum_x h^n w(x)^2` for the slice of cell `cell`.
    pub fn slice_norm(&self, cell: usize) -> f64 {
        let (b, j) = self.grid.split(cell);
        let hn = self.grid.base().cell_volume();
        self.footprint(b, j).iter().map(|&x| hn * self.weight(x, b, j).powi(2)).sum()
    }
}

/// `F(x; y, t)` on the product grid, stored slice by slice.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedField {
    grid: Arc<HalfSpaceGrid>,
    space: NormedSpace,
    values: Vec<f64>,
}

fn product_size(grid: &HalfSpaceGrid, d: usize) -> Result<usize> {
    let cells = grid.base().len().saturating_mul(grid.len()).saturating_mul(d);
    if cells > PRODUCT_LIMIT {
        return Err(Error::ProductGridTooLarge { cells, limit: PRODUCT_LIMIT });
    }
    Ok(cells)
}

impl EmbeddedField {
    pub fn zeros(grid: Arc<HalfSpaceGrid>, space: NormedSpace) -> Result<Self> {
        let size = product_size(&grid, space.d)?;
        Ok(Self { grid, space, values: vec![0.0; size] })
    }

    pub fn from_fn(
        grid: Arc<HalfSpaceGrid>,
        space: NormedSpace,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut field = Self::zeros(grid, space)?;
        let nb = field.grid.base().len();
        for cell in 0..field.grid.len() {
            for x in 0..nb {
                f(x, cell, field.value_mut(x, cell));
            }
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }

    pub fn space(&self) -> NormedSpace {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn slice_len(&self) -> usize {
        self.grid.base().len() * self.space.d
    }

    pub fn slice(&self, cell: usize) -> &[f64] {
        let n = self.slice_len();
        &self.values[cell * n..(cell + 1) * n]
    }

    pub fn value(&self, x: usize, cell: usize) -> &[f64] {
        let d = self.space.d;
        &self.slice(cell)[x * d..(x + 1) * d]
    }

    pub fn value_mut(&mut self, x: usize, cell: usize) -> &mut [f64] {
        let d = self.space.d;
        let n = self.slice_len();
        &mut self.values[cell * n + x * d..cell * n + (x + 1) * d]
    }

    /// `sum_x h^n F(x; C)` for every slice.
    pub fn slice_integrals(&self) -> Vec<Vec<f64>> {
        let hn = self.grid.base().cell_volume();
        let d = self.space.d;
        (0..self.grid.len())
            .map(|c| {
                let mut s = vec![0.0; d];
                for chunk in self.slice(c).chunks(d) {
                    for (a, v) in s.iter_mut().zip(chunk) {
                        *a += hn * v;
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs_difference(&self, other: &EmbeddedField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Slices that carry any nonzero value.
    pub fn active_slices(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&c| self.slice(c).iter().any(|&v| v != 0.0)).collect()
    }
}

/// `J f(x; y, t) = w(x; y, t) f(y, t)`. With `check_support`, slices whose
/// cutoff support `B(y, a t)` leaves the box are rejected.
pub fn embed_j(f: &GridFunction, kernel: &SliceKernel, alpha: f64, check_support: bool) -> Result<EmbeddedField> {
    let grid = f.grid_arc();
    if !Arc::ptr_eq(grid, kernel.grid()) && **grid != **kernel.grid() {
        return Err(Error::GridMismatch("function and kernel grids differ".into()));
    }
    let base = grid.base();
    let mut out = EmbeddedField::zeros(grid.clone(), f.space())?;
    let d = f.dim();
    for cell in f.support() {
        let (b, j) = grid.split(cell);
        let t = grid.t_center(j);
        if check_support && !less_eq(alpha * t, base.distance_to_box_exterior(&base.center(b))) {
            return Err(Error::TruncationViolation(format!("cutoff support of cell {cell} escapes the base box")));
        }
        let v = f.value(cell).to_vec();
        for x in kernel.footprint(b, j) {
            let w = kernel.weight(x, b, j);
            if w != 0.0 {
                for (o, s) in out.value_mut(x, cell).iter_mut().zip(&v) {
                    *o = w * s;
                }
            }
        }
        debug_assert_eq!(v.len(), d);
    }
    Ok(out)
}

/// `N F(x; C) = w(x; C) / c_h(C) * sum_z h^n w(z; C) F(z; C)`.
pub fn project_n(field: &EmbeddedField, kernel: &SliceKernel) -> Result<EmbeddedField> {
    let grid = field.grid();
    let base = grid.base();
    let hn = base.cell_volume();
    let d = field.space().d;
    let nb = base.len();
    let mut out = EmbeddedField::zeros(grid.clone(), field.space())?;
    let slice_len = nb * d;
    crate::par::for_each_chunk_mut(&mut out.values, slice_len, |cell, dst| {
        let (b, j) = grid.split(cell);
        let src = field.slice(cell);
        let foot = kernel.footprint(b, j);
        let mut c_h = 0.0;
        let mut s = vec![0.0; d];
        for &z in &foot {
            let w = kernel.weight(z, b, j);
            c_h += hn * w * w;
            for k in 0..d {
                s[k] += hn * w * src[z * d + k];
            }
        }
        if c_h == 0.0 {
            return;
        }
        for &x in &foot {
            let w = kernel.weight(x, b, j) / c_h;
            for k in 0..d {
                dst[x * d + k] = w * s[k];
            }
        }
    });
    Ok(out)
}

/// `A f(x) = w(x) / c_h * sum_z h^n w(z) f(z)` for the slice `(y_b, t_j)`,
/// acting on base-grid `R^d` fields.
pub fn averaging_operator(kernel: &SliceKernel, b: usize, j: usize, f: &[f64], d: usize) -> Vec<f64> {
    let base = kernel.grid().base();
    let hn = base.cell_volume();
    let foot = kernel.footprint(b, j);
    let mut c_h = 0.0;
    let mut s = vec![0.0; d];
    for &z in &foot {
        let w = kernel.weight(z, b, j);
        c_h += hn * w * w;
        for k in 0..d {
            s[k] += hn * w * f[z * d + k];
        }
    }
    let mut out = vec![0.0; base.len() * d];
    if c_h > 0.0 {
        for &x in &foot {
            let w = kernel.weight(x, b, j) / c_h;
            for k in 0..d {
                out[x * d + k] = w * s[k];
            }
        }
    }
    out
}

/// The same operator as a dense matrix for the gamma-boundedness probe.
pub fn averaging_matrix(kernel: &SliceKernel, b: usize, j: usize) -> BaseOperator {
    let base = kernel.grid().base();
    let n = base.len();
    let hn = base.cell_volume();
    let w: Vec<f64> = (0..n).map(|x| kernel.weight(x, b, j)).collect();
    let c_h: f64 = w.iter().map(|v| hn * v * v).sum();
    let mut m = vec![0.0; n * n];
    if c_h > 0.0 {
        for x in 0..n {
            for z in 0..n {
                m[x * n + z] = w[x] * hn * w[z] / c_h;
            }
        }
    }
    BaseOperator::Dense(m)
}

/// Scaled kernel sizes `|K(x,z)| |x-z|^n` and `|grad_x K(x,z)| |x-z|^{n+1}`,
/// where `K(x,z)` multiplies by `psi(|x-y|/t) psi(|z-y|/t) / (c_psi t^n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelProbe {
    pub pairs: usize,
    pub max_kernel: f64,
    pub max_gradient: f64,
    pub kernel_bound: f64,
    pub gradient_bound: f64,
    pub violations: usize,
}

/// Supremum over `(y, t)` for each pair: `y` runs over the base centers and
/// a fine sample of the line through `x` and `z`, `t` over a log-spaced
/// sample of `(0, T]`.
pub fn kernel_bound_probe(psi: &SmoothCutoff, grid: &HalfSpaceGrid, pairs: &[(Point, Point)]) -> KernelProbe {
    let n = grid.dim() as i32;
    let c = psi.c_psi;
    let t_min = grid.level_bounds(grid.levels() - 1).0;
    let ts: Vec<f64> = (0..=256).map(|k| t_min * (grid.top() / t_min).powf(k as f64 / 256.0)).collect();
    let base = grid.base();
    let results = crate::par::map_slice(pairs, |(x, z)| {
        let dxz = dist(x, z);
        if dxz == 0.0 {
            return (0.0, 0.0);
        }
        let mut ys: Vec<Point> = (0..base.len()).map(|b| base.center(b)).collect();
        let span = psi.alpha + 1.0;
        ys.extend((0..=400).map(|k| {
            let s = -span + 2.0 * span * k as f64 / 400.0 + 0.5;
            [x[0] + s * (z[0] - x[0]), x[1] + s * (z[1] - x[1])]
        }));
        let (mut kmax, mut gmax) = (0.0f64, 0.0f64);
        for y in &ys {
            let (ax, az) = (dist(x, y), dist(z, y));
            for &t in &ts {
                let pz = psi.value(az / t);
                if pz == 0.0 {
                    continue;
                }
                let scale = (c * t.powi(n)).recip();
                kmax = kmax.max((psi.value(ax / t) * pz * scale).abs() * dxz.powi(n));
                gmax = gmax.max((psi.slope(ax / t) / t * pz * scale).abs() * dxz.powi(n + 1));
            }
        }
        (kmax, gmax)
    });
    let kernel_bound = psi.alpha.powi(n) / c;
    let gradient_bound = psi.max_slope() * psi.alpha.powi(n + 1) / c;
    let mut probe = KernelProbe {
        pairs: pairs.len(),
        max_kernel: 0.0,
        max_gradient: 0.0,
        kernel_bound,
        gradient_bound,
        violations: 0,
    };
    for (k, g) in results {
        probe.max_kernel = probe.max_kernel.max(k);
        probe.max_gradient = probe.max_gradient.max(g);
        if k > kernel_bound * (1.0 + 1e-12) || g > gradient_bound * (1.0 + 1e-12) {
            probe.violations += 1;
        }
    }
    probe
}

/// Mean oscillation `(h^n / |B| sum_{x in B} E|int (F(x) - m_B) dW|^2)^(1/2)`
/// maximized over the ball family; `m_B` is the mean over the centers in `B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Oscillation {
    pub value: f64,
    pub ball: Option<Ball>,
}

pub fn bmo_oscillation(field: &EmbeddedField) -> Result<Oscillation> {
    bmo_oscillation_with(field, &BallFamily::new(field.grid().base()))
}

pub fn bmo_oscillation_with(field: &EmbeddedField, family: &BallFamily) -> Result<Oscillation> {
    if !field.space().is_hilbert() {
        return Err(Error::InvalidParameter(
            "mean oscillation over the full ball family needs the euclidean value space".into(),
        ));
    }
    let grid = field.grid();
    let base = grid.base();
    let d = field.space().d;
    let hn = base.cell_volume();
    let active = field.active_slices();
    let prefixes: Vec<(f64, RowPrefix, RowPrefix)> = crate::par::map_slice(&active, |&cell| {
        let slice = field.slice(cell);
        let sq: Vec<f64> = slice.chunks(d).map(|v| v.iter().map(|a| a * a).sum()).collect();
        (grid.measure(cell), RowPrefix::new(base, slice, d), RowPrefix::scalar(base, &sq))
    });
    let n = base.dim();
    let per_radius = crate::par::map_range(family.radii().len(), |ri| {
        let spans = family.spans(ri);
        let volume = crate::halfspace::unit_ball_volume(n) * family.radii()[ri].powi(n as i32);
        let mut best = (0.0f64, 0usize);
        let mut q1 = vec![0.0; d];
        for c in 0..base.len() {
            let count = family.member_count(ri, c) as f64;
            let (row, col) = base.row_col(c);
            let mut total = 0.0;
            for (mu, p1, p2) in &prefixes {
                q1.fill(0.0);
                p1.disk_sum_into(spans, row, col, &mut q1);
                let q2 = p2.disk_sum(spans, row, col);
                let var = q2 - q1.iter().map(|v| v * v).sum::<f64>() / count;
                total += mu * var.max(0.0);
            }
            let v = hn * total / volume;
            if v > best.0 {
                best = (v, c);
            }
        }
        best
    });
    let (mut value, mut ball) = (0.0, None);
    for (ri, (v, c)) in per_radius.into_iter().enumerate() {
        if v > value {
            value = v;
            ball = Some(family.ball(ri, c));
        }
    }
    Ok(Oscillation { value: value.sqrt(), ball })
}

/// Checks on the image `J_psi a` of an atom for the ball `B`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomImageReport {
    /// `(x, cell)` pairs with a nonzero value whose `x`-cell misses `a B`.
    pub support_violations: usize,
    /// Largest `|sum_x h^n J a(x; C)|` relative to `sum_x h^n |J a(x; C)|`.
    pub max_slice_mean: f64,
    /// `|B| sum_{x} h^n E|int J a(x) dW|^2`, the constant in `<= C / |B|`.
    pub normalization: f64,
}

pub fn h1_atom_image_check(a: &GridFunction, ball: &Ball, psi: &SmoothCutoff, kernel: &SliceKernel) -> Result<AtomImageReport> {
    let field = embed_j(a, kernel, psi.alpha, true)?;
    let grid = field.grid();
    let base = grid.base();
    let d = a.dim();
    let hn = base.cell_volume();
    let big = ball.dilate(psi.alpha);
    let mut violations = 0;
    let mut max_mean = 0.0f64;
    let mut energy = vec![0.0; base.len()];
    for cell in field.active_slices() {
        let mu = grid.measure(cell);
        let (mut s, mut abs) = (vec![0.0; d], 0.0);
        for x in 0..base.len() {
            let v = field.value(x, cell);
            if v.iter().all(|&q| q == 0.0) {
                continue;
            }
            if !strictly_less(base.distance_to_cell(&big.center, x), big.radius) {
                violations += 1;
            }
            for k in 0..d {
                s[k] += hn * v[k];
                abs += hn * v[k].abs();
            }
            energy[x] += mu * v.iter().map(|q| q * q).sum::<f64>();
        }
        if abs > 0.0 {
            max_mean = max_mean.max(s.iter().map(|q| q.abs()).fold(0.0, f64::max) / abs);
        }
    }
    let normalization = ball.volume(base.dim()) * hn * energy.iter().sum::<f64>();
    Ok(AtomImageReport { support_violations: violations, max_slice_mean: max_mean, normalization })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tentnorm::TentNorms;
    use crate::gamma::GammaEngine;

    fn grid() -> Arc<HalfSpaceGrid> {
        Arc::new(HalfSpaceGrid::new(1, 4.0, 1.0 / 16.0, 2.0, 5).unwrap())
    }

    fn local_field(g: &Arc<HalfSpaceGrid>, d: usize, seed: usize) -> GridFunction {
        GridFunction::from_fn(g.clone(), NormedSpace::euclidean(d), |c, v| {
            let (y, t) = g.cell_point(c);
            if y[0].abs() + 4.0 * t <= 3.0 && t < 0.5 {
                for (k, x) in v.iter_mut().enumerate() {
                    *x = ((c * 17 + k * 5 + seed) % 11) as f64 / 5.0 - 1.0;
                }
            }
        })
        .unwrap()
    }

    #[test]
    fn zero_mean_profile() {
        for n in [1, 2] {
            let psi = SmoothCutoff::build(n, 4.0).unwrap();
            assert!(psi.mean.abs() < 1e-10, "n = {n}: {}", psi.mean);
            assert_eq!(psi.value(0.0), 1.0);
            assert!(psi.value(0.999) >= 1.0 - 1e-12);
            assert_eq!(psi.value(4.0), 0.0);
            assert!(psi.beta > 0.0 && psi.beta <= 1.0);
            assert!(psi.c_psi > 0.0);
        }
        let line = SmoothCutoff::build(1, 4.0).unwrap();
        assert!((line.beta - 1.025 / 2.45).abs() < 1e-3, "{}", line.beta);
    }

    #[test]
    fn infeasible_aperture_reports_minimum() {
        let min = minimal_feasible_alpha(1).unwrap();
        assert!((min - (1.0 + 120.0 / 97.0)).abs() < 1e-2, "{min}");
        match SmoothCutoff::build(1, 2.1) {
            Err(Error::InfeasibleCutoff { min_alpha, .. }) => assert!((min_alpha - min).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(SmoothCutoff::build(1, 2.0).is_err());
        assert!(SmoothCutoff::build(1, min + 1e-3).is_ok());
    }

    #[test]
    fn slice_integrals_vanish() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let kernel = SliceKernel::cell_average(&g, &psi).unwrap();
        let f = local_field(&g, 2, 1);
        let jf = embed_j(&f, &kernel, psi.alpha, true).unwrap();
        for (cell, s) in jf.slice_integrals().iter().enumerate() {
            let scale = 1.0 + f.value(cell).iter().map(|v| v.abs()).sum::<f64>();
            assert!(s.iter().all(|v| v.abs() <= 1e-10 * scale), "{cell}: {s:?}");
        }
    }

    #[test]
    fn projection_identities() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let kernel = SliceKernel::cell_average(&g, &psi).unwrap();
        let f = local_field(&g, 2, 3);
        let jf = embed_j(&f, &kernel, psi.alpha, true).unwrap();
        let njf = project_n(&jf, &kernel).unwrap();
        assert!(njf.max_abs_difference(&jf) <= 1e-10 * jf.max_abs());
        let noise = EmbeddedField::from_fn(g.clone(), NormedSpace::euclidean(2), |x, c, v| {
            v[0] = ((x * 7 + c * 3) % 13) as f64 - 6.0;
            v[1] = ((x + c) % 5) as f64;
        })
        .unwrap();
        let once = project_n(&noise, &kernel).unwrap();
        let twice = project_n(&once, &kernel).unwrap();
        assert!(twice.max_abs_difference(&once) <= 1e-10 * once.max_abs());
    }

    #[test]
    fn constant_slices_project_to_the_profile() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let kernel = SliceKernel::cell_average(&g, &psi).unwrap();
        let ones = EmbeddedField::from_fn(g.clone(), NormedSpace::euclidean(1), |_, _, v| v[0] = 1.0).unwrap();
        let out = project_n(&ones, &kernel).unwrap();
        let hn = g.base().cell_volume();
        let cell = g.cell(64, 1);
        let (b, j) = g.split(cell);
        let mass: f64 = (0..g.base().len()).map(|z| hn * kernel.weight(z, b, j)).sum();
        let c_h = kernel.slice_norm(cell);
        for x in 0..g.base().len() {
            let expect = kernel.weight(x, b, j) * mass / c_h;
            assert!((out.value(x, cell)[0] - expect).abs() < 1e-12);
        }
        assert_eq!(bmo_oscillation(&ones).unwrap().value, 0.0);
    }

    #[test]
    fn averaging_operator_is_a_slice_of_n() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let kernel = SliceKernel::cell_average(&g, &psi).unwrap();
        let nb = g.base().len();
        for (cell, seed) in [(g.cell(40, 0), 1usize), (g.cell(70, 2), 2), (g.cell(90, 4), 3)] {
            let f: Vec<f64> = (0..nb).map(|x| ((x * 31 + seed) % 17) as f64 - 8.0).collect();
            let mut field = EmbeddedField::zeros(g.clone(), NormedSpace::euclidean(1)).unwrap();
            for x in 0..nb {
                field.value_mut(x, cell)[0] = f[x];
            }
            let (b, j) = g.split(cell);
            let direct = averaging_operator(&kernel, b, j, &f, 1);
            let projected = project_n(&field, &kernel).unwrap();
            let via_matrix = averaging_matrix(&kernel, b, j).apply(&f, 1);
            for x in 0..nb {
                assert!((projected.value(x, cell)[0] - direct[x]).abs() < 1e-10);
                assert!((via_matrix[x] - direct[x]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indicator_embedding_is_the_cone_restriction() {
        let g = grid();
        let kernel = SliceKernel::point(&g, &Cutoff::indicator(1.0).unwrap());
        let f = local_field(&g, 1, 4);
        let jf = embed_j(&f, &kernel, 1.0, false).unwrap();
        let norms = TentNorms::new(GammaEngine::new(NormedSpace::euclidean(1)));
        for x in (0..g.base().len()).step_by(9) {
            let cone = norms.cone_cells(&g, &g.base().center(x), None);
            for c in 0..g.len() {
                let expect = if cone.contains(&c) { f.value(c)[0] } else { 0.0 };
                assert_eq!(jf.value(x, c)[0], expect);
            }
        }
    }

    #[test]
    fn kernel_probe_respects_bounds() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let pairs: Vec<(Point, Point)> =
            (1..40).map(|k| ([-0.3, 0.0], [-0.3 + 0.05 * k as f64 + 0.01, 0.0])).collect();
        let probe = kernel_bound_probe(&psi, &g, &pairs);
        assert_eq!(probe.violations, 0, "{probe:?}");
        assert!(probe.max_kernel > 0.0 && probe.max_gradient > 0.0);
        let far = kernel_bound_probe(&psi, &g, &[([-3.9, 0.0], [3.9 + 2.0 * psi.alpha * g.top(), 0.0])]);
        assert_eq!(far.max_kernel, 0.0);
    }

    #[test]
    fn oscillation_lower_bound() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let kernel = SliceKernel::cell_average(&g, &psi).unwrap();
        let f = local_field(&g, 1, 6);
        let jf = embed_j(&f, &kernel, psi.alpha, true).unwrap();
        let osc = bmo_oscillation(&jf).unwrap().value;
        let tinf = TentNorms::new(GammaEngine::new(NormedSpace::euclidean(1))).tent_norm_infty(&f).unwrap().value;
        assert!(osc >= tinf / (psi.alpha + 2.0).sqrt(), "{osc} vs {tinf}");
    }

    #[test]
    fn single_cell_atom_image() {
        let g = grid();
        let psi = SmoothCutoff::build(1, 4.0).unwrap();
        let kernel = SliceKernel::cell_average(&g, &psi).unwrap();
        let base = g.base();
        let ball = Ball::new(base.center(base.locate(&[0.01, 0.0]).unwrap()), 0.5);
        let cell = g.cell(base.locate(&ball.center).unwrap(), 2);
        let a = GridFunction::impulse(g.clone(), NormedSpace::euclidean(1), cell, &[1.0]).unwrap();
        let rep = h1_atom_image_check(&a, &ball, &psi, &kernel).unwrap();
        assert_eq!(rep.support_violations, 0);
        assert!(rep.max_slice_mean < 1e-10);
        assert!(rep.normalization > 0.0);
        let zero = h1_atom_image_check(&a.scaled(0.0), &ball, &psi, &kernel).unwrap();
        assert_eq!(zero.normalization, 0.0);
    }

    #[test]
    fn product_grid_guard() {
        let g = Arc::new(HalfSpaceGrid::new(2, 4.0, 1.0 / 64.0, 2.0, 6).unwrap());
        assert!(matches!(
            EmbeddedField::zeros(g, NormedSpace::euclidean(2)),
            Err(Error::ProductGridTooLarge { .. })
        ));
    }
}
