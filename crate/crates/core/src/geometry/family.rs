//! The finite ball family shared by the maximal function, the `T^inf` norm
//! and mean oscillation: centers at base-cell centers, radii on a lattice.
//! Everything is translation invariant, so per-radius footprints are built
//! once and slid over the grid with row prefix sums.

use super::{less_eq, strictly_less, Ball};
use crate::halfspace::BaseGrid;

/// Row offsets `dr` and half-widths `w` such that the centers at integer
/// offset `(dr, dc)` with `|dc| <= w` are exactly those at distance `< q`
/// (in cell units). A single row when `two_d` is false.
pub fn disk_spans(q: f64, two_d: bool) -> Vec<(i32, i32)> {
    let q2 = q * q;
    let reach = q.ceil() as i32;
    let rows: Vec<i32> = if two_d { (-reach..=reach).collect() } else { vec![0] };
    rows.into_iter()
        .filter_map(|dr| {
            let d2 = (dr * dr) as f64;
            if !strictly_less(d2, q2) {
                return None;
            }
            let mut w = (q2 - d2).max(0.0).sqrt().floor() as i32 + 1;
            while w > 0 && !strictly_less(d2 + (w * w) as f64, q2) {
                w -= 1;
            }
            Some((dr, w))
        })
        .collect()
}

/// Row-wise prefix sums of a per-cell field with `width` components.
#[derive(Clone, Debug)]
pub struct RowPrefix {
    rows: usize,
    cols: usize,
    width: usize,
    data: Vec<f64>,
}

impl RowPrefix {
    pub fn new(grid: &BaseGrid, values: &[f64], width: usize) -> Self {
        let (rows, cols) = (grid.rows(), grid.cols());
        assert_eq!(values.len(), rows * cols * width);
        let mut data = vec![0.0; rows * (cols + 1) * width];
        for r in 0..rows {
            for c in 0..cols {
                let src = (r * cols + c) * width;
                let prev = (r * (cols + 1) + c) * width;
                let next = prev + width;
                for w in 0..width {
                    data[next + w] = data[prev + w] + values[src + w];
                }
            }
        }
        Self { rows, cols, width, data }
    }

    pub fn scalar(grid: &BaseGrid, values: &[f64]) -> Self {
        Self::new(grid, values, 1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Sum over columns `lo..=hi` of `row`; returns 0 when the range is empty.
    pub fn range(&self, row: usize, lo: usize, hi: usize) -> f64 {
        debug_assert_eq!(self.width, 1);
        if lo > hi {
            return 0.0;
        }
        let base = row * (self.cols + 1);
        self.data[base + hi + 1] - self.data[base + lo]
    }

    /// Adds the column-range sum of `row` into `out`.
    pub fn add_range(&self, row: usize, lo: usize, hi: usize, out: &mut [f64]) {
        if lo > hi {
            return;
        }
        let w = self.width;
        let a = (row * (self.cols + 1) + lo) * w;
        let b = (row * (self.cols + 1) + hi + 1) * w;
        for k in 0..w {
            out[k] += self.data[b + k] - self.data[a + k];
        }
    }

    /// Sum over the centers of a disk footprint around `(row, col)`,
    /// clipped to the grid.
    pub fn disk_sum(&self, spans: &[(i32, i32)], row: usize, col: usize) -> f64 {
        let mut s = 0.0;
        for &(dr, w) in spans {
            if let Some((r, lo, hi)) = clip(self.rows, self.cols, row, col, dr, w) {
                s += self.range(r, lo, hi);
            }
        }
        s
    }

    pub fn disk_sum_into(&self, spans: &[(i32, i32)], row: usize, col: usize, out: &mut [f64]) {
        for &(dr, w) in spans {
            if let Some((r, lo, hi)) = clip(self.rows, self.cols, row, col, dr, w) {
                self.add_range(r, lo, hi, out);
            }
        }
    }
}

fn clip(rows: usize, cols: usize, row: usize, col: usize, dr: i32, w: i32) -> Option<(usize, usize, usize)> {
    let r = row as i64 + dr as i64;
    if r < 0 || r >= rows as i64 {
        return None;
    }
    let lo = (col as i64 - w as i64).max(0);
    let hi = (col as i64 + w as i64).min(cols as i64 - 1);
    (lo <= hi).then_some((r as usize, lo as usize, hi as usize))
}

/// Per-row sparse tables for O(1) range maxima.
#[derive(Clone, Debug)]
pub struct RowMax {
    cols: usize,
    levels: Vec<Vec<f64>>,
}

impl RowMax {
    pub fn new(grid: &BaseGrid, values: &[f64]) -> Self {
        let cols = grid.cols();
        let mut levels = vec![values.to_vec()];
        let mut span = 1;
        while 2 * span <= cols {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..values.len())
                .map(|i| {
                    let c = i % cols;
                    if c + span < cols {
                        prev[i].max(prev[i + span])
                    } else {
                        prev[i]
                    }
                })
                .collect();
            levels.push(next);
            span *= 2;
        }
        Self { cols, levels }
    }

    pub fn range(&self, row: usize, lo: usize, hi: usize) -> f64 {
        let len = hi - lo + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let t = &self.levels[k];
        let base = row * self.cols;
        t[base + lo].max(t[base + hi + 1 - (1 << k)])
    }

    /// Maximum over the centers of a disk footprint around `(row, col)`.
    pub fn disk_max(&self, spans: &[(i32, i32)], rows: usize, row: usize, col: usize) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for &(dr, w) in spans {
            if let Some((r, lo, hi)) = clip(rows, self.cols, row, col, dr, w) {
                m = m.max(self.range(r, lo, hi));
            }
        }
        m
    }
}

/// `S(x) = int_0^x sqrt(r^2 - s^2) ds`.
fn half_chord_integral(r: f64, x: f64) -> f64 {
    let x = x.clamp(-r, r);
    0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).clamp(-1.0, 1.0).asin())
}

/// Area of `{|p| < r, p_x <= a, p_y <= b}`.
fn disk_quadrant(r: f64, a: f64, b: f64) -> f64 {
    let a = a.clamp(-r, r);
    if b <= -r || a <= -r {
        return 0.0;
    }
    let s = |u: f64, v: f64| half_chord_integral(r, v) - half_chord_integral(r, u);
    let seg = |u: f64, v: f64| (v.min(a) - u).max(0.0);
    let piece_full = |u: f64, v: f64| {
        let v = v.min(a);
        if v > u { 2.0 * s(u, v) } else { 0.0 }
    };
    let piece_cut = |u: f64, v: f64| {
        let v2 = v.min(a);
        if v2 > u { b * seg(u, v) + s(u, v2) } else { 0.0 }
    };
    if b >= r {
        return piece_full(-r, r);
    }
    let w = (r * r - b * b).sqrt();
    if b >= 0.0 {
        piece_full(-r, -w) + piece_cut(-w, w) + piece_full(w, r)
    } else {
        piece_cut(-w, w)
    }
}

/// Exact area of the disk of radius `r` centered at the origin intersected
/// with `[x0, x1] x [y0, y1]`.
pub fn disk_area_in_rect(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let a = disk_quadrant(r, x1, y1) - disk_quadrant(r, x0, y1) - disk_quadrant(r, x1, y0)
        + disk_quadrant(r, x0, y0);
    a.max(0.0)
}

#[derive(Clone, Debug)]
struct KernelRow {
    dr: i32,
    full: Option<i32>,
    partial: Vec<(i32, f64)>,
}

/// Exact overlap weights of a ball of radius `r` centered at a cell center
/// with the surrounding cells: fully covered runs plus partial cells.
#[derive(Clone, Debug)]
pub struct OverlapKernel {
    radius: f64,
    rows: Vec<KernelRow>,
}

impl OverlapKernel {
    pub fn new(grid: &BaseGrid, radius: f64) -> Self {
        let h = grid.h();
        let reach = (radius / h + 0.5).ceil() as i32;
        let two_d = grid.dim() == 2;
        let row_range: Vec<i32> = if two_d { (-reach..=reach).collect() } else { vec![0] };
        let mut rows = Vec::new();
        for dr in row_range {
            let (y0, y1) = (dr as f64 * h - 0.5 * h, dr as f64 * h + 0.5 * h);
            let mut full = None;
            let mut partial = Vec::new();
            for dc in -reach..=reach {
                let (x0, x1) = (dc as f64 * h - 0.5 * h, dc as f64 * h + 0.5 * h);
                let (near, far) = if two_d {
                    let nx = 0f64.max(x0).max(-x1);
                    let ny = 0f64.max(y0).max(-y1);
                    let fx = x0.abs().max(x1.abs());
                    let fy = y0.abs().max(y1.abs());
                    ((nx * nx + ny * ny).sqrt(), (fx * fx + fy * fy).sqrt())
                } else {
                    (0f64.max(x0).max(-x1), x0.abs().max(x1.abs()))
                };
                if far <= radius {
                    full = Some(full.map_or(dc.abs(), |w: i32| w.max(dc.abs())));
                } else if near < radius {
                    let w = if two_d {
                        disk_area_in_rect(radius, x0, x1, y0, y1)
                    } else {
                        (x1.min(radius) - x0.max(-radius)).max(0.0)
                    };
                    if w > 0.0 {
                        partial.push((dc, w));
                    }
                }
            }
            if full.is_some() || !partial.is_empty() {
                rows.push(KernelRow { dr, full, partial });
            }
        }
        Self { radius, rows }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Total weight; equals the ball volume.
    pub fn total(&self, grid: &BaseGrid) -> f64 {
        let cv = grid.cell_volume();
        self.rows
            .iter()
            .map(|k| {
                k.full.map_or(0.0, |w| (2 * w + 1) as f64 * cv)
                    + k.partial.iter().map(|(_, w)| w).sum::<f64>()
            })
            .sum()
    }

    /// `|B(center, r) cap E|` where `prefix` holds row sums of the 0/1 mask.
    pub fn overlap(&self, grid: &BaseGrid, center: usize, prefix: &RowPrefix, mask: &[bool]) -> f64 {
        let (row, col) = grid.row_col(center);
        let (rows, cols) = (grid.rows() as i64, grid.cols() as i64);
        let cv = grid.cell_volume();
        let mut s = 0.0;
        for k in &self.rows {
            let r = row as i64 + k.dr as i64;
            if r < 0 || r >= rows {
                continue;
            }
            if let Some(w) = k.full {
                if let Some((rr, lo, hi)) = clip(rows as usize, cols as usize, row, col, k.dr, w) {
                    s += cv * prefix.range(rr, lo, hi);
                }
            }
            for &(dc, w) in &k.partial {
                let c = col as i64 + dc as i64;
                if c >= 0 && c < cols && mask[(r * cols + c) as usize] {
                    s += w;
                }
            }
        }
        s
    }
}

/// Candidate balls: every base-cell center with every lattice radius.
#[derive(Clone, Debug)]
pub struct BallFamily {
    grid: BaseGrid,
    radii: Vec<f64>,
    spans: Vec<Vec<(i32, i32)>>,
}

impl BallFamily {
    /// Radii `k h / 2` for `k = 1 ..= 4L/h`, i.e. up to `2L`.
    pub fn new(grid: &BaseGrid) -> Self {
        let kmax = (4.0 * grid.half_width() / grid.h()).round() as usize;
        let radii = (1..=kmax).map(|k| 0.5 * k as f64 * grid.h()).collect();
        Self::with_radii(grid, radii)
    }

    pub fn with_radii(grid: &BaseGrid, radii: Vec<f64>) -> Self {
        let two_d = grid.dim() == 2;
        let spans = radii.iter().map(|&r| disk_spans(r / grid.h(), two_d)).collect();
        Self { grid: grid.clone(), radii, spans }
    }

    pub fn grid(&self) -> &BaseGrid {
        &self.grid
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn spans(&self, ri: usize) -> &[(i32, i32)] {
        &self.spans[ri]
    }

    pub fn ball(&self, ri: usize, center: usize) -> Ball {
        Ball::new(self.grid.center(center), self.radii[ri])
    }

    /// Base cells whose centers lie in the ball.
    pub fn members(&self, ri: usize, center: usize) -> Vec<usize> {
        let (row, col) = self.grid.row_col(center);
        let mut out = Vec::new();
        for &(dr, w) in &self.spans[ri] {
            if let Some((r, lo, hi)) = clip(self.grid.rows(), self.grid.cols(), row, col, dr, w) {
                out.extend((lo..=hi).map(|c| self.grid.index(r, c)));
            }
        }
        out
    }

    pub fn member_count(&self, ri: usize, center: usize) -> usize {
        let (row, col) = self.grid.row_col(center);
        self.spans[ri]
            .iter()
            .filter_map(|&(dr, w)| clip(self.grid.rows(), self.grid.cols(), row, col, dr, w))
            .map(|(_, lo, hi)| hi - lo + 1)
            .sum()
    }

    /// For each base center `x`, the maximum of `values[c]` over the
    /// centers `c` with `|x - c| < r` (membership is symmetric).
    pub fn max_filter(&self, ri: usize, values: &[f64]) -> Vec<f64> {
        let table = RowMax::new(&self.grid, values);
        let rows = self.grid.rows();
        crate::par::map_range(self.grid.len(), |x| {
            let (row, col) = self.grid.row_col(x);
            table.disk_max(&self.spans[ri], rows, row, col)
        })
    }

    /// Whether a ball of the family fits in the box.
    pub fn inside_box(&self, ri: usize, center: usize) -> bool {
        less_eq(self.radii[ri], self.grid.distance_to_box_exterior(&self.grid.center(center)))
    }
}
