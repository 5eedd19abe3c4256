//! Conical square functions and the tent-space norms `T^p`, `T^inf`.
//!
//! `S_a f(x)^2 = E |int_{Gamma_a(x)} f dW|^2`. A cell lies in the cone at
//! `x` when its representative point does. Since `x` and the cell's base
//! center are both grid centers, the cone at level `j` is the translation
//! invariant disk footprint of radius `a t_j`, so all square functions come
//! from row prefix sums of per-level moments.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{Covariance, GammaEngine, GammaEstimate, GammaPath};
use crate::geometry::{disk_spans, less_eq, strictly_less, Ball, BallFamily, RowPrefix};
use crate::halfspace::{dist, unit_ball_volume, GridFunction, HalfSpaceGrid, Point};

/// Radial profile, piecewise linear between knots. The last knot is the
/// support radius and carries the value 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(Error::InvalidParameter("profile needs matching knots and values".into()));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("profile knots must increase from 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || *values.last().unwrap() != 0.0 {
            return Err(Error::InvalidParameter("profile values must be finite and vanish at the support".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn value(&self, r: f64) -> f64 {
        if !(r < self.support()) {
            return 0.0;
        }
        let r = r.max(0.0);
        let k = self.knots.partition_point(|&x| x <= r).clamp(1, self.knots.len() - 1);
        let (x0, x1) = (self.knots[k - 1], self.knots[k]);
        let s = (r - x0) / (x1 - x0);
        self.values[k - 1] + s * (self.values[k] - self.values[k - 1])
    }

    /// Slope of the segment containing `r` (right derivative).
    pub fn slope(&self, r: f64) -> f64 {
        if !(r < self.support()) || r < 0.0 {
            return 0.0;
        }
        let k = self.knots.partition_point(|&x| x <= r).clamp(1, self.knots.len() - 1);
        (self.values[k] - self.values[k - 1]) / (self.knots[k] - self.knots[k - 1])
    }

    pub fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    /// `int_0^R phi(r) r^(n-1) dr` and `int_0^R phi(r)^2 r^(n-1) dr`, exact
    /// for the piecewise-linear profile (Simpson is exact up to cubics).
    pub fn radial_moments(&self, n: usize) -> (f64, f64) {
        let w = |r: f64| if n == 1 { 1.0 } else { r };
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 1..self.knots.len() {
            let (a, b) = (self.knots[k - 1], self.knots[k]);
            let (fa, fb) = (self.values[k - 1], self.values[k]);
            let (mid, fm) = (0.5 * (a + b), 0.5 * (fa + fb));
            let h6 = (b - a) / 6.0;
            m1 += h6 * (fa * w(a) + 4.0 * fm * w(mid) + fb * w(b));
            m2 += h6 * (fa * fa * w(a) + 4.0 * fm * fm * w(mid) + fb * fb * w(b));
        }
        (m1, m2)
    }
}

/// Admissible cutoff: `1_[0,1) <= |phi| <= 1_[0,a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    /// `1_[0,a)`, with the same boundary convention as the cones.
    Indicator(f64),
    Profile(RadialProfile),
}

impl Cutoff {
    pub fn indicator(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("cutoff aperture {alpha} must be >= 1")));
        }
        Ok(Cutoff::Indicator(alpha))
    }

    /// Validates the sandwich on the knots and on a fine sample.
    pub fn profile(profile: RadialProfile) -> Result<Self> {
        let support = profile.support();
        if support < 1.0 {
            return Err(Error::InvalidParameter("profile support must reach 1".into()));
        }
        let mut probes: Vec<f64> = profile.knots().to_vec();
        probes.extend((0..=4096).map(|k| support * k as f64 / 4096.0));
        for r in probes {
            let v = profile.value(r).abs();
            if v > 1.0 + 1e-12 || (r < 1.0 && v < 1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!("profile value {v} at r = {r} breaks the cutoff bounds")));
            }
        }
        Ok(Cutoff::Profile(profile))
    }

    pub fn aperture(&self) -> f64 {
        match self {
            Cutoff::Indicator(a) => *a,
            Cutoff::Profile(p) => p.support(),
        }
    }

    /// `phi(d / t)` for a cell already inside the footprint `d < a t`.
    fn weight(&self, d: f64, t: f64) -> f64 {
        match self {
            Cutoff::Indicator(_) => 1.0,
            Cutoff::Profile(p) => p.value(d / t),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            Cutoff::Indicator(a) => f64::from(u8::from(r < *a)),
            Cutoff::Profile(p) => p.value(r),
        }
    }
}

/// Per-level cone moments `sum_{b in cone_j(x)} mu |f|^2` (or the `d x d`
/// covariance when the engine samples), one block per level.
#[derive(Clone, Debug)]
pub struct ConeMoments {
    grid: Arc<HalfSpaceGrid>,
    width: usize,
    data: Vec<f64>,
}

impl ConeMoments {
    pub fn new(f: &GridFunction, alpha: f64, exact: bool) -> Self {
        Self::weighted(f, &Cutoff::Indicator(alpha), exact)
    }

    /// Same with `phi(|x - y| / t)^2` weights.
    pub fn weighted(f: &GridFunction, cutoff: &Cutoff, exact: bool) -> Self {
        let grid = f.grid_arc().clone();
        let base = grid.base();
        let d = f.dim();
        let width = if exact { 1 } else { d * d };
        let nb = base.len();
        let alpha = cutoff.aperture();
        let blocks = crate::par::map_range(grid.levels(), |j| {
            let mu = grid.level_measure(j);
            let t = grid.t_center(j);
            let mut w = vec![0.0; nb * width];
            for b in 0..nb {
                let v = f.value(grid.cell(b, j));
                let out = &mut w[b * width..(b + 1) * width];
                if exact {
                    out[0] = mu * v.iter().map(|x| x * x).sum::<f64>();
                } else {
                    for p in 0..d {
                        for q in 0..d {
                            out[p * d + q] = mu * v[p] * v[q];
                        }
                    }
                }
            }
            let spans = disk_spans(alpha * t / base.h(), base.dim() == 2);
            let mut block = vec![0.0; nb * width];
            match cutoff {
                Cutoff::Indicator(_) => {
                    let prefix = RowPrefix::new(base, &w, width);
                    for x in 0..nb {
                        let (r, c) = base.row_col(x);
                        prefix.disk_sum_into(&spans, r, c, &mut block[x * width..(x + 1) * width]);
                    }
                }
                Cutoff::Profile(_) => {
                    for x in 0..nb {
                        let cx = base.center(x);
                        let out = &mut block[x * width..(x + 1) * width];
                        for b in footprint(base, &spans, x) {
                            let phi = cutoff.weight(dist(&cx, &base.center(b)), t);
                            if phi != 0.0 {
                                let p2 = phi * phi;
                                for (o, s) in out.iter_mut().zip(&w[b * width..(b + 1) * width]) {
                                    *o += p2 * s;
                                }
                            }
                        }
                    }
                }
            }
            block
        });
        Self { grid, width, data: blocks.concat() }
    }

    pub fn is_exact(&self) -> bool {
        self.width == 1
    }

    fn block(&self, j: usize, x: usize) -> &[f64] {
        let nb = self.grid.base().len();
        let at = (j * nb + x) * self.width;
        &self.data[at..at + self.width]
    }

    /// Moments of the levels `j >= first`, i.e. the cone truncated below
    /// the height `t_{first - 1}`.
    pub fn suffix(&self, x: usize, first: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for j in first..self.grid.levels() {
            for (o, v) in out.iter_mut().zip(self.block(j, x)) {
                *o += v;
            }
        }
        out
    }
}

fn footprint<'a>(base: &'a crate::halfspace::BaseGrid, spans: &'a [(i32, i32)], x: usize) -> impl Iterator<Item = usize> + 'a {
    let (row, col) = base.row_col(x);
    let (rows, cols) = (base.rows() as i64, base.cols() as i64);
    spans.iter().flat_map(move |&(dr, w)| {
        let r = row as i64 + dr as i64;
        let (lo, hi) = ((col as i64 - w as i64).max(0), (col as i64 + w as i64).min(cols - 1));
        let ok = r >= 0 && r < rows && lo <= hi;
        let range = if ok { lo..hi + 1 } else { 0..0 };
        range.map(move |c| (r * cols + c) as usize)
    })
}

/// First level whose t-center is below `r`.
pub fn first_level_below(grid: &HalfSpaceGrid, r: f64) -> usize {
    (0..grid.levels()).find(|&j| strictly_less(grid.t_center(j), r)).unwrap_or(grid.levels())
}

/// Square function values at every base center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SquareField {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub path: GammaPath,
}

impl SquareField {
    pub fn second_moments(&self) -> (Vec<f64>, Vec<f64>) {
        self.values
            .iter()
            .zip(&self.stderr)
            .map(|(v, s)| (v * v, 2.0 * v * s))
            .unzip()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    #[serde(with = "infinity")]
    Infinite,
}

mod infinity {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" { Ok(()) } else { Err(serde::de::Error::custom("expected \"inf\"")) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TentNormReport {
    pub p: Exponent,
    pub alpha: f64,
    pub value: f64,
    pub stderr: f64,
    pub path: GammaPath,
    /// Square function at each base center (`T^p`) or `None` (`T^inf`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_x: Option<Vec<f64>>,
    /// Maximizing family ball (`T^inf` only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball: Option<Ball>,
}

/// Tent-norm evaluator with a fixed aperture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TentNorms {
    pub gamma: GammaEngine,
    pub alpha: f64,
}

impl TentNorms {
    pub fn new(gamma: GammaEngine) -> Self {
        Self { gamma, alpha: 1.0 }
    }

    pub fn with_aperture(mut self, alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("aperture {alpha} must be >= 1")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.space() != self.gamma.space {
            return Err(Error::GridMismatch("function value space differs from the engine's".into()));
        }
        Ok(())
    }

    /// Cells of `Gamma_a(x; r)`, by brute force.
    pub fn cone_cells(&self, grid: &HalfSpaceGrid, x: &Point, r: Option<f64>) -> Vec<usize> {
        (0..grid.len())
            .filter(|&c| {
                let (y, t) = grid.cell_point(c);
                strictly_less(dist(x, &y), self.alpha * t) && r.is_none_or(|r| strictly_less(t, r))
            })
            .collect()
    }

    /// `(E |int_{Gamma_a(x; r)} f dW|^2)^(1/2)` at an arbitrary point.
    pub fn square_function(&self, f: &GridFunction, x: &Point, r: Option<f64>) -> Result<GammaEstimate> {
        self.check(f)?;
        Ok(self.gamma.gamma_norm(f, &self.cone_cells(f.grid(), x, r)))
    }

    /// Same with cell weights `phi(|x - y| / t)`.
    pub fn cutoff_square_function(&self, f: &GridFunction, x: &Point, cutoff: &Cutoff) -> Result<GammaEstimate> {
        self.check(f)?;
        let grid = f.grid();
        let alpha = cutoff.aperture();
        let mut cov = Covariance::zeros(f.dim());
        let mut stream = 0xC0_u64;
        for c in 0..grid.len() {
            let (y, t) = grid.cell_point(c);
            let d = dist(x, &y);
            if !strictly_less(d, alpha * t) {
                continue;
            }
            let phi = cutoff.weight(d, t);
            if phi != 0.0 {
                cov.add_outer(f.value(c), grid.measure(c) * phi * phi);
                stream = stream.rotate_left(5) ^ c as u64;
            }
        }
        Ok(self.gamma.estimate(&cov, stream))
    }

    fn field_from(&self, moments: &ConeMoments, first: usize, tag: u64) -> SquareField {
        let nb = moments.grid.base().len();
        if moments.is_exact() {
            let values = crate::par::map_range(nb, |x| moments.suffix(x, first)[0].max(0.0).sqrt());
            return SquareField { stderr: vec![0.0; nb], values, path: GammaPath::Exact };
        }
        let d = self.gamma.space.d;
        let ests = crate::par::map_range(nb, |x| {
            let cov = Covariance::from_flat(d, moments.suffix(x, first));
            crate::par::sequential(|| self.gamma.monte_carlo(&cov, tag ^ ((x as u64) << 8) ^ first as u64))
        });
        SquareField {
            values: ests.iter().map(|e| e.value).collect(),
            stderr: ests.iter().map(|e| e.stderr).collect(),
            path: GammaPath::Mc,
        }
    }

    /// Square function at every base center.
    pub fn square_field(&self, f: &GridFunction) -> Result<SquareField> {
        self.check(f)?;
        let m = ConeMoments::new(f, self.alpha, self.gamma.is_exact());
        Ok(self.field_from(&m, 0, 0x51))
    }

    /// `|J_phi f(x)|_gamma` at every base center.
    pub fn cutoff_field(&self, f: &GridFunction, cutoff: &Cutoff) -> Result<SquareField> {
        self.check(f)?;
        let m = ConeMoments::weighted(f, cutoff, self.gamma.is_exact());
        Ok(self.field_from(&m, 0, 0x52))
    }

    /// `|J_phi f|_{L^1(gamma)} = sum_x h^n |J_phi f(x)|_gamma`.
    pub fn cutoff_l1_norm(&self, f: &GridFunction, cutoff: &Cutoff) -> Result<f64> {
        let field = self.cutoff_field(f, cutoff)?;
        Ok(f.grid().base().cell_volume() * field.values.iter().sum::<f64>())
    }

    pub fn tent_norm_p(&self, f: &GridFunction, p: f64) -> Result<TentNormReport> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("exponent {p} must be in [1, inf)")));
        }
        let field = self.square_field(f)?;
        let hn = f.grid().base().cell_volume();
        let value = lp_aggregate(&field.values, p, hn);
        let stderr = if value > 0.0 {
            let scale = value.powf(1.0 - p);
            field
                .values
                .iter()
                .zip(&field.stderr)
                .map(|(s, e)| (hn * s.powf(p - 1.0) * scale * e).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            0.0
        };
        Ok(TentNormReport {
            p: Exponent::Finite(p),
            alpha: self.alpha,
            value,
            stderr,
            path: field.path,
            per_x: Some(field.values),
            ball: None,
        })
    }

    /// Supremum over the family balls `B(c, r)` of
    /// `(|B|^-1 sum_{x in B} h^n S_a(x; r)^2)^(1/2)`.
    pub fn tent_norm_infty(&self, g: &GridFunction) -> Result<TentNormReport> {
        self.check(g)?;
        let grid = g.grid();
        let family = BallFamily::new(grid.base());
        let moments = ConeMoments::new(g, self.alpha, self.gamma.is_exact());
        let fields: Vec<(Vec<f64>, Vec<f64>)> = (0..=grid.levels())
            .map(|first| self.field_from(&moments, first, 0x53).second_moments())
            .collect();
        let best = ball_average_sup(&family, grid, |first| &fields[first].0);
        let (value, stderr, ball) = match best {
            Some(BallAverage { ri, center, value, volume }) => {
                let first = first_level_below(grid, family.radii()[ri]);
                let hn = grid.base().cell_volume();
                let var: f64 =
                    family.members(ri, center).iter().map(|&x| (hn / volume * fields[first].1[x]).powi(2)).sum();
                let v = value.max(0.0).sqrt();
                let se = if v > 0.0 { var.sqrt() / (2.0 * v) } else { 0.0 };
                (v, se, Some(family.ball(ri, center)))
            }
            None => (0.0, 0.0, None),
        };
        Ok(TentNormReport {
            p: Exponent::Infinite,
            alpha: self.alpha,
            value,
            stderr,
            path: if self.gamma.is_exact() { GammaPath::Exact } else { GammaPath::Mc },
            per_x: None,
            ball,
        })
    }

    /// `|B|^-1 sum_{x in B} h^n S_a(x; r_B)^2` for one ball, by brute force.
    pub fn ball_average(&self, g: &GridFunction, ball: &Ball) -> Result<f64> {
        let grid = g.grid();
        let base = grid.base();
        let mut total = 0.0;
        for x in 0..base.len() {
            let cx = base.center(x);
            if ball.contains(&cx) {
                let s = self.square_function(g, &cx, Some(ball.radius))?.value;
                total += s * s;
            }
        }
        Ok(base.cell_volume() * total / ball.volume(base.dim()))
    }
}

/// The maximizing ball of a family average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallAverage {
    pub ri: usize,
    pub center: usize,
    pub value: f64,
    pub volume: f64,
}

/// `max_{B} |B|^-1 sum_{x in B} h^n field_{first(r_B)}(x)` over the family,
/// with `|B|` the Euclidean volume. Ties go to the smallest radius, then
/// the smallest center.
pub fn ball_average_sup<'a>(
    family: &BallFamily,
    grid: &HalfSpaceGrid,
    field: impl Fn(usize) -> &'a Vec<f64>,
) -> Option<BallAverage> {
    let base = family.grid();
    let n = base.dim();
    let hn = base.cell_volume();
    let per_radius = (0..family.radii().len())
        .map(|ri| {
            let r = family.radii()[ri];
            let values = field(first_level_below(grid, r));
            let prefix = RowPrefix::scalar(base, values);
            let volume = unit_ball_volume(n) * r.powi(n as i32);
            let spans = family.spans(ri);
            (0..base.len())
                .map(|c| {
                    let (row, col) = base.row_col(c);
                    (c, hn * prefix.disk_sum(spans, row, col) / volume)
                })
                .fold(None, |acc: Option<(usize, f64)>, (c, v)| match acc {
                    Some((_, bv)) if !(v > bv) => acc,
                    _ => Some((c, v)),
                })
                .map(|(c, v)| BallAverage { ri, center: c, value: v, volume })
        })
        .collect::<Vec<_>>();
    per_radius.into_iter().flatten().fold(None, |acc, b| match acc {
        Some(a) if !(b.value > a.value) => Some(a),
        _ => Some(b),
    })
}

/// `(sum_x h^n v(x)^p)^(1/p)`.
pub fn lp_aggregate(values: &[f64], p: f64, hn: f64) -> f64 {
    (hn * values.iter().map(|v| v.powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Ratios `|f|_{T^p, a} / |f|_{T^p, 1}` over a corpus (zero functions skipped).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApertureReport {
    pub p: f64,
    pub alpha: f64,
    pub min: f64,
    pub max: f64,
    pub ratios: Vec<f64>,
}

pub fn aperture_equivalence_report(
    gamma: GammaEngine,
    corpus: &[GridFunction],
    p: f64,
    alpha: f64,
) -> Result<ApertureReport> {
    let narrow = TentNorms::new(gamma);
    let wide = TentNorms::new(gamma).with_aperture(alpha)?;
    let mut ratios = Vec::with_capacity(corpus.len());
    for f in corpus {
        let base = narrow.tent_norm_p(f, p)?.value;
        if base > 0.0 {
            ratios.push(wide.tent_norm_p(f, p)?.value / base);
        }
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ApertureReport { p, alpha, min, max, ratios })
}

/// `|f|_{T^2} <= |f|_{T^1}^(1/3) |f|_{T^4}^(2/3)`, the interpolation
/// inequality at `1/2 = (1/3) / 1 + (2/3) / 4`.
pub fn log_convex_in_inverse_p(norms: &TentNorms, f: &GridFunction) -> Result<bool> {
    let n1 = norms.tent_norm_p(f, 1.0)?.value;
    let n2 = norms.tent_norm_p(f, 2.0)?.value;
    let n4 = norms.tent_norm_p(f, 4.0)?.value;
    Ok(less_eq(n2, n1.powf(1.0 / 3.0) * n4.powf(2.0 / 3.0) * (1.0 + 1e-6)))
}
