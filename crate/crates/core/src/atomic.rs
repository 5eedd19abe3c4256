//! `T^1` atoms and the constructive atomic decomposition.
//!
//! An atom for a ball `B` is supported in the tent over `B` and satisfies
//! `sum_{x in B} h^n S a(x)^2 <= 1 / |B|_h`, where `|B|_h = h^n #(centers
//! in B)` is the grid volume of `B`. With that volume the discrete
//! Cauchy-Schwarz step gives `|a|_{T^1} <= 1` exactly.
//!
//! The decomposition follows the level-set construction: `E_k = {S f > 2^k}`,
//! extensions `E_k*` at threshold `c(n)/2`, disjoint balls whose fivefold
//! dilates' tents cover the tent over `E_k*`, a first-hit indicator
//! partition, and the layers `A_k` between consecutive tents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{Covariance, GammaEngine, GammaPath};
use crate::geometry::{
    disk_spans, greedy_ball_cover, less_eq, sector_constant, strictly_less, Ball, DirectionNet, OpenSet,
};
use crate::halfspace::{dist, BaseGrid, GridFunction, HalfSpaceGrid};
use crate::maximal::{MaximalOperator, WeakTypeConstants};
use crate::tentnorm::TentNorms;

const TOL: f64 = 1e-9;

/// `h^n` times the number of base centers inside the ball.
pub fn grid_volume(base: &BaseGrid, ball: &Ball) -> f64 {
    let count = (0..base.len()).filter(|&c| ball.contains(&base.center(c))).count();
    base.cell_volume() * count as f64
}

/// `C(n) = 4 N C_w(n) (c(n)/2)^-1 5^n`: layer-cake factor 4, net size `N`,
/// weak type constant, extension threshold and the fivefold dilation.
pub fn l1_bound_constant(n: usize, constants: &WeakTypeConstants) -> Result<f64> {
    let net = DirectionNet::build(n)?;
    let threshold = sector_constant(n)? / 2.0;
    Ok(4.0 * net.len() as f64 * constants.get(n) / threshold * 5f64.powi(n as i32))
}

/// `E*` threshold used by the decomposition.
pub fn extension_threshold(n: usize) -> Result<f64> {
    Ok(sector_constant(n)? / 2.0)
}

/// Second moments `E |int_{Gamma(x)} a dW|^2` of a sparse field at the
/// base centers its cones can reach. Returns `(x, moment, stderr)`.
fn sparse_cone_moments(engine: &GammaEngine, f: &GridFunction, cells: &[usize]) -> Vec<(usize, f64, f64)> {
    let grid = f.grid();
    let base = grid.base();
    let d = f.dim();
    let mut reach = vec![false; base.len()];
    for &c in cells {
        let (b, j) = grid.split(c);
        let (row, col) = base.row_col(b);
        for (dr, w) in disk_spans(grid.t_center(j) / base.h(), base.dim() == 2) {
            let r = row as i64 + dr as i64;
            if r < 0 || r >= base.rows() as i64 {
                continue;
            }
            let lo = (col as i64 - w as i64).max(0) as usize;
            let hi = (col as i64 + w as i64).min(base.cols() as i64 - 1) as usize;
            for k in lo..=hi {
                reach[base.index(r as usize, k)] = true;
            }
        }
    }
    let xs: Vec<usize> = (0..base.len()).filter(|&x| reach[x]).collect();
    crate::par::map_slice(&xs, |&x| {
        let cx = base.center(x);
        let mut cov = Covariance::zeros(d);
        for &c in cells {
            let (y, t) = grid.cell_point(c);
            if strictly_less(dist(&cx, &y), t) {
                cov.add_outer(f.value(c), grid.measure(c));
            }
        }
        if engine.is_exact() {
            (x, cov.trace(), 0.0)
        } else {
            let e = crate::par::sequential(|| engine.monte_carlo(&cov, 0xA7 ^ x as u64));
            let (m, s) = e.second_moment();
            (x, m, s)
        }
    })
}

/// Outcome of [`validate_atom`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    /// Support cells outside the tent over the ball.
    pub leaks: Vec<usize>,
    /// `|B|_h sum_{x in B} h^n S a(x)^2`; at most 1 for an atom.
    pub normalization: f64,
    pub normalization_stderr: f64,
    pub t1_norm: f64,
    pub t1_stderr: f64,
    pub valid: bool,
}

pub fn validate_atom(engine: &GammaEngine, a: &GridFunction, ball: &Ball) -> AtomReport {
    let grid = a.grid();
    let base = grid.base();
    let support = a.support();
    let leaks: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&c| {
            let (y, t) = grid.cell_point(c);
            !ball.tent_contains(&y, t)
        })
        .collect();
    let hn = base.cell_volume();
    let vol = grid_volume(base, ball);
    let moments = sparse_cone_moments(engine, a, &support);
    let (mut inside, mut inside_var, mut t1, mut t1_var) = (0.0, 0.0, 0.0, 0.0);
    for &(x, m, s) in &moments {
        if ball.contains(&base.center(x)) {
            inside += hn * m;
            inside_var += (hn * s).powi(2);
        }
        let root = m.max(0.0).sqrt();
        t1 += hn * root;
        if root > 0.0 {
            t1_var += (hn * s / (2.0 * root)).powi(2);
        }
    }
    let normalization = vol * inside;
    let normalization_stderr = vol * inside_var.sqrt();
    let t1_stderr = t1_var.sqrt();
    let valid = leaks.is_empty()
        && normalization <= 1.0 + TOL + 4.0 * normalization_stderr
        && t1 <= 1.0 + TOL + 4.0 * t1_stderr;
    AtomReport { leaks, normalization, normalization_stderr, t1_norm: t1, t1_stderr, valid }
}

/// A certified atom.
#[derive(Clone, Debug)]
pub struct Atom {
    pub values: GridFunction,
    pub ball: Ball,
    pub report: AtomReport,
}

impl Atom {
    pub fn certify(engine: &GammaEngine, values: GridFunction, ball: Ball) -> Result<Self> {
        let report = validate_atom(engine, &values, &ball);
        if !report.leaks.is_empty() {
            return Err(Error::SupportLeak { cells: report.leaks });
        }
        if !report.valid {
            return Err(Error::Invariant(format!(
                "atom normalization {} or T1 norm {} exceeds 1",
                report.normalization, report.t1_norm
            )));
        }
        Ok(Self { values, ball, report })
    }
}

/// `k_min = floor(log2 min S) - 1` and `k_max = ceil(log2 max S)` over the
/// positive values, or `None` when `S` vanishes.
pub fn level_range(values: &[f64]) -> Option<(i32, i32)> {
    let positive = values.iter().copied().filter(|&v| v > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0, f64::max);
    (hi > 0.0).then(|| (lo.log2().floor() as i32 - 1, hi.log2().ceil() as i32))
}

/// `(k, E_k)` with `E_k = {x : S f(x) > 2^k}` for `k_min <= k <= k_max`.
pub fn level_sets(engine: &GammaEngine, f: &GridFunction) -> Result<Vec<(i32, OpenSet)>> {
    let field = TentNorms::new(*engine).square_field(f)?;
    level_sets_of(f.grid().base(), &field.values)
}

fn level_sets_of(base: &BaseGrid, s: &[f64]) -> Result<Vec<(i32, OpenSet)>> {
    let Some((lo, hi)) = level_range(s) else {
        return Ok(Vec::new());
    };
    (lo..=hi)
        .map(|k| {
            let level = 2f64.powi(k);
            Ok((k, OpenSet::from_mask(base.clone(), s.iter().map(|&v| v > level).collect())?))
        })
        .collect()
}

/// Per-level construction data.
#[derive(Clone, Debug)]
pub struct Level {
    pub k: i32,
    pub set: OpenSet,
    pub extension: OpenSet,
    pub balls: Vec<Ball>,
    pub sup_radii: Vec<f64>,
    /// `dist(y, complement of E_k*)` at each base center.
    depth: Vec<f64>,
}

impl Level {
    /// Whether the representative point of the cell lies in the tent over `E_k*`.
    pub fn in_tent(&self, grid: &HalfSpaceGrid, cell: usize) -> bool {
        let (b, j) = grid.split(cell);
        self.depth[b] > 0.0 && less_eq(grid.t_center(j), self.depth[b])
    }
}

/// `lambda * a` with `a = chi_k^j 1_{A_k} f / lambda`, stored sparsely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub lambda: f64,
    pub k: i32,
    pub j: usize,
    /// The dilated ball `5 B_k^j`.
    pub ball: Ball,
    pub cells: Vec<usize>,
    /// Atom values, `d` per cell.
    pub values: Vec<f64>,
}

impl Term {
    pub fn atom(&self, f: &GridFunction) -> GridFunction {
        let mut a = GridFunction::zeros(f.grid_arc().clone(), f.space());
        let d = f.dim();
        for (i, &c) in self.cells.iter().enumerate() {
            a.value_mut(c).copy_from_slice(&self.values[i * d..(i + 1) * d]);
        }
        a
    }
}

#[derive(Clone, Debug)]
pub struct AtomicDecomposition {
    pub terms: Vec<Term>,
    pub levels: Vec<Level>,
    /// `|f|_{T^1}`.
    pub source_norm: f64,
    pub lambda_sum: f64,
    pub path: GammaPath,
}

impl AtomicDecomposition {
    pub fn empty(path: GammaPath) -> Self {
        Self { terms: Vec::new(), levels: Vec::new(), source_norm: 0.0, lambda_sum: 0.0, path }
    }

    /// `sum lambda a`.
    pub fn reconstruct(&self, like: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(like.grid_arc().clone(), like.space());
        let d = like.dim();
        for term in &self.terms {
            for (i, &c) in term.cells.iter().enumerate() {
                for (o, v) in out.value_mut(c).iter_mut().zip(&term.values[i * d..(i + 1) * d]) {
                    *o += term.lambda * v;
                }
            }
        }
        out
    }

    pub fn level(&self, k: i32) -> Option<&Level> {
        self.levels.iter().find(|l| l.k == k)
    }

    /// Whether the cell lies in `A_k`.
    pub fn in_layer(&self, grid: &HalfSpaceGrid, k: i32, cell: usize) -> bool {
        let inside = self.level(k).is_some_and(|l| l.in_tent(grid, cell));
        inside && !self.level(k + 1).is_some_and(|l| l.in_tent(grid, cell))
    }
}

/// Rejects functions whose cone shadows would leave the box.
pub fn check_truncation(f: &GridFunction) -> Result<()> {
    let grid = f.grid();
    for c in f.support() {
        let (y, t) = grid.cell_point(c);
        if !less_eq(t, grid.base().distance_to_box_exterior(&y)) {
            return Err(Error::TruncationViolation(format!(
                "cell {c} at y = {:?}, t = {t} reaches the box boundary",
                &y[..grid.dim()]
            )));
        }
    }
    Ok(())
}

pub fn decompose(engine: &GammaEngine, f: &GridFunction) -> Result<AtomicDecomposition> {
    let path = if engine.is_exact() { GammaPath::Exact } else { GammaPath::Mc };
    if f.space() != engine.space {
        return Err(Error::GridMismatch("function value space differs from the engine's".into()));
    }
    check_truncation(f)?;
    let grid = f.grid();
    let base = grid.base();
    let n = grid.dim();
    let norms = TentNorms::new(*engine);
    let field = norms.square_field(f)?;
    let sets = level_sets_of(base, &field.values)?;
    if sets.is_empty() {
        return Ok(AtomicDecomposition::empty(path));
    }
    let hn = base.cell_volume();
    let source_norm = hn * field.values.iter().sum::<f64>();
    let threshold = extension_threshold(n)?;
    let maximal = MaximalOperator::new(base);
    let t_centers = grid.t_centers();

    let mut levels = Vec::with_capacity(sets.len());
    for (k, set) in sets {
        let extension = maximal.extension(&set, threshold)?;
        let cover = greedy_ball_cover(&extension, &t_centers);
        let depth = extension.center_distances();
        levels.push(Level { k, set, extension, balls: cover.balls, sup_radii: cover.sup_radii, depth });
    }

    // Layer index of every support cell: the largest k whose tent holds it.
    let support = f.support();
    let mut layer: Vec<Option<usize>> = vec![None; grid.len()];
    for &c in &support {
        layer[c] = levels.iter().rposition(|l| l.in_tent(grid, c));
        if layer[c].is_none() {
            return Err(Error::Invariant(format!("support cell {c} lies in no layer A_k")));
        }
    }

    let per_level = crate::par::map_range(levels.len(), |li| -> Result<Vec<Term>> {
        let level = &levels[li];
        let cells: Vec<usize> = support.iter().copied().filter(|&c| layer[c] == Some(li)).collect();
        if cells.is_empty() {
            return Ok(Vec::new());
        }
        let dilated: Vec<Ball> = level.balls.iter().map(|b| b.dilate(5.0)).collect();
        let mut owned: Vec<Vec<usize>> = vec![Vec::new(); dilated.len()];
        for &c in &cells {
            let (y, t) = grid.cell_point(c);
            let j = dilated.iter().position(|b| b.tent_contains(&y, t)).ok_or_else(|| {
                Error::Invariant(format!("cell {c} of the tent over E*_{} is not covered", level.k))
            })?;
            owned[j].push(c);
        }
        let layer_fn = f.restrict(|c| layer[c] == Some(li));
        let moments = sparse_cone_moments(engine, &layer_fn, &cells);
        let d = f.dim();
        let mut terms = Vec::new();
        for (j, own) in owned.into_iter().enumerate() {
            if own.is_empty() {
                continue;
            }
            let ball = dilated[j];
            let integral: f64 = moments
                .iter()
                .filter(|(x, _, _)| ball.contains(&base.center(*x)))
                .map(|(_, m, _)| hn * m)
                .sum();
            let lambda = (grid_volume(base, &ball) * integral).sqrt();
            if !(lambda > 0.0) {
                return Err(Error::Invariant(format!("vanishing coefficient at level {}, ball {j}", level.k)));
            }
            let values = own.iter().flat_map(|&c| f.value(c).iter().map(|v| v / lambda)).collect::<Vec<_>>();
            debug_assert_eq!(values.len(), own.len() * d);
            terms.push(Term { lambda, k: level.k, j, ball, cells: own, values });
        }
        Ok(terms)
    });
    let mut terms = Vec::new();
    for t in per_level {
        terms.extend(t?);
    }
    let lambda_sum = terms.iter().map(|t| t.lambda.abs()).sum();
    Ok(AtomicDecomposition { terms, levels, source_norm, lambda_sum, path })
}

/// Exhaustive checks of the decomposition invariants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub terms: usize,
    pub reconstruction_error: f64,
    pub invalid_atoms: Vec<usize>,
    pub lambda_sum: f64,
    pub source_norm: f64,
    pub bound: f64,
    /// Tent cells of some `E_k*` not covered by the dilated balls.
    pub uncovered_tent_cells: usize,
    pub passed: bool,
}

pub fn verify_decomposition(
    engine: &GammaEngine,
    f: &GridFunction,
    dec: &AtomicDecomposition,
    constants: &WeakTypeConstants,
) -> Result<DecompositionReport> {
    let grid = f.grid();
    let rebuilt = dec.reconstruct(f);
    let reconstruction_error = rebuilt.max_relative_difference(f)?;
    let invalid_atoms: Vec<usize> = crate::par::map_range(dec.terms.len(), |i| {
        let t = &dec.terms[i];
        crate::par::sequential(|| validate_atom(engine, &t.atom(f), &t.ball).valid)
    })
    .into_iter()
    .enumerate()
    .filter_map(|(i, ok)| (!ok).then_some(i))
    .collect();
    let mut uncovered = 0;
    for level in &dec.levels {
        let dilated: Vec<Ball> = level.balls.iter().map(|b| b.dilate(5.0)).collect();
        uncovered += (0..grid.len())
            .filter(|&c| level.in_tent(grid, c))
            .filter(|&c| {
                let (y, t) = grid.cell_point(c);
                !dilated.iter().any(|b| b.tent_contains(&y, t))
            })
            .count();
    }
    let bound = l1_bound_constant(grid.dim(), constants)? * dec.source_norm;
    let passed = reconstruction_error <= 1e-10
        && invalid_atoms.is_empty()
        && uncovered == 0
        && dec.lambda_sum <= bound * (1.0 + 1e-12);
    Ok(DecompositionReport {
        terms: dec.terms.len(),
        reconstruction_error,
        invalid_atoms,
        lambda_sum: dec.lambda_sum,
        source_norm: dec.source_norm,
        bound,
        uncovered_tent_cells: uncovered,
        passed,
    })
}

/// Direct check of the per-point cone estimate inside the dilated balls.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConeBoundReport {
    /// Points outside `E_{k+1}` (bound `4^{k+1}`).
    pub outside: usize,
    /// Points inside `E_{k+1}` (bound `N^2 4^{k+1}`).
    pub inside: usize,
    /// `(k, x, value, bound)` for every failure.
    pub violations: Vec<(i32, usize, f64, f64)>,
    pub max_ratio: f64,
    /// Support cells of `1_{A_k} f` inside the tent over `E_{k+1}*`.
    pub layer_overlaps: usize,
}

pub fn verify_cone_bound(engine: &GammaEngine, f: &GridFunction, dec: &AtomicDecomposition) -> Result<ConeBoundReport> {
    let grid = f.grid();
    let base = grid.base();
    let net = DirectionNet::build(grid.dim())?;
    let n2 = (net.len() * net.len()) as f64;
    let mut report = ConeBoundReport::default();
    for level in &dec.levels {
        let k = level.k;
        let cells: Vec<usize> = dec.terms.iter().filter(|t| t.k == k).flat_map(|t| t.cells.iter().copied()).collect();
        if cells.is_empty() {
            continue;
        }
        let next = dec.level(k + 1);
        report.layer_overlaps += cells.iter().filter(|&&c| next.is_some_and(|l| l.in_tent(grid, c))).count();
        let layer_fn = f.restrict(|c| dec.in_layer(grid, k, c));
        let dilated: Vec<Ball> = level.balls.iter().map(|b| b.dilate(5.0)).collect();
        let four = 4f64.powi(k + 1);
        for (x, m, s) in sparse_cone_moments(engine, &layer_fn, &cells) {
            let cx = base.center(x);
            if !dilated.iter().any(|b| b.contains(&cx)) {
                continue;
            }
            let inside = next.is_some_and(|l| l.set.contains_cell(x));
            let bound = if inside { n2 * four } else { four };
            if inside {
                report.inside += 1;
            } else {
                report.outside += 1;
            }
            report.max_ratio = report.max_ratio.max(m / bound);
            if m > bound * (1.0 + TOL) + 4.0 * s {
                report.violations.push((k, x, m, bound));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfspace::NormedSpace;
    use std::sync::Arc;

    fn grid() -> Arc<HalfSpaceGrid> {
        Arc::new(HalfSpaceGrid::new(1, 4.0, 1.0 / 16.0, 2.0, 5).unwrap())
    }

    fn engine(d: usize) -> GammaEngine {
        GammaEngine::new(NormedSpace::euclidean(d))
    }

    #[test]
    fn bound_constants() {
        let c = WeakTypeConstants::default();
        assert_eq!(l1_bound_constant(1, &c).unwrap(), 320.0);
        assert_eq!(l1_bound_constant(2, &c).unwrap(), 28800.0);
    }

    #[test]
    fn zero_atom_is_valid() {
        let g = grid();
        let a = GridFunction::zeros(g, NormedSpace::euclidean(1));
        assert!(validate_atom(&engine(1), &a, &Ball::new([0.0, 0.0], 1.0)).valid);
        assert!(decompose(&engine(1), &a).unwrap().terms.is_empty());
        assert!(level_sets(&engine(1), &a).unwrap().is_empty());
    }

    #[test]
    fn single_cell_atom_at_equality() {
        let g = grid();
        let base = g.base();
        let ball = Ball::new(base.center(base.locate(&[0.01, 0.0]).unwrap()), 1.0);
        let cell = g.cell(base.locate(&ball.center).unwrap(), 2);
        let probe = GridFunction::impulse(g.clone(), NormedSpace::euclidean(1), cell, &[1.0]).unwrap();
        let unit = validate_atom(&engine(1), &probe, &ball);
        let scale = 1.0 / unit.normalization.sqrt();
        let exact = validate_atom(&engine(1), &probe.scaled(scale), &ball);
        assert!((exact.normalization - 1.0).abs() < 1e-12 && exact.valid);
        assert!(exact.t1_norm <= 1.0 + 1e-12);
        let over = validate_atom(&engine(1), &probe.scaled(1.01 * scale), &ball);
        assert!(!over.valid);
        let leak = GridFunction::impulse(g.clone(), NormedSpace::euclidean(1), g.cell(0, 0), &[1e-6]).unwrap();
        assert!(matches!(Atom::certify(&engine(1), leak, ball), Err(Error::SupportLeak { .. })));
    }

    #[test]
    fn nested_level_sets() {
        let g = grid();
        let f = bump(&g, 0.0, 0.7, 2.0);
        let sets = level_sets(&engine(1), &f).unwrap();
        assert!(sets.len() > 2);
        for w in sets.windows(2) {
            assert_eq!(w[1].0, w[0].0 + 1);
            assert!(w[1].1.is_subset_of(&w[0].1));
        }
        assert!(sets.last().unwrap().1.is_empty());
    }

    fn bump(g: &Arc<HalfSpaceGrid>, c: f64, r: f64, amp: f64) -> GridFunction {
        GridFunction::from_fn(g.clone(), NormedSpace::euclidean(1), |cell, v| {
            let (y, t) = g.cell_point(cell);
            if t <= r - (y[0] - c).abs() {
                v[0] = amp * (1.0 + ((cell * 13) % 7) as f64 / 7.0);
            }
        })
        .unwrap()
    }

    #[test]
    fn decomposition_end_to_end() {
        let g = grid();
        let f = bump(&g, 0.1, 0.8, 1.5);
        let dec = decompose(&engine(1), &f).unwrap();
        let report = verify_decomposition(&engine(1), &f, &dec, &WeakTypeConstants::default()).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.lambda_sum > 0.0);
        let cone = verify_cone_bound(&engine(1), &f, &dec).unwrap();
        assert!(cone.violations.is_empty(), "{cone:?}");
        assert_eq!(cone.layer_overlaps, 0);
    }

    #[test]
    fn separated_atoms_do_not_mix() {
        // A bump of radius r has an extension of radius about 7r, so the
        // dilated balls reach about 35r; the bumps sit further apart.
        let g = Arc::new(HalfSpaceGrid::new(1, 4.0, 1.0 / 32.0, 2.0, 7).unwrap());
        let f = bump(&g, -2.75, 0.125, 1.0).axpy(1.0, &bump(&g, 2.75, 0.125, 1.0)).unwrap();
        let dec = decompose(&engine(1), &f).unwrap();
        for term in &dec.terms {
            let ys: Vec<f64> = term.cells.iter().map(|&c| g.cell_point(c).0[0]).collect();
            assert!(ys.iter().all(|&y| y < 0.0) || ys.iter().all(|&y| y > 0.0));
        }
        assert!(dec.terms.iter().any(|t| t.ball.center[0] < 0.0));
        assert!(dec.terms.iter().any(|t| t.ball.center[0] > 0.0));
        assert!(dec.reconstruct(&f).max_relative_difference(&f).unwrap() <= 1e-12);
    }

    #[test]
    fn truncation_is_enforced() {
        let g = grid();
        let f = GridFunction::impulse(g.clone(), NormedSpace::euclidean(1), g.cell(1, 0), &[1.0]).unwrap();
        assert!(matches!(decompose(&engine(1), &f), Err(Error::TruncationViolation(_))));
    }
}
