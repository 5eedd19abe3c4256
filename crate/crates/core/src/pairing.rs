//! The pairing `<f, g> = c_n int <f(y,t), g(y,t)> dy dt / t` between
//! `T^1(X)` and `T^inf(X*)`, with `X = R^d` and `X*` the dual norm on the
//! same coordinates.

use std::sync::Arc;

use serde::Serialize;

use crate::atomic::AtomicDecomposition;
use crate::error::{Error, Result};
use crate::halfspace::{unit_ball_volume, GridFunction};
use crate::tentnorm::TentNorms;

fn check_pair(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if !Arc::ptr_eq(f.grid_arc(), g.grid_arc()) && f.grid() != g.grid() {
        return Err(Error::GridMismatch("paired functions live on different grids".into()));
    }
    if f.dim() != g.dim() {
        return Err(Error::GridMismatch(format!("value dimensions {} and {} differ", f.dim(), g.dim())));
    }
    Ok(())
}

/// Cell-exact `c_n sum_C <f(C), g(C)> mu'(C)`.
pub fn duality_pairing(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_pair(f, g)?;
    let grid = f.grid();
    let nb = grid.base().len();
    let per_level = crate::par::map_range(grid.levels(), |j| {
        let mut s = 0.0;
        for b in 0..nb {
            let c = grid.cell(b, j);
            s += f.value(c).iter().zip(g.value(c)).map(|(a, b)| a * b).sum::<f64>();
        }
        s * grid.pairing_measure(j)
    });
    Ok(unit_ball_volume(grid.dim()) * per_level.iter().sum::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairingReport {
    pub pairing: f64,
    pub t1_norm: f64,
    pub tinf_norm: f64,
    /// `|<f,g>| / (|f|_{T^1} |g|_{T^inf})`, zero when either norm vanishes.
    pub ratio: f64,
}

/// `primal` measures `f` in `T^1(X)`, `dual` measures `g` in `T^inf(X*)`.
pub fn pairing_report(primal: &TentNorms, dual: &TentNorms, f: &GridFunction, g: &GridFunction) -> Result<PairingReport> {
    let pairing = duality_pairing(f, g)?;
    let t1_norm = primal.tent_norm_p(f, 1.0)?.value;
    let tinf_norm = dual.tent_norm_infty(g)?.value;
    let denom = t1_norm * tinf_norm;
    let ratio = if denom > 0.0 { pairing.abs() / denom } else { 0.0 };
    Ok(PairingReport { pairing, t1_norm, tinf_norm, ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub max_ratio: f64,
    /// Smallest nonzero ratio; pairs with a vanishing norm are left out.
    pub min_ratio: f64,
    pub reports: Vec<PairingReport>,
}

pub fn duality_inequality_report(
    primal: &TentNorms,
    dual: &TentNorms,
    pairs: &[(GridFunction, GridFunction)],
) -> Result<DualityReport> {
    let reports = pairs.iter().map(|(f, g)| pairing_report(primal, dual, f, g)).collect::<Result<Vec<_>>>()?;
    let max_ratio = reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min_ratio = reports.iter().map(|r| r.ratio).filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    Ok(DualityReport { max_ratio, min_ratio, reports })
}

/// `sup_g |<f,g>| / |g|_{T^inf}` over the family, divided by `|f|_{T^1}`.
pub fn norming_ratio(primal: &TentNorms, dual: &TentNorms, f: &GridFunction, family: &[GridFunction]) -> Result<f64> {
    let t1 = primal.tent_norm_p(f, 1.0)?.value;
    if t1 == 0.0 {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for g in family {
        let norm = dual.tent_norm_infty(g)?.value;
        if norm > 0.0 {
            best = best.max(duality_pairing(f, g)?.abs() / norm);
        }
    }
    Ok(best / t1)
}

/// `|<f,g>| / (|f|_{T^2} |g|_{T^2})`.
pub fn t2_ratio(primal: &TentNorms, dual: &TentNorms, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    let denom = primal.tent_norm_p(f, 2.0)?.value * dual.tent_norm_p(g, 2.0)?.value;
    Ok(if denom > 0.0 { duality_pairing(f, g)?.abs() / denom } else { 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Compatibility {
    pub direct: f64,
    pub through_atoms: f64,
    pub relative_error: f64,
}

fn abs(f: &GridFunction) -> Result<GridFunction> {
    GridFunction::from_fn(f.grid_arc().clone(), f.space(), |c, v| {
        for (o, a) in v.iter_mut().zip(f.value(c)) {
            *o = a.abs();
        }
    })
}

/// `<f, g>` against `sum_k lambda_k <a_k, g>`.
pub fn decomposition_compatibility(dec: &AtomicDecomposition, f: &GridFunction, g: &GridFunction) -> Result<Compatibility> {
    let direct = duality_pairing(f, g)?;
    let mut through_atoms = 0.0;
    for term in &dec.terms {
        through_atoms += term.lambda * duality_pairing(&term.atom(f), g)?;
    }
    // Relative to the pairing of the absolute values.
    let magnitude = duality_pairing(&abs(f)?, &abs(g)?)?;
    let relative_error = if magnitude > 0.0 { (direct - through_atoms).abs() / magnitude } else { 0.0 };
    Ok(Compatibility { direct, through_atoms, relative_error })
}
