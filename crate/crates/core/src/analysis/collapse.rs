//! Family–Vicsek rescaling and finite-size-scaling collapse.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Cost contributed by a pair of curves whose abscissa ranges do not overlap.
pub const COLLAPSE_PENALTY: f64 = 1.0e6;

/// Rescales each `(V, [(t, w)])` curve to `(t / V^{α/β}, w / V^α)`.
pub fn family_vicsek_rescale(
    curves: &[(usize, Vec<(f64, f64)>)],
    alpha: f64,
    beta: f64,
) -> Result<Vec<(usize, Vec<(f64, f64)>)>> {
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::contract("alpha and beta must be finite"));
    }
    if beta == 0.0 {
        return Err(Error::contract("beta must be non-zero"));
    }
    Ok(curves
        .iter()
        .map(|(v, pts)| {
            let vf = *v as f64;
            let tx = vf.powf(alpha / beta);
            let wy = vf.powf(alpha);
            (*v, pts.iter().map(|&(t, w)| (t / tx, w / wy)).collect())
        })
        .collect())
}

fn sorted(curve: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut c = curve.to_vec();
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    c
}

/// Piecewise-linear interpolation on a curve sorted by x; `x` must lie in range.
fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    let i = curve.partition_point(|p| p.0 < x);
    if i == 0 {
        return curve[0].1;
    }
    if i == curve.len() {
        return curve[curve.len() - 1].1;
    }
    let (x0, y0) = curve[i - 1];
    let (x1, y1) = curve[i];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Mean squared vertical distance between two sorted curves on their overlap.
///
/// Both interpolants are linear between consecutive points of the merged
/// abscissa grid, so the squared difference integrates exactly.
fn pair_cost(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if !(hi > lo) {
        return COLLAPSE_PENALTY;
    }
    let mut grid: Vec<f64> = a
        .iter()
        .chain(b)
        .map(|p| p.0)
        .filter(|&x| x > lo && x < hi)
        .collect();
    grid.push(lo);
    grid.push(hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let diff = |x: f64| interpolate(a, x) - interpolate(b, x);
    let mut integral = 0.0;
    for w in grid.windows(2) {
        let (d0, d1) = (diff(w[0]), diff(w[1]));
        integral += (w[1] - w[0]) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    }
    integral / (hi - lo)
}

/// Average over curve pairs of the mean squared vertical distance on the
/// pair's common abscissa range. Pairs that do not overlap cost
/// [`COLLAPSE_PENALTY`].
pub fn collapse_cost(curves: &[Vec<(f64, f64)>]) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::contract("collapse cost needs at least two curves"));
    }
    if curves.iter().any(|c| c.is_empty()) {
        return Err(Error::contract("collapse cost got an empty curve"));
    }
    let sorted: Vec<_> = curves.iter().map(|c| sorted(c)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            total += pair_cost(&sorted[i], &sorted[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseGrid {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_points: usize,
    pub xi_min: f64,
    pub xi_max: f64,
    pub xi_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseResult {
    pub gamma_c: f64,
    pub xi: f64,
    pub cost: f64,
    pub grid: CollapseGrid,
}

/// Rescaled abscissa `(γ − γ_c) V^ξ` for each `(V, [(γ, α)])` curve.
pub fn collapse_curves(
    alpha_curves: &[(f64, Vec<(f64, f64)>)],
    gamma_c: f64,
    xi: f64,
) -> Vec<Vec<(f64, f64)>> {
    alpha_curves
        .iter()
        .map(|(v, pts)| {
            let s = v.powf(xi);
            pts.iter().map(|&(g, a)| ((g - gamma_c) * s, a)).collect()
        })
        .collect()
}

/// Exhaustive grid search for the `(γ_c, ξ)` minimising the collapse cost of
/// `α` against `(γ − γ_c) V^ξ`. Ties go to the smallest `γ_c`, then the smallest `ξ`.
pub fn fit_collapse(
    alpha_curves: &[(f64, Vec<(f64, f64)>)],
    gamma_grid: &[f64],
    xi_grid: &[f64],
) -> Result<CollapseResult> {
    if alpha_curves.len() < 2 {
        return Err(Error::contract("collapse needs at least two sizes"));
    }
    if alpha_curves.iter().any(|(v, _)| !(*v > 0.0)) {
        return Err(Error::contract("collapse sizes must be positive"));
    }
    if let Some((v, _)) = alpha_curves.iter().find(|(_, pts)| pts.len() < 2) {
        return Err(Error::contract(format!(
            "size V={v} has fewer than two gamma points"
        )));
    }
    if gamma_grid.is_empty() || xi_grid.is_empty() {
        return Err(Error::contract("collapse grids must be non-empty"));
    }
    if gamma_grid.iter().chain(xi_grid).any(|x| !x.is_finite()) {
        return Err(Error::contract("collapse grids must be finite"));
    }
    let mut gammas = gamma_grid.to_vec();
    gammas.sort_by(f64::total_cmp);
    let mut xis = xi_grid.to_vec();
    xis.sort_by(f64::total_cmp);

    let cells: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| xis.iter().map(move |&x| (g, x)))
        .collect();
    let costs: Vec<f64> = cells
        .par_iter()
        .map(|&(g, x)| {
            collapse_cost(&collapse_curves(alpha_curves, g, x)).unwrap_or(COLLAPSE_PENALTY)
        })
        .collect();

    // cells are in (γ, ξ) lexicographic order, so the first strict minimum wins ties
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = i;
        }
    }
    let (gamma_c, xi) = cells[best];
    Ok(CollapseResult {
        gamma_c,
        xi,
        cost: costs[best],
        grid: CollapseGrid {
            gamma_min: gammas[0],
            gamma_max: gammas[gammas.len() - 1],
            gamma_points: gammas.len(),
            xi_min: xis[0],
            xi_max: xis[xis.len() - 1],
            xi_points: xis.len(),
        },
    })
}
