//! Regularity and integrability probes on computed fields: growth of Q
//! near a point, L^p norms of the differential on balls, Campanato mean
//! oscillation, and Frobenius / rotational residuals of one-forms in 3-D.
//!
//! Balls and annuli are node subsets {k : |x_k - p0| in range}; integrals
//! use the trapezoid weights of those nodes.

use serde::{Serialize, Serializer};

use crate::error::{HodgeError, Result};
use crate::flow::least_squares_slope;
use crate::grid::Grid;
use crate::state::OneFormField;

fn distance(grid: &Grid, k: usize, p0: &[f64]) -> f64 {
    let x = grid.coords(k);
    p0.iter()
        .enumerate()
        .map(|(a, p)| (x[a] - p) * (x[a] - p))
        .sum::<f64>()
        .sqrt()
}

fn check_point(grid: &Grid, p0: &[f64]) -> Result<()> {
    if p0.len() != grid.dim() {
        return Err(HodgeError::DimensionMismatch(format!(
            "point has {} coordinates, grid has dimension {}",
            p0.len(),
            grid.dim()
        )));
    }
    Ok(())
}

fn check_len(grid: &Grid, len: usize, per_node: usize) -> Result<()> {
    if len != grid.n_nodes() * per_node {
        return Err(HodgeError::DimensionMismatch(format!(
            "field has {len} values, expected {}",
            grid.n_nodes() * per_node
        )));
    }
    Ok(())
}

/// Nodes with r_min <= |x - p0| <= r_max (with a relative 1e-12 tolerance).
pub fn shell_nodes(grid: &Grid, p0: &[f64], r_min: f64, r_max: f64) -> Result<Vec<usize>> {
    check_point(grid, p0)?;
    let eps = 1e-12 * r_max.abs().max(1.0);
    Ok((0..grid.n_nodes())
        .filter(|&k| {
            let r = distance(grid, k, p0);
            r >= r_min - eps && r <= r_max + eps
        })
        .collect())
}

/// max over annulus nodes of Q(x) |x - p0|^2.
pub fn growth_constant(grid: &Grid, q: &[f64], p0: &[f64], r_min: f64, r_max: f64) -> Result<f64> {
    check_len(grid, q.len(), 1)?;
    if !(r_min > 0.0 && r_max >= r_min) {
        return Err(HodgeError::InvalidArgument(format!(
            "annulus [{r_min}, {r_max}] needs 0 < r_min <= r_max"
        )));
    }
    let nodes = shell_nodes(grid, p0, r_min, r_max)?;
    if nodes.is_empty() {
        return Err(HodgeError::EmptyRegion(format!(
            "no node in annulus [{r_min}, {r_max}] about {p0:?}"
        )));
    }
    Ok(nodes.iter().fold(0.0, |g, &k| {
        let r = distance(grid, k, p0);
        g.max(q[k] * r * r)
    }))
}

/// (∫_B Q^{p/2})^{1/p} over the node ball B of `radius` about p0.
pub fn lp_norm(grid: &Grid, q: &[f64], p0: &[f64], radius: f64, p: f64) -> Result<f64> {
    check_len(grid, q.len(), 1)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(HodgeError::InvalidArgument(format!("exponent p = {p} must be >= 1")));
    }
    let nodes = shell_nodes(grid, p0, 0.0, radius)?;
    if nodes.is_empty() {
        return Err(HodgeError::EmptyRegion(format!("no node in ball of radius {radius} about {p0:?}")));
    }
    let s: f64 = nodes
        .iter()
        .map(|&k| grid.trapezoid_weight(k) * q[k].powf(0.5 * p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// Serializes +∞ as the string "inf".
fn finite_or_inf<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if *x == f64::INFINITY {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationFit {
    /// (radius, ∫_B |f - mean_B f|^2).
    pub points: Vec<(f64, f64)>,
    /// (slope of log value against log radius - n) / 2; +∞ when every
    /// oscillation vanishes.
    #[serde(serialize_with = "finite_or_inf")]
    pub exponent: f64,
}

/// Mean-square oscillation of an `ncomp`-vector field on balls about x0,
/// with the Hölder-type exponent fitted from its decay in the radius.
pub fn mean_oscillation(grid: &Grid, field: &[f64], ncomp: usize, x0: &[f64], radii: &[f64]) -> Result<OscillationFit> {
    check_len(grid, field.len(), ncomp)?;
    check_point(grid, x0)?;
    if radii.len() < 3 {
        return Err(HodgeError::DegenerateFit(format!("{} radii given, need at least 3", radii.len())));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(HodgeError::InvalidArgument("radii must be positive and strictly decreasing".into()));
    }
    let mut points = Vec::new();
    for &r in radii {
        let nodes = shell_nodes(grid, x0, 0.0, r)?;
        if nodes.len() < 2 {
            continue;
        }
        let wsum: f64 = nodes.iter().map(|&k| grid.trapezoid_weight(k)).sum();
        let mut mean = vec![0.0; ncomp];
        for &k in &nodes {
            let w = grid.trapezoid_weight(k);
            for (i, m) in mean.iter_mut().enumerate() {
                *m += w * field[k * ncomp + i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= wsum);
        let (mut osc, mut size) = (0.0, 0.0);
        for &k in &nodes {
            let w = grid.trapezoid_weight(k);
            let f = &field[k * ncomp..(k + 1) * ncomp];
            osc += w * f.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>();
            size += w * f.iter().map(|v| v * v).sum::<f64>();
        }
        // oscillation at round-off level of the field itself counts as none
        if osc <= 1e-24 * size {
            osc = 0.0;
        }
        points.push((r, osc));
    }
    if points.len() >= 3 && points.iter().all(|p| p.1 == 0.0) {
        return Ok(OscillationFit { points, exponent: f64::INFINITY });
    }
    let usable: Vec<_> = points.iter().filter(|p| p.1 > 0.0).collect();
    if usable.len() < 3 {
        return Err(HodgeError::DegenerateFit(format!(
            "{} radii with at least 2 nodes and nonzero oscillation, need 3",
            usable.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(OscillationFit {
        points,
        exponent: 0.5 * (slope - grid.dim() as f64),
    })
}

fn require_3d_scalar(omega: &OneFormField) -> Result<()> {
    if omega.grid().dim() != 3 || omega.components() != 1 {
        return Err(HodgeError::DimensionMismatch(format!(
            "need a single-component form on a 3-D grid, got {} component(s) in dimension {}",
            omega.components(),
            omega.grid().dim()
        )));
    }
    Ok(())
}

fn curl(omega: &OneFormField, k: usize) -> [f64; 3] {
    let d = |axis, along| omega.coeff_derivative(k, 0, axis, along);
    [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
}

fn coeffs(omega: &OneFormField, k: usize) -> [f64; 3] {
    [omega.coeff(k, 0, 0), omega.coeff(k, 0, 1), omega.coeff(k, 0, 2)]
}

/// ‖(curl ω)·ω‖∞ over interior nodes: the discrete dω∧ω.
pub fn frobenius_residual(omega: &OneFormField) -> Result<f64> {
    require_3d_scalar(omega)?;
    Ok(omega.grid().interior_nodes().into_iter().fold(0.0, |m, k| {
        let c = curl(omega, k);
        let w = coeffs(omega, k);
        m.max((c[0] * w[0] + c[1] * w[1] + c[2] * w[2]).abs())
    }))
}

/// ‖curl ω - v × ω‖∞ over interior nodes and components: the discrete
/// dω - v∧ω.
pub fn rotational_residual(omega: &OneFormField, v: &OneFormField) -> Result<f64> {
    require_3d_scalar(omega)?;
    require_3d_scalar(v)?;
    if omega.grid() != v.grid() {
        return Err(HodgeError::DimensionMismatch("ω and v live on different grids".into()));
    }
    Ok(omega.grid().interior_nodes().into_iter().fold(0.0, |m, k| {
        let c = curl(omega, k);
        let w = coeffs(omega, k);
        let a = coeffs(v, k);
        let cross = [
            a[1] * w[2] - a[2] * w[1],
            a[2] * w[0] - a[0] * w[2],
            a[0] * w[1] - a[1] * w[0],
        ];
        (0..3).fold(m, |m, i| m.max((c[i] - cross[i]).abs()))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpNorm {
    pub p: f64,
    pub radius: f64,
    pub value: f64,
}

/// Collected diagnostics of one field. Entries that were not requested or
/// do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub gamma0_hat: Option<f64>,
    pub lp_norms: Vec<LpNorm>,
    pub campanato: Option<OscillationFit>,
    pub campanato_exponent: Option<CampanatoExponent>,
    pub frobenius_residual: Option<f64>,
    pub rotational_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CampanatoExponent(#[serde(serialize_with = "finite_or_inf")] pub f64);
