//! Map fields u: Ω → R^m or S^{m-1}, the pointwise energy density Q and the
//! total energy.
//!
//! Sphere-valued maps are stored extrinsically in R^m and kept on the sphere
//! by nearest-point projection, so no chart or Christoffel symbol is ever
//! needed. Q uses the ambient gradient, which is the induced-metric norm.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{HodgeError, Result};
use crate::grid::{self, Grid};

/// Tolerance on | |u| - 1 | for sphere-valued maps.
pub const SPHERE_TOL: f64 = 1e-12;
/// Nodal vectors shorter than this cannot be projected to the sphere.
pub const PROJECTION_MIN_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Flat,
    Sphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapField {
    grid: Arc<Grid>,
    components: usize,
    values: Vec<f64>,
    target: Target,
}

impl MapField {
    pub fn new(grid: Arc<Grid>, components: usize, values: Vec<f64>, target: Target) -> Result<Self> {
        if components == 0 {
            return Err(HodgeError::InvalidArgument("map needs at least one component".into()));
        }
        if target == Target::Sphere && components < 2 {
            return Err(HodgeError::InvalidArgument(
                "sphere target needs at least two components".into(),
            ));
        }
        if values.len() != grid.n_nodes() * components {
            return Err(HodgeError::DimensionMismatch(format!(
                "map has {} values, grid needs {}",
                values.len(),
                grid.n_nodes() * components
            )));
        }
        if target == Target::Sphere {
            for (k, v) in values.chunks(components).enumerate() {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > SPHERE_TOL {
                    return Err(HodgeError::InvalidArgument(format!(
                        "sphere map has |u| = {norm} at node {k}"
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            components,
            values,
            target,
        })
    }

    /// Samples `f` at every node. Sphere maps are projected after sampling.
    pub fn from_fn(
        grid: Arc<Grid>,
        components: usize,
        target: Target,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_nodes() * components);
        for k in 0..grid.n_nodes() {
            let v = f(&grid.position(k));
            if v.len() != components {
                return Err(HodgeError::DimensionMismatch(format!(
                    "sampler returned {} components, expected {components}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        if target == Target::Sphere {
            values = project_sphere(&values, components)?;
        }
        Self::new(grid, components, values, target)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.components..(k + 1) * self.components]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same grid and target, new nodal values (validated).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), self.components, values, self.target)
    }

    /// Differential du as a one-form field.
    pub fn differential(&self) -> OneFormField {
        let values = grid::jacobian(&self.values, self.components, &self.grid)
            .expect("map values match their grid");
        OneFormField {
            grid: self.grid.clone(),
            components: self.components,
            values,
        }
    }

    /// Largest | |u| - 1 | over the nodes.
    pub fn sphere_defect(&self) -> f64 {
        self.values
            .chunks(self.components)
            .map(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// ∞-norm distance to another field on the same grid.
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A nodal one-form with `components` columns: entry `(k*m + i)*n + a` is
/// the dx^a coefficient of the i-th component at node k.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormField {
    grid: Arc<Grid>,
    components: usize,
    values: Vec<f64>,
}

impl OneFormField {
    pub fn new(grid: Arc<Grid>, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() * components * grid.dim() {
            return Err(HodgeError::DimensionMismatch(format!(
                "one-form has {} values, expected {}",
                values.len(),
                grid.n_nodes() * components * grid.dim()
            )));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    /// Samples a single-component form from its coefficient function.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let n = grid.dim();
        let mut values = Vec::with_capacity(grid.n_nodes() * n);
        for k in 0..grid.n_nodes() {
            let w = f(&grid.position(k));
            if w.len() != n {
                return Err(HodgeError::DimensionMismatch(format!(
                    "form sampler returned {} coefficients on a {n}-dimensional grid",
                    w.len()
                )));
            }
            values.extend(w);
        }
        Self::new(grid, 1, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coefficient of dx^axis in component `comp` at node `k`.
    #[inline]
    pub fn coeff(&self, k: usize, comp: usize, axis: usize) -> f64 {
        self.values[(k * self.components + comp) * self.grid.dim() + axis]
    }

    /// Derivative along `along` of the dx^`axis` coefficient.
    pub fn coeff_derivative(&self, k: usize, comp: usize, axis: usize, along: usize) -> f64 {
        let n = self.grid.dim();
        self.grid
            .axis_derivative(&self.values, self.components * n, comp * n + axis, k, along)
    }

    /// max over interior nodes and components of |∂_a ω_b - ∂_b ω_a|, the
    /// discrete residual of dω = 0.
    pub fn closedness_residual(&self) -> f64 {
        let n = self.grid.dim();
        let mut worst: f64 = 0.0;
        for k in self.grid.interior_nodes() {
            for i in 0..self.components {
                for a in 0..n {
                    for b in (a + 1)..n {
                        let r = self.coeff_derivative(k, i, b, a) - self.coeff_derivative(k, i, a, b);
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst
    }
}

/// Pointwise Q = Σ_{a,i} (∂_a u^i)^2 at every node (boundary included).
pub fn compute_q(u: &MapField) -> Vec<f64> {
    let g = u.grid();
    let m = u.components();
    let dim = g.dim();
    let vals = u.values();
    let mut q = vec![0.0; g.n_nodes()];
    q.par_iter_mut().enumerate().for_each(|(k, qk)| {
        let mut s = 0.0;
        for i in 0..m {
            for a in 0..dim {
                let d = g.axis_derivative(vals, m, i, k, a);
                s += d * d;
            }
        }
        *qk = s;
    });
    q
}

/// Nodal Jacobian (layout of [`grid::jacobian`]) together with Q.
pub fn jacobian_and_q(u: &MapField) -> (Vec<f64>, Vec<f64>) {
    let g = u.grid();
    let per_node = u.components() * g.dim();
    let jac = grid::jacobian(u.values(), u.components(), g).expect("map values match the grid");
    let q = jac.chunks(per_node).map(|c| c.iter().map(|d| d * d).sum()).collect();
    (jac, q)
}

/// Index and value of the largest entry (first one on ties).
pub fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
}

pub(crate) fn supersonic_error(grid: &Grid, q: &[f64], detail: impl Into<String>) -> HodgeError {
    let (node, max_q) = argmax(q);
    HodgeError::SupersonicState {
        max_q,
        node,
        position: grid.position(node),
        detail: detail.into(),
    }
}

/// Checks every nodal Q is admissible for `model`.
pub fn check_admissible_field(grid: &Grid, q: &[f64], model: &DensityModel) -> Result<()> {
    let (_, max_q) = argmax(q);
    if let Err(e) = model.check_admissible(max_q) {
        return Err(supersonic_error(grid, q, e.to_string()));
    }
    Ok(())
}

/// E = 1/2 ∫ F(Q) with F the density primitive, from a precomputed Q field.
pub fn energy_from_q(grid: &Grid, q: &[f64], model: &DensityModel) -> Result<f64> {
    check_admissible_field(grid, q, model)?;
    let mut f = Vec::with_capacity(q.len());
    for &qk in q {
        f.push(model.primitive(qk)?);
    }
    Ok(0.5 * grid::integrate(&f, grid)?)
}

/// Nonlinear Hodge energy of `u`.
pub fn energy(u: &MapField, model: &DensityModel) -> Result<f64> {
    energy_from_q(u.grid(), &compute_q(u), model)
}

/// Nearest-point projection of nodal m-vectors onto the unit sphere.
pub fn project_sphere(values: &[f64], components: usize) -> Result<Vec<f64>> {
    let mut out = values.to_vec();
    for (k, v) in out.chunks_mut(components).enumerate() {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm >= PROJECTION_MIN_NORM) {
            return Err(HodgeError::ProjectionDegenerate { node: k, norm });
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}
