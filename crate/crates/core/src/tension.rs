//! Discrete nonlinear Hodge tension field.
//!
//! For flat targets τ^i = div(rho(Q) ∇u^i), with rho frozen at nodal Q and
//! the flux divergence taken in the conservative face-averaged form. For
//! sphere targets the same ambient expression is projected onto the tangent
//! space, τ ← τ - <τ, u> u, which is the constrained Euler-Lagrange operator
//! for the nearest-point projection.

use rayon::prelude::*;

use crate::density::DensityModel;
use crate::error::Result;
use crate::grid::{self, Grid};
use crate::state::{check_admissible_field, compute_q, MapField, Target};

#[derive(Debug, Clone, PartialEq)]
pub struct TensionField {
    components: usize,
    /// Node-major, zero on boundary nodes.
    values: Vec<f64>,
}

impl TensionField {
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.components..(k + 1) * self.components]
    }

    /// ∞-norm over interior nodes (boundary entries are zero).
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Tension from a precomputed nodal Q field.
pub fn tension_with_q(u: &MapField, q: &[f64], model: &DensityModel) -> Result<TensionField> {
    let g: &Grid = u.grid();
    check_admissible_field(g, q, model)?;
    let rho: Vec<f64> = q.iter().map(|&qk| model.rho(qk)).collect::<Result<_>>()?;
    let jac = grid::jacobian(u.values(), u.components(), g)?;
    tension_from_parts(u, &jac, &rho)
}

/// Tension from the nodal Jacobian of `u` and the nodal density values.
pub(crate) fn tension_from_parts(u: &MapField, jac: &[f64], rho: &[f64]) -> Result<TensionField> {
    let g: &Grid = u.grid();
    let m = u.components();
    let per_node = m * g.dim();
    let mut flux = jac.to_vec();
    flux.par_chunks_mut(per_node).zip(rho).for_each(|(chunk, r)| {
        chunk.iter_mut().for_each(|f| *f *= r);
    });
    let mut tau = grid::divergence_components(&flux, m, g)?;

    if u.target() == Target::Sphere {
        let vals = u.values();
        tau.par_chunks_mut(m).enumerate().for_each(|(k, t)| {
            let uk = &vals[k * m..(k + 1) * m];
            let dot: f64 = t.iter().zip(uk).map(|(a, b)| a * b).sum();
            t.iter_mut().zip(uk).for_each(|(ti, ui)| *ti -= dot * ui);
        });
    }
    Ok(TensionField {
        components: m,
        values: tau,
    })
}

pub fn tension(u: &MapField, model: &DensityModel) -> Result<TensionField> {
    tension_with_q(u, &compute_q(u), model)
}

/// ‖τ‖∞ over interior nodes: the stationarity residual.
pub fn residual_norm(u: &MapField, model: &DensityModel) -> Result<f64> {
    Ok(tension(u, model)?.max_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_product;
    use crate::state::energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn square(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::from_box(&[lo, lo], &[hi, hi], &[n, n]).unwrap())
    }

    fn scherk(p: &[f64]) -> Vec<f64> {
        vec![(p[0].cos() / p[1].cos()).ln()]
    }

    #[test]
    fn constant_map_has_zero_tension() {
        let g = square(0.0, 1.0, 9);
        let u = MapField::from_fn(g, 3, Target::Sphere, |_| vec![0.0, 0.6, 0.8]).unwrap();
        for model in [DensityModel::Constant, DensityModel::MinimalSurface] {
            assert!(residual_norm(&u, &model).unwrap() < 1e-12);
        }
    }

    #[test]
    fn harmonic_quadratic_is_stationary_for_constant_density() {
        let g = square(0.0, 1.0, 17);
        let u = MapField::from_fn(g, 1, Target::Flat, |p| vec![p[0] * p[0] - p[1] * p[1]]).unwrap();
        assert!(residual_norm(&u, &DensityModel::Constant).unwrap() < 1e-10);
    }

    // Truncation is second order away from the boundary; on the first
    // interior layer the one-sided boundary flux leaves an O(h) term.
    #[test]
    fn scherk_residual_is_second_order() {
        let res = |n: usize, depth: usize| {
            let g = square(-1.2, 1.2, n);
            let u = MapField::from_fn(g.clone(), 1, Target::Flat, scherk).unwrap();
            let t = tension(&u, &DensityModel::MinimalSurface).unwrap();
            (0..g.n_nodes())
                .filter(|&k| g.boundary_depth(k) >= depth)
                .fold(0.0f64, |m, k| m.max(t.at(k)[0].abs()))
        };
        let ratio = res(97, 2) / res(193, 2);
        assert!((3.3..4.5).contains(&ratio), "ratio {ratio}");
        let layer_ratio = res(49, 1) / res(97, 1);
        assert!(layer_ratio > 1.5, "ratio {layer_ratio}");
    }

    #[test]
    fn sphere_tension_is_tangent() {
        let g = square(0.0, 1.0, 11);
        let u = MapField::from_fn(g.clone(), 3, Target::Sphere, |p| {
            vec![p[0].sin(), (2.0 * p[1]).cos(), 1.0 + p[0] * p[1]]
        })
        .unwrap();
        let t = tension(&u, &DensityModel::MinimalSurface).unwrap();
        for k in 0..g.n_nodes() {
            let dot: f64 = t.at(k).iter().zip(u.value(k)).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-12);
        }
    }

    #[test]
    fn tension_is_minus_energy_gradient() {
        let g = square(0.0, 1.0, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = MapField::from_fn(g.clone(), 2, Target::Flat, |p| {
            vec![0.3 * p[0] * p[1], 0.2 * (p[0] + p[1]).sin()]
        })
        .unwrap();
        let phi: Vec<f64> = (0..g.n_nodes() * 2)
            .map(|j| if g.boundary_depth(j / 2) >= 3 { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let model = DensityModel::Polytropic { gamma_a: 1.4 };
        let tau = tension(&u, &model).unwrap();
        let pairing = inner_product(tau.values(), &phi, 2, &g).unwrap();
        let e = |t: f64| {
            let v: Vec<f64> = u.values().iter().zip(&phi).map(|(a, b)| a + t * b).collect();
            energy(&u.with_values(v).unwrap(), &model).unwrap()
        };
        let eps = 1e-5;
        let de = (e(eps) - e(-eps)) / (2.0 * eps);
        assert!((pairing + de).abs() <= 1e-6 * de.abs().max(1e-3), "{pairing} {de}");
    }
}
