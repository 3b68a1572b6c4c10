//! Uniform node-centred Cartesian grids on boxes in R^n, n = 1, 2, 3.
//!
//! Fields are stored node-major in lexicographic node order (first axis
//! slowest). A field with `m` components stores node `k`, component `i` at
//! `k * m + i`. Gradients of an `m`-component field store the derivative
//! along axis `a` of component `i` at node `k` at `(k * m + i) * dim + a`.
//!
//! Derivatives use centred differences where both axis neighbours exist and
//! second-order one-sided stencils on the boundary layer, so every node has
//! a gradient. The divergence is the conservative face-flux form with face
//! values taken as the arithmetic mean of the two adjacent nodal fluxes; it
//! is defined on interior nodes only.

use rayon::prelude::*;

use crate::error::{HodgeError, Result};

pub const MAX_DIM: usize = 3;

/// Per-axis integer coordinates of a node. Unused axes are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NodeIndex(pub [usize; MAX_DIM]);

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    origin: [f64; MAX_DIM],
    h: f64,
    n_nodes: usize,
    /// Per node, bit 2a set on the low face of axis a, bit 2a+1 on the high.
    faces: Vec<u8>,
}

impl Grid {
    /// Grid with `extents[a]` nodes along axis `a`, first node at `origin`,
    /// spacing `h` on every axis. Boundary data is always Dirichlet.
    pub fn new(extents: &[usize], origin: &[f64], h: f64) -> Result<Self> {
        let dim = extents.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(HodgeError::InvalidGrid(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        if origin.len() != dim {
            return Err(HodgeError::InvalidGrid(format!(
                "origin has {} coordinates, grid has dimension {dim}",
                origin.len()
            )));
        }
        if let Some(a) = extents.iter().position(|&e| e < 3) {
            return Err(HodgeError::InvalidGrid(format!(
                "extent {} along axis {a} is below 3",
                extents[a]
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(HodgeError::InvalidGrid(format!(
                "spacing {h} is not strictly positive"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(HodgeError::InvalidGrid("non-finite origin".into()));
        }
        let mut ext = [1usize; MAX_DIM];
        let mut org = [0.0; MAX_DIM];
        ext[..dim].copy_from_slice(extents);
        org[..dim].copy_from_slice(origin);
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for a in (0..dim).rev() {
            strides[a] = s;
            s *= ext[a];
        }
        let faces = (0..s)
            .map(|k| {
                (0..dim).fold(0u8, |f, a| {
                    let i = (k / strides[a]) % ext[a];
                    f | u8::from(i == 0) << (2 * a) | u8::from(i + 1 == ext[a]) << (2 * a + 1)
                })
            })
            .collect();
        Ok(Self {
            dim,
            extents: ext,
            strides,
            origin: org,
            h,
            n_nodes: s,
            faces,
        })
    }

    /// Grid spanning the box `[lower, upper]` with the given node counts.
    /// The implied spacing must agree on every axis.
    pub fn from_box(lower: &[f64], upper: &[f64], extents: &[usize]) -> Result<Self> {
        if lower.len() != extents.len() || upper.len() != extents.len() {
            return Err(HodgeError::InvalidGrid(
                "box bounds and extents have different lengths".into(),
            ));
        }
        if let Some(a) = extents.iter().position(|&e| e < 3) {
            return Err(HodgeError::InvalidGrid(format!(
                "extent {} along axis {a} is below 3",
                extents[a]
            )));
        }
        let spacings: Vec<f64> = (0..extents.len())
            .map(|a| (upper[a] - lower[a]) / (extents[a] - 1) as f64)
            .collect();
        let h = spacings[0];
        for (a, s) in spacings.iter().enumerate() {
            if (s - h).abs() > 1e-12 * h.abs().max(1.0) {
                return Err(HodgeError::InvalidGrid(format!(
                    "spacing {s} along axis {a} differs from {h} along axis 0"
                )));
            }
        }
        Self::new(extents, lower, h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Upper corner of the box.
    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|a| self.origin[a] + (self.extents[a] - 1) as f64 * self.h)
            .collect()
    }

    #[inline]
    pub fn axis_position(&self, k: usize, axis: usize) -> usize {
        (k / self.strides[axis]) % self.extents[axis]
    }

    pub fn node_index(&self, k: usize) -> NodeIndex {
        let mut idx = [0usize; MAX_DIM];
        for (a, slot) in idx.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_position(k, a);
        }
        NodeIndex(idx)
    }

    /// Linear index of `idx`, or `None` when it lies outside the extents.
    pub fn linear(&self, idx: NodeIndex) -> Option<usize> {
        let mut k = 0;
        for a in 0..self.dim {
            if idx.0[a] >= self.extents[a] {
                return None;
            }
            k += idx.0[a] * self.strides[a];
        }
        Some(k)
    }

    #[inline]
    pub fn coords(&self, k: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.origin[a] + self.axis_position(k, a) as f64 * self.h;
        }
        x
    }

    pub fn position(&self, k: usize) -> Vec<f64> {
        self.coords(k)[..self.dim].to_vec()
    }

    /// Distance, in nodes, from `k` to the nearest boundary layer
    /// (0 on the boundary, 1 on the first interior layer, ...).
    pub fn boundary_depth(&self, k: usize) -> usize {
        (0..self.dim)
            .map(|a| {
                let i = self.axis_position(k, a);
                i.min(self.extents[a] - 1 - i)
            })
            .min()
            .unwrap_or(0)
    }

    #[inline]
    pub fn is_boundary(&self, k: usize) -> bool {
        self.faces[k] != 0
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes).filter(|&k| !self.is_boundary(k)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes).filter(|&k| self.is_boundary(k)).collect()
    }

    /// Trapezoid quadrature weight: h^n halved once per axis on which the
    /// node sits on the boundary.
    #[inline]
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        let halvings = (0..self.dim).filter(|a| self.faces[k] >> (2 * a) & 3 != 0).count();
        self.h.powi(self.dim as i32) * 0.5f64.powi(halvings as i32)
    }

    /// Derivative along `axis` of component `comp` of an `ncomp`-component
    /// field at node `k`.
    #[inline]
    pub fn axis_derivative(
        &self,
        values: &[f64],
        ncomp: usize,
        comp: usize,
        k: usize,
        axis: usize,
    ) -> f64 {
        let s = self.strides[axis] * ncomp;
        let base = k * ncomp + comp;
        let inv2h = 0.5 / self.h;
        match self.faces[k] >> (2 * axis) & 3 {
            1 => (-3.0 * values[base] + 4.0 * values[base + s] - values[base + 2 * s]) * inv2h,
            2 => (3.0 * values[base] - 4.0 * values[base - s] + values[base - 2 * s]) * inv2h,
            _ => (values[base + s] - values[base - s]) * inv2h,
        }
    }

    fn check_len(&self, len: usize, per_node: usize, what: &str) -> Result<()> {
        if len != self.n_nodes * per_node {
            return Err(HodgeError::DimensionMismatch(format!(
                "{what} has {len} values, expected {} ({} nodes x {per_node})",
                self.n_nodes * per_node,
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// Nodal gradient of an `ncomp`-component field, laid out
/// `[(node * ncomp + comp) * dim + axis]`.
pub fn jacobian(values: &[f64], ncomp: usize, grid: &Grid) -> Result<Vec<f64>> {
    grid.check_len(values.len(), ncomp, "field")?;
    let dim = grid.dim();
    let mut out = vec![0.0; grid.n_nodes() * ncomp * dim];
    out.par_chunks_mut(ncomp * dim)
        .enumerate()
        .for_each(|(k, chunk)| {
            for i in 0..ncomp {
                for a in 0..dim {
                    chunk[i * dim + a] = grid.axis_derivative(values, ncomp, i, k, a);
                }
            }
        });
    Ok(out)
}

/// Nodal gradient of a scalar field, laid out `[node * dim + axis]`.
pub fn gradient(field: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    jacobian(field, 1, grid)
}

/// Divergence of `ncomp` stacked flux vectors (same layout as [`jacobian`]).
/// Interior nodes receive the face-flux divergence; boundary entries are 0.
pub fn divergence_components(flux: &[f64], ncomp: usize, grid: &Grid) -> Result<Vec<f64>> {
    let dim = grid.dim();
    grid.check_len(flux.len(), ncomp * dim, "flux")?;
    let mut out = vec![0.0; grid.n_nodes() * ncomp];
    let inv2h = 0.5 / grid.spacing();
    out.par_chunks_mut(ncomp).enumerate().for_each(|(k, chunk)| {
        if grid.is_boundary(k) {
            return;
        }
        for (i, slot) in chunk.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..dim {
                let s = grid.strides[a];
                // (F_{k+1/2} - F_{k-1/2}) / h with arithmetic face means
                let fp = flux[((k + s) * ncomp + i) * dim + a];
                let fm = flux[((k - s) * ncomp + i) * dim + a];
                acc += (fp - fm) * inv2h;
            }
            *slot = acc;
        }
    });
    Ok(out)
}

/// Divergence of a nodal vector field laid out `[node * dim + axis]`.
pub fn divergence(flux: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    divergence_components(flux, 1, grid)
}

/// Trapezoid-rule integral of a nodal scalar field over the box.
/// Summation is sequential in node order, so the result is reproducible.
pub fn integrate(field: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_len(field.len(), 1, "field")?;
    Ok(field
        .iter()
        .enumerate()
        .map(|(k, v)| grid.trapezoid_weight(k) * v)
        .sum())
}

/// Trapezoid-weighted inner product of two fields with `ncomp` components.
pub fn inner_product(a: &[f64], b: &[f64], ncomp: usize, grid: &Grid) -> Result<f64> {
    grid.check_len(a.len(), ncomp, "left field")?;
    grid.check_len(b.len(), ncomp, "right field")?;
    let mut sum = 0.0;
    for k in 0..grid.n_nodes() {
        let w = grid.trapezoid_weight(k);
        let dot: f64 = (0..ncomp).map(|i| a[k * ncomp + i] * b[k * ncomp + i]).sum();
        sum += w * dot;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: &Grid, f: impl Fn(&[f64; 3]) -> f64) -> Vec<f64> {
        (0..grid.n_nodes()).map(|k| f(&grid.coords(k))).collect()
    }

    #[test]
    fn rejects_small_extents_and_bad_spacing() {
        assert!(matches!(
            Grid::new(&[2, 5], &[0.0, 0.0], 0.1),
            Err(HodgeError::InvalidGrid(_))
        ));
        assert!(Grid::new(&[5], &[0.0], 0.0).is_err());
        assert!(Grid::new(&[3, 3, 3, 3], &[0.0; 4], 0.1).is_err());
        assert!(Grid::from_box(&[0.0, 0.0], &[1.0, 2.0], &[11, 11]).is_err());
    }

    #[test]
    fn every_node_is_interior_or_boundary_once() {
        let g = Grid::new(&[4, 5, 3], &[0.0; 3], 0.5).unwrap();
        let interior = g.interior_nodes();
        let boundary = g.boundary_nodes();
        assert_eq!(interior.len() + boundary.len(), g.n_nodes());
        assert_eq!(interior.len(), 2 * 3);
        for &k in &interior {
            let idx = g.node_index(k);
            for a in 0..3 {
                let mut up = idx;
                up.0[a] += 1;
                let mut down = idx;
                down.0[a] -= 1;
                assert!(g.linear(up).is_some() && g.linear(down).is_some());
            }
        }
        for k in 0..g.n_nodes() {
            assert_eq!(g.linear(g.node_index(k)), Some(k));
        }
    }

    #[test]
    fn gradient_of_constant_and_affine() {
        let g = Grid::new(&[7], &[0.0], 0.25).unwrap();
        let c = vec![3.5; g.n_nodes()];
        assert!(gradient(&c, &g).unwrap().iter().all(|d| d.abs() < 1e-14));
        let x = sample(&g, |p| p[0]);
        for d in gradient(&x, &g).unwrap() {
            assert!((d - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_exact_on_quadratic() {
        let g = Grid::from_box(&[-1.0, -0.5], &[1.0, 0.5], &[21, 11]).unwrap();
        let u = sample(&g, |p| p[0] * p[0] - p[1] * p[1]);
        let grad = gradient(&u, &g).unwrap();
        // one-sided stencils are second order, hence also exact here
        for k in 0..g.n_nodes() {
            let x = g.coords(k);
            assert!((grad[2 * k] - 2.0 * x[0]).abs() < 1e-12);
            assert!((grad[2 * k + 1] + 2.0 * x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[11, 11]).unwrap();
        let n = g.n_nodes();
        let constant: Vec<f64> = (0..n).flat_map(|_| [2.0, -1.0]).collect();
        let d = divergence(&constant, &g).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));

        let affine: Vec<f64> = (0..n)
            .flat_map(|k| {
                let x = g.coords(k);
                [x[0], x[1]]
            })
            .collect();
        let d = divergence(&affine, &g).unwrap();
        for k in g.interior_nodes() {
            assert!((d[k] - 2.0).abs() < 1e-12);
        }

        let u = sample(&g, |p| p[0] * p[0] - p[1] * p[1]);
        let d = divergence(&gradient(&u, &g).unwrap(), &g).unwrap();
        for k in g.interior_nodes() {
            assert!(d[k].abs() < 1e-11, "{}", d[k]);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap();
        let one = vec![1.0; g.n_nodes()];
        assert!((integrate(&one, &g).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(integrate(&vec![0.0; g.n_nodes()], &g).unwrap(), 0.0);

        let line = Grid::from_box(&[0.0], &[1.0], &[65]).unwrap();
        let x = sample(&line, |p| p[0]);
        assert!((integrate(&x, &line).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn summation_by_parts_away_from_boundary_stencils() {
        let g = Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[13, 13]).unwrap();
        let n = g.n_nodes();
        let flux: Vec<f64> = (0..n)
            .flat_map(|k| {
                let x = g.coords(k);
                [(3.0 * x[0]).sin() + x[1], x[0] * x[1] * x[1]]
            })
            .collect();
        let phi: Vec<f64> = (0..n)
            .map(|k| {
                // one-sided boundary stencils reach two nodes inwards
                if g.boundary_depth(k) >= 3 {
                    let x = g.coords(k);
                    (x[0] * 7.0).cos() * x[1]
                } else {
                    0.0
                }
            })
            .collect();
        let lhs = inner_product(&divergence(&flux, &g).unwrap(), &phi, 1, &g).unwrap()
            + inner_product(&flux, &gradient(&phi, &g).unwrap(), 2, &g).unwrap();
        assert!(lhs.abs() < 1e-13, "{lhs}");
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let err = |n: usize| {
            let g = Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[n, n]).unwrap();
            let u = sample(&g, |p| (2.0 * p[0]).sin() * (p[1]).exp());
            let grad = gradient(&u, &g).unwrap();
            (0..g.n_nodes())
                .map(|k| {
                    let x = g.coords(k);
                    let ex = [2.0 * (2.0 * x[0]).cos() * x[1].exp(), (2.0 * x[0]).sin() * x[1].exp()];
                    (grad[2 * k] - ex[0]).abs().max((grad[2 * k + 1] - ex[1]).abs())
                })
                .fold(0.0, f64::max)
        };
        let order = (err(17) / err(33)).log2();
        assert!(order >= 1.9, "observed order {order}");
    }
}
