//! CSV serialisation of nodal fields and float formatting shared by all
//! text outputs.

use std::fmt::Write as _;

use crate::error::{HodgeError, Result};
use crate::grid::Grid;
use crate::state::{compute_q, MapField};

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Field dump: header `x1[,x2[,x3]],u1,...,um,Q`, one node per row in
/// lexicographic node order.
pub fn field_csv(u: &MapField) -> String {
    let g = u.grid();
    let q = compute_q(u);
    let mut s = String::new();
    let cols: Vec<String> = (1..=g.dim())
        .map(|a| format!("x{a}"))
        .chain((1..=u.components()).map(|i| format!("u{i}")))
        .chain(std::iter::once("Q".to_string()))
        .collect();
    s.push_str(&cols.join(","));
    s.push('\n');
    for k in 0..g.n_nodes() {
        let row: Vec<String> = g
            .position(k)
            .into_iter()
            .chain(u.value(k).iter().copied())
            .chain(std::iter::once(q[k]))
            .map(fmt17)
            .collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Reads the nodal values of a field dump written by [`field_csv`] for
/// `grid`, checking node coordinates against the grid.
pub fn read_field_csv(text: &str, grid: &Grid) -> Result<(usize, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| HodgeError::InvalidArgument("field file is empty".into()))?;
    let ncols = header.split(',').count();
    let dim = grid.dim();
    if ncols < dim + 2 {
        return Err(HodgeError::InvalidArgument(format!(
            "field header has {ncols} columns, need at least {}",
            dim + 2
        )));
    }
    let m = ncols - dim - 1;
    let mut values = Vec::with_capacity(grid.n_nodes() * m);
    let tol = 1e-9 * grid.spacing();
    for (k, line) in lines.enumerate() {
        if k >= grid.n_nodes() {
            return Err(HodgeError::DimensionMismatch("field file has more rows than grid nodes".into()));
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| HodgeError::InvalidArgument(format!("field row {}: {e}", k + 2)))?;
        if row.len() != ncols {
            return Err(HodgeError::InvalidArgument(format!(
                "field row {} has {} columns, expected {ncols}",
                k + 2,
                row.len()
            )));
        }
        let x = grid.position(k);
        if x.iter().zip(&row).any(|(a, b)| (a - b).abs() > tol) {
            return Err(HodgeError::DimensionMismatch(format!(
                "field row {} at {:?} does not match grid node {:?}",
                k + 2,
                &row[..dim],
                x
            )));
        }
        values.extend_from_slice(&row[dim..dim + m]);
    }
    if values.len() != grid.n_nodes() * m {
        return Err(HodgeError::DimensionMismatch(format!(
            "field file has {} nodes, grid has {}",
            values.len() / m,
            grid.n_nodes()
        )));
    }
    Ok((m, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Target;
    use std::sync::Arc;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn field_dump_reads_back() {
        let g = Arc::new(Grid::from_box(&[0.0, 0.0], &[1.0, 2.0], &[3, 5]).unwrap());
        let u = MapField::from_fn(g.clone(), 2, Target::Flat, |p| vec![p[0] * p[1], 1.0 / 3.0]).unwrap();
        let csv = field_csv(&u);
        assert!(csv.starts_with("x1,x2,u1,u2,Q\n"));
        assert_eq!(csv.lines().count(), 1 + 15);
        let (m, vals) = read_field_csv(&csv, &g).unwrap();
        assert_eq!(m, 2);
        assert_eq!(vals, u.values());
    }
}
