//! Named analytic maps and one-forms used as boundary data, exact solutions
//! and diagnostic inputs, plus construction of initial fields.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{HodgeError, Result};
use crate::flow::{Flow, StopCriteria};
use crate::grid::Grid;
use crate::state::{project_sphere, MapField, OneFormField, Target};

/// Analytic maps available as boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum MapPreset {
    /// x1^2 - x2^2, harmonic; needs n >= 2.
    HarmonicQuadratic,
    /// Scherk's surface ln(cos x / cos y) on a box inside (-π/2, π/2)^2.
    Scherk,
    /// 1-D channel u = s (x - x0) whose speed s carries mass flux
    /// rho(s^2) s = `flux` on the subsonic branch of the density.
    ChannelFlux { flux: f64 },
    /// Equator map x / |x| into S^{n-1}.
    Equator,
    Zero,
}

impl MapPreset {
    pub fn parse(name: &str, flux: Option<f64>) -> Result<Self> {
        Ok(match name {
            "harmonic_quadratic" => MapPreset::HarmonicQuadratic,
            "scherk" => MapPreset::Scherk,
            "channel_flux" => MapPreset::ChannelFlux {
                flux: flux.ok_or_else(|| {
                    HodgeError::InvalidArgument("channel_flux preset needs boundary.flux".into())
                })?,
            },
            "equator" => MapPreset::Equator,
            "zero" => MapPreset::Zero,
            other => {
                return Err(HodgeError::InvalidArgument(format!(
                    "unknown map preset `{other}` (expected harmonic_quadratic, scherk, channel_flux, equator, zero)"
                )))
            }
        })
    }

    pub fn target(&self) -> Target {
        match self {
            MapPreset::Equator => Target::Sphere,
            _ => Target::Flat,
        }
    }

    pub fn components(&self, dim: usize) -> usize {
        match self {
            MapPreset::Equator => dim,
            _ => 1,
        }
    }

    /// Samples the preset at every node of `grid`.
    pub fn sample(&self, grid: Arc<Grid>, model: &DensityModel) -> Result<MapField> {
        let dim = grid.dim();
        match *self {
            MapPreset::HarmonicQuadratic => {
                if dim < 2 {
                    return Err(HodgeError::DimensionMismatch("harmonic_quadratic needs n >= 2".into()));
                }
                MapField::from_fn(grid, 1, Target::Flat, |x| vec![x[0] * x[0] - x[1] * x[1]])
            }
            MapPreset::Scherk => {
                if dim != 2 {
                    return Err(HodgeError::DimensionMismatch("scherk needs n = 2".into()));
                }
                let upper = grid.upper();
                let inside = grid
                    .origin()
                    .iter()
                    .chain(&upper)
                    .all(|c| c.abs() < 0.5 * PI);
                if !inside {
                    return Err(HodgeError::InvalidArgument(
                        "scherk needs the box inside (-pi/2, pi/2)^2".into(),
                    ));
                }
                MapField::from_fn(grid, 1, Target::Flat, |x| vec![scherk(x[0], x[1])])
            }
            MapPreset::ChannelFlux { flux } => {
                if dim != 1 {
                    return Err(HodgeError::DimensionMismatch("channel_flux needs n = 1".into()));
                }
                let s = channel_speed(model, flux)?;
                let x0 = grid.origin()[0];
                MapField::from_fn(grid, 1, Target::Flat, |x| vec![s * (x[0] - x0)])
            }
            MapPreset::Equator => {
                if dim < 2 {
                    return Err(HodgeError::DimensionMismatch("equator needs n >= 2".into()));
                }
                let vals: Vec<f64> = (0..grid.n_nodes()).flat_map(|k| grid.position(k)).collect();
                let vals = project_sphere(&vals, dim)?;
                MapField::new(grid, dim, vals, Target::Sphere)
            }
            MapPreset::Zero => MapField::from_fn(grid, 1, Target::Flat, |_| vec![0.0]),
        }
    }
}

pub fn scherk(x: f64, y: f64) -> f64 {
    (x.cos() / y.cos()).ln()
}

/// Speed s with rho(s^2) s = flux on the branch where the flux increases
/// with speed, i.e. Q = s^2 below the critical speed.
pub fn channel_speed(model: &DensityModel, flux: f64) -> Result<f64> {
    if !(flux >= 0.0 && flux.is_finite()) {
        return Err(HodgeError::InvalidArgument(format!("flux {flux} must be >= 0")));
    }
    let mass = |q: f64| -> Result<f64> { Ok(model.rho(q)? * q.sqrt()) };
    let q_hi = model
        .q_crit()
        .or_else(|| model.admissible_limit().map(|l| l * (1.0 - 1e-12)))
        .unwrap_or(1e12);
    let m_max = mass(q_hi)?;
    if flux > m_max {
        return Err(HodgeError::InvalidArgument(format!(
            "flux {flux} exceeds the largest subsonic flux {m_max} of {}",
            model.name()
        )));
    }
    let (mut lo, mut hi) = (0.0, q_hi);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid)? < flux {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).sqrt())
}

/// Analytic one-forms on 3-D grids (single component).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormPreset {
    /// x dy: integrable, ω = ℓ du with ℓ = x, u = y.
    XDy,
    /// dz + x dy: the contact form, dω ∧ ω = dx∧dy∧dz.
    ContactForm,
    /// e^x dy, satisfying dω = dx ∧ ω.
    ExpXDy,
    /// dx.
    Dx,
    /// dy.
    Dy,
    /// Analytic gradient of sin(2x) sin(y) e^{z/2}.
    ExactGradient,
}

impl FormPreset {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "x_dy" => FormPreset::XDy,
            "contact_form" => FormPreset::ContactForm,
            "exp_x_dy" => FormPreset::ExpXDy,
            "dx" => FormPreset::Dx,
            "dy" => FormPreset::Dy,
            "exact_gradient" => FormPreset::ExactGradient,
            other => {
                return Err(HodgeError::InvalidArgument(format!(
                    "unknown form preset `{other}` (expected x_dy, contact_form, exp_x_dy, dx, dy, exact_gradient)"
                )))
            }
        })
    }

    pub fn sample(&self, grid: Arc<Grid>) -> Result<OneFormField> {
        if grid.dim() != 3 {
            return Err(HodgeError::DimensionMismatch(format!(
                "form presets live on 3-D grids, got n = {}",
                grid.dim()
            )));
        }
        let preset = *self;
        OneFormField::from_fn(grid, move |x| match preset {
            FormPreset::XDy => vec![0.0, x[0], 0.0],
            FormPreset::ContactForm => vec![0.0, x[0], 1.0],
            FormPreset::ExpXDy => vec![0.0, x[0].exp(), 0.0],
            FormPreset::Dx => vec![1.0, 0.0, 0.0],
            FormPreset::Dy => vec![0.0, 1.0, 0.0],
            FormPreset::ExactGradient => {
                let (s2x, sy, ez) = ((2.0 * x[0]).sin(), x[1].sin(), (0.5 * x[2]).exp());
                vec![
                    2.0 * (2.0 * x[0]).cos() * sy * ez,
                    s2x * x[1].cos() * ez,
                    0.5 * s2x * sy * ez,
                ]
            }
        })
    }
}

/// How interior values of the initial map are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Zero,
    BoundaryHarmonicExtension,
    Random { seed: u64 },
    /// Interior values taken from a field dump.
    File { values: Vec<f64> },
}

/// Initial map: Dirichlet values from `data` on the boundary, interior
/// values from `init`.
pub fn initial_field(data: &MapField, init: &InitSpec, stop: &StopCriteria) -> Result<MapField> {
    let g = data.grid();
    let m = data.components();
    let mut vals = data.values().to_vec();
    match init {
        InitSpec::Zero => {
            for k in g.interior_nodes() {
                vals[k * m..(k + 1) * m].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        InitSpec::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for k in g.interior_nodes() {
                vals[k * m..(k + 1) * m]
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-1.0..1.0));
            }
        }
        InitSpec::File { values } => {
            if values.len() != vals.len() {
                return Err(HodgeError::DimensionMismatch(format!(
                    "initial field has {} values, expected {}",
                    values.len(),
                    vals.len()
                )));
            }
            for k in g.interior_nodes() {
                vals[k * m..(k + 1) * m].copy_from_slice(&values[k * m..(k + 1) * m]);
            }
        }
        InitSpec::BoundaryHarmonicExtension => {
            let flat = MapField::new(data.grid_arc().clone(), m, vals.clone(), Target::Flat)?;
            let zeroed = initial_field(&flat, &InitSpec::Zero, stop)?;
            let harmonic_stop = StopCriteria {
                subsonic_margin: 0.0,
                ..*stop
            };
            let out = Flow::new(DensityModel::Constant, stop.safety).run(zeroed, &harmonic_stop)?;
            vals = out.state.u.into_values();
        }
    }
    if data.target() == Target::Sphere {
        vals = project_sphere(&vals, m)?;
    }
    data.with_values(vals)
}

/// `t * data` for flat maps.
pub fn scale_map(data: &MapField, t: f64) -> Result<MapField> {
    if data.target() != Target::Flat {
        return Err(HodgeError::InvalidArgument("only flat maps can be scaled".into()));
    }
    data.with_values(data.values().iter().map(|v| t * v).collect())
}
