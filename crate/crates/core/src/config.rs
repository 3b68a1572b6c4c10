//! Experiment configuration files.
//!
//! TOML with one table per concern; dotted keys (`density.kind = ...`) and
//! tables (`[density]`) are interchangeable. Example:
//!
//! ```toml
//! grid.extents = [33, 33]
//! grid.lower = [0.0, 0.0]
//! grid.upper = [1.0, 1.0]
//! density.kind = "constant"
//! boundary.preset = "harmonic_quadratic"
//! flow.residual_tol = 1e-8
//! ```
//!
//! A grid is given either by `lower`/`upper` corners or by `origin` and
//! `spacing`. Every error carries the line of the offending entry.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::density::DensityModel;
use crate::flow::StopCriteria;
use crate::grid::Grid;
use crate::presets::{FormPreset, MapPreset};
use crate::state::Target;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Option<RawGrid>,
    density: Option<RawDensity>,
    target: Option<String>,
    boundary: Option<RawBoundary>,
    init: Option<RawInit>,
    flow: Option<RawFlow>,
    output: Option<RawOutput>,
    continuation: Option<RawContinuation>,
    audit: Option<RawAudit>,
    diagnose: Option<RawDiagnose>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    extents: Option<Vec<usize>>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    origin: Option<Vec<f64>>,
    spacing: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    kind: Option<String>,
    gamma_a: Option<f64>,
    k: Option<f64>,
    q_exp: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    preset: Option<String>,
    flux: Option<f64>,
    scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    kind: Option<String>,
    seed: Option<u64>,
    file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    residual_tol: Option<f64>,
    max_steps: Option<usize>,
    t_max: Option<f64>,
    safety: Option<f64>,
    subsonic_margin: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContinuation {
    t_values: Option<Vec<f64>>,
    bracket_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAudit {
    q_range: Option<Vec<f64>>,
    samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnose {
    field_file: Option<PathBuf>,
    center: Option<Vec<f64>>,
    annulus: Option<Vec<f64>>,
    lp_p: Option<Vec<f64>>,
    lp_radii: Option<Vec<f64>>,
    campanato_radii: Option<Vec<f64>>,
    campanato_field: Option<String>,
    form: Option<String>,
    rotation: Option<String>,
}

/// How the grid box is described.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Box { extents: Vec<usize>, lower: Vec<f64>, upper: Vec<f64> },
    Spacing { extents: Vec<usize>, origin: Vec<f64>, spacing: f64 },
}

impl GridSpec {
    pub fn build(&self) -> crate::error::Result<Arc<Grid>> {
        Ok(Arc::new(match self {
            GridSpec::Box { extents, lower, upper } => Grid::from_box(lower, upper, extents)?,
            GridSpec::Spacing { extents, origin, spacing } => Grid::new(extents, origin, *spacing)?,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub preset: MapPreset,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitConfig {
    Zero,
    BoundaryHarmonicExtension,
    Random { seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    pub t_values: Vec<f64>,
    pub bracket_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub q_range: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CampanatoField {
    Map,
    Differential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseConfig {
    pub field_file: Option<PathBuf>,
    pub center: Option<Vec<f64>>,
    pub annulus: Option<(f64, f64)>,
    pub lp_p: Vec<f64>,
    pub lp_radii: Vec<f64>,
    pub campanato_radii: Vec<f64>,
    pub campanato_field: CampanatoField,
    pub form: Option<FormPreset>,
    pub rotation: Option<FormPreset>,
}

/// A parsed configuration. Sections a command needs but the file lacks
/// are reported by the accessor methods.
#[derive(Debug, Clone)]
pub struct Config {
    grid: Option<GridSpec>,
    density: Option<DensityModel>,
    density_line: Option<usize>,
    boundary: Option<BoundarySpec>,
    pub target: Option<Target>,
    pub init: InitConfig,
    pub stop: StopCriteria,
    pub output_dir: Option<PathBuf>,
    continuation: Option<ContinuationConfig>,
    audit: Option<AuditConfig>,
    pub diagnose: DiagnoseConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
    base: Option<&'a Path>,
}

impl Ctx<'_> {
    /// Line of the dotted `key` (`section` or `section.name`): its own
    /// line when written out, else the first line of its section.
    fn locate(&self, key: &str) -> Option<usize> {
        let (section, name) = match key.split_once('.') {
            Some((s, n)) => (s, Some(n)),
            None => (key, None),
        };
        let mut table = String::new();
        let mut first = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                table = h.trim().to_string();
                if table == section && first.is_none() {
                    first = Some(i + 1);
                }
                continue;
            }
            let Some((lhs, _)) = line.split_once('=') else { continue };
            let lhs: String = lhs.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
            let full = if table.is_empty() { lhs } else { format!("{table}.{lhs}") };
            if name.is_some_and(|n| full == format!("{section}.{n}")) {
                return Some(i + 1);
            }
            if first.is_none() && (full == section || full.starts_with(&format!("{section}."))) {
                first = Some(i + 1);
            }
        }
        first
    }

    fn err<T>(&self, key: &str, message: impl Into<String>) -> CResult<T> {
        Err(ConfigError {
            line: self.locate(key),
            message: message.into(),
        })
    }

    fn path(&self, p: PathBuf) -> PathBuf {
        match self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        }
    }
}

impl Config {
    /// Parses configuration text. Relative paths inside it are resolved
    /// against `base` when given.
    pub fn parse(text: &str, base: Option<&Path>) -> CResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let cx = Ctx { text, base };

        let grid = match raw.grid {
            None => None,
            Some(g) => Some(parse_grid(&cx, g)?),
        };

        let (density, density_line) = match raw.density {
            None => (None, None),
            Some(d) => (Some(parse_density(&cx, d)?), cx.locate("density")),
        };

        let target = match raw.target {
            None => None,
            Some(t) => Some(match t.as_str() {
                "flat" => Target::Flat,
                "sphere" => Target::Sphere,
                other => return cx.err("target", format!("unknown target `{other}` (expected flat or sphere)")),
            }),
        };

        let boundary = match raw.boundary {
            None => None,
            Some(b) => {
                let Some(name) = b.preset else {
                    return cx.err("boundary", "missing boundary.preset");
                };
                let preset = MapPreset::parse(&name, b.flux).or_else(|e| cx.err("boundary", e.to_string()))?;
                let scale = b.scale.unwrap_or(1.0);
                if !scale.is_finite() {
                    return cx.err("boundary.scale", "boundary.scale must be finite");
                }
                if scale != 1.0 && preset.target() == Target::Sphere {
                    return cx.err("boundary.scale", "boundary.scale applies to flat targets only");
                }
                if let Some(t) = target {
                    if t != preset.target() {
                        return cx.err("boundary", format!("preset `{name}` has a {:?} target, config says {t:?}", preset.target()));
                    }
                }
                Some(BoundarySpec { preset, scale })
            }
        };

        let init = match raw.init {
            None => InitConfig::Zero,
            Some(i) => {
                match i.kind.as_deref().unwrap_or("zero") {
                    "zero" => InitConfig::Zero,
                    "boundary_harmonic_extension" => InitConfig::BoundaryHarmonicExtension,
                    "random" => InitConfig::Random { seed: i.seed.unwrap_or(0) },
                    "file" => match i.file {
                        Some(f) => InitConfig::File(cx.path(f)),
                        None => return cx.err("init.kind", "init.kind = \"file\" needs init.file"),
                    },
                    other => {
                        return cx.err(
                            "init",
                            format!("unknown init.kind `{other}` (expected zero, boundary_harmonic_extension, random, file)"),
                        )
                    }
                }
            }
        };

        let mut stop = StopCriteria::default();
        if let Some(f) = raw.flow {
            stop.residual_tol = f.residual_tol.unwrap_or(stop.residual_tol);
            stop.max_steps = f.max_steps.unwrap_or(stop.max_steps);
            stop.t_max = f.t_max.unwrap_or(stop.t_max);
            stop.safety = f.safety.unwrap_or(stop.safety);
            stop.subsonic_margin = f.subsonic_margin.unwrap_or(stop.subsonic_margin);
            if !(stop.residual_tol > 0.0) {
                return cx.err("flow.residual_tol", "flow.residual_tol must be positive");
            }
            if !(stop.safety > 0.0 && stop.safety <= 1.0) {
                return cx.err("flow.safety", "flow.safety must lie in (0, 1]");
            }
            if !(stop.t_max > 0.0) {
                return cx.err("flow.t_max", "flow.t_max must be positive");
            }
            if !(stop.subsonic_margin >= 0.0 && stop.subsonic_margin.is_finite()) {
                return cx.err("flow.subsonic_margin", "flow.subsonic_margin must be finite and nonnegative");
            }
        }

        let continuation = match raw.continuation {
            None => None,
            Some(c) => {
                let t_values = c.t_values.unwrap_or_default();
                if t_values.is_empty() {
                    return cx.err("continuation.t_values", "continuation.t_values is empty");
                }
                if t_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) || t_values.windows(2).any(|w| w[1] <= w[0]) {
                    return cx.err("continuation.t_values", "continuation.t_values must be positive and strictly increasing");
                }
                let bracket_tol = c.bracket_tol.unwrap_or(1e-3);
                if !(bracket_tol > 0.0) {
                    return cx.err("continuation.bracket_tol", "continuation.bracket_tol must be positive");
                }
                Some(ContinuationConfig { t_values, bracket_tol })
            }
        };

        let audit = match raw.audit {
            None => None,
            Some(a) => {
                let q_range = match a.q_range.as_deref() {
                    Some(&[lo, hi]) if lo >= 0.0 && lo <= hi => (lo, hi),
                    Some(_) => return cx.err("audit.q_range", "audit.q_range must be [lo, hi] with 0 <= lo <= hi"),
                    None => return cx.err("audit", "missing audit.q_range"),
                };
                let samples = a.samples.unwrap_or(1000);
                if samples < 2 {
                    return cx.err("audit.samples", "audit.samples must be at least 2");
                }
                Some(AuditConfig { q_range, samples })
            }
        };

        let diagnose = match raw.diagnose {
            None => DiagnoseConfig {
                field_file: None,
                center: None,
                annulus: None,
                lp_p: Vec::new(),
                lp_radii: Vec::new(),
                campanato_radii: Vec::new(),
                campanato_field: CampanatoField::Map,
                form: None,
                rotation: None,
            },
            Some(d) => parse_diagnose(&cx, d)?,
        };

        Ok(Self {
            grid,
            density,
            density_line,
            boundary,
            target,
            init,
            stop,
            output_dir: raw.output.and_then(|o| o.dir).map(|d| cx.path(d)),
            continuation,
            audit,
            diagnose,
        })
    }

    pub fn from_file(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text, path.parent())
    }

    fn missing<T>(what: &str) -> CResult<T> {
        Err(ConfigError {
            line: None,
            message: format!("missing {what}"),
        })
    }

    pub fn grid(&self) -> CResult<&GridSpec> {
        self.grid.as_ref().map_or_else(|| Self::missing("[grid] section"), Ok)
    }

    pub fn density(&self) -> CResult<DensityModel> {
        self.density.map_or_else(|| Self::missing("density.kind"), Ok)
    }

    pub fn density_line(&self) -> Option<usize> {
        self.density_line
    }

    pub fn boundary(&self) -> CResult<&BoundarySpec> {
        self.boundary.as_ref().map_or_else(|| Self::missing("boundary.preset"), Ok)
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary.is_some()
    }

    pub fn continuation(&self) -> CResult<&ContinuationConfig> {
        self.continuation.as_ref().map_or_else(|| Self::missing("continuation.t_values"), Ok)
    }

    pub fn audit(&self) -> CResult<&AuditConfig> {
        self.audit.as_ref().map_or_else(|| Self::missing("audit.q_range"), Ok)
    }
}

fn parse_grid(cx: &Ctx, g: RawGrid) -> CResult<GridSpec> {
    let Some(extents) = g.extents else {
        return cx.err("grid", "missing grid.extents");
    };
    let spec = match (g.lower, g.upper, g.origin, g.spacing) {
        (Some(lower), Some(upper), None, None) => GridSpec::Box { extents, lower, upper },
        (None, None, Some(origin), Some(spacing)) => GridSpec::Spacing { extents, origin, spacing },
        _ => return cx.err("grid", "grid needs either lower and upper, or origin and spacing"),
    };
    spec.build().or_else(|e| cx.err("grid", e.to_string()))?;
    Ok(spec)
}

fn parse_density(cx: &Ctx, d: RawDensity) -> CResult<DensityModel> {
    let need = |v: Option<f64>, key: &str| v.map_or_else(|| cx.err("density", format!("missing density.{key}")), Ok);
    let model = match d.kind.as_deref() {
        None => return cx.err("density", "missing density.kind"),
        Some("constant") => DensityModel::Constant,
        Some("polytropic") => DensityModel::Polytropic { gamma_a: need(d.gamma_a, "gamma_a")? },
        Some("minimal_surface") => DensityModel::MinimalSurface,
        Some("power_law") => DensityModel::PowerLaw {
            k: need(d.k, "k")?,
            q_exp: need(d.q_exp, "q_exp")?,
        },
        Some(other) => {
            return cx.err(
                "density",
                format!("unknown density.kind `{other}` (expected constant, polytropic, minimal_surface, power_law)"),
            )
        }
    };
    model.validate().or_else(|e| cx.err("density", e.to_string()))?;
    Ok(model)
}

fn parse_diagnose(cx: &Ctx, d: RawDiagnose) -> CResult<DiagnoseConfig> {
    let annulus = match d.annulus.as_deref() {
        None => None,
        Some(&[a, b]) if a > 0.0 && a <= b => Some((a, b)),
        Some(_) => return cx.err("diagnose.annulus", "diagnose.annulus must be [r_min, r_max] with 0 < r_min <= r_max"),
    };
    let lp_p = d.lp_p.unwrap_or_default();
    let lp_radii = d.lp_radii.unwrap_or_default();
    if lp_p.is_empty() != lp_radii.is_empty() {
        return cx.err("diagnose", "diagnose.lp_p and diagnose.lp_radii must be given together");
    }
    let campanato_field = match d.campanato_field.as_deref().unwrap_or("map") {
        "map" => CampanatoField::Map,
        "differential" => CampanatoField::Differential,
        other => return cx.err("diagnose", format!("unknown diagnose.campanato_field `{other}` (expected map or differential)")),
    };
    let form = |name: Option<String>| match name {
        None => Ok(None),
        Some(n) => FormPreset::parse(&n).map(Some).or_else(|e| cx.err("diagnose", e.to_string())),
    };
    Ok(DiagnoseConfig {
        field_file: d.field_file.map(|f| cx.path(f)),
        center: d.center,
        annulus,
        lp_p,
        lp_radii,
        campanato_radii: d.campanato_radii.unwrap_or_default(),
        campanato_field,
        form: form(d.form)?,
        rotation: form(d.rotation)?,
    })
}
