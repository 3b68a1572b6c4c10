use thiserror::Error;

/// Errors raised by the grid, density, flow and diagnostics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HodgeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{model}: Q = {q} outside admissible range ({limit})")]
    Domain {
        model: String,
        q: f64,
        limit: String,
    },

    #[error("supersonic state: max Q = {max_q} at node {node:?} (x = {position:?}); {detail}")]
    SupersonicState {
        max_q: f64,
        node: usize,
        position: Vec<f64>,
        detail: String,
    },

    #[error("projection degenerate at node {node}: |v| = {norm}")]
    ProjectionDegenerate { node: usize, norm: f64 },

    #[error("ellipticity lost: diffusivity bound {0} is not positive")]
    EllipticityLoss(f64),

    #[error("flow stalled at step {step}: {halvings} consecutive step halvings without energy decrease")]
    StalledFlow { step: usize, halvings: usize },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl HodgeError {
    /// Short machine-readable tag, used on the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            HodgeError::InvalidGrid(_) => "invalid_grid",
            HodgeError::Domain { .. } => "domain",
            HodgeError::SupersonicState { .. } => "supersonic_state",
            HodgeError::ProjectionDegenerate { .. } => "projection_degenerate",
            HodgeError::EllipticityLoss(_) => "ellipticity_loss",
            HodgeError::StalledFlow { .. } => "stalled_flow",
            HodgeError::EmptyRegion(_) => "empty_region",
            HodgeError::DegenerateFit(_) => "degenerate_fit",
            HodgeError::DimensionMismatch(_) => "dimension_mismatch",
            HodgeError::InvalidArgument(_) => "invalid_argument",
        }
    }
}

pub type Result<T> = std::result::Result<T, HodgeError>;
