use std::io;

/// Errors produced while building a discretization or running a flow.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("ellipse projection did not converge for point ({x}, {y}) after {iterations} iterations")]
    ProjectionFailed { x: f64, y: f64, iterations: usize },

    #[error("domain comes within two nodes of the computational box rim at node ({i}, {j})")]
    DomainTouchesRim { i: usize, j: usize },

    #[error("degenerate level set at node ({i}, {j}): |grad phi| = {norm:e}")]
    DegenerateGradient { i: usize, j: usize, norm: f64 },

    #[error("extension did not converge{}: max update {residual:e} after {sweeps} sweeps",
        column.map(|c| format!(" (column {c})")).unwrap_or_default())]
    ExtensionNotConverged {
        column: Option<usize>,
        residual: f64,
        sweeps: usize,
    },

    #[error("ghost-map gain is singular at irregular node ({i}, {j}): phi = {phi:e}, c = {c:e}")]
    GainBlowUp { i: usize, j: usize, phi: f64, c: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("stencil centred at ({i}, {j}) reaches node ({ni}, {nj}) which is neither interior nor ghost")]
    StencilOutsideBand { i: usize, j: usize, ni: usize, nj: usize },

    #[error("potential is negative ({value:e}) at ({x}, {y})")]
    NegativePotential { x: f64, y: f64, value: f64 },

    #[error("linear solve failed ({reason}) after {iterations} iterations, residual {residual:e}")]
    LinearSolve {
        reason: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eigensolver: {0}")]
    Eigen(String),

    #[error("field is not normalized: ||u|| = {norm}")]
    NotNormalized { norm: f64 },

    #[error("Thomas-Fermi bracket: {0}")]
    ThomasFermi(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("phase {phase} did not reach steady state in {steps} steps (residual {residual:e})")]
    FlowNotConverged {
        phase: u8,
        steps: usize,
        residual: f64,
    },

    #[error("non-finite values at step {step}")]
    NonFinite { step: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
