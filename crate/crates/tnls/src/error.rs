use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular solve: zero pivot at row {0}")]
    SingularSolve(usize),
    #[error("no-negative-mode: smallest eigenvalue {0:.3e} is not below -1e-8")]
    NoNegativeMode(f64),
    #[error("eigen iteration did not converge after {0} iterations")]
    EigenNoConvergence(usize),
    #[error("spectral-collision: shift {shift} within margin of the real spectrum {{-e0, 0, e0}}")]
    SpectralCollision { shift: f64 },
    #[error("degenerate projection: |B(Y+,Y-)| = {0:.3e}")]
    DegenerateProjection(f64),
    #[error("amplitude-too-large: max |v|/W = {0:.3e} exceeds 1/2")]
    AmplitudeTooLarge(f64),
    #[error("ill-conditioned extraction: condition estimate {0:.3e}")]
    IllConditioned(f64),
    #[error("solver-diverged: linear solve residual {0:.3e}")]
    SolverDiverged(f64),
    #[error("not-near-W: d(u)/|W|^2 = {0:.3e}")]
    NotNearW(f64),
    #[error("newton-stall after {0} iterations (residual {1:.3e})")]
    NewtonStall(usize, f64),
    #[error("unsolvable: total gradient mass {0:.6e} below E(W) = {1:.6e}")]
    Unsolvable(f64, f64),
    #[error("window-empty: no samples inside the fit window")]
    WindowEmpty,
    #[error("constraint-violated: {0}")]
    ConstraintViolated(String),
    #[error("support-exceeds-grid: support end {0} > r_max {1}")]
    SupportExceedsGrid(f64, f64),
    #[error("not-threshold: |E(u0)/E(W) - 1| = {0:.3e}")]
    NotThreshold(f64),
    #[error("config: {0}")]
    Config(String),
    #[error("io error at {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, e: impl std::fmt::Display) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), msg: e.to_string() }
    }
}
