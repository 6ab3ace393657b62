use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported kernel profile '{0}' (expected gaussian, raised_cosine or triangular)")]
    UnsupportedProfile(String),
    #[error("gamma = {0} out of range (0, 1/4)")]
    GammaOutOfRange(f64),
    #[error("lattice too small: N = {0}, need N >= 2")]
    LatticeTooSmall(usize),
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("stale smoothed-field cache (generation {cache} vs {config})")]
    StaleCache { cache: u64, config: u64 },
    #[error("sample schedule must be sorted and nonnegative")]
    BadSchedule,
    #[error("event cap {0} exceeded before reaching the time horizon")]
    EventCapExceeded(u64),
    #[error("canonical sector too large to enumerate: {0} sites")]
    SectorTooLarge(usize),
    #[error("empty canonical sector: block of {sites} sites cannot carry magnetization sum {spin_sum}")]
    EmptySector { sites: usize, spin_sum: i64 },
    #[error("block window 2*{ell}+1 exceeds lattice of {sites} sites")]
    WindowTooLarge { ell: usize, sites: usize },
    #[error("block scales violate separation: ell = {ell}, big_l = {big_l}, sites = {sites}")]
    ScaleSeparation { ell: usize, big_l: usize, sites: usize },
    #[error("invalid scaling target: {0}")]
    BadScalingTarget(String),
    #[error("density is not normalized: integral = {0}")]
    UnnormalizedDensity(f64),
    #[error("measures live on different sectors")]
    SectorMismatch,
    #[error("entropy inequality needs absolute continuity: nu({0}) = 0 < mu({0})")]
    SupportViolation(usize),
    #[error("solver state exceeded the blow-up guard: |Y|_inf = {0:.3e}")]
    BlowUp(f64),
    #[error("jump stream not enabled for this trajectory")]
    NoJumpStream,
    #[error("ensemble too small: {got} replicas, need at least {need}")]
    EnsembleTooSmall { got: usize, need: usize },
    #[error("invalid configuration at '{path}': {reason}")]
    BadConfig { path: String, reason: String },
    #[error("missing column '{0}' in plot input")]
    MissingColumn(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("infeasible magnetization {0} for this lattice")]
    InfeasibleMagnetization(i64),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
