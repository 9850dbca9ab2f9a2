use crate::lattice::Site;

/// Errors raised by the library. The variant name doubles as the machine-readable
/// error kind reported by the CLI and the C interface.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vertex {0:?} has no assigned height")]
    MissingHeight(Site),
    #[error("no height has finite energy: {0}")]
    EmptySupport(String),
    #[error("normalizing integral does not converge: {0}")]
    DivergentNormalizer(String),
    #[error("negative cycle of total weight {weight} through {} vertices", .cycle.len())]
    NegativeCycle { cycle: Vec<Site>, weight: f64 },
    #[error("boundary data infeasible between {x:?} and {y:?}")]
    Infeasible { x: Site, y: Site },
    #[error("slope is not feasible on this torus")]
    InfeasibleSlope,
    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),
    #[error("potential is not Lipschitz (unbounded support) where a finite support is required")]
    NotLipschitz,
    #[error("coupling from the past did not coalesce within {0} sweeps")]
    NoCoalescence(u64),
    #[error("total energy {total} is below potential energy {potential} on edge {edge}")]
    NegativeResidual { edge: usize, total: f64, potential: f64 },
    #[error("aligned pair energy is infinite on edge {0}")]
    InfiniteEnergy(usize),
    #[error("height increments do not close around face at {0:?}")]
    InconsistentCycle(Site),
    #[error("not a domino height function: {0}")]
    NotAHeightFunction(String),
    #[error("region has {0} squares; exhaustive search is limited to {1}")]
    RegionTooLarge(usize, usize),
    #[error("region cannot be tiled by dominoes")]
    Untileable,
    #[error("sampling budget insufficient: {0}")]
    InsufficientBudget(String),
    #[error("slopes are not collinear with the midpoint or settings differ: {0}")]
    SlopeMismatch(String),
    #[error("box of radius {0} exceeds the configuration support")]
    BoxExceedsSupport(i64),
    #[error("event {0} is not increasing")]
    NotIncreasing(String),
    #[error("configuration error: {0}")]
    ConfigParse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("monotone coupling violated at vertex {0:?}")]
    CouplingViolation(Site),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Variant name, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingHeight(_) => "MissingHeight",
            Error::EmptySupport(_) => "EmptySupport",
            Error::DivergentNormalizer(_) => "DivergentNormalizer",
            Error::NegativeCycle { .. } => "NegativeCycle",
            Error::Infeasible { .. } => "Infeasible",
            Error::InfeasibleSlope => "Infeasible",
            Error::StateSpaceTooLarge(_) => "StateSpaceTooLarge",
            Error::NotLipschitz => "NotLipschitz",
            Error::NoCoalescence(_) => "NoCoalescence",
            Error::NegativeResidual { .. } => "NegativeResidual",
            Error::InfiniteEnergy(_) => "InfiniteEnergy",
            Error::InconsistentCycle(_) => "InconsistentCycle",
            Error::NotAHeightFunction(_) => "NotAHeightFunction",
            Error::RegionTooLarge(..) => "RegionTooLarge",
            Error::Untileable => "Untileable",
            Error::InsufficientBudget(_) => "InsufficientBudget",
            Error::SlopeMismatch(_) => "SlopeMismatch",
            Error::BoxExceedsSupport(_) => "BoxExceedsSupport",
            Error::NotIncreasing(_) => "NotIncreasing",
            Error::ConfigParse(_) => "ConfigParse",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::CouplingViolation(_) => "CouplingViolation",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
