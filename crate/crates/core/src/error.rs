use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported dimension d = {0}")]
    UnsupportedDimension(usize),

    #[error("point is off the sphere of radius {radius}: |omega| = {norm}")]
    OffSphere { radius: f64, norm: f64 },

    #[error("radius {t} lies outside the annulus ({inner}, {outer}) shrunk by the stencil width")]
    OutsideAnnulus { t: f64, inner: f64, outer: f64 },

    #[error("no ordered equilibrium: sigma/r^2 = {0} is not below 1/d")]
    Supercritical(f64),

    #[error("concentration {given} does not match the fixed point {expected}")]
    ConcentrationMismatch { given: f64, expected: f64 },

    #[error("root bracket could not be established after {0} doublings")]
    BracketFailure(usize),

    #[error("Galerkin solve failed: {0}")]
    Galerkin(String),

    #[error("the two chi routes disagree by {0:e} in max norm")]
    RouteDisagreement(f64),

    #[error("degenerate chi profile: k_d denominator {0:e}")]
    DegenerateProfile(f64),

    #[error("non-finite quadrature value in {0}")]
    NonFinite(&'static str),

    #[error("input violates the precondition: {0}")]
    Precondition(String),

    #[error("time step {dt} exceeds the stability bound {bound}")]
    TimeStep { dt: f64, bound: f64 },

    #[error("vacuum: density {min:e} fell below 1e-12 of the mean {mean:e} in cell {cell}")]
    Vacuum { min: f64, mean: f64, cell: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("run `{run}` failed: {source}")]
    SubRun {
        run: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
