use std::fmt;

use thiserror::Error;

/// Pipeline stage names used to tag errors coming out of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Assemble,
    Svd,
    Pencil,
    Direction,
    Diagonalize,
    Log,
    Coefficients,
    Fourier,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Assemble => "assemble",
            Stage::Svd => "svd",
            Stage::Pencil => "pencil",
            Stage::Direction => "direction",
            Stage::Diagonalize => "diagonalize",
            Stage::Log => "log",
            Stage::Coefficients => "coefficients",
            Stage::Fourier => "fourier",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing sample at multi-index {0:?}")]
    MissingSample(Vec<i64>),

    #[error("separation undefined: need at least two sources")]
    SeparationUndefined,

    #[error("rejection budget exhausted after {attempts} draws (min_sep {min_sep} too large for M = {m})")]
    RejectionBudget { attempts: usize, min_sep: f64, m: usize },

    #[error("zero data: largest singular value {0:e} below floor")]
    ZeroData(f64),

    #[error("eigenvalue clustering: sources may coincide or n too small (best relative gap {best_gap:e} after {attempts} draws)")]
    EigenvalueClustering { best_gap: f64, attempts: usize },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("eigenvector matrix numerically singular (cond {0:e})")]
    SingularEigenvectors(f64),

    #[error("zero entry in node matrix at row {row}, column {col}")]
    ZeroNode { row: usize, col: usize },

    #[error("coincident recovered nodes: least-squares matrix rank deficient (|r_min|/|r_max| = {0:e})")]
    CoincidentNodes(f64),

    #[error("frequency index {k:?} outside the Nyquist range of a {pixels}-pixel grid")]
    Nyquist { k: Vec<i64>, pixels: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with any stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// The stage that raised this error, if it came out of a pipeline.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True for failures of the numerical pipeline, as opposed to bad
    /// configuration or unreadable input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::ZeroData(_)
                | Error::EigenvalueClustering { .. }
                | Error::EigenFailure(_)
                | Error::SingularEigenvectors(_)
                | Error::ZeroNode { .. }
                | Error::CoincidentNodes(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
