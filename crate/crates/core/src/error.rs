use std::path::PathBuf;

use crate::config::FieldError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cache file: {0}")]
    Cache(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no horizontal surfaces found")]
    NoHorizontalSurfaces,

    #[error("footprint collapsed; reduce erosion")]
    FootprintCollapsed,

    #[error("no points in wall slice")]
    EmptySlice,

    #[error("slabs overlap in z: slab {lower} top {lower_top:.4} > slab {upper} bottom {upper_bottom:.4}")]
    OverlappingSlabs {
        lower: usize,
        upper: usize,
        lower_top: f64,
        upper_bottom: f64,
    },

    #[error("zone inset collapsed for cell {0}; wall thicker than room")]
    InsetCollapsed(String),

    #[error("opening references unknown wall {0}")]
    UnknownWall(String),

    #[error("degenerate zone polygon: {0}")]
    DegenerateZone(String),

    #[error("invalid parameters: {}", format_fields(.0))]
    Params(Vec<FieldError>),

    #[error("model has no surfaces to measure against")]
    EmptyModel,

    #[error("image: {0}")]
    Image(String),

    #[error("stage {stage} needs {needs}: {reason}")]
    Prerequisite {
        stage: &'static str,
        needs: &'static str,
        reason: &'static str,
    },

    #[error("unknown stage '{0}'")]
    UnknownStage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn format_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|f| format!("{}: {}", f.field, f.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
