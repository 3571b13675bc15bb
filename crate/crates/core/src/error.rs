use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("intensity scale mismatch: {0}")]
    ScaleMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask has no valid pixels")]
    EmptyMask,
    #[error("transform is singular")]
    SingularTransform,
    #[error("region {width}x{height} is smaller than the {window}px window")]
    RegionTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("no fundus pixels above the floor inside the region of interest")]
    NoFundusPixels,
    #[error("correlation undefined: {0}")]
    DegenerateCorrelation(String),
    #[error("need at least 2 samples per eye, got {0}")]
    KTooSmall(usize),
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("need at least 2 history frames, got {0}")]
    InsufficientHistory(usize),
    #[error("last two history frames share the same time stamp")]
    DegenerateTimes,
    #[error("time delta must be non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("target time {t_star} precedes the last observed time {t_last}")]
    TargetBeforeHistory { t_star: f64, t_last: f64 },
    #[error("need at least {needed} matches, got {got}")]
    InsufficientMatches { needed: usize, got: usize },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no candidate model survived the guards")]
    NoViableModel,
    #[error("empty input list")]
    EmptyList,
    #[error("laterality is unknown for eye {0}")]
    UnknownLaterality(String),
    #[error("no prediction for eye {eye_id} (looked for {stem}.llf1 / {stem}.pgm)")]
    MissingPrediction { eye_id: String, stem: String },
    #[error("the two tables share no eye ids")]
    NoOverlap,
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
