use thiserror::Error;

use crate::population::Setting;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite value in layer {layer}: {detail}")]
    LayerNumerical { layer: usize, detail: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The tilting weights have zero expectation under the base distribution.
    #[error("zero mass: tilting weights vanish on the support of the base distribution")]
    ZeroMass,

    #[error("empty support for {setting} negatives at anchor {anchor}")]
    EmptySupport { setting: Setting, anchor: usize },

    #[error("anchor {anchor} has no eligible in-batch negatives")]
    BatchComposition { anchor: usize },

    #[error(
        "assumption undefined at anchor {anchor} (alpha_hcol = {alpha_hcol}, alpha_hscl = {alpha_hscl})"
    )]
    UndefinedAssumption {
        anchor: usize,
        alpha_hcol: f64,
        alpha_hscl: f64,
    },

    #[error("no anchor has a defined assumption record")]
    UndefinedFraction,

    #[error("counterexample construction inapplicable at anchor {anchor}: no other-class point reaches the threshold")]
    ConstructionInapplicable { anchor: usize },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("tau schedule is degenerate: a single epoch cannot interpolate from {start} to {end}")]
    ScheduleDegenerate { start: f64, end: f64 },

    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch}")]
    TrainingAbort { epoch: usize, batch: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::LayerNumerical { .. } | Error::TrainingAbort { .. } => 3,
            _ => 2,
        }
    }
}
