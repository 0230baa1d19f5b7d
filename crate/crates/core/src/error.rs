use thiserror::Error;

/// Errors raised by the core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("range bin {0} is degenerate (all-zero spatial spectrum)")]
    DegenerateBin(usize),

    #[error("template grid of {templates} templates needs {bytes} bytes, over the {budget}-byte budget")]
    Capacity { templates: usize, bytes: u64, budget: u64 },

    #[error("stale template database: built for setup {expected:#018x}, measurement is {found:#018x}")]
    StaleDatabase { expected: u64, found: u64 },

    #[error("anchor similarity {similarity:.4} is below the threshold {threshold:.4}")]
    LowConfidence { similarity: f64, threshold: f64 },

    #[error("main lobe could not be identified: {0}")]
    DegenerateBeam(String),

    #[error("no anchor could be selected: {0}")]
    Selection(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
