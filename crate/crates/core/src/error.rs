use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LsoError>;

#[derive(Debug, Error)]
pub enum LsoError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("value {value} outside the domain of {function}{}", location_suffix(.location))]
    Domain {
        function: &'static str,
        value: f64,
        location: Option<(usize, usize)>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid convolution geometry: {0}")]
    Geometry(String),

    #[error("non-finite value {value} at ({row}, {col}) in {context}")]
    NonFinite {
        context: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {message}{}", .path.display(), location_suffix(.location))]
    Parse {
        path: PathBuf,
        location: Option<(usize, usize)>,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<LsoError>,
    },
}

fn location_suffix(location: &Option<(usize, usize)>) -> String {
    match location {
        Some((line, col)) => format!(" at line {line}, column {col}"),
        None => String::new(),
    }
}

impl LsoError {
    pub fn dimension(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        LsoError::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Attach a layer index to an error raised while processing that layer.
    pub fn in_layer(self, layer: usize) -> Self {
        match self {
            already @ LsoError::Layer { .. } => already,
            other => LsoError::Layer {
                layer,
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LsoError::Io {
            path: path.into(),
            source,
        }
    }
}
