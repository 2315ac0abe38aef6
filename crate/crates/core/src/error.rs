use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A dimension is zero, negative after propagation, or inconsistent.
    Shape(String),
    /// A coordinate, channel or index falls outside its container.
    Bounds(String),
    /// Weights are missing or do not fit the architecture.
    Model(String),
    /// A request that does not make sense for the addressed layer.
    Query(String),
    /// Descriptor or weight validation failure.
    Validation(String),
    /// An error raised while executing or inspecting a named layer.
    Layer { layer: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn in_layer(self, layer: &str) -> Self {
        match self {
            e @ Error::Layer { .. } => e,
            e => Error::Layer { layer: layer.into(), source: Box::new(e) },
        }
    }

    /// The innermost error, with any layer context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Layer { source, .. } => source.root(),
            e => e,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Bounds(m) => write!(f, "out of bounds: {m}"),
            Error::Model(m) => write!(f, "model error: {m}"),
            Error::Query(m) => write!(f, "invalid query: {m}"),
            Error::Validation(m) => write!(f, "validation error: {m}"),
            Error::Layer { layer, source } => write!(f, "layer `{layer}`: {source}"),
        }
    }
}

impl core::error::Error for Error {}
