use std::fmt;
use std::path::PathBuf;

use ventric_core::align::AlignError;
use ventric_core::cpd::CpdError;
use ventric_core::mesh::MeshError;
use ventric_core::metrics::MetricsError;
use ventric_core::net::NetError;
use ventric_core::pdm::PdmError;
use ventric_core::phantom::PhantomError;
use ventric_core::preprocess::PreprocessError;

#[derive(Debug)]
pub enum PipelineError {
    Io { path: PathBuf, source: std::io::Error },
    Format { path: PathBuf, message: String },
    Config { message: String },
    Validation { message: String },
    Mesh(MeshError),
    Align(AlignError),
    Pdm(PdmError),
    Cpd(CpdError),
    Net(NetError),
    Metrics(MetricsError),
    Phantom(PhantomError),
    Preprocess(PreprocessError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Io { path, source } => {
                write!(f, "{}: {source}", path.display())
            }
            PipelineError::Format { path, message } => {
                write!(f, "{}: {message}", path.display())
            }
            PipelineError::Config { message } => write!(f, "configuration: {message}"),
            PipelineError::Validation { message } => write!(f, "{message}"),
            PipelineError::Mesh(e) => write!(f, "{e}"),
            PipelineError::Align(e) => write!(f, "{e}"),
            PipelineError::Pdm(e) => write!(f, "{e}"),
            PipelineError::Cpd(e) => write!(f, "{e}"),
            PipelineError::Net(e) => write!(f, "{e}"),
            PipelineError::Metrics(e) => write!(f, "{e}"),
            PipelineError::Phantom(e) => write!(f, "{e}"),
            PipelineError::Preprocess(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        PipelineError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        PipelineError::Config {
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        PipelineError::Validation {
            message: message.into(),
        }
    }
}

macro_rules! from_core {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for PipelineError {
            fn from(e: $ty) -> Self {
                PipelineError::$variant(e)
            }
        }
    };
}

from_core!(Mesh, MeshError);
from_core!(Align, AlignError);
from_core!(Pdm, PdmError);
from_core!(Cpd, CpdError);
from_core!(Net, NetError);
from_core!(Metrics, MetricsError);
from_core!(Phantom, PhantomError);
from_core!(Preprocess, PreprocessError);
