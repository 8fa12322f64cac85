//! Classifiers under attack: a linear SVM and piecewise-linear feedforward
//! networks, with deterministic training and a versioned weight file format.

mod io;
mod layers;
mod linear;
mod network;
mod train;

use thiserror::Error;

pub use io::{
    linear_from_bytes, load_linear, load_network, network_bytes, linear_bytes, network_from_bytes, save_linear,
    save_network, ModelHeader, ModelKind, FORMAT_VERSION, MAGIC,
};
pub use layers::{LayerSpec, LayerSwitch, Shape};
pub use linear::{train_linear_svm, LinearModel, SvmLog};
pub use network::{argmax, cross_entropy, softmax, Architecture, Network, SwitchState};
pub use train::{accuracy, train_network, FrontEndSpec, Schedule, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("input has {got} values, model expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("parameter vector has {got} values, model has {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("training data must contain at least two samples of each class")]
    SingleClass,
    #[error("training data is empty")]
    EmptyData,
    #[error("loss became non-finite during epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    FrontEnd(#[from] crate::frontend::FrontEndError),
}
