//! Dense and convolutional networks trained by backpropagation.
//!
//! Tensors are row-major `f64` buffers with a leading batch axis. Layers
//! cache what they need during `forward` and accumulate parameter
//! gradients in `backward`; [`train`] drives Adam over shuffled
//! mini-batches.

mod gemm;

pub mod codec;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use codec::{complex_to_real, real_to_complex};
pub use layers::{LayerSpec, Mode};
pub use network::{build_cnn, build_cnn_scaled, build_mlp, build_mlp_scaled, Network, NetworkSpec};
pub use tensor::Tensor;
pub use train::{predict, train, Dataset, EpochLoss, Model, Standardizer, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch at {layer}: {detail}")]
    Shape { layer: String, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite loss {loss} at epoch {epoch} (learning rate {learning_rate}); try a smaller learning rate")]
    Diverged { epoch: usize, learning_rate: f64, loss: f64 },
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err(layer: impl Into<String>, detail: impl Into<String>) -> NnError {
    NnError::Shape { layer: layer.into(), detail: detail.into() }
}
