//! Dense-array math backing the networks: convolution, pooling, dense
//! layers, softmax cross-entropy, Adam, gradient checking and PCA.
//!
//! Training math runs in `f64`; snapshots may be stored as `f32`.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod pca;
pub mod pool;
pub mod snapshot;
pub mod tensor;

pub use conv::{conv2d, conv2d_backward, conv2d_forward, ConvCache, LayerParams, Padding};
pub use dense::{dense, dense_batch, dense_batch_backward};
pub use gradcheck::{grad_check, Differentiable, GradCheckReport, Parameterized};
pub use loss::{log_softmax, softmax, softmax_xent};
pub use optim::{adam_step, AdamConfig, OptimState};
pub use pca::{pca_fit, Pca};
pub use pool::{maxpool2d, maxpool2d_backward, maxpool2d_forward, PoolCache};
pub use tensor::Tensor;
