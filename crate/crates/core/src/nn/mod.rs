//! Minimal double-precision building blocks for 3D convolutional networks:
//! parameter storage, layers with explicit backward passes, and SGD.

mod conv;
mod linear;
mod norm;
mod optim;
mod params;
mod pool;
mod tensor;

pub use conv::{conv_out_len, Conv3d};
pub use linear::Linear;
pub use norm::{relu, relu_backward, BatchNorm3d, NormCache, NormMode, StatUpdate};
pub use optim::Sgd;
pub use params::{Grads, Param, ParamId, ParamRole, ParamStore};
pub use pool::{avg_pool, global_avg_pool, global_avg_pool_backward};
pub use tensor::{Matrix, Tensor5};
