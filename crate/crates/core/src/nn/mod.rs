//! A small neural-network engine sized for the six fixed classifier graphs.

pub mod adam;
pub mod dense;
pub mod init;
pub mod lstm;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, TrainState};
pub use dense::{dense_backward, dense_forward, Activation, DenseCache, DenseGrads, DenseParams};
pub use init::{glorot_uniform, orthogonal};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmOutput, LstmParams};
pub use ops::{
    bce_loss, concat, concat_backward, dropout, dropout_backward, mean_pool_time,
    mean_pool_time_backward,
};
pub use tensor::{sigmoid, Tensor};
