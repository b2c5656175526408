//! Multimodal dementia detection from picture-description speech: CHAT
//! transcript parsing, frozen word/audio embeddings, synonym augmentation,
//! six LSTM/dense classifier graphs trained from scratch, and the evaluation
//! harness that reports accuracy, precision, recall, F1 and AUROC.

pub mod augment;
pub mod chat;
pub mod check;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod train_eval;

pub use error::{Error, Result};
