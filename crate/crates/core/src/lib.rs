//! Self-contained multiple-instance learning toolkit built around a
//! dual-stream aggregator with max self-attention.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`tape`]: dense f64 tensors and a reverse-mode gradient
//!   tape covering exactly the operations the models need.
//! - [`optim`] / [`gradcheck`]: Adam and SGD plus the central-difference
//!   gradient checker used throughout the tests.
//! - [`model`]: the dual-stream aggregator, feature extractors, loss,
//!   baseline aggregators, training loop and snapshot format.
//! - [`data`]: bag datasets (grouped CSV, IDX images, generated bags) and
//!   the canonical line-delimited bag file.
//! - [`eval`]: AUC, confusion metrics, k-fold splitting and aggregation.
//!
//! All randomness flows through seeded ChaCha streams; reruns with the same
//! seed are bit-identical on one machine.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod param;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use param::Parameter;
pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;
