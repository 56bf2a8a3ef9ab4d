//! Morpho-aware global attention (MAGA) for alpha matting at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] and [`autodiff`]: an f64 tensor type and a tape-based
//!   reverse-mode autodiff graph covering exactly the operations the
//!   network needs, plus [`gradcheck`] for central finite differences.
//! * [`optim`]: named parameter storage and decoupled-weight-decay Adam.
//! * [`maga`]: Tetris-style directional branches, morpho reweighting and
//!   the enriched-query attention block.
//! * [`net`]: patch embedding, MAGA encoder, CNN detail branch, fusion
//!   decoder, training loop and checkpoints.
//! * [`metrics`]: SAD, MSE, gradient and connectivity errors.
//! * [`synth`]: compositing, trimap generation, procedural hairline data
//!   and netpbm image I/O.

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod kv;
pub mod maga;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
