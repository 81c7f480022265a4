//! Numerical core of the AMSR super-resolution toolkit.
//!
//! Everything in this crate is pure computation over in-memory buffers: the
//! dense tensor type and its reverse-mode tape, the attention + multi-scale
//! fusion network, bicubic resampling, PSNR/SSIM, patch sampling and the
//! Adam training loop. File formats, PNG decoding and the command line live
//! in the `amsr` crate.
//!
//! The crate is `no_std` (with `alloc`). The `parallel` feature pulls in
//! `std` and rayon and splits the convolution and matmul kernels across
//! threads; every reduction keeps a fixed order, so results do not depend
//! on the thread count.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autograd;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod imaging;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod ops;
mod par;
pub mod tensor;
pub mod train;

pub use autograd::{Gradients, OpKind, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
