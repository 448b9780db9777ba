//! CMFDNet: a cross-scanning Mamba decoder, multi-scale aware encoder
//! adapters and feature-discovery fusion for polyp segmentation, built on a
//! small reverse-mode autodiff tensor layer.
//!
//! Layout:
//!
//! - [`tensor`]: dense NCHW tensors, the autodiff graph, convolutions,
//!   parameters and the checkpoint format.
//! - [`scan`]: diagonal scan orders, the selective-scan recurrence and the
//!   VSS Scan block.
//! - [`blocks`]: pixel exchange, GAB/CBAM, MSA, CMD, FD, the encoder stub and
//!   the assembled model.
//! - [`metrics`]: mDice, mIoU, weighted F-measure, S-measure, E-measure, MAE.
//! - [`data`]: NetPBM I/O, synthetic lesion generator, augmentation.
//! - [`train`]: deep-supervision loss, AdamW, schedule and training loop.
//! - [`reference`] and [`gradcheck`]: independent oracles used by the test
//!   suites and by [`selfcheck`].
//!
//! Kernels run on rayon when the `parallel` feature is enabled (the
//! default); see [`parallel`] for the runtime switch.

pub mod blocks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod reference;
pub mod scan;
pub mod selfcheck;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};
