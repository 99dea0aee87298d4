//! Stereo matching with constant-highway matching networks, a global
//! disparity network with reflective confidence, and confidence-gated
//! refinement.
//!
//! The pipeline stages map onto modules:
//!
//! * [`matchnet`]: patch descriptors, decision head, hybrid-loss training and
//!   cost-volume construction.
//! * [`costproc`]: cross-based aggregation, semi-global matching, tanh
//!   normalization.
//! * [`gdn`]: the global disparity network and its reflective confidence.
//! * [`refine`]: left-right labeling, interpolation, subpixel and smoothing.
//! * [`confidence`]: baseline confidence measures and sparsification AUC.
//! * [`dataio`]: synthetic scenes, sampling, file formats and run config.
//! * [`pipeline`]: end-to-end orchestration used by the CLI and the tests.

pub mod error;
pub mod nncore;
pub mod par;

pub use error::{Error, Result};
pub mod confidence;
pub mod costproc;
pub mod dataio;
pub mod gdn;
pub mod maps;
pub mod matchnet;
pub mod pipeline;
pub mod refine;
