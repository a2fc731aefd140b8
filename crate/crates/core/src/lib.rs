//! Convolutional spatial propagation for depth refinement.
//!
//! Given a depth map, per-pixel affinity kernels derived from a guidance
//! image, and optional sparse depth anchors, [`propagation`] diffuses the depth
//! with a recurrent `k x k` update while keeping anchored pixels fixed.
//! [`oracle`] builds the same step as an explicit matrix for verification and
//! [`spn`] provides a serial scan-line baseline.

pub mod affinity;
pub mod analysis;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod propagation;
pub mod scene;
pub mod spn;

pub use affinity::{designed_affinity, normalize_kernels, signed_affinity, NormalizedKernelField, RawKernelField};
pub use error::{Error, Result};
pub use grid::{
    linear_index, validate_pair, Anchor, BoundaryPolicy, DepthMap, Image, PropagationConfig, SparseDepthMap,
};
pub use metrics::{evaluate, EvalReport};
pub use propagation::{cspn_run, cspn_run_anchored, cspn_step, cspn_step_anchored, PropagationTrace};
