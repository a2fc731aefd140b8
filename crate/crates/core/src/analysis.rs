//! Anchor displacement and gradient smoothness at anchors, comparing plain
//! anchor replacement against anchored propagation.

use crate::affinity::{designed_affinity, normalize_kernels, DEFAULT_SIGMA_COLOR};
use crate::error::Result;
use crate::grid::{DepthMap, Image, PropagationConfig, SparseDepthMap};
use crate::metrics::{gradient_error_hist, GradientErrorHistogram, Histogram, DEFAULT_BINS};
use crate::propagation::cspn_run_anchored;

/// Histogram of `|pred - anchor depth|` over all anchors.
pub fn anchor_displacement(pred: &DepthMap, sparse: &SparseDepthMap, bins: usize) -> Result<Histogram> {
    pred.check_dims(sparse.height(), sparse.width())?;
    let samples: Vec<f64> = sparse
        .anchors()
        .iter()
        .map(|a| (pred.get(a.row, a.col) - a.depth).abs())
        .collect();
    Histogram::from_samples(&samples, bins)
}

/// Degraded depth with the anchor values pasted in, no diffusion.
pub fn replacement_pipeline(degraded: &DepthMap, sparse: &SparseDepthMap) -> Result<DepthMap> {
    let mut out = degraded.clone();
    sparse.write_into(&mut out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub propagation: PropagationConfig,
    pub sigma_color: f64,
    pub bins: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            propagation: PropagationConfig::default(),
            sigma_color: DEFAULT_SIGMA_COLOR,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoothnessStudy {
    pub replacement: GradientErrorHistogram,
    pub cspn: GradientErrorHistogram,
    pub replacement_depth: DepthMap,
    pub cspn_depth: DepthMap,
}

impl SmoothnessStudy {
    pub fn replacement_mean(&self) -> f64 {
        self.replacement.mean
    }

    pub fn cspn_mean(&self) -> f64 {
        self.cspn.mean
    }
}

/// Runs both pipelines on one scene and histograms their Sobel-x gradient
/// error against the ground truth at the anchors.
pub fn smoothness_study(
    ground_truth: &DepthMap,
    image: &Image,
    degraded: &DepthMap,
    sparse: &SparseDepthMap,
    config: &StudyConfig,
) -> Result<SmoothnessStudy> {
    let p = &config.propagation;
    let raw = designed_affinity(image, p.kernel_size, config.sigma_color, p.boundary)?;
    let kernels = normalize_kernels(&raw);
    let (cspn_depth, _) = cspn_run_anchored(degraded, &kernels, sparse, p)?;
    let replacement_depth = replacement_pipeline(degraded, sparse)?;
    Ok(SmoothnessStudy {
        replacement: gradient_error_hist(&replacement_depth, ground_truth, sparse, config.bins)?,
        cspn: gradient_error_hist(&cspn_depth, ground_truth, sparse, config.bins)?,
        replacement_depth,
        cspn_depth,
    })
}
