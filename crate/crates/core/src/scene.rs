//! Synthetic scenes and sparse sampling.
//!
//! A scene is a ground-truth depth map, a guidance image whose edges follow
//! the depth discontinuities, and a degraded copy of the depth (Gaussian blur
//! plus additive noise) that plays the role of a blurry network prediction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Anchor, DepthMap, Image, SparseDepthMap};

/// Minimum scene side length.
pub const MIN_SCENE_SIDE: usize = 16;

/// Sample count used when none is given.
pub const DEFAULT_SAMPLE_COUNT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// A fronto-parallel-ish foreground block in front of a tilted background.
    #[default]
    TwoPlane,
    /// Four depth steps across the columns.
    Staircase,
    /// One tilted plane, no discontinuities.
    Slanted,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-plane" => Ok(Layout::TwoPlane),
            "staircase" => Ok(Layout::Staircase),
            "slanted" => Ok(Layout::Slanted),
            other => Err(Error::InvalidParameter(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub layout: Layout,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Image edges coincide with depth edges when set; otherwise they are
    /// shifted sideways by `max(2, width / 16)` pixels.
    pub edge_aligned: bool,
    /// Standard deviation of the additive noise on the degraded depth, meters.
    pub noise_sigma: f64,
    /// Gaussian blur of the degraded depth, pixels. Zero disables blurring.
    pub blur_sigma: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 96,
            width: 128,
            layout: Layout::TwoPlane,
            depth_min: 1.0,
            depth_max: 5.0,
            edge_aligned: true,
            noise_sigma: 0.1,
            blur_sigma: 2.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_SCENE_SIDE || self.width < MIN_SCENE_SIDE {
            return Err(Error::InvalidParameter(format!(
                "scene {}x{} smaller than {MIN_SCENE_SIDE}x{MIN_SCENE_SIDE}",
                self.height, self.width
            )));
        }
        if !(self.depth_min.is_finite() && self.depth_min > 0.0) {
            return Err(Error::InvalidParameter("depth_min must be positive".into()));
        }
        if !(self.depth_max.is_finite() && self.depth_max > self.depth_min) {
            return Err(Error::InvalidParameter("depth_max must exceed depth_min".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be nonnegative".into()));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::InvalidParameter("blur sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_truth: DepthMap,
    pub image: Image,
    pub degraded: DepthMap,
}

/// Region label and in-region position of pixel `(r, c)`.
fn region(layout: Layout, r: usize, c: isize, h: usize, w: usize) -> usize {
    let (fr, fc) = (r as f64 / h as f64, c as f64 / w as f64);
    match layout {
        Layout::TwoPlane => {
            let inside = (0.2..0.8).contains(&fr) && (1.0 / 3.0..0.75).contains(&fc);
            inside as usize
        }
        Layout::Staircase => (fc * 4.0).floor().clamp(0.0, 3.0) as usize,
        Layout::Slanted => 0,
    }
}

fn depth_at(spec: &SceneSpec, r: usize, c: usize) -> f64 {
    let (h, w) = (spec.height, spec.width);
    let range = spec.depth_max - spec.depth_min;
    let (fr, fc) = (r as f64 / h as f64, c as f64 / w as f64);
    match spec.layout {
        Layout::TwoPlane => match region(spec.layout, r, c as isize, h, w) {
            1 => spec.depth_min + range * (0.15 + 0.1 * fc),
            _ => spec.depth_max - range * 0.25 * fr,
        },
        Layout::Staircase => {
            let s = region(spec.layout, r, c as isize, h, w) as f64;
            spec.depth_min + range * s / 3.0
        }
        Layout::Slanted => spec.depth_min + range * (0.6 * fc + 0.4 * fr),
    }
}

fn intensity_at(spec: &SceneSpec, r: usize, c: usize) -> f64 {
    let (h, w) = (spec.height, spec.width);
    let shift = if spec.edge_aligned { 0 } else { (w / 16).max(2) as isize };
    let cc = c as isize - shift;
    let (fr, fc) = (r as f64 / h as f64, c as f64 / w as f64);
    match spec.layout {
        Layout::TwoPlane => match region(spec.layout, r, cc, h, w) {
            1 => 0.25 + 0.05 * fc,
            _ => 0.7 + 0.1 * fr,
        },
        Layout::Staircase => 0.2 + 0.2 * region(spec.layout, r, cc, h, w) as f64,
        Layout::Slanted => 0.3 + 0.4 * fc,
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(depth: &DepthMap, sigma: f64) -> DepthMap {
    if sigma <= 0.0 {
        return depth.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = depth.dims();
    let src = depth.as_slice();
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * src[i * w + (j as isize + t as isize - r).clamp(0, w as isize - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[(i as isize + t as isize - r).clamp(0, h as isize - 1) as usize * w + j])
                .sum();
        }
    }
    DepthMap::from_parts(h, w, out)
}

/// Generates a scene; identical specs give identical scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let ground_truth = DepthMap::from_fn(h, w, |r, c| depth_at(spec, r, c))?;
    let image = Image::gray_from_fn(h, w, |r, c| intensity_at(spec, r, c))?;
    let mut degraded = gaussian_blur(&ground_truth, spec.blur_sigma);
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in degraded.values_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(Scene {
        ground_truth,
        image,
        degraded,
    })
}

/// Draws `count` distinct pixels with positive depth, uniformly, and returns
/// them as anchors sorted in row-major order.
pub fn sample_sparse(depth: &DepthMap, count: usize, seed: u64) -> Result<SparseDepthMap> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let valid: Vec<usize> = (0..depth.len()).filter(|&p| depth.as_slice()[p] > 0.0).collect();
    if count > valid.len() {
        return Err(Error::CountExceedsValidPixels {
            requested: count,
            available: valid.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, valid.len(), count)
        .into_iter()
        .map(|k| valid[k])
        .collect();
    picked.sort_unstable();
    let w = depth.width();
    let anchors = picked
        .into_iter()
        .map(|p| Anchor {
            row: p / w,
            col: p % w,
            depth: depth.as_slice()[p],
        })
        .collect();
    SparseDepthMap::new(depth.height(), depth.width(), anchors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_degraded_is_blurred_truth() {
        let spec = SceneSpec {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let s = generate_scene(&spec).unwrap();
        assert_eq!(s.degraded, gaussian_blur(&s.ground_truth, spec.blur_sigma));
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec {
            seed: 42,
            ..Default::default()
        };
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = SceneSpec { seed: 43, ..spec };
        assert_ne!(
            generate_scene(&other).unwrap().degraded,
            generate_scene(&SceneSpec {
                seed: 42,
                ..Default::default()
            })
            .unwrap()
            .degraded
        );
    }

    #[test]
    fn staircase_edges_colocate() {
        let spec = SceneSpec {
            layout: Layout::Staircase,
            ..Default::default()
        };
        let s = generate_scene(&spec).unwrap();
        for r in 0..spec.height {
            for c in 1..spec.width {
                let depth_edge = s.ground_truth.get(r, c) != s.ground_truth.get(r, c - 1);
                let image_edge = s.image.pixel(r, c) != s.image.pixel(r, c - 1);
                assert_eq!(depth_edge, image_edge, "({r},{c})");
            }
        }
    }

    #[test]
    fn misaligned_edges_are_shifted() {
        let spec = SceneSpec {
            layout: Layout::Staircase,
            edge_aligned: false,
            ..Default::default()
        };
        let s = generate_scene(&spec).unwrap();
        assert_eq!(
            s.ground_truth.get(0, 32),
            spec.depth_min + (spec.depth_max - spec.depth_min) / 3.0
        );
        assert_eq!(s.image.pixel(0, 32), s.image.pixel(0, 31));
        assert_ne!(s.image.pixel(0, 40), s.image.pixel(0, 39));
    }

    #[test]
    fn invalid_specs() {
        assert!(SceneSpec {
            height: 8,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SceneSpec {
            depth_min: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SceneSpec {
            depth_max: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sampling() {
        let d = DepthMap::from_fn(5, 4, |r, c| if (r + c) % 3 == 0 { 0.0 } else { 1.0 + r as f64 }).unwrap();
        let valid = d.as_slice().iter().filter(|&&v| v > 0.0).count();
        let all = sample_sparse(&d, valid, 1).unwrap();
        assert_eq!(all, SparseDepthMap::from_dense(&d));
        assert!(matches!(
            sample_sparse(&d, valid + 1, 1),
            Err(Error::CountExceedsValidPixels { .. })
        ));
        assert_eq!(sample_sparse(&d, 4, 9).unwrap(), sample_sparse(&d, 4, 9).unwrap());
        assert!(sample_sparse(&d, 0, 9).is_err());
    }

    #[test]
    fn five_hundred_samples_on_nyu_sized_grid() {
        let d = DepthMap::filled(228, 304, 2.0).unwrap();
        let s = sample_sparse(&d, DEFAULT_SAMPLE_COUNT, 0).unwrap();
        assert_eq!(s.len(), 500);
    }
}
