//! Shared grid types and indexing conventions.
//!
//! Every grid is stored row-major in memory. The dense linear-operator view
//! (see [`crate::oracle`]) vectorizes column-first, so pixel `(row, col)` of an
//! `m`-row grid maps to `row + col * m`; [`linear_index`] is the only place that
//! convention is spelled out.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Column-first linear index of `(row, col)` in a grid with `height` rows.
#[inline]
pub fn linear_index(row: usize, col: usize, height: usize) -> usize {
    debug_assert!(row < height);
    row + col * height
}

/// Inverse of [`linear_index`].
#[inline]
pub fn grid_position(index: usize, height: usize) -> (usize, usize) {
    (index % height, index / height)
}

/// How a kernel that overhangs the image edge is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Out-of-bounds neighbors carry zero affinity.
    #[default]
    ZeroPad,
    /// Out-of-bounds neighbors are redirected to the nearest in-bounds pixel.
    ClampToEdge,
}

impl BoundaryPolicy {
    /// Resolves a neighbor coordinate, `None` when it contributes nothing.
    #[inline]
    pub fn resolve(self, row: isize, col: isize, height: usize, width: usize) -> Option<(usize, usize)> {
        let inside = row >= 0 && col >= 0 && (row as usize) < height && (col as usize) < width;
        match self {
            BoundaryPolicy::ZeroPad if inside => Some((row as usize, col as usize)),
            BoundaryPolicy::ZeroPad => None,
            BoundaryPolicy::ClampToEdge => Some((
                row.clamp(0, height as isize - 1) as usize,
                col.clamp(0, width as isize - 1) as usize,
            )),
        }
    }
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "zero-pad" => Ok(BoundaryPolicy::ZeroPad),
            "clamp" | "clamp-to-edge" => Ok(BoundaryPolicy::ClampToEdge),
            other => Err(Error::InvalidParameter(format!("unknown boundary policy `{other}`"))),
        }
    }
}

fn check_shape(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidGrid(format!("{height}x{width} has no pixels")));
    }
    if height.checked_mul(width) != Some(len) {
        return Err(Error::InvalidGrid(format!(
            "{len} values cannot fill a {height}x{width} grid"
        )));
    }
    Ok(())
}

/// Dense depth map in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DepthMap {
    /// Builds a depth map from row-major values, rejecting NaN and infinities.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(height, width, values.len())?;
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: p / width,
                col: p % width,
            });
        }
        Ok(DepthMap { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    /// Engine outputs come from finite inputs through finite weights.
    pub(crate) fn from_parts(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        DepthMap { height, width, values }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { row, col });
        }
        self.values[row * self.width + col] = value;
        Ok(())
    }

    /// Row-major values.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column-first vectorization.
    pub fn to_column_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                v[linear_index(r, c, self.height)] = self.get(r, c);
            }
        }
        v
    }

    /// Inverse of [`DepthMap::to_column_vector`].
    pub fn from_column_vector(height: usize, width: usize, v: &[f64]) -> Result<Self> {
        check_shape(height, width, v.len())?;
        Self::from_fn(height, width, |r, c| v[linear_index(r, c, height)])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DepthMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.dims() != (height, width) {
            return Err(Error::dims((height, width), self.dims()));
        }
        Ok(())
    }
}

/// Guidance image with values in `[0, 1]`, one or three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Image {
    /// Interleaved row-major values (`channels` per pixel).
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidGrid(format!("{channels} channels, expected 1 or 3")));
        }
        check_shape(height, width, values.len() / channels)?;
        if !values.len().is_multiple_of(channels) {
            return Err(Error::InvalidGrid("ragged channel data".into()));
        }
        for (p, &v) in values.iter().enumerate() {
            let (row, col) = ((p / channels) / width, (p / channels) % width);
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, col });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRangeValue { row, col, value: v });
            }
        }
        Ok(Image {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn gray_from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, 1, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    /// Squared color distance between two pixels.
    #[inline]
    pub fn color_distance_sq(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.pixel(a.0, a.1)
            .iter()
            .zip(self.pixel(b.0, b.1))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    /// Mirror across the vertical axis.
    pub fn flip_horizontal(&self) -> Image {
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.height {
            for c in (0..self.width).rev() {
                values.extend_from_slice(self.pixel(r, c));
            }
        }
        Image { values, ..*self }
    }
}

/// Checks that a depth map and its guidance image can be propagated together.
pub fn validate_pair(depth: &DepthMap, image: &Image) -> Result<()> {
    // Both constructors already enforce finiteness and range.
    if depth.dims() != image.dims() {
        return Err(Error::dims(depth.dims(), image.dims()));
    }
    Ok(())
}

/// One trusted depth measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub row: usize,
    pub col: usize,
    pub depth: f64,
}

/// Sparse depth anchors; a pixel is anchored iff it has a positive depth here.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    height: usize,
    width: usize,
    anchors: Vec<Anchor>,
}

impl SparseDepthMap {
    pub fn new(height: usize, width: usize, anchors: Vec<Anchor>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!("{height}x{width} has no pixels")));
        }
        let mut seen = HashSet::with_capacity(anchors.len());
        for a in &anchors {
            if a.row >= height || a.col >= width {
                return Err(Error::AnchorOutOfBounds { row: a.row, col: a.col });
            }
            if !(a.depth.is_finite() && a.depth > 0.0) {
                return Err(Error::InvalidAnchorDepth {
                    row: a.row,
                    col: a.col,
                    value: a.depth,
                });
            }
            if !seen.insert((a.row, a.col)) {
                return Err(Error::DuplicateAnchor { row: a.row, col: a.col });
            }
        }
        Ok(SparseDepthMap { height, width, anchors })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, Vec::new())
    }

    /// Anchors every pixel of `depth` whose value is positive.
    pub fn from_dense(depth: &DepthMap) -> Self {
        let (h, w) = depth.dims();
        let mut anchors = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let d = depth.get(r, c);
                if d > 0.0 {
                    anchors.push(Anchor {
                        row: r,
                        col: c,
                        depth: d,
                    });
                }
            }
        }
        SparseDepthMap {
            height: h,
            width: w,
            anchors,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Dense 0/1 mask, row-major.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.height * self.width];
        for a in &self.anchors {
            m[a.row * self.width + a.col] = true;
        }
        m
    }

    /// Overwrites every anchored pixel of `depth` with its sparse value.
    pub fn write_into(&self, depth: &mut DepthMap) -> Result<()> {
        depth.check_dims(self.height, self.width)?;
        let w = depth.width();
        let values = depth.values_mut();
        for a in &self.anchors {
            values[a.row * w + a.col] = a.depth;
        }
        Ok(())
    }
}

/// Iteration settings shared by the propagation engine and its callers.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    pub kernel_size: usize,
    pub iterations: usize,
    pub boundary: BoundaryPolicy,
    /// Stop once the largest per-pixel change drops below this value.
    pub early_stop: Option<f64>,
    /// Keep every intermediate state.
    pub trace: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            kernel_size: 3,
            iterations: 24,
            boundary: BoundaryPolicy::ZeroPad,
            early_stop: None,
            trace: false,
        }
    }
}

impl PropagationConfig {
    pub fn new(kernel_size: usize, iterations: usize) -> Result<Self> {
        let cfg = PropagationConfig {
            kernel_size,
            iterations,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_boundary(mut self, boundary: BoundaryPolicy) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_kernel_size(self.kernel_size)?;
        if let Some(tol) = self.early_stop {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::InvalidParameter(format!("early-stop tolerance {tol}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_kernel_size(k: usize) -> Result<()> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::InvalidKernelSize(k));
    }
    Ok(())
}
