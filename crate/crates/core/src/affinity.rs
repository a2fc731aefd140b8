//! Per-pixel affinity kernels and their normalization into propagation weights.
//!
//! Kernels are stored offset-major: one `height * width` plane per kernel
//! offset `(a, b)`, planes ordered row-major over `a` then `b`, both running
//! from `-(k-1)/2` to `(k-1)/2`. The weight at offset `(a, b)` of pixel
//! `(i, j)` multiplies the neighbor `(i - a, j - b)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{check_kernel_size, BoundaryPolicy, Image};

/// Color bandwidth used when none is given, for images in `[0, 1]`.
pub const DEFAULT_SIGMA_COLOR: f64 = 0.1;

/// Half-width of a `k x k` kernel.
#[inline]
pub fn kernel_radius(kernel_size: usize) -> isize {
    (kernel_size as isize - 1) / 2
}

/// All `(a, b)` offsets in storage order.
pub fn kernel_offsets(kernel_size: usize) -> impl Iterator<Item = (isize, isize)> {
    let r = kernel_radius(kernel_size);
    (-r..=r).flat_map(move |a| (-r..=r).map(move |b| (a, b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    height: usize,
    width: usize,
    kernel_size: usize,
    boundary: BoundaryPolicy,
}

impl Geometry {
    fn new(height: usize, width: usize, kernel_size: usize, boundary: BoundaryPolicy) -> Result<Self> {
        check_kernel_size(kernel_size)?;
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!("{height}x{width} has no pixels")));
        }
        Ok(Geometry {
            height,
            width,
            kernel_size,
            boundary,
        })
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn planes(&self) -> usize {
        self.kernel_size * self.kernel_size
    }

    fn center_plane(&self) -> usize {
        self.planes() / 2
    }

    #[inline]
    fn plane_of(&self, a: isize, b: isize) -> usize {
        let r = kernel_radius(self.kernel_size);
        debug_assert!(a.abs() <= r && b.abs() <= r);
        ((a + r) as usize) * self.kernel_size + (b + r) as usize
    }

    #[inline]
    fn neighbor(&self, row: usize, col: usize, a: isize, b: isize) -> Option<(usize, usize)> {
        self.boundary
            .resolve(row as isize - a, col as isize - b, self.height, self.width)
    }
}

/// Unnormalized affinities, e.g. the output of an affinity generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawKernelField {
    geom: Geometry,
    raw: Vec<f64>,
}

impl RawKernelField {
    /// `raw` is offset-major, `k * k * height * width` values. The center plane
    /// is ignored by normalization.
    pub fn new(
        height: usize,
        width: usize,
        kernel_size: usize,
        boundary: BoundaryPolicy,
        raw: Vec<f64>,
    ) -> Result<Self> {
        let geom = Geometry::new(height, width, kernel_size, boundary)?;
        if raw.len() != geom.planes() * geom.pixels() {
            return Err(Error::InvalidGrid(format!(
                "raw kernel field has {} values, expected {}",
                raw.len(),
                geom.planes() * geom.pixels()
            )));
        }
        if let Some(p) = raw.iter().position(|v| !v.is_finite()) {
            let pix = p % geom.pixels();
            return Err(Error::NonFiniteValue {
                row: pix / width,
                col: pix % width,
            });
        }
        Ok(RawKernelField { geom, raw })
    }

    /// Builds a field from `f(row, col, a, b)`; the center is set to zero.
    pub fn from_fn(
        height: usize,
        width: usize,
        kernel_size: usize,
        boundary: BoundaryPolicy,
        mut f: impl FnMut(usize, usize, isize, isize) -> f64,
    ) -> Result<Self> {
        let geom = Geometry::new(height, width, kernel_size, boundary)?;
        let mut raw = vec![0.0; geom.planes() * geom.pixels()];
        for (plane, (a, b)) in kernel_offsets(kernel_size).enumerate() {
            if (a, b) == (0, 0) {
                continue;
            }
            let dst = &mut raw[plane * geom.pixels()..(plane + 1) * geom.pixels()];
            for i in 0..height {
                for j in 0..width {
                    dst[i * width + j] = f(i, j, a, b);
                }
            }
        }
        Self::new(height, width, kernel_size, boundary, raw)
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn kernel_size(&self) -> usize {
        self.geom.kernel_size
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        self.geom.boundary
    }

    pub fn get(&self, row: usize, col: usize, a: isize, b: isize) -> f64 {
        self.raw[self.geom.plane_of(a, b) * self.geom.pixels() + row * self.geom.width + col]
    }

    fn set(&mut self, row: usize, col: usize, a: isize, b: isize, value: f64) {
        let idx = self.geom.plane_of(a, b) * self.geom.pixels() + row * self.geom.width + col;
        self.raw[idx] = value;
    }
}

/// Normalized propagation weights with derived center weights.
///
/// For every pixel the off-center absolute weights sum to at most one and all
/// weights, center included, sum to one. Under zero padding the weight of any
/// offset that points outside the grid is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedKernelField {
    geom: Geometry,
    weights: Vec<f64>,
    degenerate: usize,
}

impl NormalizedKernelField {
    /// Every pixel keeps its own value.
    pub fn identity(height: usize, width: usize, kernel_size: usize, boundary: BoundaryPolicy) -> Result<Self> {
        let geom = Geometry::new(height, width, kernel_size, boundary)?;
        let mut weights = vec![0.0; geom.planes() * geom.pixels()];
        let c = geom.center_plane() * geom.pixels();
        weights[c..c + geom.pixels()].fill(1.0);
        Ok(NormalizedKernelField {
            geom,
            weights,
            degenerate: 0,
        })
    }

    /// Builds a field from already-normalized off-center weights
    /// `f(row, col, a, b)`. Weights pointing outside the grid are dropped under
    /// zero padding and the center weight is derived from the rest.
    pub fn from_off_center(
        height: usize,
        width: usize,
        kernel_size: usize,
        boundary: BoundaryPolicy,
        mut f: impl FnMut(usize, usize, isize, isize) -> f64,
    ) -> Result<Self> {
        let geom = Geometry::new(height, width, kernel_size, boundary)?;
        let mut field = NormalizedKernelField {
            geom,
            weights: vec![0.0; geom.planes() * geom.pixels()],
            degenerate: 0,
        };
        for i in 0..height {
            for j in 0..width {
                let mut abs_sum = 0.0;
                for (a, b) in kernel_offsets(kernel_size) {
                    if (a, b) == (0, 0) || geom.neighbor(i, j, a, b).is_none() {
                        continue;
                    }
                    let w = f(i, j, a, b);
                    if !w.is_finite() {
                        return Err(Error::NonFiniteValue { row: i, col: j });
                    }
                    abs_sum += w.abs();
                    field.set(i, j, a, b, w);
                }
                if abs_sum > 1.0 + 1e-12 {
                    return Err(Error::InvalidKernel {
                        row: i,
                        col: j,
                        reason: "off-center absolute weights sum above 1",
                    });
                }
                field.derive_center(i, j);
            }
        }
        Ok(field)
    }

    fn set(&mut self, row: usize, col: usize, a: isize, b: isize, value: f64) {
        let idx = self.geom.plane_of(a, b) * self.geom.pixels() + row * self.geom.width + col;
        self.weights[idx] = value;
    }

    fn derive_center(&mut self, row: usize, col: usize) {
        let lambda = self.lambda(row, col);
        self.set(row, col, 0, 0, 1.0 - lambda);
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.geom.height, self.geom.width)
    }

    pub fn kernel_size(&self) -> usize {
        self.geom.kernel_size
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        self.geom.boundary
    }

    /// Pixels that had no usable affinity and fell back to the identity kernel.
    pub fn degenerate_pixels(&self) -> usize {
        self.degenerate
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize, a: isize, b: isize) -> f64 {
        self.weights[self.geom.plane_of(a, b) * self.geom.pixels() + row * self.geom.width + col]
    }

    pub fn center(&self, row: usize, col: usize) -> f64 {
        self.weight(row, col, 0, 0)
    }

    /// Sum of the off-center weights of one pixel.
    pub fn lambda(&self, row: usize, col: usize) -> f64 {
        kernel_offsets(self.geom.kernel_size)
            .filter(|&o| o != (0, 0))
            .map(|(a, b)| self.weight(row, col, a, b))
            .sum()
    }

    /// Weight plane of offset `(a, b)`, row-major over pixels.
    #[inline]
    pub fn plane(&self, a: isize, b: isize) -> &[f64] {
        let p = self.geom.plane_of(a, b) * self.geom.pixels();
        &self.weights[p..p + self.geom.pixels()]
    }

    /// Resolves the neighbor that offset `(a, b)` of pixel `(row, col)` reads.
    #[inline]
    pub fn neighbor(&self, row: usize, col: usize, a: isize, b: isize) -> Option<(usize, usize)> {
        self.geom.neighbor(row, col, a, b)
    }

    /// True when every off-center weight is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        let c = self.geom.center_plane();
        self.weights
            .chunks(self.geom.pixels())
            .enumerate()
            .all(|(p, plane)| p == c || plane.iter().all(|&w| w >= 0.0))
    }

    /// Replaces the weight at one offset, re-deriving the center.
    #[doc(hidden)]
    pub fn perturb(&mut self, row: usize, col: usize, a: isize, b: isize, delta: f64) {
        let w = self.weight(row, col, a, b);
        self.set(row, col, a, b, w + delta);
        self.derive_center(row, col);
    }
}

/// Divides each off-center raw weight by the pixel's off-center absolute sum
/// and sets the center to one minus the resulting off-center sum.
///
/// Pixels whose off-center raw values are all zero get the identity kernel;
/// their count is reported by [`NormalizedKernelField::degenerate_pixels`].
pub fn normalize_kernels(raw: &RawKernelField) -> NormalizedKernelField {
    let geom = raw.geom;
    let mut field = NormalizedKernelField {
        geom,
        weights: vec![0.0; geom.planes() * geom.pixels()],
        degenerate: 0,
    };
    let offsets: Vec<_> = kernel_offsets(geom.kernel_size).filter(|&o| o != (0, 0)).collect();
    for i in 0..geom.height {
        for j in 0..geom.width {
            let live: Vec<(isize, isize)> = offsets
                .iter()
                .copied()
                .filter(|&(a, b)| geom.neighbor(i, j, a, b).is_some())
                .collect();
            let scale = live.iter().fold(0.0_f64, |m, &(a, b)| m.max(raw.get(i, j, a, b).abs()));
            if scale == 0.0 {
                field.set(i, j, 0, 0, 1.0);
                field.degenerate += 1;
                continue;
            }
            // Pre-scaling by the largest magnitude keeps the denominator finite.
            let denom: f64 = live.iter().map(|&(a, b)| (raw.get(i, j, a, b) / scale).abs()).sum();
            for &(a, b) in &live {
                field.set(i, j, a, b, raw.get(i, j, a, b) / scale / denom);
            }
            field.derive_center(i, j);
        }
    }
    field
}

/// Edge-aware Gaussian color affinity:
/// `exp(-|X(i,j) - X(i-a,j-b)|^2 / (2 sigma^2))`, zero for neighbors outside
/// the grid under zero padding.
pub fn designed_affinity(
    image: &Image,
    kernel_size: usize,
    sigma_color: f64,
    boundary: BoundaryPolicy,
) -> Result<RawKernelField> {
    check_kernel_size(kernel_size)?;
    if !(sigma_color.is_finite() && sigma_color > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_color {sigma_color}")));
    }
    let inv = 1.0 / (2.0 * sigma_color * sigma_color);
    let (h, w) = image.dims();
    RawKernelField::from_fn(h, w, kernel_size, boundary, |i, j, a, b| {
        match boundary.resolve(i as isize - a, j as isize - b, h, w) {
            Some(nb) => (-image.color_distance_sq((i, j), nb) * inv).exp(),
            None => 0.0,
        }
    })
}

/// Affinity with both signs: the Gaussian similarity `s` becomes
/// `s - edge_gain * (1 - s)`, so neighbors across strong edges get negative
/// weight. Uses [`DEFAULT_SIGMA_COLOR`] as the bandwidth.
pub fn signed_affinity(
    image: &Image,
    kernel_size: usize,
    edge_gain: f64,
    boundary: BoundaryPolicy,
) -> Result<RawKernelField> {
    if !(edge_gain.is_finite() && edge_gain >= 0.0) {
        return Err(Error::InvalidParameter(format!("edge_gain {edge_gain}")));
    }
    let mut field = designed_affinity(image, kernel_size, DEFAULT_SIGMA_COLOR, boundary)?;
    let (h, w) = image.dims();
    for (a, b) in kernel_offsets(kernel_size).filter(|&o| o != (0, 0)) {
        for i in 0..h {
            for j in 0..w {
                if boundary.resolve(i as isize - a, j as isize - b, h, w).is_some() {
                    let s = field.get(i, j, a, b);
                    field.set(i, j, a, b, s - edge_gain * (1.0 - s));
                }
            }
        }
    }
    Ok(field)
}

/// Random raw field for testing and benchmarking. Signed fields draw from
/// `[-1, 1]`, unsigned ones from `[0.05, 1]`.
pub fn random_raw_field<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    kernel_size: usize,
    boundary: BoundaryPolicy,
    signed: bool,
    rng: &mut R,
) -> Result<RawKernelField> {
    RawKernelField::from_fn(height, width, kernel_size, boundary, |_, _, _, _| {
        if signed {
            rng.random_range(-1.0..=1.0)
        } else {
            rng.random_range(0.05..=1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_normalized(f: &NormalizedKernelField) {
        for i in 0..f.height() {
            for j in 0..f.width() {
                let total: f64 = kernel_offsets(f.kernel_size()).map(|(a, b)| f.weight(i, j, a, b)).sum();
                assert!((total - 1.0).abs() <= 1e-12, "sum {total} at ({i},{j})");
                let abs: f64 = kernel_offsets(f.kernel_size())
                    .filter(|&o| o != (0, 0))
                    .map(|(a, b)| f.weight(i, j, a, b).abs())
                    .sum();
                assert!(abs <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn uniform_raw_gives_one_eighth() {
        let raw = RawKernelField::from_fn(3, 3, 3, BoundaryPolicy::ClampToEdge, |_, _, _, _| 1.0).unwrap();
        let f = normalize_kernels(&raw);
        for (a, b) in kernel_offsets(3).filter(|&o| o != (0, 0)) {
            assert_eq!(f.weight(1, 1, a, b), 0.125);
        }
        assert_eq!(f.center(1, 1), 0.0);
        check_normalized(&f);
    }

    #[test]
    fn cancelling_raw_gives_unit_center() {
        let raw = RawKernelField::from_fn(3, 3, 3, BoundaryPolicy::ZeroPad, |_, _, a, b| match (a, b) {
            (0, 1) => 2.0,
            (0, -1) => -2.0,
            _ => 0.0,
        })
        .unwrap();
        let f = normalize_kernels(&raw);
        assert_eq!(f.weight(1, 1, 0, 1), 0.5);
        assert_eq!(f.weight(1, 1, 0, -1), -0.5);
        assert_eq!(f.weight(1, 1, 1, 0), 0.0);
        assert_eq!(f.center(1, 1), 1.0);
        assert_eq!(f.lambda(1, 1), 0.0);
    }

    #[test]
    fn all_zero_raw_falls_back_to_identity() {
        let raw = RawKernelField::from_fn(2, 2, 3, BoundaryPolicy::ZeroPad, |_, _, _, _| 0.0).unwrap();
        let f = normalize_kernels(&raw);
        assert_eq!(f.degenerate_pixels(), 4);
        let id = NormalizedKernelField::identity(2, 2, 3, BoundaryPolicy::ZeroPad).unwrap();
        assert_eq!(f.weights, id.weights);
    }

    #[test]
    fn zero_pad_drops_outside_offsets() {
        let raw = RawKernelField::from_fn(3, 3, 3, BoundaryPolicy::ZeroPad, |_, _, _, _| 1.0).unwrap();
        let f = normalize_kernels(&raw);
        // Corner (0,0) reads (0-a, 0-b); only offsets with a,b <= 0 stay inside.
        assert_eq!(f.weight(0, 0, 1, 0), 0.0);
        assert!((f.weight(0, 0, -1, -1) - 1.0 / 3.0).abs() < 1e-15);
        check_normalized(&f);
    }

    #[test]
    fn designed_affinity_constant_image() {
        let img = Image::gray_from_fn(4, 5, |_, _| 0.3).unwrap();
        let raw = designed_affinity(&img, 3, 0.1, BoundaryPolicy::ZeroPad).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                for (a, b) in kernel_offsets(3).filter(|&o| o != (0, 0)) {
                    let inside = BoundaryPolicy::ZeroPad
                        .resolve(i as isize - a, j as isize - b, 4, 5)
                        .is_some();
                    assert_eq!(raw.get(i, j, a, b), if inside { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn designed_affinity_hard_edge() {
        let delta = 0.6;
        let img = Image::gray_from_fn(4, 6, |_, c| if c < 3 { 0.2 } else { 0.2 + delta }).unwrap();
        let raw = designed_affinity(&img, 3, 0.1, BoundaryPolicy::ZeroPad).unwrap();
        // (1,2) reading (1,3) crosses the edge: offset b = -1.
        assert!(raw.get(1, 2, 0, -1) <= (-50.0 * delta * delta).exp() * (1.0 + 1e-12));
        assert_eq!(raw.get(1, 2, 0, 1), 1.0);
        assert_eq!(raw.get(1, 1, 1, 1), 1.0);
    }

    #[test]
    fn single_pixel_image_is_degenerate() {
        let img = Image::gray_from_fn(1, 1, |_, _| 0.5).unwrap();
        let raw = designed_affinity(&img, 3, 0.1, BoundaryPolicy::ZeroPad).unwrap();
        assert!(kernel_offsets(3).all(|(a, b)| raw.get(0, 0, a, b) == 0.0));
        let f = normalize_kernels(&raw);
        assert_eq!(f.degenerate_pixels(), 1);
        assert_eq!(f.center(0, 0), 1.0);
    }

    #[test]
    fn signed_affinity_signs() {
        let flat = Image::gray_from_fn(4, 4, |_, _| 0.5).unwrap();
        let raw = signed_affinity(&flat, 3, 2.0, BoundaryPolicy::ZeroPad).unwrap();
        let f = normalize_kernels(&raw);
        assert!(f.is_nonnegative());

        let edge = Image::gray_from_fn(4, 4, |_, c| if c < 2 { 0.0 } else { 1.0 }).unwrap();
        let raw = signed_affinity(&edge, 3, 1.0, BoundaryPolicy::ZeroPad).unwrap();
        assert!(raw.get(1, 1, 0, -1) < 0.0);
        let f = normalize_kernels(&raw);
        assert!(!f.is_nonnegative());
        check_normalized(&f);
    }

    #[test]
    fn from_off_center_derives_centers() {
        let f = NormalizedKernelField::from_off_center(3, 3, 3, BoundaryPolicy::ZeroPad, |_, _, _, _| 0.125).unwrap();
        assert_eq!(f.center(1, 1), 0.0);
        assert_eq!(f.center(0, 1), 1.0 - 5.0 * 0.125);
        assert_eq!(f.center(0, 0), 1.0 - 3.0 * 0.125);
        assert!(NormalizedKernelField::from_off_center(3, 3, 3, BoundaryPolicy::ZeroPad, |_, _, _, _| 0.2).is_err());
    }

    #[test]
    fn random_fields_normalize_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &boundary in &[BoundaryPolicy::ZeroPad, BoundaryPolicy::ClampToEdge] {
            for &k in &[3, 5] {
                for &signed in &[false, true] {
                    let raw = random_raw_field(5, 4, k, boundary, signed, &mut rng).unwrap();
                    check_normalized(&normalize_kernels(&raw));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn normalization_is_scale_invariant(seed in any::<u64>(), scale in 1e-6f64..1e6, k in prop::sample::select(vec![3usize, 5])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_raw_field(4, 4, k, BoundaryPolicy::ZeroPad, true, &mut rng).unwrap();
            let scaled = RawKernelField::from_fn(4, 4, k, BoundaryPolicy::ZeroPad, |i, j, a, b| raw.get(i, j, a, b) * scale).unwrap();
            let f1 = normalize_kernels(&raw);
            let f2 = normalize_kernels(&scaled);
            for i in 0..4 {
                for j in 0..4 {
                    for (a, b) in kernel_offsets(k) {
                        prop_assert!((f1.weight(i, j, a, b) - f2.weight(i, j, a, b)).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn normalized_fields_sum_to_one(seed in any::<u64>(), signed in any::<bool>(), clamp in any::<bool>()) {
            let boundary = if clamp { BoundaryPolicy::ClampToEdge } else { BoundaryPolicy::ZeroPad };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_raw_field(3, 6, 3, boundary, signed, &mut rng).unwrap();
            check_normalized(&normalize_kernels(&raw));
        }

        #[test]
        fn designed_affinity_mirrors_with_image(values in prop::collection::vec(0.0f64..=1.0, 20)) {
            let img = Image::new(4, 5, 1, values).unwrap();
            let a = designed_affinity(&img, 3, 0.1, BoundaryPolicy::ZeroPad).unwrap();
            let b = designed_affinity(&img.flip_horizontal(), 3, 0.1, BoundaryPolicy::ZeroPad).unwrap();
            for i in 0..4 {
                for j in 0..5 {
                    for (da, db) in kernel_offsets(3) {
                        prop_assert_eq!(a.get(i, j, da, db), b.get(i, 4 - j, da, -db));
                    }
                }
            }
        }
    }
}
