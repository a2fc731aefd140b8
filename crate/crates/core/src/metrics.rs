//! Depth evaluation metrics and Sobel-gradient error histograms.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{DepthMap, SparseDepthMap};

/// Ratio thresholds reported by [`evaluate`], ascending.
pub const DELTA_THRESHOLDS: [f64; 6] = [1.02, 1.05, 1.10, 1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];

/// Names used for the thresholds in serialized reports.
pub const DELTA_NAMES: [&str; 6] = ["1.02", "1.05", "1.10", "1.25", "1.25^2", "1.25^3"];

/// Default histogram resolution.
pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub abs_rel: f64,
    /// Fraction of valid pixels with `max(d*/d, d/d*) < t`, one per threshold.
    pub delta: [f64; 6],
    pub pixels: usize,
}

impl EvalReport {
    pub fn delta_at(&self, threshold: f64) -> Option<f64> {
        DELTA_THRESHOLDS
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.delta[i])
    }

    /// Human-readable summary; delta fractions shown as percentages.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "pixels   {}\nRMSE     {:.6} m\nAbs Rel  {:.6}\n",
            self.pixels, self.rmse, self.abs_rel
        );
        for (name, d) in DELTA_NAMES.iter().zip(&self.delta) {
            let _ = writeln!(s, "δ<{name:<7}{:.2}%", d * 100.0);
        }
        s
    }

    /// One `name=value` line per metric, values at full precision.
    pub fn to_key_value(&self) -> String {
        let mut s = format!("pixels={}\nrmse={}\nabs_rel={}\n", self.pixels, self.rmse, self.abs_rel);
        for (name, d) in DELTA_NAMES.iter().zip(&self.delta) {
            let _ = writeln!(s, "delta_{name}={d}");
        }
        s
    }
}

/// RMSE, mean absolute relative error and threshold accuracies over the
/// pixels where `valid_mask` is set (all pixels when absent).
///
/// Pixels with a nonpositive prediction count as misses for every threshold.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, valid_mask: Option<&[bool]>) -> Result<EvalReport> {
    pred.check_dims(gt.height(), gt.width())?;
    if let Some(m) = valid_mask {
        if m.len() != gt.len() {
            return Err(Error::InvalidGrid(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                gt.len()
            )));
        }
    }
    let mut sq = 0.0;
    let mut rel = 0.0;
    let mut hits = [0usize; 6];
    let mut n = 0usize;
    for (p, (&d, &g)) in pred.as_slice().iter().zip(gt.as_slice()).enumerate() {
        if valid_mask.is_some_and(|m| !m[p]) {
            continue;
        }
        if g <= 0.0 {
            return Err(Error::NonPositiveGroundTruth {
                row: p / gt.width(),
                col: p % gt.width(),
                value: g,
            });
        }
        n += 1;
        let e = g - d;
        sq += e * e;
        rel += e.abs() / g;
        if d > 0.0 {
            let ratio = (g / d).max(d / g);
            for (hit, &t) in hits.iter_mut().zip(&DELTA_THRESHOLDS) {
                if ratio < t {
                    *hit += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyValidSet);
    }
    let nf = n as f64;
    Ok(EvalReport {
        rmse: (sq / nf).sqrt(),
        abs_rel: rel / nf,
        delta: hits.map(|h| h as f64 / nf),
        pixels: n,
    })
}

/// Horizontal derivative; the one-pixel border has no value.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GradientField {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        row >= 1 && col >= 1 && row + 1 < self.height && col + 1 < self.width
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.is_valid(row, col).then(|| self.values[row * self.width + col])
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];

/// 3x3 Sobel derivative along columns.
pub fn sobel_x(depth: &DepthMap) -> Result<GradientField> {
    let (h, w) = depth.dims();
    if h < 3 || w < 3 {
        return Err(Error::GridTooSmall {
            height: h,
            width: w,
            min: 3,
        });
    }
    let mut values = vec![0.0; h * w];
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let mut acc = 0.0;
            for (di, row) in SOBEL_X.iter().enumerate() {
                for (dj, &k) in row.iter().enumerate() {
                    if k != 0.0 {
                        acc += k * depth.get(i + di - 1, j + dj - 1);
                    }
                }
            }
            values[i * w + j] = acc;
        }
    }
    Ok(GradientField {
        height: h,
        width: w,
        values,
    })
}

/// Uniform-bin histogram over `[0, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub hi: f64,
    pub counts: Vec<usize>,
    pub total: usize,
    /// Mean of the binned samples, zero when empty.
    pub mean: f64,
}

impl Histogram {
    /// Bins `samples` into `bins` uniform bins over `[0, max sample]`. A zero
    /// maximum uses `[0, 1]` so that all mass lands in the first bin.
    pub fn from_samples(samples: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        let max = samples.iter().copied().fold(0.0_f64, f64::max);
        let hi = if max > 0.0 { max } else { 1.0 };
        let mut counts = vec![0; bins];
        for &s in samples {
            let b = ((s / hi) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let mean = if samples.is_empty() {
            0.0
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        Ok(Histogram {
            hi,
            counts,
            total: samples.len(),
            mean,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let width = self.hi / self.bins() as f64;
        (bin as f64 * width, (bin + 1) as f64 * width)
    }

    /// `bin_lo,bin_hi,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (b, c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(b);
            let _ = writeln!(s, "{lo},{hi},{c}");
        }
        s
    }
}

/// Sobel-x gradient error of a prediction at anchor pixels.
pub type GradientErrorHistogram = Histogram;

/// `|sobel_x(pred) - sobel_x(gt)|` sampled at anchors off the border.
pub fn gradient_errors(pred: &DepthMap, gt: &DepthMap, sparse: &SparseDepthMap) -> Result<Vec<f64>> {
    pred.check_dims(gt.height(), gt.width())?;
    pred.check_dims(sparse.height(), sparse.width())?;
    let gp = sobel_x(pred)?;
    let gg = sobel_x(gt)?;
    Ok(sparse
        .anchors()
        .iter()
        .filter_map(|a| Some((gp.get(a.row, a.col)? - gg.get(a.row, a.col)?).abs()))
        .collect())
}

pub fn gradient_error_hist(
    pred: &DepthMap,
    gt: &DepthMap,
    sparse: &SparseDepthMap,
    bins: usize,
) -> Result<GradientErrorHistogram> {
    Histogram::from_samples(&gradient_errors(pred, gt, sparse)?, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Anchor;
    use proptest::prelude::*;

    #[test]
    fn identical_maps() {
        let d = DepthMap::from_fn(4, 4, |r, c| 1.0 + (r + c) as f64).unwrap();
        let r = evaluate(&d, &d, None).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.abs_rel, 0.0);
        assert!(r.delta.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn constant_offset_uses_strict_thresholds() {
        let gt = DepthMap::filled(3, 4, 2.0).unwrap();
        let pred = DepthMap::filled(3, 4, 2.5).unwrap();
        let r = evaluate(&pred, &gt, None).unwrap();
        assert_eq!(r.rmse, 0.5);
        assert_eq!(r.abs_rel, 0.25);
        assert_eq!(r.delta, [0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(r.delta_at(1.25), Some(0.0));
    }

    #[test]
    fn error_paths() {
        let gt = DepthMap::filled(2, 2, 1.0).unwrap();
        let pred = DepthMap::filled(2, 3, 1.0).unwrap();
        assert!(matches!(
            evaluate(&pred, &gt, None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            evaluate(&gt, &gt, Some(&[false; 4])),
            Err(Error::EmptyValidSet)
        ));
        let bad = DepthMap::new(2, 2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            evaluate(&gt, &bad, None),
            Err(Error::NonPositiveGroundTruth { .. })
        ));
        // The zero is masked out.
        assert!(evaluate(&gt, &bad, Some(&[true, false, true, true])).is_ok());
    }

    #[test]
    fn nonpositive_prediction_is_a_miss() {
        let gt = DepthMap::filled(1, 2, 1.0).unwrap();
        let pred = DepthMap::new(1, 2, vec![1.0, -1.0]).unwrap();
        let r = evaluate(&pred, &gt, None).unwrap();
        assert_eq!(r.delta, [0.5; 6]);
    }

    #[test]
    fn sobel_cases() {
        let flat = DepthMap::filled(4, 5, 3.0).unwrap();
        let g = sobel_x(&flat).unwrap();
        assert_eq!(g.get(1, 1), Some(0.0));
        assert_eq!(g.get(0, 1), None);

        let ramp = DepthMap::from_fn(5, 6, |_, c| c as f64).unwrap();
        let g = sobel_x(&ramp).unwrap();
        for i in 1..4 {
            for j in 1..5 {
                assert_eq!(g.get(i, j), Some(8.0));
            }
        }

        let mut spike = DepthMap::filled(5, 5, 0.0).unwrap();
        spike.set(2, 2, 1.0).unwrap();
        let g = sobel_x(&spike).unwrap();
        // Correlation with [-1 0 1; -2 0 2; -1 0 1] on an impulse mirrors it.
        let expect = [[1.0, 0.0, -1.0], [2.0, 0.0, -2.0], [1.0, 0.0, -1.0]];
        for (di, row) in expect.iter().enumerate() {
            for (dj, &v) in row.iter().enumerate() {
                assert_eq!(g.get(1 + di, 1 + dj), Some(v));
            }
        }
        assert!(matches!(
            sobel_x(&DepthMap::filled(2, 5, 0.0).unwrap()),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn histogram_cases() {
        let d = DepthMap::from_fn(5, 5, |r, c| 1.0 + (r * c) as f64).unwrap();
        let sparse = SparseDepthMap::new(
            5,
            5,
            vec![
                Anchor {
                    row: 2,
                    col: 2,
                    depth: 1.0,
                },
                Anchor {
                    row: 0,
                    col: 2,
                    depth: 1.0,
                },
                Anchor {
                    row: 3,
                    col: 1,
                    depth: 1.0,
                },
            ],
        )
        .unwrap();
        let h = gradient_error_hist(&d, &d, &sparse, DEFAULT_BINS).unwrap();
        assert_eq!(h.total, 2);
        assert_eq!(h.counts[0], 2);

        let empty = SparseDepthMap::empty(5, 5).unwrap();
        let h = gradient_error_hist(&d, &d, &empty, DEFAULT_BINS).unwrap();
        assert_eq!(h.total, 0);
        assert!(h.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn histogram_csv_layout() {
        let h = Histogram::from_samples(&[0.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(h.to_csv(), "bin_lo,bin_hi,count\n0,1,1\n1,2,2\n");
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(0.1f64..10.0, n),
                prop::collection::vec(-1.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn report_invariants((gt, pred) in pairs(), s in 0.1f64..10.0) {
            let n = gt.len();
            let g = DepthMap::new(1, n, gt.clone()).unwrap();
            let p = DepthMap::new(1, n, pred.clone()).unwrap();
            let r = evaluate(&p, &g, None).unwrap();
            prop_assert!(r.delta.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.rmse >= 0.0 && r.abs_rel >= 0.0);

            let rev = |v: &Vec<f64>| DepthMap::new(1, n, v.iter().rev().copied().collect()).unwrap();
            let rr = evaluate(&rev(&pred), &rev(&gt), None).unwrap();
            prop_assert!((rr.rmse - r.rmse).abs() <= 1e-12 * (1.0 + r.rmse));
            prop_assert_eq!(rr.delta, r.delta);

            let scale = |v: &Vec<f64>| DepthMap::new(1, n, v.iter().map(|x| x * s).collect()).unwrap();
            let rs = evaluate(&scale(&pred), &scale(&gt), None).unwrap();
            prop_assert!((rs.rmse - s * r.rmse).abs() <= 1e-9 * (1.0 + s * r.rmse));
            prop_assert!((rs.abs_rel - r.abs_rel).abs() <= 1e-9);
            prop_assert_eq!(rs.delta, r.delta);
        }
    }
}
