//! Serial scan-line propagation baseline.
//!
//! Each directional pass sweeps the grid one row or column at a time; every
//! pixel of a scan line mixes its own input value with the three adjacent,
//! already-updated pixels of the previous line. Four passes (L->R, R->L, T->B,
//! B->T) are merged by keeping, per pixel, the value of largest magnitude.
//! This approximates the original four-direction network rather than
//! reproducing it.

use crate::error::{Error, Result};
use crate::grid::{DepthMap, Image, SparseDepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
    TopToBottom,
    BottomToTop,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::LeftToRight,
        Direction::RightToLeft,
        Direction::TopToBottom,
        Direction::BottomToTop,
    ];

    fn index(self) -> usize {
        self as usize
    }

    /// Neighbor in the previous scan line for slot `s` in `-1..=1`.
    #[inline]
    fn previous(self, row: usize, col: usize, s: isize) -> (isize, isize) {
        let (r, c) = (row as isize, col as isize);
        match self {
            Direction::LeftToRight => (r + s, c - 1),
            Direction::RightToLeft => (r + s, c + 1),
            Direction::TopToBottom => (r - 1, c + s),
            Direction::BottomToTop => (r + 1, c + s),
        }
    }
}

/// Three signed weights per pixel for each scan direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalKernelField {
    height: usize,
    width: usize,
    weights: [Vec<[f64; 3]>; 4],
}

impl DirectionalKernelField {
    /// `weights[d][row * width + col][s + 1]` is the weight of slot `s` for
    /// direction `Direction::ALL[d]`.
    pub fn new(height: usize, width: usize, weights: [Vec<[f64; 3]>; 4]) -> Result<Self> {
        for dir in &weights {
            if dir.len() != height * width {
                return Err(Error::InvalidGrid(format!(
                    "directional field has {} pixels, expected {}",
                    dir.len(),
                    height * width
                )));
            }
            for (p, w) in dir.iter().enumerate() {
                let (row, col) = (p / width, p % width);
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue { row, col });
                }
                if w.iter().map(|v| v.abs()).sum::<f64>() > 1.0 + 1e-12 {
                    return Err(Error::InvalidKernel {
                        row,
                        col,
                        reason: "directional absolute weights sum above 1",
                    });
                }
            }
        }
        Ok(DirectionalKernelField { height, width, weights })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        let z = vec![[0.0; 3]; height * width];
        DirectionalKernelField {
            height,
            width,
            weights: [z.clone(), z.clone(), z.clone(), z],
        }
    }

    /// Gaussian color affinity to the three previous-line neighbors. Each
    /// triple is divided by `1 + sum`, the `1` standing for the pixel's
    /// similarity to itself, so every pixel keeps part of its own input.
    pub fn from_image(image: &Image, sigma_color: f64) -> Result<Self> {
        if !(sigma_color.is_finite() && sigma_color > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma_color {sigma_color}")));
        }
        let (h, w) = image.dims();
        let inv = 1.0 / (2.0 * sigma_color * sigma_color);
        let mut field = Self::zeros(h, w);
        for dir in Direction::ALL {
            let plane = &mut field.weights[dir.index()];
            for i in 0..h {
                for j in 0..w {
                    let mut raw = [0.0; 3];
                    for s in -1..=1 {
                        let (r, c) = dir.previous(i, j, s);
                        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                            let d2 = image.color_distance_sq((i, j), (r as usize, c as usize));
                            raw[(s + 1) as usize] = (-d2 * inv).exp();
                        }
                    }
                    let norm = 1.0 + raw.iter().sum::<f64>();
                    plane[i * w + j] = raw.map(|v| v / norm);
                }
            }
        }
        Ok(field)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, dir: Direction, row: usize, col: usize) -> [f64; 3] {
        self.weights[dir.index()][row * self.width + col]
    }

    /// Sets the weights of one pixel for one direction.
    pub fn set(&mut self, dir: Direction, row: usize, col: usize, w: [f64; 3]) -> Result<()> {
        if w.iter().map(|v| v.abs()).sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::InvalidKernel {
                row,
                col,
                reason: "directional absolute weights sum above 1",
            });
        }
        self.weights[dir.index()][row * self.width + col] = w;
        Ok(())
    }
}

fn update_pixel(
    out: &mut [f64],
    state: &[f64],
    weights: &[[f64; 3]],
    dir: Direction,
    (h, w): (usize, usize),
    i: usize,
    j: usize,
) {
    let p = i * w + j;
    let x = state[p];
    let mut v = x;
    for (slot, &wt) in weights[p].iter().enumerate() {
        let (r, c) = dir.previous(i, j, slot as isize - 1);
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            v += wt * (out[r as usize * w + c as usize] - x);
        }
    }
    out[p] = v;
}

fn sweep(
    state: &[f64],
    weights: &DirectionalKernelField,
    dir: Direction,
    anchors: Option<&SparseDepthMap>,
) -> Vec<f64> {
    let (h, w) = weights.dims();
    let plane = &weights.weights[dir.index()];
    let mut out = state.to_vec();
    let pin = |out: &mut [f64], line_hit: &dyn Fn(usize, usize) -> bool| {
        if let Some(sp) = anchors {
            for a in sp.anchors().iter().filter(|a| line_hit(a.row, a.col)) {
                out[a.row * w + a.col] = a.depth;
            }
        }
    };
    match dir {
        Direction::LeftToRight | Direction::RightToLeft => {
            let cols: Vec<usize> = if dir == Direction::LeftToRight {
                (0..w).collect()
            } else {
                (0..w).rev().collect()
            };
            pin(&mut out, &|_, c| c == cols[0]);
            for &j in &cols[1..] {
                for i in 0..h {
                    update_pixel(&mut out, state, plane, dir, (h, w), i, j);
                }
                pin(&mut out, &|_, c| c == j);
            }
        }
        Direction::TopToBottom | Direction::BottomToTop => {
            let rows: Vec<usize> = if dir == Direction::TopToBottom {
                (0..h).collect()
            } else {
                (0..h).rev().collect()
            };
            pin(&mut out, &|r, _| r == rows[0]);
            for &i in &rows[1..] {
                for j in 0..w {
                    update_pixel(&mut out, state, plane, dir, (h, w), i, j);
                }
                pin(&mut out, &|r, _| r == i);
            }
        }
    }
    out
}

/// One directional scan. The first scan line is copied unchanged.
pub fn spn_pass(state: &DepthMap, weights: &DirectionalKernelField, direction: Direction) -> Result<DepthMap> {
    state.check_dims(weights.height, weights.width)?;
    let out = sweep(state.as_slice(), weights, direction, None);
    Ok(DepthMap::from_parts(state.height(), state.width(), out))
}

/// Four directional passes merged by per-pixel maximum magnitude.
///
/// Anchored pixels are written into each pass's input and re-pinned after
/// every scan line, so they hold their sparse values throughout.
pub fn spn_refine(state: &DepthMap, weights: &DirectionalKernelField, sparse: &SparseDepthMap) -> Result<DepthMap> {
    state.check_dims(weights.height, weights.width)?;
    state.check_dims(sparse.height(), sparse.width())?;
    let mut input = state.clone();
    sparse.write_into(&mut input)?;
    let anchors = (!sparse.is_empty()).then_some(sparse);
    let mut merged: Option<Vec<f64>> = None;
    for dir in Direction::ALL {
        let pass = sweep(input.as_slice(), weights, dir, anchors);
        merged = Some(match merged {
            None => pass,
            Some(mut m) => {
                for (m, p) in m.iter_mut().zip(pass) {
                    if p.abs() > m.abs() {
                        *m = p;
                    }
                }
                m
            }
        });
    }
    let mut out = DepthMap::from_parts(state.height(), state.width(), merged.unwrap_or_default());
    sparse.write_into(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Anchor;

    fn gradient_image(h: usize, w: usize) -> Image {
        Image::gray_from_fn(h, w, |r, c| ((r * 7 + c * 3) % 10) as f64 / 10.0).unwrap()
    }

    #[test]
    fn zero_weights_copy_input() {
        let s = DepthMap::from_fn(4, 5, |r, c| (r + 2 * c) as f64).unwrap();
        let z = DirectionalKernelField::zeros(4, 5);
        for dir in Direction::ALL {
            assert_eq!(spn_pass(&s, &z, dir).unwrap(), s);
        }
        assert_eq!(spn_refine(&s, &z, &SparseDepthMap::empty(4, 5).unwrap()).unwrap(), s);
    }

    #[test]
    fn constant_input_is_fixed() {
        let img = gradient_image(5, 6);
        let f = DirectionalKernelField::from_image(&img, 0.1).unwrap();
        let s = DepthMap::filled(5, 6, 2.5).unwrap();
        for dir in Direction::ALL {
            assert_eq!(spn_pass(&s, &f, dir).unwrap(), s);
        }
    }

    #[test]
    fn one_pass_reaches_the_far_end() {
        let w = 0.6;
        let mut f = DirectionalKernelField::zeros(1, 3);
        for c in 0..3 {
            f.set(Direction::LeftToRight, 0, c, [0.0, w, 0.0]).unwrap();
        }
        let s = DepthMap::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let out = spn_pass(&s, &f, Direction::LeftToRight).unwrap();
        assert_eq!(out.as_slice(), &[1.0, w, w * w]);
    }

    #[test]
    fn refine_preserves_anchors() {
        let img = gradient_image(6, 6);
        let f = DirectionalKernelField::from_image(&img, 0.2).unwrap();
        let s = DepthMap::from_fn(6, 6, |r, c| 1.0 + 0.1 * (r * c) as f64).unwrap();
        let sparse = SparseDepthMap::new(
            6,
            6,
            vec![
                Anchor {
                    row: 0,
                    col: 0,
                    depth: 7.0,
                },
                Anchor {
                    row: 3,
                    col: 4,
                    depth: 0.25,
                },
            ],
        )
        .unwrap();
        let out = spn_refine(&s, &f, &sparse).unwrap();
        assert_eq!(out.get(0, 0), 7.0);
        assert_eq!(out.get(3, 4), 0.25);
    }

    #[test]
    fn weight_sums_are_bounded() {
        let mut f = DirectionalKernelField::zeros(2, 2);
        assert!(f.set(Direction::TopToBottom, 0, 0, [0.5, 0.4, -0.2]).is_err());
        let img = gradient_image(4, 4);
        let g = DirectionalKernelField::from_image(&img, 0.05).unwrap();
        for dir in Direction::ALL {
            for r in 0..4 {
                for c in 0..4 {
                    assert!(g.get(dir, r, c).iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = DepthMap::filled(3, 3, 1.0).unwrap();
        let z = DirectionalKernelField::zeros(3, 4);
        assert!(spn_pass(&s, &z, Direction::LeftToRight).is_err());
    }
}
