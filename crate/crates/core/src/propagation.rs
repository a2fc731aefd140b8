//! Convolutional spatial propagation.
//!
//! One step replaces every pixel by the kernel-weighted sum over its `k x k`
//! neighborhood, all pixels reading the same previous state. Because the
//! center weight is `1 - lambda`, the step is evaluated as
//! `H + sum_{(a,b) != 0} w(a,b) * (H[nb] - H)`, which is the same update and
//! keeps constant maps exactly fixed. Each output cell accumulates its terms in
//! row-major offset order, so results do not depend on how pixels are
//! scheduled.

use crate::affinity::{kernel_offsets, NormalizedKernelField};
use crate::error::{Error, Result};
use crate::grid::{BoundaryPolicy, DepthMap, PropagationConfig, SparseDepthMap};

/// One recorded state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub state: DepthMap,
    /// Largest absolute change from the previous state, zero at `t = 0`.
    pub max_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationTrace {
    pub entries: Vec<TraceEntry>,
    /// Steps actually applied (fewer than requested only with early stop).
    pub steps: usize,
    /// Largest per-pixel change of the final step, when it was measured.
    pub last_change: Option<f64>,
}

fn check_kernels(state: &DepthMap, kernels: &NormalizedKernelField) -> Result<()> {
    state.check_dims(kernels.height(), kernels.width())
}

fn check_config(kernels: &NormalizedKernelField, config: &PropagationConfig) -> Result<()> {
    config.validate()?;
    if kernels.kernel_size() != config.kernel_size {
        return Err(Error::KernelSizeMismatch {
            field: kernels.kernel_size(),
            config: config.kernel_size,
        });
    }
    if kernels.boundary() != config.boundary {
        return Err(Error::BoundaryMismatch);
    }
    Ok(())
}

/// `[lo, hi)` range of `j` for which `j - b` stays inside `0..width`.
#[inline]
fn inner_cols(width: usize, b: isize) -> (usize, usize) {
    let lo = b.max(0) as usize;
    let hi = (width as isize + b.min(0)).max(0) as usize;
    (lo.min(width), hi.max(lo.min(width)))
}

/// Writes one propagation step of `state` into `out`.
///
/// Rows are the outer loop so a row of `out` and its source rows stay in
/// cache while every offset is accumulated.
pub(crate) fn step_into(state: &[f64], kernels: &NormalizedKernelField, out: &mut [f64]) {
    let (h, w) = kernels.dims();
    let clamp = kernels.boundary() == BoundaryPolicy::ClampToEdge;
    let offsets: Vec<(isize, isize, &[f64], (usize, usize))> = kernel_offsets(kernels.kernel_size())
        .filter(|&o| o != (0, 0))
        .map(|(a, b)| (a, b, kernels.plane(a, b), inner_cols(w, b)))
        .collect();
    out.copy_from_slice(state);
    for i in 0..h {
        let row = i * w;
        for &(a, b, plane, (lo, hi)) in &offsets {
            let sr = i as isize - a;
            let sr = if clamp {
                sr.clamp(0, h as isize - 1) as usize
            } else if sr < 0 || sr >= h as isize {
                continue;
            } else {
                sr as usize
            };
            let src = sr * w;
            if lo < hi {
                let o = &mut out[row + lo..row + hi];
                let p = &plane[row + lo..row + hi];
                let c = &state[row + lo..row + hi];
                let s = &state[(src as isize + lo as isize - b) as usize..(src as isize + hi as isize - b) as usize];
                for (((o, &p), &c), &s) in o.iter_mut().zip(p).zip(c).zip(s) {
                    *o += p * (s - c);
                }
            }
            if clamp {
                for j in (0..lo).chain(hi..w) {
                    let sc = (j as isize - b).clamp(0, w as isize - 1) as usize;
                    out[row + j] += plane[row + j] * (state[src + sc] - state[row + j]);
                }
            }
        }
    }
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// One simultaneous propagation step.
pub fn cspn_step(state: &DepthMap, kernels: &NormalizedKernelField) -> Result<DepthMap> {
    check_kernels(state, kernels)?;
    let mut out = vec![0.0; state.len()];
    step_into(state.as_slice(), kernels, &mut out);
    Ok(DepthMap::from_parts(state.height(), state.width(), out))
}

/// One step followed by overwriting every anchored pixel with its sparse value.
///
/// Neighbors read `state` as given; anchors are not written in beforehand.
pub fn cspn_step_anchored(
    state: &DepthMap,
    kernels: &NormalizedKernelField,
    sparse: &SparseDepthMap,
) -> Result<DepthMap> {
    state.check_dims(sparse.height(), sparse.width())?;
    let mut out = cspn_step(state, kernels)?;
    sparse.write_into(&mut out)?;
    Ok(out)
}

fn run(
    initial: &DepthMap,
    kernels: &NormalizedKernelField,
    sparse: Option<&SparseDepthMap>,
    config: &PropagationConfig,
) -> Result<(DepthMap, PropagationTrace)> {
    check_kernels(initial, kernels)?;
    check_config(kernels, config)?;
    let (h, w) = initial.dims();
    let mut current = initial.clone();
    if let Some(sp) = sparse {
        sp.write_into(&mut current)?;
    }
    let anchors = sparse.map(|s| s.anchors()).unwrap_or(&[]);

    let mut trace = PropagationTrace::default();
    if config.trace {
        trace.entries.push(TraceEntry {
            iteration: 0,
            state: current.clone(),
            max_change: 0.0,
        });
    }
    let measure = config.trace || config.early_stop.is_some();
    let mut cur = current.into_vec();
    let mut next = vec![0.0; cur.len()];
    for t in 1..=config.iterations {
        step_into(&cur, kernels, &mut next);
        for a in anchors {
            next[a.row * w + a.col] = a.depth;
        }
        std::mem::swap(&mut cur, &mut next);
        trace.steps = t;
        if measure {
            let change = max_change(&cur, &next);
            trace.last_change = Some(change);
            if config.trace {
                trace.entries.push(TraceEntry {
                    iteration: t,
                    state: DepthMap::from_parts(h, w, cur.clone()),
                    max_change: change,
                });
            }
            if config.early_stop.is_some_and(|tol| change < tol) {
                break;
            }
        }
    }
    Ok((DepthMap::from_parts(h, w, cur), trace))
}

/// Applies [`cspn_step`] `config.iterations` times.
pub fn cspn_run(
    initial: &DepthMap,
    kernels: &NormalizedKernelField,
    config: &PropagationConfig,
) -> Result<(DepthMap, PropagationTrace)> {
    run(initial, kernels, None, config)
}

/// Writes the anchors into `initial`, then applies [`cspn_step_anchored`]
/// `config.iterations` times. Anchored pixels of the result hold exactly their
/// sparse values.
pub fn cspn_run_anchored(
    initial: &DepthMap,
    kernels: &NormalizedKernelField,
    sparse: &SparseDepthMap,
    config: &PropagationConfig,
) -> Result<(DepthMap, PropagationTrace)> {
    initial.check_dims(sparse.height(), sparse.width())?;
    run(initial, kernels, Some(sparse), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{normalize_kernels, random_raw_field};
    use crate::grid::Anchor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(h: usize, w: usize) -> NormalizedKernelField {
        NormalizedKernelField::from_off_center(h, w, 3, BoundaryPolicy::ZeroPad, |_, _, _, _| 0.125).unwrap()
    }

    fn random_state(h: usize, w: usize, rng: &mut ChaCha8Rng) -> DepthMap {
        DepthMap::from_fn(h, w, |_, _| rng.random_range(-2.0..2.0)).unwrap()
    }

    #[test]
    fn identity_kernels_leave_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_state(4, 5, &mut rng);
        for &bp in &[BoundaryPolicy::ZeroPad, BoundaryPolicy::ClampToEdge] {
            let id = NormalizedKernelField::identity(4, 5, 5, bp).unwrap();
            assert_eq!(cspn_step(&s, &id).unwrap(), s);
        }
    }

    #[test]
    fn constant_state_is_exact_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &bp in &[BoundaryPolicy::ZeroPad, BoundaryPolicy::ClampToEdge] {
            for &signed in &[false, true] {
                let raw = random_raw_field(5, 6, 5, bp, signed, &mut rng).unwrap();
                let k = normalize_kernels(&raw);
                let s = DepthMap::filled(5, 6, 3.7).unwrap();
                assert_eq!(cspn_step(&s, &k).unwrap(), s);
            }
        }
    }

    #[test]
    fn center_impulse_with_uniform_kernels() {
        // G * H_v on the 9-vector: every neighbor row of G carries 1/8 in the
        // center column, the center row has zero diagonal.
        let mut s = DepthMap::filled(3, 3, 0.0).unwrap();
        s.set(1, 1, 8.0).unwrap();
        let out = cspn_step(&s, &uniform(3, 3)).unwrap();
        let expected = [1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(out.as_slice(), &expected);
    }

    #[test]
    fn zero_iterations_return_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(3, 4, &mut rng);
        let cfg = PropagationConfig::new(3, 0).unwrap();
        let (out, trace) = cspn_run(&s, &uniform(3, 4), &cfg).unwrap();
        assert_eq!(out, s);
        assert_eq!(trace.steps, 0);
    }

    #[test]
    fn run_is_repeated_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(4, 4, &mut rng);
        let k = normalize_kernels(&random_raw_field(4, 4, 3, BoundaryPolicy::ZeroPad, true, &mut rng).unwrap());
        let cfg = PropagationConfig::new(3, 2).unwrap();
        let twice = cspn_step(&cspn_step(&s, &k).unwrap(), &k).unwrap();
        assert_eq!(cspn_run(&s, &k, &cfg).unwrap().0, twice);
    }

    #[test]
    fn trace_has_one_entry_per_iteration_plus_initial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(3, 3, &mut rng);
        let mut cfg = PropagationConfig::new(3, 6).unwrap();
        cfg.trace = true;
        let (out, trace) = cspn_run(&s, &uniform(3, 3), &cfg).unwrap();
        assert_eq!(trace.entries.len(), 7);
        assert_eq!(trace.entries[0].state, s);
        assert_eq!(trace.entries[6].state, out);
        assert_eq!(trace.entries[0].max_change, 0.0);
    }

    #[test]
    fn early_stop_halts_once_converged() {
        let s = DepthMap::filled(4, 4, 1.0).unwrap();
        let mut cfg = PropagationConfig::new(3, 100).unwrap();
        cfg.early_stop = Some(1e-9);
        let (_, trace) = cspn_run(&s, &uniform(4, 4), &cfg).unwrap();
        assert_eq!(trace.steps, 1);
    }

    #[test]
    fn config_must_match_kernels() {
        let s = DepthMap::filled(3, 3, 1.0).unwrap();
        let cfg = PropagationConfig::new(5, 1).unwrap();
        assert!(matches!(
            cspn_run(&s, &uniform(3, 3), &cfg),
            Err(Error::KernelSizeMismatch { .. })
        ));
        let cfg = PropagationConfig::new(3, 1)
            .unwrap()
            .with_boundary(BoundaryPolicy::ClampToEdge);
        assert!(matches!(
            cspn_run(&s, &uniform(3, 3), &cfg),
            Err(Error::BoundaryMismatch)
        ));
        let small = DepthMap::filled(2, 3, 1.0).unwrap();
        assert!(matches!(
            cspn_step(&small, &uniform(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn anchored_step_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_state(3, 3, &mut rng);
        let k = uniform(3, 3);
        let none = SparseDepthMap::empty(3, 3).unwrap();
        assert_eq!(cspn_step_anchored(&s, &k, &none).unwrap(), cspn_step(&s, &k).unwrap());

        let full = DepthMap::from_fn(3, 3, |r, c| 1.0 + (r * 3 + c) as f64).unwrap();
        let all = SparseDepthMap::from_dense(&full);
        assert_eq!(cspn_step_anchored(&s, &k, &all).unwrap(), full);
    }

    #[test]
    fn single_anchor_spreads_one_step_late() {
        let zero = DepthMap::filled(3, 3, 0.0).unwrap();
        let sparse = SparseDepthMap::new(
            3,
            3,
            vec![Anchor {
                row: 1,
                col: 1,
                depth: 5.0,
            }],
        )
        .unwrap();
        let k = uniform(3, 3);
        let one = cspn_step_anchored(&zero, &k, &sparse).unwrap();
        assert_eq!(one.as_slice(), &[0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0]);
        let two = cspn_step_anchored(&one, &k, &sparse).unwrap();
        assert_eq!(two.get(1, 1), 5.0);
        assert_eq!(two.get(0, 0), 0.625);
        assert_eq!(two.get(0, 1), 0.625);
    }

    #[test]
    fn anchors_matching_a_constant_state_change_nothing() {
        let s = DepthMap::filled(4, 4, 2.0).unwrap();
        let sparse = SparseDepthMap::new(
            4,
            4,
            vec![Anchor {
                row: 2,
                col: 1,
                depth: 2.0,
            }],
        )
        .unwrap();
        let cfg = PropagationConfig::new(3, 5).unwrap();
        let k = uniform(4, 4);
        assert_eq!(
            cspn_run_anchored(&s, &k, &sparse, &cfg).unwrap().0,
            cspn_run(&s, &k, &cfg).unwrap().0
        );
    }

    #[test]
    fn anchored_run_converges_between_anchors() {
        let zero = DepthMap::filled(3, 3, 0.0).unwrap();
        let sparse = SparseDepthMap::new(
            3,
            3,
            vec![
                Anchor {
                    row: 0,
                    col: 0,
                    depth: 1.0,
                },
                Anchor {
                    row: 2,
                    col: 2,
                    depth: 3.0,
                },
            ],
        )
        .unwrap();
        let mut cfg = PropagationConfig::new(3, 200).unwrap();
        cfg.trace = true;
        let (out, trace) = cspn_run_anchored(&zero, &uniform(3, 3), &sparse, &cfg).unwrap();
        assert!(trace.last_change.unwrap() < 1e-9);
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(2, 2), 3.0);
        for r in 0..3 {
            for c in 0..3 {
                if (r, c) != (0, 0) && (r, c) != (2, 2) {
                    let v = out.get(r, c);
                    assert!(v > 1.0 && v < 3.0, "({r},{c}) = {v}");
                }
            }
        }
    }

    #[test]
    fn clamp_boundary_propagates_at_edges() {
        let raw =
            crate::affinity::RawKernelField::from_fn(3, 3, 3, BoundaryPolicy::ClampToEdge, |_, _, _, _| 1.0).unwrap();
        let k = normalize_kernels(&raw);
        let mut s = DepthMap::filled(3, 3, 0.0).unwrap();
        s.set(0, 0, 9.0).unwrap();
        let out = cspn_step(&s, &k).unwrap();
        // Corner (0,0) reads itself through four clamped offsets (-1..=0)^2 minus the center.
        assert!((out.get(0, 0) - 9.0 * 3.0 / 8.0).abs() < 1e-12);
        assert!((out.get(1, 1) - 9.0 / 8.0).abs() < 1e-12);
    }
}
