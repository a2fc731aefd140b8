//! Randomized engine-vs-oracle equivalence checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::{normalize_kernels, random_raw_field, NormalizedKernelField};
use crate::error::Result;
use crate::grid::{Anchor, BoundaryPolicy, DepthMap, PropagationConfig, SparseDepthMap};
use crate::oracle::{anchor_g, build_g, oracle_propagate};
use crate::propagation;

/// Elementwise tolerance for a single step.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Elementwise tolerance for a multi-step run.
pub const RUN_TOLERANCE: f64 = 1e-8;

/// The engine under test.
pub trait StepEngine {
    fn step(&self, state: &DepthMap, kernels: &NormalizedKernelField) -> Result<DepthMap>;

    fn run(&self, state: &DepthMap, kernels: &NormalizedKernelField, config: &PropagationConfig) -> Result<DepthMap>;

    fn step_anchored(
        &self,
        state: &DepthMap,
        kernels: &NormalizedKernelField,
        sparse: &SparseDepthMap,
    ) -> Result<DepthMap>;

    fn run_anchored(
        &self,
        state: &DepthMap,
        kernels: &NormalizedKernelField,
        sparse: &SparseDepthMap,
        config: &PropagationConfig,
    ) -> Result<DepthMap>;
}

/// The convolutional engine of [`crate::propagation`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Cspn;

impl StepEngine for Cspn {
    fn step(&self, state: &DepthMap, kernels: &NormalizedKernelField) -> Result<DepthMap> {
        propagation::cspn_step(state, kernels)
    }

    fn run(&self, state: &DepthMap, kernels: &NormalizedKernelField, config: &PropagationConfig) -> Result<DepthMap> {
        propagation::cspn_run(state, kernels, config).map(|(d, _)| d)
    }

    fn step_anchored(
        &self,
        state: &DepthMap,
        kernels: &NormalizedKernelField,
        sparse: &SparseDepthMap,
    ) -> Result<DepthMap> {
        propagation::cspn_step_anchored(state, kernels, sparse)
    }

    fn run_anchored(
        &self,
        state: &DepthMap,
        kernels: &NormalizedKernelField,
        sparse: &SparseDepthMap,
        config: &PropagationConfig,
    ) -> Result<DepthMap> {
        propagation::cspn_run_anchored(state, kernels, sparse, config).map(|(d, _)| d)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub trials: usize,
    /// Grids are drawn with both sides in `1..=max_side`.
    pub max_side: usize,
    pub kernel_sizes: Vec<usize>,
    pub run_steps: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            trials: 200,
            max_side: 6,
            kernel_sizes: vec![3, 5],
            run_steps: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub trials: usize,
    pub signed_trials: usize,
    pub max_step_dev: f64,
    pub max_run_dev: f64,
    pub max_anchored_step_dev: f64,
    pub max_anchored_run_dev: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_step_dev <= STEP_TOLERANCE
            && self.max_anchored_step_dev <= STEP_TOLERANCE
            && self.max_run_dev <= RUN_TOLERANCE
            && self.max_anchored_run_dev <= RUN_TOLERANCE
    }
}

/// One randomized problem instance.
#[derive(Debug, Clone)]
pub struct Trial {
    pub state: DepthMap,
    pub kernels: NormalizedKernelField,
    pub sparse: SparseDepthMap,
    pub signed: bool,
}

/// Draws trial `index`. Signed and nonnegative fields alternate, kernel sizes
/// and boundary policies cycle.
pub fn draw_trial(rng: &mut ChaCha8Rng, index: usize, config: &SuiteConfig) -> Result<Trial> {
    let h = rng.random_range(1..=config.max_side);
    let w = rng.random_range(1..=config.max_side);
    let k = config.kernel_sizes[(index / 2) % config.kernel_sizes.len()];
    let signed = index % 2 == 1;
    let boundary = if (index / 4).is_multiple_of(2) {
        BoundaryPolicy::ZeroPad
    } else {
        BoundaryPolicy::ClampToEdge
    };
    let kernels = normalize_kernels(&random_raw_field(h, w, k, boundary, signed, rng)?);
    let state = DepthMap::from_fn(h, w, |_, _| rng.random_range(-3.0..3.0))?;
    let mut anchors = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if rng.random_bool(0.25) {
                anchors.push(Anchor {
                    row: r,
                    col: c,
                    depth: rng.random_range(0.5..5.0),
                });
            }
        }
    }
    Ok(Trial {
        state,
        kernels,
        sparse: SparseDepthMap::new(h, w, anchors)?,
        signed,
    })
}

pub fn run_equivalence_suite(config: &SuiteConfig, engine: &dyn StepEngine) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = SuiteReport::default();
    for index in 0..config.trials {
        let t = draw_trial(&mut rng, index, config)?;
        let g = build_g(&t.kernels)?;
        let ga = anchor_g(&g, &t.sparse)?;
        let cfg =
            PropagationConfig::new(t.kernels.kernel_size(), config.run_steps)?.with_boundary(t.kernels.boundary());

        let step = engine.step(&t.state, &t.kernels)?;
        report.max_step_dev = report
            .max_step_dev
            .max(step.max_abs_diff(&oracle_propagate(&g, &t.state, 1)?));

        let run = engine.run(&t.state, &t.kernels, &cfg)?;
        report.max_run_dev =
            report
                .max_run_dev
                .max(run.max_abs_diff(&oracle_propagate(&g, &t.state, config.run_steps)?));

        let mut written = t.state.clone();
        t.sparse.write_into(&mut written)?;
        let astep = engine.step_anchored(&written, &t.kernels, &t.sparse)?;
        report.max_anchored_step_dev = report
            .max_anchored_step_dev
            .max(astep.max_abs_diff(&oracle_propagate(&ga, &written, 1)?));

        let arun = engine.run_anchored(&t.state, &t.kernels, &t.sparse, &cfg)?;
        report.max_anchored_run_dev =
            report
                .max_anchored_run_dev
                .max(arun.max_abs_diff(&oracle_propagate(&ga, &written, config.run_steps)?));

        report.trials += 1;
        report.signed_trials += t.signed as usize;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Nudged;

    impl StepEngine for Nudged {
        fn step(&self, state: &DepthMap, kernels: &NormalizedKernelField) -> Result<DepthMap> {
            let mut out = Cspn.step(state, kernels)?;
            let v = out.get(0, 0);
            out.set(0, 0, v + 1e-6)?;
            Ok(out)
        }

        fn run(&self, s: &DepthMap, k: &NormalizedKernelField, c: &PropagationConfig) -> Result<DepthMap> {
            Cspn.run(s, k, c)
        }

        fn step_anchored(&self, s: &DepthMap, k: &NormalizedKernelField, sp: &SparseDepthMap) -> Result<DepthMap> {
            Cspn.step_anchored(s, k, sp)
        }

        fn run_anchored(
            &self,
            s: &DepthMap,
            k: &NormalizedKernelField,
            sp: &SparseDepthMap,
            c: &PropagationConfig,
        ) -> Result<DepthMap> {
            Cspn.run_anchored(s, k, sp, c)
        }
    }

    #[test]
    fn small_suite_passes() {
        let cfg = SuiteConfig {
            trials: 24,
            ..Default::default()
        };
        let report = run_equivalence_suite(&cfg, &Cspn).unwrap();
        assert_eq!(report.trials, 24);
        assert_eq!(report.signed_trials, 12);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn zero_trials_report_nothing() {
        let cfg = SuiteConfig {
            trials: 0,
            ..Default::default()
        };
        let report = run_equivalence_suite(&cfg, &Cspn).unwrap();
        assert_eq!(report, SuiteReport::default());
        assert!(report.passed());
    }

    #[test]
    fn detects_a_nudged_engine() {
        let cfg = SuiteConfig {
            trials: 4,
            ..Default::default()
        };
        assert!(!run_equivalence_suite(&cfg, &Nudged).unwrap().passed());
    }
}
