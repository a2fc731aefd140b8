//! Wall-clock scaling harness for the convolutional engine and the scan-line
//! baseline.
//!
//! Every configuration is timed as the median of `reps` runs after one
//! discarded warmup run. Inputs are drawn from a fixed seed and shared between
//! engines at matching sizes.

use std::fmt;
use std::time::Instant;

use cspn_core::affinity::{designed_affinity, normalize_kernels, DEFAULT_SIGMA_COLOR};
use cspn_core::spn::{spn_refine, DirectionalKernelField};
use cspn_core::{cspn_run, BoundaryPolicy, DepthMap, Error, Image, PropagationConfig, Result, SparseDepthMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Cspn,
    Spn,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Cspn => "cspn",
            Engine::Spn => "spn",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cspn" => Ok(Engine::Cspn),
            "spn" => Ok(Engine::Spn),
            other => Err(Error::InvalidParameter(format!("unknown engine `{other}`"))),
        }
    }
}

/// Multiply-add count of one configuration. For the scan-line engine
/// `iterations` counts full four-direction refines.
pub fn ops_estimate(engine: Engine, height: usize, width: usize, kernel_size: usize, iterations: usize) -> u64 {
    let px = (height * width) as u64;
    match engine {
        Engine::Cspn => px * (kernel_size * kernel_size) as u64 * iterations as u64,
        Engine::Spn => px * 3 * 4 * iterations as u64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub engine: Engine,
    pub height: usize,
    pub width: usize,
    pub kernel_size: usize,
    pub iterations: usize,
    /// Median wall time, seconds.
    pub wall_time: f64,
    pub ops_estimate: u64,
    /// Worker threads used by the engine.
    pub threads: usize,
    /// FNV-1a hash of the output bits, identical across repetitions.
    pub checksum: u64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "engine,m,n,k,N,wall_time_s,ops_estimate";

    /// `engine,m,n,k,N,wall_time_s,ops_estimate`
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.9},{}",
            self.engine, self.height, self.width, self.kernel_size, self.iterations, self.wall_time, self.ops_estimate
        )
    }
}

/// Shared random inputs for one grid size.
#[derive(Debug, Clone)]
pub struct BenchInputs {
    pub depth: DepthMap,
    pub image: Image,
}

impl BenchInputs {
    pub fn generate(height: usize, width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((height as u64) << 32 | width as u64));
        let image = Image::gray_from_fn(height, width, |_, _| rng.random_range(0.0..=1.0))?;
        let depth = DepthMap::from_fn(height, width, |_, _| rng.random_range(1.0..5.0))?;
        Ok(BenchInputs { depth, image })
    }
}

/// A prepared engine invocation; only [`Prepared::run`] is timed.
pub enum Prepared<'a> {
    Cspn {
        inputs: &'a BenchInputs,
        kernels: cspn_core::NormalizedKernelField,
        config: PropagationConfig,
    },
    Spn {
        inputs: &'a BenchInputs,
        weights: DirectionalKernelField,
        sparse: SparseDepthMap,
        refines: usize,
    },
}

impl<'a> Prepared<'a> {
    pub fn cspn(inputs: &'a BenchInputs, kernel_size: usize, iterations: usize) -> Result<Self> {
        let raw = designed_affinity(&inputs.image, kernel_size, DEFAULT_SIGMA_COLOR, BoundaryPolicy::ZeroPad)?;
        Ok(Prepared::Cspn {
            inputs,
            kernels: normalize_kernels(&raw),
            config: PropagationConfig::new(kernel_size, iterations)?,
        })
    }

    pub fn spn(inputs: &'a BenchInputs, refines: usize) -> Result<Self> {
        let (h, w) = inputs.depth.dims();
        Ok(Prepared::Spn {
            inputs,
            weights: DirectionalKernelField::from_image(&inputs.image, DEFAULT_SIGMA_COLOR)?,
            sparse: SparseDepthMap::empty(h, w)?,
            refines,
        })
    }

    pub fn run(&self) -> Result<DepthMap> {
        match self {
            Prepared::Cspn {
                inputs,
                kernels,
                config,
            } => cspn_run(&inputs.depth, kernels, config).map(|(d, _)| d),
            Prepared::Spn {
                inputs,
                weights,
                sparse,
                refines,
            } => {
                let mut d = inputs.depth.clone();
                for _ in 0..*refines {
                    d = spn_refine(&d, weights, sparse)?;
                }
                Ok(d)
            }
        }
    }
}

pub fn checksum(depth: &DepthMap) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in depth.as_slice() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times one prepared run: one warmup, then the median of `reps`.
/// Fails if any repetition produces different output bits.
pub fn time_prepared(prepared: &Prepared<'_>, reps: usize) -> Result<(f64, DepthMap)> {
    let reference = prepared.run()?;
    let sum = checksum(&reference);
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let out = prepared.run()?;
        times.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
        if checksum(&out) != sum {
            return Err(Error::InvalidParameter(
                "engine output changed between repetitions".into(),
            ));
        }
    }
    Ok((median(times), reference))
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// `(height, width)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub kernel_sizes: Vec<usize>,
    pub iterations: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub engines: Vec<Engine>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![(96, 128), (192, 256), (384, 512), (768, 1024)],
            kernel_sizes: vec![3],
            iterations: vec![4, 8],
            reps: 3,
            seed: 0,
            engines: vec![Engine::Cspn, Engine::Spn],
        }
    }
}

/// One measured configuration together with its output.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub record: BenchRecord,
    pub output: DepthMap,
}

/// Times every configuration. The scan-line engine is run once per size with
/// a single four-direction refine (recorded with `k = 3`, `N = 1`).
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRun>> {
    if config.reps < 3 {
        return Err(Error::InvalidParameter(format!(
            "reps must be at least 3, got {}",
            config.reps
        )));
    }
    let mut runs = Vec::new();
    for &(h, w) in &config.sizes {
        let inputs = BenchInputs::generate(h, w, config.seed)?;
        for &engine in &config.engines {
            let plans: Vec<(usize, usize)> = match engine {
                Engine::Cspn => config
                    .kernel_sizes
                    .iter()
                    .flat_map(|&k| config.iterations.iter().map(move |&n| (k, n)))
                    .collect(),
                Engine::Spn => vec![(3, 1)],
            };
            for (k, n) in plans {
                let prepared = match engine {
                    Engine::Cspn => Prepared::cspn(&inputs, k, n)?,
                    Engine::Spn => Prepared::spn(&inputs, n)?,
                };
                let (wall_time, output) = time_prepared(&prepared, config.reps)?;
                runs.push(BenchRun {
                    record: BenchRecord {
                        engine,
                        height: h,
                        width: w,
                        kernel_size: k,
                        iterations: n,
                        wall_time,
                        ops_estimate: ops_estimate(engine, h, w, k, n),
                        threads: 1,
                        checksum: checksum(&output),
                    },
                    output,
                });
            }
        }
    }
    Ok(runs)
}
