use std::path::Path;

use cspn_bench::{BenchConfig, Engine};
use cspn_core::affinity::{designed_affinity, normalize_kernels, signed_affinity};
use cspn_core::analysis::anchor_displacement;
use cspn_core::io::{read_depth, read_image, read_sparse, write_atomic, write_depth, write_image, write_sparse};
use cspn_core::metrics::gradient_error_hist;
use cspn_core::oracle::suite::{run_equivalence_suite, Cspn, StepEngine, SuiteConfig};
use cspn_core::scene::{self, generate_scene, SceneSpec};
use cspn_core::spn::{spn_refine as spn_refine_once, DirectionalKernelField};
use cspn_core::{
    cspn_run, cspn_run_anchored, evaluate, validate_pair, DepthMap, Error, EvalReport, NormalizedKernelField,
    PropagationConfig, SparseDepthMap,
};

use crate::error::{CliError, WithPath};
use crate::{
    AffinityKind, BenchArgs, GenSceneArgs, MetricsArgs, OracleCheckArgs, RefineArgs, ReportFormat, SampleSparseArgs,
    SpnRefineArgs,
};

type CliResult = Result<(), CliError>;

fn load_sparse(path: Option<&Path>, depth: &DepthMap) -> Result<Option<SparseDepthMap>, CliError> {
    path.map(|p| read_sparse(p, depth.height(), depth.width()).at(p))
        .transpose()
}

fn print_report(report: &EvalReport, format: ReportFormat) {
    match format {
        ReportFormat::Text => print!("{}", report.to_text()),
        ReportFormat::Kv => print!("{}", report.to_key_value()),
    }
}

fn positive_mask(gt: &DepthMap) -> Vec<bool> {
    gt.as_slice().iter().map(|&g| g > 0.0).collect()
}

pub fn refine(a: RefineArgs) -> CliResult {
    let image = read_image(&a.image).at(&a.image)?;
    let depth = read_depth(&a.depth).at(&a.depth)?;
    validate_pair(&depth, &image)?;
    let sparse = load_sparse(a.sparse.as_deref(), &depth)?;

    let boundary = a.boundary.into();
    let mut config = PropagationConfig::new(a.kernel, a.iters)?.with_boundary(boundary);
    config.trace = a.trace;
    let raw = match a.affinity {
        AffinityKind::Designed => designed_affinity(&image, a.kernel, a.sigma_color, boundary)?,
        AffinityKind::Signed => signed_affinity(&image, a.kernel, a.edge_gain, boundary)?,
    };
    let kernels = normalize_kernels(&raw);
    let (out, trace) = match &sparse {
        Some(s) => cspn_run_anchored(&depth, &kernels, s, &config)?,
        None => cspn_run(&depth, &kernels, &config)?,
    };
    write_depth(&a.out, &out).at(&a.out)?;

    if a.trace {
        println!("iteration,max_change");
        for e in &trace.entries {
            println!("{},{:e}", e.iteration, e.max_change);
        }
    }
    if let Some(gt_path) = &a.gt {
        let gt = read_depth(gt_path).at(gt_path)?;
        print_report(&evaluate(&out, &gt, Some(&positive_mask(&gt)))?, a.format);
    }
    Ok(())
}

pub fn gen_scene(a: GenSceneArgs) -> CliResult {
    let spec = SceneSpec {
        height: a.height,
        width: a.width,
        layout: a.layout.into(),
        depth_min: a.depth_min,
        depth_max: a.depth_max,
        edge_aligned: !a.no_edge_align,
        noise_sigma: a.noise,
        blur_sigma: a.blur,
        seed: a.seed,
    };
    let scene = generate_scene(&spec)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(Error::from)
        .at(&a.out_dir)?;
    let gt = a.out_dir.join("gt.pfm");
    let image = a.out_dir.join("image.pgm");
    let degraded = a.out_dir.join("degraded.pfm");
    write_depth(&gt, &scene.ground_truth).at(&gt)?;
    write_image(&image, &scene.image).at(&image)?;
    write_depth(&degraded, &scene.degraded).at(&degraded)?;
    Ok(())
}

pub fn sample_sparse(a: SampleSparseArgs) -> CliResult {
    let depth = read_depth(&a.depth).at(&a.depth)?;
    let sparse = scene::sample_sparse(&depth, a.count, a.seed)?;
    write_sparse(&a.out, &sparse).at(&a.out)?;
    Ok(())
}

/// Correct engine with a constant error added to every single step.
struct Faulty;

impl StepEngine for Faulty {
    fn step(&self, state: &DepthMap, kernels: &NormalizedKernelField) -> cspn_core::Result<DepthMap> {
        let out = Cspn.step(state, kernels)?;
        DepthMap::from_fn(out.height(), out.width(), |r, c| out.get(r, c) + 1e-6)
    }

    fn run(&self, s: &DepthMap, k: &NormalizedKernelField, c: &PropagationConfig) -> cspn_core::Result<DepthMap> {
        Cspn.run(s, k, c)
    }

    fn step_anchored(
        &self,
        s: &DepthMap,
        k: &NormalizedKernelField,
        sp: &SparseDepthMap,
    ) -> cspn_core::Result<DepthMap> {
        Cspn.step_anchored(s, k, sp)
    }

    fn run_anchored(
        &self,
        s: &DepthMap,
        k: &NormalizedKernelField,
        sp: &SparseDepthMap,
        c: &PropagationConfig,
    ) -> cspn_core::Result<DepthMap> {
        Cspn.run_anchored(s, k, sp, c)
    }
}

pub fn oracle_check(a: OracleCheckArgs) -> CliResult {
    if a.max_side == 0 {
        return Err(Error::InvalidParameter("--max-side must be at least 1".into()).into());
    }
    if a.kernels.is_empty() {
        return Err(Error::InvalidParameter("--kernels must not be empty".into()).into());
    }
    let config = SuiteConfig {
        trials: a.trials,
        max_side: a.max_side,
        kernel_sizes: a.kernels,
        run_steps: a.run_steps,
        seed: a.seed,
    };
    let engine: &dyn StepEngine = if a.inject_fault { &Faulty } else { &Cspn };
    let report = run_equivalence_suite(&config, engine)?;
    println!("trials={}", report.trials);
    println!("signed_trials={}", report.signed_trials);
    println!("max_step_dev={:e}", report.max_step_dev);
    println!("max_run_dev={:e}", report.max_run_dev);
    println!("max_anchored_step_dev={:e}", report.max_anchored_step_dev);
    println!("max_anchored_run_dev={:e}", report.max_anchored_run_dev);
    if report.passed() {
        println!("status=pass");
        Ok(())
    } else {
        println!("status=fail");
        Err(CliError::Breach(
            "engine deviates from the dense transform beyond tolerance".into(),
        ))
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || Error::InvalidParameter(format!("size `{s}` is not WIDTHxHEIGHT"));
    let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.parse().map_err(|_| bad())?;
    let h: usize = h.parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad().into());
    }
    Ok((h, w))
}

pub fn bench(a: BenchArgs) -> CliResult {
    let config = BenchConfig {
        sizes: a.sizes.iter().map(|s| parse_size(s)).collect::<Result<_, _>>()?,
        kernel_sizes: a.kernels,
        iterations: a.iters,
        reps: a.reps,
        seed: a.seed,
        engines: a
            .engines
            .iter()
            .map(|e| e.trim().parse::<Engine>())
            .collect::<Result<_, _>>()?,
    };
    let runs = cspn_bench::run_bench(&config)?;

    let mut csv = String::from(cspn_bench::BenchRecord::CSV_HEADER);
    csv.push('\n');
    for r in &runs {
        csv.push_str(&r.record.csv_line());
        csv.push('\n');
    }
    match &a.out {
        Some(p) => write_atomic(p, csv.as_bytes()).at(p)?,
        None => print!("{csv}"),
    }
    if let Some(dir) = &a.outputs_dir {
        std::fs::create_dir_all(dir).map_err(Error::from).at(dir)?;
        for r in &runs {
            let rec = &r.record;
            let p = dir.join(format!(
                "{}_{}x{}_k{}_n{}.pfm",
                rec.engine, rec.width, rec.height, rec.kernel_size, rec.iterations
            ));
            write_depth(&p, &r.output).at(&p)?;
        }
    }
    Ok(())
}

pub fn metrics(a: MetricsArgs) -> CliResult {
    let pred = read_depth(&a.pred).at(&a.pred)?;
    let gt = read_depth(&a.gt).at(&a.gt)?;
    print_report(&evaluate(&pred, &gt, Some(&positive_mask(&gt)))?, a.format);

    let sparse = load_sparse(a.sparse.as_deref(), &gt)?;
    if let Some(sparse) = &sparse {
        if let Some(p) = &a.grad_hist {
            let h = gradient_error_hist(&pred, &gt, sparse, a.bins)?;
            write_atomic(p, h.to_csv().as_bytes()).at(p)?;
        }
        if let Some(p) = &a.displacement_hist {
            let h = anchor_displacement(&pred, sparse, a.bins)?;
            write_atomic(p, h.to_csv().as_bytes()).at(p)?;
        }
    }
    Ok(())
}

pub fn spn_refine(a: SpnRefineArgs) -> CliResult {
    let image = read_image(&a.image).at(&a.image)?;
    let depth = read_depth(&a.depth).at(&a.depth)?;
    validate_pair(&depth, &image)?;
    let sparse = match load_sparse(a.sparse.as_deref(), &depth)? {
        Some(s) => s,
        None => SparseDepthMap::empty(depth.height(), depth.width())?,
    };
    let weights = DirectionalKernelField::from_image(&image, a.sigma_color)?;
    let mut out = depth;
    for _ in 0..a.refines {
        out = spn_refine_once(&out, &weights, &sparse)?;
    }
    write_depth(&a.out, &out).at(&a.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_are_width_by_height() {
        assert!(matches!(parse_size("1024x768"), Ok((768, 1024))));
        assert!(parse_size("12").is_err());
        assert!(parse_size("0x4").is_err());
    }
}
