use cspn_bench::{run_bench, BenchConfig, Engine};

#[test]
fn records_follow_the_configuration() {
    let cfg = BenchConfig {
        sizes: vec![(24, 32), (12, 16)],
        kernel_sizes: vec![3, 5],
        iterations: vec![1, 3],
        reps: 3,
        seed: 7,
        engines: vec![Engine::Spn, Engine::Cspn],
    };
    let runs = run_bench(&cfg).unwrap();
    // Per size: one scan-line refine plus every (k, N) pair.
    assert_eq!(runs.len(), 2 * (1 + 4));
    for r in &runs {
        let rec = &r.record;
        assert!(rec.wall_time > 0.0);
        assert_eq!(r.output.dims(), (rec.height, rec.width));
        assert_eq!(rec.threads, 1);
        if rec.engine == Engine::Cspn {
            assert_eq!(
                rec.ops_estimate,
                (rec.height * rec.width * rec.kernel_size.pow(2) * rec.iterations) as u64
            );
        }
    }
}
