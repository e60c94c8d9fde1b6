//! Benchmark dataset generation, scoring, the parallel runner and plots.

mod dataset;
mod metrics;
mod runner;
mod svg;

pub use dataset::{
    check_task, generate_scene, generate_scenes, generate_tasks, generate_tasks_parallel, read_scene_dir, scene_path,
    write_scenes, BenchTask, Dataset, SceneConfig, TaskConfig, IMAGE_DIR, MANIFEST, SCENE_DIR,
};
pub use metrics::{
    aggregate, evaluate, is_success, log_csv, parse_log_csv, success_rate, summary_csv, Metrics,
    SummaryRow, TaskRecord, LOG_HEADER, SUCCESS_THRESHOLD, SUMMARY_HEADER,
};
pub use runner::{run_benchmark, run_seed, BenchOptions, BenchReport, RunOutcome, RunSpec};
pub use svg::{export_tree_svg, pca_2d, tree_pca_svg, workspace_svg, ColorBy, Projection, SvgMode};

/// Combines a base seed with a stream index (SplitMix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Evaluates `f(0..n)` on up to `workers` scoped threads, returning results
/// in index order.
pub fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let j = next.fetch_add(1, Ordering::Relaxed);
                        if j >= n {
                            break local;
                        }
                        local.push((j, f(j)));
                    }
                })
            })
            .collect();
        for h in handles {
            for (j, v) in h.join().expect("worker thread panicked") {
                slots[j] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every index ran")).collect()
}
