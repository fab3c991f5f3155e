use scmc_harness::config::{ExperimentConfig, Mode};
use scmc_harness::experiment::run_experiment;
use scmc_harness::movielens::{load_movielens, synthesize_ratings_file};
use std::time::Instant;

fn main() {
    let dir = std::env::temp_dir().join("scmc_smoke");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("u.data");
    let t0 = Instant::now();
    synthesize_ratings_file(&path, 943, 1682, 100_000, 99).unwrap();
    println!("synthesized in {:?}", t0.elapsed());
    let m = load_movielens(&path).unwrap();
    println!("loaded {}x{} with {} entries, missing rate {:.3}",
        m.n_rows(), m.n_cols(), m.observed_count(),
        1.0 - m.observed_count() as f64 / (m.n_rows() * m.n_cols()) as f64);

    let mut cfg = ExperimentConfig::default();
    cfg.mode = Mode::MovieLens;
    cfg.data_path = Some(path);
    cfg.subsample_rows = 800;
    cfg.subsample_cols = 1000;
    cfg.holdout_frac = 0.2;
    cfg.k = 2;
    cfg.estimate_weights = true;
    cfg.est_rank = 3;
    cfg.est_iters = 25;
    cfg.solver_rank = 8;
    cfg.solver_iters = 40;
    cfg.trials = 1;
    cfg.test_groups = 200;
    cfg.seed = 5;
    let t0 = Instant::now();
    let rows = run_experiment(&cfg).unwrap();
    for r in &rows {
        println!("{}: coverage {:.3} width {:.3} clipped {:.3} ({:.1}s)", r.method, r.coverage, r.mean_width, r.clipped_rate, r.wall_time_s);
    }
    println!("movielens trial took {:?}", t0.elapsed());
}
