//! Experiment orchestration: independent trials distributed over a worker
//! pool, each deriving its own random stream from the master seed, with a
//! single aggregation pass at the end.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use scmc_core::calibration::{assemble_calibration, max_calibration_groups, CalibrationPlan};
use scmc_core::completion::{complete, CompletionEstimate, SolverConfig};
use scmc_core::conformal::{region_contains, region_width, BaselineKind, BaselineMachine, ScmcMachine};
use scmc_core::missingness::estimate_weights;
use scmc_core::rng::stream;
use scmc_core::sampling::{sample_column_group, sample_uniform, sample_without_replacement};
use scmc_core::{IndexGroup, MatrixIndex, PartialMatrix, Real, WeightField};

use crate::config::{ExperimentConfig, GeneratorKind, Method, Mode, ObsWeightKind, TestWeightKind};
use crate::error::{HarnessError, Result};
use crate::gen::{gen_hetero_weights, gen_plain_lowrank, gen_uniform_synthetic, power_weights};
use crate::movielens::{load_movielens, read_weight_grid, subsample};
use crate::slab::worst_slab_weights;

/// One aggregated output line.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub k: usize,
    pub alpha: Real,
    pub rule: String,
    pub params: String,
    /// Empirical simultaneous coverage across all trials and test groups.
    pub coverage: Real,
    /// Mean region width (mean per-entry interval length; diameter for
    /// spheres).
    pub mean_width: Real,
    /// Fraction of regions whose quantile was clipped from infinity.
    pub clipped_rate: Real,
    /// Mean of `max_i p_i` over test groups (simultaneous method only).
    pub mean_max_p: Real,
    pub wall_time_s: Real,
    pub trials: usize,
    pub test_groups: usize,
}

#[derive(Debug, Default, Clone)]
struct MethodStats {
    covered: usize,
    total: usize,
    width_sum: Real,
    clipped: usize,
    max_p_sum: Real,
    max_p_count: usize,
    seconds: Real,
}

impl MethodStats {
    fn absorb(&mut self, other: &MethodStats) {
        self.covered += other.covered;
        self.total += other.total;
        self.width_sum += other.width_sum;
        self.clipped += other.clipped;
        self.max_p_sum += other.max_p_sum;
        self.max_p_count += other.max_p_count;
        self.seconds += other.seconds;
    }

    fn record(&mut self, covered: bool, width: Real, clipped: bool, max_p: Option<Real>) {
        self.total += 1;
        if covered {
            self.covered += 1;
        }
        self.width_sum += width;
        if clipped {
            self.clipped += 1;
        }
        if let Some(p) = max_p {
            self.max_p_sum += p;
            self.max_p_count += 1;
        }
    }
}

type TrialStats = BTreeMap<Method, MethodStats>;

fn rule_name(rule: scmc_core::PredictionRule) -> &'static str {
    match rule {
        scmc_core::PredictionRule::HyperCube => "cube",
        scmc_core::PredictionRule::HyperRectangle => "rect",
        scmc_core::PredictionRule::HyperSphere => "sphere",
    }
}

/// Runs the configured experiment and returns one row per method (or per
/// calibration size in the upper-bound study).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let run = || match config.mode {
        Mode::Synthetic => run_trials(config, config.params_echo()),
        Mode::MovieLens => run_movielens(config),
        Mode::UpperBound => run_upper_bound(config),
    };
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

fn aggregate(
    config: &ExperimentConfig,
    params: String,
    per_trial: Vec<TrialStats>,
) -> Vec<MetricsRow> {
    let mut totals: BTreeMap<Method, MethodStats> = BTreeMap::new();
    for trial in &per_trial {
        for (method, stats) in trial {
            totals.entry(*method).or_default().absorb(stats);
        }
    }
    totals
        .into_iter()
        .map(|(method, stats)| MetricsRow {
            method: method.name().to_string(),
            k: config.k,
            alpha: config.alpha,
            rule: rule_name(config.rule).to_string(),
            params: params.clone(),
            coverage: stats.covered as Real / stats.total.max(1) as Real,
            mean_width: stats.width_sum / stats.total.max(1) as Real,
            clipped_rate: stats.clipped as Real / stats.total.max(1) as Real,
            mean_max_p: if stats.max_p_count > 0 {
                stats.max_p_sum / stats.max_p_count as Real
            } else {
                Real::NAN
            },
            wall_time_s: stats.seconds,
            trials: per_trial.len(),
            test_groups: config.test_groups,
        })
        .collect()
}

fn run_trials(config: &ExperimentConfig, params: String) -> Result<Vec<MetricsRow>> {
    let per_trial: Vec<TrialStats> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            synthetic_trial(config, trial as u64).map_err(|e| {
                HarnessError::Data(format!("trial {trial} (seed {}): {e}", config.seed))
            })
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(config, params, per_trial))
}

fn solver_config(config: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        kind: config.solver,
        rank: config.solver_rank,
        regularization: config.solver_reg,
        max_iters: config.solver_iters,
        tol: config.solver_tol,
    }
}

/// Rule-of-thumb calibration size: `min(1000, capacity / 2)`, overridable.
fn calibration_size(config: &ExperimentConfig, capacity: usize) -> Result<usize> {
    let n = if config.n_cal > 0 { config.n_cal } else { 1000.min(capacity / 2) };
    if n == 0 || n > capacity {
        return Err(HarnessError::Config(format!(
            "calibration size {n} infeasible (capacity {capacity})"
        )));
    }
    Ok(n)
}

struct Pipeline {
    obs: PartialMatrix,
    plan: CalibrationPlan,
    fit: CompletionEstimate,
    w_used: WeightField,
}

/// Assembles a plan of the given group size, fits the completer on its
/// training split.
fn build_pipeline(
    config: &ExperimentConfig,
    obs: &PartialMatrix,
    w_used: &WeightField,
    k: usize,
    n_cal: usize,
    rng: &mut scmc_core::rng::SeedableStream,
) -> Result<Pipeline> {
    let obs_indices = obs.observed_indices();
    let plan = assemble_calibration(&obs_indices, obs.n_cols(), n_cal, k, rng)?;
    let train = obs.restrict(&plan.train)?;
    if train.is_empty() {
        return Err(HarnessError::Config(
            "calibration consumed every observation; nothing left to train on".into(),
        ));
    }
    let fit = complete(&train, &solver_config(config), rng)?;
    Ok(Pipeline { obs: obs.clone(), plan, fit, w_used: w_used.clone() })
}

fn evaluate_methods(
    config: &ExperimentConfig,
    scmc: &Pipeline,
    baseline: Option<&Pipeline>,
    w_star_eval: &WeightField,
    tests: &[(IndexGroup, Vec<Real>)],
) -> Result<TrialStats> {
    let mut stats: TrialStats = BTreeMap::new();

    if config.methods.contains(&Method::Scmc) {
        let start = Instant::now();
        let machine = ScmcMachine::new(
            &scmc.obs,
            &scmc.plan,
            &scmc.fit,
            config.rule,
            &scmc.w_used,
            w_star_eval,
        )?;
        let entry = stats.entry(Method::Scmc).or_default();
        for (group, truth) in tests {
            let region = machine.region(group, config.alpha)?;
            let max_p = region.weights_used.iter().cloned().fold(0.0, Real::max);
            entry.record(
                region_contains(&region, truth),
                region_width(&region),
                region.clipped,
                Some(max_p),
            );
        }
        entry.seconds += start.elapsed().as_secs_f64();
    }

    let wants_baselines = config.methods.contains(&Method::Unadjusted)
        || config.methods.contains(&Method::Bonferroni);
    if wants_baselines {
        let base = baseline.expect("baseline pipeline must exist when baselines are requested");
        let start = Instant::now();
        let machine = BaselineMachine::new(
            &base.obs,
            &base.plan,
            &base.fit,
            config.rule,
            &base.w_used,
            w_star_eval,
        )?;
        let shared = start.elapsed().as_secs_f64() / 2.0;
        for (method, kind) in [
            (Method::Unadjusted, BaselineKind::Unadjusted),
            (Method::Bonferroni, BaselineKind::Bonferroni),
        ] {
            if !config.methods.contains(&method) {
                continue;
            }
            let start = Instant::now();
            let entry = stats.entry(method).or_default();
            for (group, truth) in tests {
                let region = machine.region(kind, group, config.alpha)?;
                entry.record(
                    region_contains(&region, truth),
                    region_width(&region),
                    region.clipped,
                    None,
                );
            }
            entry.seconds += shared + start.elapsed().as_secs_f64();
        }
    }

    Ok(stats)
}

fn synthetic_trial(config: &ExperimentConfig, trial: u64) -> Result<TrialStats> {
    let mut rng = stream(config.seed, trial);
    let (n_rows, n_cols) = (config.n_rows, config.n_cols);
    let gamma = config.effective_gamma();

    let truth = match config.generator {
        GeneratorKind::UniformMix => {
            gen_uniform_synthetic(n_rows, n_cols, config.gen_rank, config.mu, gamma, &mut rng)
        }
        GeneratorKind::PlainLowRank => {
            gen_plain_lowrank(n_rows, n_cols, config.gen_rank, config.mu, &mut rng)
        }
    };
    let w = match config.obs_weights {
        ObsWeightKind::Uniform => WeightField::uniform(n_rows, n_cols),
        ObsWeightKind::Hetero => gen_hetero_weights(n_rows, n_cols, config.obs_s, gamma, &mut rng),
        ObsWeightKind::Power => power_weights(n_rows, n_cols, config.obs_s),
    };

    let grid: Vec<MatrixIndex> = (0..n_rows)
        .flat_map(|r| (0..n_cols).map(move |c| MatrixIndex::new(r, c)))
        .collect();
    let drawn = sample_without_replacement(&grid, config.n_obs, &w, &mut rng)?;
    let obs = PartialMatrix::from_entries(
        n_rows,
        n_cols,
        drawn.iter().map(|&i| (i, truth[(i.row, i.col)])),
    )?;

    let w_used = if config.estimate_weights {
        let mask = DMatrix::from_fn(n_rows, n_cols, |r, c| obs.contains(MatrixIndex::new(r, c)));
        estimate_weights(&mask, config.est_rank, config.est_nu, config.est_iters, config.est_step)?
            .w_hat
    } else {
        w.clone()
    };

    let obs_indices = obs.observed_indices();
    let capacity = max_calibration_groups(&obs_indices, n_cols, config.k);
    let n_cal = calibration_size(config, capacity)?;
    let scmc = build_pipeline(config, &obs, &w_used, config.k, n_cal, &mut rng)?;

    // Test weight fields: the law test groups are drawn from, and the law
    // the regions are calibrated against.
    let missing = obs.missing_indices();
    let w_star_draw = match &config.test_weights {
        TestWeightKind::Uniform => WeightField::uniform(n_rows, n_cols),
        TestWeightKind::WorstSlab => {
            // A quarter of the missing entries is held out to locate the
            // worst slab; test groups never come from it.
            let held = sample_uniform(&missing, missing.len() / 4, &mut rng)?;
            let mut field = worst_slab_weights(&truth, &scmc.fit, &held, config.test_delta)?;
            for idx in &held {
                field.set(*idx, 0.0);
            }
            field
        }
        TestWeightKind::File(path) => {
            let field = read_weight_grid(path)?;
            if field.n_rows() != n_rows || field.n_cols() != n_cols {
                return Err(HarnessError::Data(format!(
                    "test weight grid is {}x{}, expected {n_rows}x{n_cols}",
                    field.n_rows(),
                    field.n_cols()
                )));
            }
            field
        }
    };
    let w_star_eval = if config.misspecify_test_weights {
        WeightField::uniform(n_rows, n_cols)
    } else {
        w_star_draw.clone()
    };

    let tests: Vec<(IndexGroup, Vec<Real>)> = (0..config.test_groups)
        .map(|_| {
            let group = sample_column_group(&missing, n_cols, config.k, &w_star_draw, &mut rng)?;
            let values = group.iter().map(|idx| truth[(idx.row, idx.col)]).collect();
            Ok((group, values))
        })
        .collect::<Result<_>>()?;

    let baseline = if config.methods.contains(&Method::Unadjusted)
        || config.methods.contains(&Method::Bonferroni)
    {
        Some(build_pipeline(config, &obs, &w_used, 1, n_cal * config.k, &mut rng)?)
    } else {
        None
    };

    evaluate_methods(config, &scmc, baseline.as_ref(), &w_star_eval, &tests)
}

fn run_movielens(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let path = config
        .data_path
        .as_ref()
        .ok_or_else(|| HarnessError::Config("movielens mode needs a data path".into()))?;
    let full = load_movielens(path)?;
    let ratings = if config.subsample_rows > 0
        && config.subsample_cols > 0
        && (config.subsample_rows < full.n_rows() || config.subsample_cols < full.n_cols())
    {
        subsample(&full, config.subsample_rows, config.subsample_cols, config.seed)?
    } else {
        full
    };

    let per_trial: Vec<TrialStats> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            movielens_trial(config, &ratings, trial as u64).map_err(|e| {
                HarnessError::Data(format!("trial {trial} (seed {}): {e}", config.seed))
            })
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(config, config.params_echo(), per_trial))
}

fn movielens_trial(
    config: &ExperimentConfig,
    ratings: &PartialMatrix,
    trial: u64,
) -> Result<TrialStats> {
    let mut rng = stream(config.seed, trial);
    let (n_rows, n_cols) = (ratings.n_rows(), ratings.n_cols());

    // Hold out a fraction of the observed ratings; they act as missing
    // entries with known ground truth.
    let all_observed = ratings.observed_indices();
    let holdout_size = ((all_observed.len() as Real) * config.holdout_frac).floor() as usize;
    let holdout = sample_uniform(&all_observed, holdout_size, &mut rng)?;
    let obs = ratings.without(&holdout);

    let w_used = if config.estimate_weights {
        let mask = DMatrix::from_fn(n_rows, n_cols, |r, c| obs.contains(MatrixIndex::new(r, c)));
        estimate_weights(&mask, config.est_rank, config.est_nu, config.est_iters, config.est_step)?
            .w_hat
    } else {
        WeightField::uniform(n_rows, n_cols)
    };

    let obs_indices = obs.observed_indices();
    let capacity = max_calibration_groups(&obs_indices, n_cols, config.k);
    let n_cal = calibration_size(config, capacity)?;
    let scmc = build_pipeline(config, &obs, &w_used, config.k, n_cal, &mut rng)?;

    // Regions are calibrated for a uniform draw over everything unobserved,
    // while the measurable test groups come from the hold-out only; the gap
    // between the two laws is the robustness being probed.
    let w_star_eval = WeightField::uniform(n_rows, n_cols);
    let mut w_star_draw = WeightField::from_fn(n_rows, n_cols, |_, _| 0.0);
    for idx in &holdout {
        w_star_draw.set(*idx, 1.0);
    }

    let missing = obs.missing_indices();
    let tests: Vec<(IndexGroup, Vec<Real>)> = (0..config.test_groups)
        .map(|_| {
            let group = sample_column_group(&missing, n_cols, config.k, &w_star_draw, &mut rng)?;
            let values = group
                .iter()
                .map(|idx| ratings.get(idx).expect("test entries come from the hold-out"))
                .collect();
            Ok((group, values))
        })
        .collect::<Result<_>>()?;

    let baseline = if config.methods.contains(&Method::Unadjusted)
        || config.methods.contains(&Method::Bonferroni)
    {
        Some(build_pipeline(config, &obs, &w_used, 1, n_cal * config.k, &mut rng)?)
    } else {
        None
    };

    evaluate_methods(config, &scmc, baseline.as_ref(), &w_star_eval, &tests)
}

/// Upper-bound study: the expected maximum conformalization weight as a
/// function of the number of calibration groups, under polynomially growing
/// sampling weights with the test draw following the same law.
fn run_upper_bound(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &n_cal in &config.ub_cal_sizes {
        let mut sub = config.clone();
        sub.n_cal = n_cal;
        sub.obs_weights = ObsWeightKind::Power;
        sub.methods = std::collections::BTreeSet::from([Method::Scmc]);
        let per_trial: Vec<TrialStats> = (0..sub.trials)
            .into_par_iter()
            .map(|trial| {
                upper_bound_trial(&sub, trial as u64).map_err(|e| {
                    HarnessError::Data(format!("trial {trial} (seed {}): {e}", sub.seed))
                })
            })
            .collect::<Result<_>>()?;
        let mut batch = aggregate(&sub, format!("n_cal={n_cal};{}", sub.params_echo()), per_trial);
        rows.append(&mut batch);
    }
    Ok(rows)
}

fn upper_bound_trial(config: &ExperimentConfig, trial: u64) -> Result<TrialStats> {
    let mut rng = stream(config.seed, trial);
    let (n_rows, n_cols) = (config.n_rows, config.n_cols);
    let truth = gen_uniform_synthetic(
        n_rows,
        n_cols,
        config.gen_rank,
        config.mu,
        config.effective_gamma(),
        &mut rng,
    );
    let w = power_weights(n_rows, n_cols, config.obs_s);

    let grid: Vec<MatrixIndex> = (0..n_rows)
        .flat_map(|r| (0..n_cols).map(move |c| MatrixIndex::new(r, c)))
        .collect();
    let drawn = sample_without_replacement(&grid, config.n_obs, &w, &mut rng)?;
    let obs = PartialMatrix::from_entries(
        n_rows,
        n_cols,
        drawn.iter().map(|&i| (i, truth[(i.row, i.col)])),
    )?;

    let obs_indices = obs.observed_indices();
    let capacity = max_calibration_groups(&obs_indices, n_cols, config.k);
    let n_cal = calibration_size(config, capacity)?;
    let scmc = build_pipeline(config, &obs, &w, config.k, n_cal, &mut rng)?;

    // The test groups follow the observation weights.
    let missing = obs.missing_indices();
    let tests: Vec<(IndexGroup, Vec<Real>)> = (0..config.test_groups)
        .map(|_| {
            let group = sample_column_group(&missing, n_cols, config.k, &w, &mut rng)?;
            let values = group.iter().map(|idx| truth[(idx.row, idx.col)]).collect();
            Ok((group, values))
        })
        .collect::<Result<_>>()?;

    evaluate_methods(config, &scmc, None, &w, &tests)
}
