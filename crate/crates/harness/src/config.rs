//! Flat `key = value` experiment configuration.
//!
//! Every key has a default matching the synthetic protocols; a config file
//! only lists the keys it overrides. Lines starting with `#` are comments.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use scmc_core::{PredictionRule, SolverKind};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synthetic,
    MovieLens,
    UpperBound,
}

/// Which matrix generator drives a synthetic suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Half low-rank signal, half column-mixture noise.
    UniformMix,
    /// Low-rank signal plus i.i.d. noise.
    PlainLowRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsWeightKind {
    Uniform,
    /// Column-constant two-level weights.
    Hetero,
    /// Polynomially growing weights over the flattened grid.
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestWeightKind {
    Uniform,
    /// Oracle weights concentrating on the worst estimation slab.
    WorstSlab,
    /// Dense grid loaded from a file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Scmc,
    Unadjusted,
    Bonferroni,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Scmc => "scmc",
            Method::Unadjusted => "unadjusted",
            Method::Bonferroni => "bonferroni",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,

    // Matrix generation.
    pub n_rows: usize,
    pub n_cols: usize,
    pub generator: GeneratorKind,
    pub gen_rank: usize,
    pub mu: f64,
    /// Mixture probability for column noise / sparse columns; negative means
    /// "use alpha / 2".
    pub gamma: f64,

    // Observation process.
    pub n_obs: usize,
    pub obs_weights: ObsWeightKind,
    pub obs_s: f64,
    pub estimate_weights: bool,
    pub est_rank: usize,
    pub est_nu: f64,
    pub est_iters: usize,
    pub est_step: f64,

    // Calibration and method.
    /// 0 means the rule of thumb `min(1000, floor(capacity / 2))`.
    pub n_cal: usize,
    pub k: usize,
    pub alpha: f64,
    pub rule: PredictionRule,
    pub methods: BTreeSet<Method>,

    // Completion model.
    pub solver: SolverKind,
    pub solver_rank: usize,
    pub solver_reg: f64,
    pub solver_iters: usize,
    pub solver_tol: f64,

    // Test groups.
    pub test_groups: usize,
    pub test_weights: TestWeightKind,
    pub test_delta: f64,
    /// Evaluate the regions with mis-specified uniform test weights while
    /// still drawing test groups from the configured law.
    pub misspecify_test_weights: bool,

    // Experiment control.
    pub trials: usize,
    pub seed: u64,
    pub threads: usize,

    // MovieLens protocol.
    pub data_path: Option<PathBuf>,
    pub subsample_rows: usize,
    pub subsample_cols: usize,
    pub holdout_frac: f64,

    // Upper-bound study.
    pub ub_cal_sizes: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Synthetic,
            n_rows: 200,
            n_cols: 200,
            generator: GeneratorKind::UniformMix,
            gen_rank: 5,
            mu: 0.0,
            gamma: -1.0,
            n_obs: 8000,
            obs_weights: ObsWeightKind::Uniform,
            obs_s: 0.2,
            estimate_weights: false,
            est_rank: 3,
            est_nu: 4.0,
            est_iters: 150,
            est_step: 2.0,
            n_cal: 0,
            k: 2,
            alpha: 0.1,
            rule: PredictionRule::HyperCube,
            methods: BTreeSet::from([Method::Scmc, Method::Unadjusted, Method::Bonferroni]),
            solver: SolverKind::Als,
            solver_rank: 5,
            solver_reg: 0.1,
            solver_iters: 100,
            solver_tol: 1e-6,
            test_groups: 100,
            test_weights: TestWeightKind::Uniform,
            test_delta: 0.2,
            misspecify_test_weights: false,
            trials: 10,
            seed: 0,
            threads: 0,
            data_path: None,
            subsample_rows: 800,
            subsample_cols: 1000,
            holdout_frac: 0.2,
            ub_cal_sizes: vec![100, 200, 400],
        }
    }
}

impl ExperimentConfig {
    /// Effective column-noise mixture probability.
    pub fn effective_gamma(&self) -> f64 {
        if self.gamma < 0.0 {
            self.alpha / 2.0
        } else {
            self.gamma
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HarnessError::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.k < 1 {
            return Err(HarnessError::Config("k must be at least 1".into()));
        }
        if self.n_obs >= self.n_rows * self.n_cols && self.mode == Mode::Synthetic {
            return Err(HarnessError::Config(
                "n_obs must leave some entries missing".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Config("no methods requested".into()));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) && self.mode == Mode::MovieLens {
            return Err(HarnessError::Config("holdout_frac must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Parses the flat `key = value` grammar and applies it over defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_config_str(text)?;
        Ok(config)
    }

    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Config(format!(
                    "line {}: expected `key = value`, got '{raw}'",
                    line_no + 1
                )));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", line_no + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| format!("{key}: {e}"))
        }
        match key {
            "n_rows" => self.n_rows = parse(key, value)?,
            "n_cols" => self.n_cols = parse(key, value)?,
            "generator" => {
                self.generator = match value {
                    "uniform-mix" => GeneratorKind::UniformMix,
                    "lowrank-plain" => GeneratorKind::PlainLowRank,
                    other => return Err(format!("unknown generator '{other}'")),
                }
            }
            "gen_rank" => self.gen_rank = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "n_obs" => self.n_obs = parse(key, value)?,
            "obs_weights" => {
                self.obs_weights = match value {
                    "uniform" => ObsWeightKind::Uniform,
                    "hetero" => ObsWeightKind::Hetero,
                    "power" => ObsWeightKind::Power,
                    other => return Err(format!("unknown obs_weights '{other}'")),
                }
            }
            "obs_s" => self.obs_s = parse(key, value)?,
            "estimate_weights" => self.estimate_weights = parse(key, value)?,
            "est_rank" => self.est_rank = parse(key, value)?,
            "est_nu" => self.est_nu = parse(key, value)?,
            "est_iters" => self.est_iters = parse(key, value)?,
            "est_step" => self.est_step = parse(key, value)?,
            "n_cal" => self.n_cal = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "rule" => self.rule = PredictionRule::from_name(value).map_err(|e| e.to_string())?,
            "methods" => {
                let mut methods = BTreeSet::new();
                for token in value.split(',') {
                    methods.insert(match token.trim() {
                        "scmc" => Method::Scmc,
                        "unadj" | "unadjusted" => Method::Unadjusted,
                        "bonf" | "bonferroni" => Method::Bonferroni,
                        other => return Err(format!("unknown method '{other}'")),
                    });
                }
                self.methods = methods;
            }
            "solver" => self.solver = SolverKind::from_name(value).map_err(|e| e.to_string())?,
            "solver_rank" => self.solver_rank = parse(key, value)?,
            "solver_reg" => self.solver_reg = parse(key, value)?,
            "solver_iters" => self.solver_iters = parse(key, value)?,
            "solver_tol" => self.solver_tol = parse(key, value)?,
            "test_groups" => self.test_groups = parse(key, value)?,
            "test_weights" => {
                self.test_weights = match value {
                    "uniform" => TestWeightKind::Uniform,
                    "worst-slab" => TestWeightKind::WorstSlab,
                    path => TestWeightKind::File(PathBuf::from(path)),
                }
            }
            "test_delta" => self.test_delta = parse(key, value)?,
            "misspecify_test_weights" => self.misspecify_test_weights = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "data" => self.data_path = Some(PathBuf::from(value)),
            "subsample_rows" => self.subsample_rows = parse(key, value)?,
            "subsample_cols" => self.subsample_cols = parse(key, value)?,
            "holdout_frac" => self.holdout_frac = parse(key, value)?,
            "ub_cal_sizes" => {
                self.ub_cal_sizes = value
                    .split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{key}: {e}")))
                    .collect::<std::result::Result<_, _>>()?;
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// One-line echo of the generator/observation parameters, carried into
    /// the metrics rows.
    pub fn params_echo(&self) -> String {
        match self.mode {
            Mode::Synthetic => format!(
                "mu={};gamma={};obs={:?};s={};test={:?};delta={}",
                self.mu,
                self.effective_gamma(),
                self.obs_weights,
                self.obs_s,
                match &self.test_weights {
                    TestWeightKind::Uniform => "uniform",
                    TestWeightKind::WorstSlab => "worst-slab",
                    TestWeightKind::File(_) => "file",
                },
                self.test_delta
            ),
            Mode::MovieLens => format!(
                "rows={};cols={};holdout={};est_rank={}",
                self.subsample_rows, self.subsample_cols, self.holdout_frac, self.est_rank
            ),
            Mode::UpperBound => format!("s={};k={}", self.obs_s, self.k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_rejects_unknown_keys() {
        let text = "\n# comment\nn_rows = 50\nmu = 15\nmethods = scmc,bonf\nrule = sphere\n";
        let config = ExperimentConfig::from_config_str(text).unwrap();
        assert_eq!(config.n_rows, 50);
        assert_eq!(config.mu, 15.0);
        assert_eq!(config.methods.len(), 2);
        assert_eq!(config.rule, PredictionRule::HyperSphere);

        let err = ExperimentConfig::from_config_str("bogus = 1");
        assert!(matches!(err, Err(HarnessError::Config(_))));
        let err = ExperimentConfig::from_config_str("n_rows 50");
        assert!(matches!(err, Err(HarnessError::Config(_))));
    }

    #[test]
    fn gamma_defaults_to_half_alpha() {
        let mut config = ExperimentConfig::default();
        config.alpha = 0.2;
        assert_eq!(config.effective_gamma(), 0.1);
        config.gamma = 0.4;
        assert_eq!(config.effective_gamma(), 0.4);
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let mut config = ExperimentConfig::default();
        config.alpha = 1.5;
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::default();
        config.trials = 0;
        assert!(config.validate().is_err());
    }
}
