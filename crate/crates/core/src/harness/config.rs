//! Experiment configuration: flat `key = value` text files.

use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ours,
    AwacOffline,
    Bc,
    Early,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::AwacOffline => "awac_offline",
            Method::Bc => "bc",
            Method::Early => "early",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Method::Ours),
            "awac_offline" => Ok(Method::AwacOffline),
            "bc" => Ok(Method::Bc),
            "early" => Ok(Method::Early),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected ours | awac_offline | bc | early)"
            ))),
        }
    }

    /// Methods driven by the active query mechanism.
    pub fn uses_queries(&self) -> bool {
        matches!(self, Method::Ours | Method::Early)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario_name: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub total_env_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub demo_budget: usize,
    pub pool_path: PathBuf,
    pub source_checkpoint_path: PathBuf,
    pub output_dir: PathBuf,
    // learner hyperparameters
    pub discount: f64,
    pub soft_update_rate: f64,
    pub awac_lambda: f64,
    pub entropy_alpha: f64,
    pub advantage_samples: usize,
    pub weight_clip: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    // query hyperparameters
    pub history_len: usize,
    pub ratio_threshold: f64,
    pub post_demo_updates: usize,
    pub discounted_uncertainty: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario_name: String::new(),
            method: Method::Ours,
            seeds: vec![0],
            total_env_steps: 300_000,
            eval_every: 5000,
            eval_episodes: 20,
            demo_budget: 10,
            pool_path: PathBuf::new(),
            source_checkpoint_path: PathBuf::new(),
            output_dir: PathBuf::from("."),
            discount: 0.99,
            soft_update_rate: 0.005,
            awac_lambda: 1.0,
            entropy_alpha: 0.05,
            advantage_samples: 4,
            weight_clip: 20.0,
            learning_rate: 3e-4,
            batch_size: 128,
            hidden: vec![64, 64],
            replay_capacity: 1_000_000,
            history_len: 20,
            ratio_threshold: 0.1,
            post_demo_updates: 50,
            discounted_uncertainty: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenario_name.is_empty() {
            return Err(Error::Config("scenario_name is required".into()));
        }
        crate::env::ScenarioSpec::by_name(&self.scenario_name)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("eval_every and eval_episodes must be positive".into()));
        }
        if self.total_env_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("total_env_steps and batch_size must be positive".into()));
        }
        if self.pool_path.as_os_str().is_empty() && self.method != Method::Early {
            return Err(Error::Config("pool_path is required".into()));
        }
        if self.method.uses_queries() && self.pool_path.as_os_str().is_empty() {
            return Err(Error::Config("pool_path is required for query methods".into()));
        }
        if self.source_checkpoint_path.as_os_str().is_empty() {
            return Err(Error::Config("source_checkpoint_path is required".into()));
        }
        if self.method.uses_queries() && (self.history_len == 0 || self.demo_budget == 0) {
            return Err(Error::Config(
                "history_len and demo_budget must be positive for query methods".into(),
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Config(format!("line {}: bad {what} '{value}'", lineno + 1))
            };
            match key {
                "scenario_name" => cfg.scenario_name = value.to_string(),
                "method" => cfg.method = Method::parse(value)?,
                "seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|s| s.trim().parse::<u64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("seed list"))?;
                }
                "total_env_steps" => cfg.total_env_steps = value.parse().map_err(|_| bad("integer"))?,
                "eval_every" => cfg.eval_every = value.parse().map_err(|_| bad("integer"))?,
                "eval_episodes" => cfg.eval_episodes = value.parse().map_err(|_| bad("integer"))?,
                "demo_budget" => cfg.demo_budget = value.parse().map_err(|_| bad("integer"))?,
                "pool_path" => cfg.pool_path = PathBuf::from(value),
                "source_checkpoint_path" => cfg.source_checkpoint_path = PathBuf::from(value),
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "discount" => cfg.discount = value.parse().map_err(|_| bad("number"))?,
                "soft_update_rate" => cfg.soft_update_rate = value.parse().map_err(|_| bad("number"))?,
                "awac_lambda" => cfg.awac_lambda = value.parse().map_err(|_| bad("number"))?,
                "entropy_alpha" => cfg.entropy_alpha = value.parse().map_err(|_| bad("number"))?,
                "advantage_samples" => cfg.advantage_samples = value.parse().map_err(|_| bad("integer"))?,
                "weight_clip" => cfg.weight_clip = value.parse().map_err(|_| bad("number"))?,
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|_| bad("number"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("integer"))?,
                "hidden" => {
                    cfg.hidden = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("hidden layer list"))?;
                }
                "replay_capacity" => cfg.replay_capacity = value.parse().map_err(|_| bad("integer"))?,
                "history_len" => cfg.history_len = value.parse().map_err(|_| bad("integer"))?,
                "ratio_threshold" => cfg.ratio_threshold = value.parse().map_err(|_| bad("number"))?,
                "post_demo_updates" => cfg.post_demo_updates = value.parse().map_err(|_| bad("integer"))?,
                "discounted_uncertainty" => {
                    cfg.discounted_uncertainty = value.parse().map_err(|_| bad("boolean"))?;
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown config key '{other}'",
                        lineno + 1
                    )));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
