//! Line-based `key = value` run configuration with dotted section keys.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! model.layers = 2
//! model.units = 32
//! estimator.K = 16
//! estimator.baseline = loo
//! schedule.entropy.start = 1.0
//! data.train = train.natd
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use crate::data::SyntheticTaskSpec;
use crate::error::{Error, Result};
use crate::estimator::{BaselineKind, EntropyMode, EstimatorConfig, RewardConfig};
use crate::optimizer::{AdamConfig, Ramp, Schedules};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub layers: usize,
    pub units: usize,
    pub embed_dim: usize,
    pub init_scale: f64,
    /// Taken from the vocabulary file or the data when unset.
    pub vocab_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSection {
    pub k: usize,
    pub baseline: BaselineKind,
    pub entropy_mode: EntropyMode,
    pub kl_target_rate: Option<f64>,
}

impl EstimatorSection {
    /// Estimator settings with the entropy weight for one step.
    pub fn at(&self, lambda: f64) -> EstimatorConfig {
        EstimatorConfig {
            k: self.k,
            baseline: self.baseline,
            reward: RewardConfig {
                lambda,
                mode: self.entropy_mode,
                kl_target_rate: self.kl_target_rate,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub collapse: Option<PathBuf>,
    pub stack: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSection {
    pub max_steps: u64,
    pub eval_interval: u64,
    pub checkpoint_interval: u64,
    pub keep_checkpoints: usize,
    pub log_interval: u64,
    /// Write a per-step diagnostics CSV alongside the metrics.
    pub diagnostics: bool,
    /// Dev utterances decoded per evaluation; 0 means all.
    pub eval_limit: usize,
}

/// Synthetic corpus settings for `nat gen`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSection {
    pub task: SyntheticTaskSpec,
    pub train_count: usize,
    pub dev_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub estimator: EstimatorSection,
    pub optimizer: AdamConfig,
    pub entropy: Ramp,
    pub noise: Ramp,
    pub data: DataSection,
    pub train: TrainSection,
    pub output_dir: PathBuf,
    pub gen: GenSection,
}

impl RunConfig {
    /// Full-scale defaults: 2x256 LSTM, K=16, leave-one-out baseline.
    pub fn with_seed(seed: u64) -> Self {
        let sched = Schedules::default();
        Self {
            seed,
            model: ModelSection {
                layers: 2,
                units: 256,
                embed_dim: 16,
                init_scale: 0.05,
                vocab_size: None,
            },
            estimator: EstimatorSection {
                k: 16,
                baseline: BaselineKind::LeaveOneOut,
                entropy_mode: EntropyMode::Symmetric,
                kl_target_rate: None,
            },
            optimizer: AdamConfig::default(),
            entropy: sched.entropy,
            noise: sched.noise_std,
            data: DataSection {
                train: None,
                dev: None,
                vocab: None,
                collapse: None,
                stack: 3,
            },
            train: TrainSection {
                max_steps: 200_000,
                eval_interval: 1000,
                checkpoint_interval: 1000,
                keep_checkpoints: 3,
                log_interval: 100,
                diagnostics: false,
                eval_limit: 0,
            },
            output_dir: PathBuf::from("run"),
            gen: GenSection {
                task: SyntheticTaskSpec {
                    seed,
                    ..SyntheticTaskSpec::default()
                },
                train_count: 1000,
                dev_count: 100,
            },
        }
    }

    pub fn schedules(&self) -> Schedules {
        Schedules {
            entropy: self.entropy,
            noise_std: self.noise,
            l2_weight: self.optimizer.l2,
            lr: self.optimizer.lr,
        }
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            pairs.push((n + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let seed = pairs
            .iter()
            .rev()
            .find(|(_, k, _)| k == "seed")
            .ok_or_else(|| Error::Config("`seed` is required".into()))?;
        let mut cfg = Self::with_seed(num(seed.0, "seed", &seed.2)?);
        for (line, key, value) in &pairs {
            cfg.set(key, value, base)
                .map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("line {line}: {msg}")),
                    other => other,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and checks that every referenced input exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        for p in [&cfg.data.train, &cfg.data.dev, &cfg.data.vocab, &cfg.data.collapse]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        let v = value;
        match key {
            "seed" => {
                self.seed = num(0, key, v)?;
                self.gen.task.seed = self.seed;
            }
            "model.layers" => self.model.layers = num(0, key, v)?,
            "model.units" => self.model.units = num(0, key, v)?,
            "model.embed" => self.model.embed_dim = num(0, key, v)?,
            "model.init_scale" => self.model.init_scale = num(0, key, v)?,
            "model.vocab_size" => self.model.vocab_size = Some(num(0, key, v)?),
            "estimator.K" | "estimator.k" => self.estimator.k = num(0, key, v)?,
            "estimator.baseline" => self.estimator.baseline = v.parse().map_err(as_config)?,
            "estimator.entropy_mode" => self.estimator.entropy_mode = v.parse().map_err(as_config)?,
            "estimator.kl_target_rate" => {
                self.estimator.kl_target_rate = if v == "none" { None } else { Some(num(0, key, v)?) }
            }
            "optimizer.lr" => self.optimizer.lr = num(0, key, v)?,
            "optimizer.beta1" => self.optimizer.beta1 = num(0, key, v)?,
            "optimizer.beta2" => self.optimizer.beta2 = num(0, key, v)?,
            "optimizer.eps" => self.optimizer.eps = num(0, key, v)?,
            "optimizer.l2" => self.optimizer.l2 = num(0, key, v)?,
            "optimizer.clip_norm" => {
                self.optimizer.clip_norm = if v == "none" { None } else { Some(num(0, key, v)?) }
            }
            "data.train" => self.data.train = Some(path()),
            "data.dev" => self.data.dev = Some(path()),
            "data.vocab" => self.data.vocab = Some(path()),
            "data.collapse" => self.data.collapse = Some(path()),
            "data.stack" => {
                self.data.stack = num(0, key, v)?;
                self.gen.task.stack = self.data.stack;
            }
            "train.max_steps" => self.train.max_steps = num(0, key, v)?,
            "train.eval_interval" => self.train.eval_interval = num(0, key, v)?,
            "train.checkpoint_interval" => self.train.checkpoint_interval = num(0, key, v)?,
            "train.keep_checkpoints" => self.train.keep_checkpoints = num(0, key, v)?,
            "train.log_interval" => self.train.log_interval = num(0, key, v)?,
            "train.diagnostics" => self.train.diagnostics = boolean(key, v)?,
            "train.eval_limit" => self.train.eval_limit = num(0, key, v)?,
            "output.dir" => self.output_dir = path(),
            "gen.vocab_size" => self.gen.task.vocab_size = num(0, key, v)?,
            "gen.tokens_min" => self.gen.task.tokens_per_utterance.0 = num(0, key, v)?,
            "gen.tokens_max" => self.gen.task.tokens_per_utterance.1 = num(0, key, v)?,
            "gen.frames_min" => self.gen.task.frames_per_token.0 = num(0, key, v)?,
            "gen.frames_max" => self.gen.task.frames_per_token.1 = num(0, key, v)?,
            "gen.feature_dim" => self.gen.task.feature_dim = num(0, key, v)?,
            "gen.noise_std" => self.gen.task.noise_std = num(0, key, v)?,
            "gen.train_count" => self.gen.train_count = num(0, key, v)?,
            "gen.dev_count" => self.gen.dev_count = num(0, key, v)?,
            _ => {
                if let Some(rest) = key.strip_prefix("schedule.") {
                    let (which, field) = rest
                        .split_once('.')
                        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
                    let ramp = match which {
                        "entropy" => &mut self.entropy,
                        "noise" => &mut self.noise,
                        _ => return Err(Error::Config(format!("unknown schedule `{which}`"))),
                    };
                    match field {
                        "start" => ramp.start = num(0, key, v)?,
                        "end" => ramp.end = num(0, key, v)?,
                        "begin" => ramp.begin = num(0, key, v)?,
                        "finish" => ramp.finish = num(0, key, v)?,
                        "constant" => *ramp = Ramp::constant(num(0, key, v)?),
                        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                    }
                } else {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.model.layers == 0 || self.model.units == 0 || self.model.embed_dim == 0 {
            return Err(Error::Config("model layers, units and embed must be positive".into()));
        }
        if !(self.model.init_scale > 0.0) {
            return Err(Error::Config("model.init_scale must be positive".into()));
        }
        self.estimator.at(self.entropy.start).validate().map_err(cfg_err)?;
        self.entropy.validate()?;
        self.noise.validate()?;
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0 && o.l2 >= 0.0)
        {
            return Err(Error::Config("optimizer settings out of range".into()));
        }
        if self.data.stack == 0 {
            return Err(Error::Config("data.stack must be at least 1".into()));
        }
        if self.train.eval_interval == 0 || self.train.checkpoint_interval == 0 || self.train.log_interval == 0 {
            return Err(Error::Config("train intervals must be positive".into()));
        }
        if self.train.keep_checkpoints == 0 {
            return Err(Error::Config("train.keep_checkpoints must be at least 1".into()));
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| {
        let at = if line > 0 { format!("line {line}: ") } else { String::new() };
        Error::Config(format!("{at}bad value {v:?} for `{key}`: {e}"))
    })
}

fn as_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {v:?} for `{key}`"))),
    }
}
