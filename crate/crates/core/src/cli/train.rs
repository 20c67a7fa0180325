//! The training loop: one utterance per step, epoch-shuffled order, weight
//! noise and entropy weight from their schedules, periodic dev evaluation
//! and rotating checkpoints.
//!
//! Every step draws its randomness from a stream keyed by `(seed, step)` and
//! the epoch order from one keyed by `(seed, epoch)`, so a run resumed from a
//! checkpoint continues exactly as the uninterrupted run would have.

use std::borrow::Cow;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::cli::config::RunConfig;
use crate::data::{read_dataset, Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::estimator::policy_gradient;
use crate::eval::{score, CollapseMap, EvalReport};
use crate::network::checkpoint::Checkpoint;
use crate::network::{apply_weight_noise, ModelConfig, ModelParams};
use crate::numerics::{Matrix, Rng};
use crate::optimizer::{adam_step, schedule_value, AdamState};
use crate::transducer::{greedy_decode, EpisodeInput, Hypothesis};

const STEP_STREAM: u64 = 1 << 32;
const EPOCH_STREAM: u64 = 2 << 32;

pub const METRICS_HEADER: &str = "step,mean_reward,dev_per,entropy_weight,noise_std";
pub const DIAGNOSTICS_HEADER: &str = "step,mean_reward,score_variance,entropy_weight";

/// Outcome of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub utterance: usize,
    pub mean_reward: f64,
    pub score_variance: f64,
    pub entropy_weight: f64,
    pub noise_std: f64,
}

/// Dev-set decoding result.
#[derive(Clone, Debug)]
pub struct DevResult {
    pub report: EvalReport,
    pub hyps: Vec<Hypothesis>,
}

/// Vocabulary size from the config, else the vocabulary file, else the data.
pub fn resolve_vocab_size(cfg: &RunConfig, utts: &[&[Utterance]]) -> Result<usize> {
    if let Some(v) = cfg.model.vocab_size {
        return Ok(v);
    }
    if let Some(p) = &cfg.data.vocab {
        return Ok(Vocabulary::load(p)?.len());
    }
    let max = utts
        .iter()
        .flat_map(|u| u.iter())
        .flat_map(|u| u.targets.iter())
        .max()
        .copied()
        .ok_or_else(|| Error::Config("cannot infer vocabulary size from empty data".into()))?;
    Ok(max + 1)
}

/// Model shape implied by the config and a frame dimension.
pub fn model_config(cfg: &RunConfig, frame_dim: usize, vocab_size: usize) -> ModelConfig {
    ModelConfig::new(frame_dim * cfg.data.stack, vec![cfg.model.units; cfg.model.layers], vocab_size)
        .with_embed_dim(cfg.model.embed_dim)
}

pub struct Trainer {
    cfg: RunConfig,
    params: ModelParams,
    adam: AdamState,
    step: u64,
    train: Vec<EpisodeInput>,
    dev: Vec<EpisodeInput>,
    collapse: CollapseMap,
    order: Option<(u64, Vec<usize>)>,
    reward_acc: (f64, u64),
}

impl Trainer {
    /// Fresh parameters initialized from `(seed, 0)`.
    pub fn new(cfg: &RunConfig, train: &[Utterance], dev: &[Utterance]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let vocab = resolve_vocab_size(cfg, &[train, dev])?;
        let mc = model_config(cfg, train[0].dim(), vocab);
        let params = ModelParams::init(&mc, cfg.model.init_scale, &mut Rng::new(cfg.seed, 0))?;
        Self::with_params(cfg, params, train, dev)
    }

    pub fn with_params(cfg: &RunConfig, params: ModelParams, train: &[Utterance], dev: &[Utterance]) -> Result<Self> {
        cfg.validate()?;
        let to_eps = |u: &[Utterance]| -> Result<Vec<EpisodeInput>> {
            u.iter().map(|x| x.to_episode(cfg.data.stack)).collect()
        };
        let train = to_eps(train)?;
        let dev = to_eps(dev)?;
        let input_dim = params.config().input_dim;
        let vocab = params.config().vocab_size;
        for ep in train.iter().chain(&dev) {
            if ep.features[0].len() != input_dim {
                return Err(Error::Config(format!(
                    "stacked frames have {} features, model expects {input_dim}",
                    ep.features[0].len()
                )));
            }
            if let Some(&t) = ep.targets.iter().find(|&&t| t >= vocab) {
                return Err(Error::Config(format!("token {t} outside vocabulary of size {vocab}")));
            }
        }
        let collapse = match &cfg.data.collapse {
            Some(p) => {
                let v = cfg.data.vocab.as_ref().map(Vocabulary::load).transpose()?;
                CollapseMap::load(p, vocab, v.as_ref())?
            }
            None => CollapseMap::identity(vocab),
        };
        Ok(Self {
            adam: AdamState::new(&params, cfg.optimizer.clone()),
            cfg: cfg.clone(),
            params,
            step: 0,
            train,
            dev,
            collapse,
            order: None,
            reward_acc: (0.0, 0),
        })
    }

    /// Restores parameters, optimizer moments and the step counter.
    pub fn resume(cfg: &RunConfig, ckpt: &Checkpoint, train: &[Utterance], dev: &[Utterance]) -> Result<Self> {
        let params = ckpt.to_params()?;
        let mut t = Self::with_params(cfg, params, train, dev)?;
        t.adam.m = ckpt.params_with_prefix("adam.m.")?;
        t.adam.v = ckpt.params_with_prefix("adam.v.")?;
        let scalar = |name: &str| -> Result<&Matrix> {
            ckpt.get(name)
                .ok_or_else(|| Error::Inconsistent(format!("checkpoint lacks block {name}")))
        };
        t.adam.t = scalar("adam.t")?.get(0, 0) as u64;
        t.step = scalar("train.step")?.get(0, 0) as u64;
        if let Some(acc) = ckpt.get("train.reward_acc") {
            t.reward_acc = (acc.get(0, 0), acc.get(0, 1) as u64);
        }
        if t.adam.m.config() != t.params.config() || t.adam.v.config() != t.params.config() {
            return Err(Error::Inconsistent("optimizer state does not match the model".into()));
        }
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_params(&self.params);
        c.push_params("adam.m.", &self.adam.m);
        c.push_params("adam.v.", &self.adam.v);
        c.push("adam.t", Matrix::from_fn(1, 1, |_, _| self.adam.t as f64));
        c.push("train.step", Matrix::from_fn(1, 1, |_, _| self.step as f64));
        let (sum, n) = self.reward_acc;
        c.push("train.reward_acc", Matrix::from_fn(1, 2, |_, j| if j == 0 { sum } else { n as f64 }));
        c
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Training-set index visited at 1-based step `step`.
    pub fn utterance_for(&mut self, step: u64) -> usize {
        let n = self.train.len() as u64;
        let t = step - 1;
        let epoch = t / n;
        if self.order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..self.train.len()).collect();
            Rng::new(self.cfg.seed, EPOCH_STREAM + epoch).shuffle(&mut order);
            self.order = Some((epoch, order));
        }
        self.order.as_ref().unwrap().1[(t % n) as usize]
    }

    /// One policy-gradient step on the next utterance.
    pub fn train_step(&mut self) -> Result<StepStats> {
        let s = self.step + 1;
        let idx = self.utterance_for(s);
        let mut rng = Rng::new(self.cfg.seed, STEP_STREAM + s);
        let lambda = schedule_value(&self.cfg.entropy, s);
        let noise_std = schedule_value(&self.cfg.noise, s);
        let noisy = if noise_std > 0.0 {
            Cow::Owned(apply_weight_noise(&self.params, noise_std, &mut rng)?)
        } else {
            Cow::Borrowed(&self.params)
        };
        let est = policy_gradient(&noisy, &self.train[idx], &self.cfg.estimator.at(lambda), &mut rng)
            .map_err(|e| at_step(e, s))?;
        drop(noisy);
        adam_step(&mut self.params, &mut self.adam, &est.grad).map_err(|e| at_step(e, s))?;
        if !self.params.is_finite() {
            return Err(Error::NonFinite {
                step: s as usize,
                layer: 0,
                what: "parameters after the Adam update".into(),
            });
        }
        self.step = s;
        self.reward_acc.0 += est.mean_reward;
        self.reward_acc.1 += 1;
        Ok(StepStats {
            step: s,
            utterance: idx,
            mean_reward: est.mean_reward,
            score_variance: est.score_variance,
            entropy_weight: lambda,
            noise_std,
        })
    }

    /// Mean reward since the previous call.
    pub fn take_mean_reward(&mut self) -> f64 {
        let (sum, n) = std::mem::take(&mut self.reward_acc);
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    /// Greedy-decodes episodes and scores them against their targets.
    pub fn decode(&self, episodes: &[EpisodeInput]) -> Result<DevResult> {
        let hyps: Vec<Hypothesis> = episodes
            .par_iter()
            .map(|ep| greedy_decode(&self.params, &ep.features, ep.input_len()))
            .collect::<Result<_>>()?;
        let refs: Vec<Vec<usize>> = episodes.iter().map(|e| e.targets.clone()).collect();
        let toks: Vec<Vec<usize>> = hyps.iter().map(|h| h.tokens.clone()).collect();
        Ok(DevResult {
            report: score(&toks, &refs, &self.collapse)?,
            hyps,
        })
    }

    pub fn evaluate_dev(&self) -> Result<DevResult> {
        let limit = match self.cfg.train.eval_limit {
            0 => self.dev.len(),
            n => n.min(self.dev.len()),
        };
        self.decode(&self.dev[..limit])
    }

    pub fn dev_episodes(&self) -> &[EpisodeInput] {
        &self.dev
    }
}

fn at_step(e: Error, step: u64) -> Error {
    match e {
        Error::NonFinite { layer, what, .. } => Error::NonFinite {
            step: step as usize,
            layer,
            what,
        },
        other => other,
    }
}

/// Summary of a finished `train` run.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub final_step: u64,
    pub last_dev_per: Option<f64>,
    pub metrics: PathBuf,
    pub final_checkpoint: PathBuf,
}

fn load_split(path: &Option<PathBuf>, what: &str) -> Result<Vec<Utterance>> {
    let p = path
        .as_ref()
        .ok_or_else(|| Error::Config(format!("data.{what} is not set")))?;
    read_dataset(p)
}

/// Keeps header and rows up to `step`, so a resumed run appends where the
/// checkpoint left off.
fn truncate_csv(path: &Path, header: &str, step: u64) -> Result<File> {
    let mut kept = vec![header.to_string()];
    if path.exists() {
        for line in BufReader::new(File::open(path)?).lines().skip(1) {
            let line = line?;
            let s: u64 = line.split(',').next().and_then(|v| v.parse().ok()).unwrap_or(u64::MAX);
            if s <= step {
                kept.push(line);
            }
        }
    }
    let mut f = File::create(path)?;
    for l in kept {
        writeln!(f, "{l}")?;
    }
    Ok(OpenOptions::new().append(true).open(path)?)
}

fn fresh_csv(path: &Path, header: &str) -> Result<File> {
    let mut f = File::create(path)?;
    writeln!(f, "{header}")?;
    Ok(f)
}

/// Runs the configured training job, optionally resuming from a checkpoint.
pub fn run_training(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    let train = load_split(&cfg.data.train, "train")?;
    let dev = load_split(&cfg.data.dev, "dev")?;
    let mut trainer = match resume {
        Some(p) => Trainer::resume(cfg, &Checkpoint::load(p)?, &train, &dev)?,
        None => Trainer::new(cfg, &train, &dev)?,
    };
    let out = &cfg.output_dir;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let metrics_path = out.join("metrics.csv");
    let diag_path = out.join("diagnostics.csv");
    let start = trainer.step();
    let (mut metrics, mut diag) = if resume.is_some() {
        info!("resuming from step {start}");
        (
            truncate_csv(&metrics_path, METRICS_HEADER, start)?,
            cfg.train.diagnostics.then(|| truncate_csv(&diag_path, DIAGNOSTICS_HEADER, start)).transpose()?,
        )
    } else {
        (
            fresh_csv(&metrics_path, METRICS_HEADER)?,
            cfg.train.diagnostics.then(|| fresh_csv(&diag_path, DIAGNOSTICS_HEADER)).transpose()?,
        )
    };
    info!(
        "training {} parameters on {} utterances ({} dev), steps {}..={}",
        trainer.params().num_params(),
        train.len(),
        dev.len(),
        start + 1,
        cfg.train.max_steps
    );

    let mut last_per = None;
    let mut kept: Vec<PathBuf> = Vec::new();
    for s in start + 1..=cfg.train.max_steps {
        let st = match trainer.train_step() {
            Ok(st) => st,
            Err(e) => {
                warn!("stopping at step {s}; last good checkpoint left in {}", ckpt_dir.display());
                return Err(e);
            }
        };
        if let Some(d) = diag.as_mut() {
            writeln!(d, "{},{},{},{}", s, st.mean_reward, st.score_variance, st.entropy_weight)?;
        }
        if s % cfg.train.log_interval == 0 {
            info!(
                "step {s} reward {:.4} score_var {:.4e} lambda {:.4} noise {:.4}",
                st.mean_reward, st.score_variance, st.entropy_weight, st.noise_std
            );
        }
        if s % cfg.train.eval_interval == 0 || s == cfg.train.max_steps {
            let dev_res = trainer.evaluate_dev()?;
            let per = dev_res.report.error_rate;
            let reward = trainer.take_mean_reward();
            writeln!(metrics, "{s},{reward},{per},{},{}", st.entropy_weight, st.noise_std)?;
            metrics.flush()?;
            info!("step {s} dev PER {:.4}", per);
            last_per = Some(per);
        }
        if s % cfg.train.checkpoint_interval == 0 {
            let p = ckpt_dir.join(format!("ckpt-{s:08}.natc"));
            trainer.checkpoint().save(&p)?;
            kept.push(p);
            while kept.len() > cfg.train.keep_checkpoints {
                std::fs::remove_file(kept.remove(0))?;
            }
        }
    }
    let final_checkpoint = out.join("final.natc");
    trainer.checkpoint().save(&final_checkpoint)?;
    Ok(TrainSummary {
        final_step: trainer.step(),
        last_dev_per: last_per,
        metrics: metrics_path,
        final_checkpoint,
    })
}
