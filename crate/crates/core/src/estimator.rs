//! Rewards, baselines and policy-gradient estimation.
//!
//! The reward is the log-probability of each emitted target token (to be
//! maximized), optionally augmented with an entropy or KL-rate term at free
//! steps. Gradients returned here are *ascent* directions; the optimizer
//! negates them.
//!
//! For a fixed emission pattern the reward is differentiable in the
//! parameters (the pathwise term). The emission pattern itself is credited
//! through the Rao-Blackwellized score-function term
//! `sum_j (sum_{i>=j} R_i - baseline_j) * grad log p(b_j)` over free steps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{backward_into, ModelParams, StepSignal};
use crate::numerics::{dot, Rng};
use crate::transducer::{enumerate_trajectories, sample_trajectory, EpisodeInput, StepKind, Trajectory};

/// Baseline subtracted from the reward-to-go in the score-function term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    None,
    /// `W' h_j + o`, fit by least squares on reward-to-go.
    Parametric,
    /// Mean reward-to-go of the other samples plus a past-reward correction.
    LeaveOneOut,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "parametric" => Ok(Self::Parametric),
            "loo" | "leave-one-out" => Ok(Self::LeaveOneOut),
            other => Err(Error::Config(format!("unknown baseline kind {other:?}"))),
        }
    }
}

/// Sign convention of the entropy term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntropyMode {
    /// `-lambda * log p(action taken)` at every free step.
    Symmetric,
    /// `-lambda * b log p(b=1) + lambda * (1-b) log p(b=0)`; asymmetric between the two branches.
    Literal,
}

impl std::str::FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "paper-literal" | "literal" => Ok(Self::Literal),
            other => Err(Error::Config(format!("unknown entropy mode {other:?}"))),
        }
    }
}

/// How free-step decisions are regularized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardConfig {
    /// Regularizer weight (entropy weight, or KL weight when a target rate is set).
    pub lambda: f64,
    pub mode: EntropyMode,
    /// When set, replaces the entropy term with `-lambda * KL(Bern(rate) || Bern(b_i))`.
    pub kl_target_rate: Option<f64>,
}

impl RewardConfig {
    pub fn entropy(lambda: f64, mode: EntropyMode) -> Self {
        Self {
            lambda,
            mode,
            kl_target_rate: None,
        }
    }

    pub fn plain() -> Self {
        Self::entropy(0.0, EntropyMode::Symmetric)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularizer weight {} must be finite and non-negative",
                self.lambda
            )));
        }
        if let Some(r) = self.kl_target_rate {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(format!("KL target rate {r} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Trajectories sampled per estimate.
    pub k: usize,
    pub baseline: BaselineKind,
    pub reward: RewardConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k: 16,
            baseline: BaselineKind::LeaveOneOut,
            reward: RewardConfig::entropy(1.0, EntropyMode::Symmetric),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if self.baseline == BaselineKind::LeaveOneOut && self.k < 2 {
            return Err(Error::InvalidArgument(
                "the leave-one-out baseline needs K >= 2".into(),
            ));
        }
        self.reward.validate()
    }
}

/// Per-step rewards of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTrace {
    pub per_step: Vec<f64>,
    pub total: f64,
}

impl RewardTrace {
    pub fn from_steps(per_step: Vec<f64>) -> Self {
        let total = per_step.iter().sum();
        Self { per_step, total }
    }

    /// `sum_{i >= j} R_i` for every `j`.
    pub fn to_go(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.per_step.len()];
        let mut acc = 0.0;
        for (j, r) in self.per_step.iter().enumerate().rev() {
            acc += r;
            out[j] = acc;
        }
        out
    }

    fn add(&mut self, delta: &RewardTrace) {
        for (a, b) in self.per_step.iter_mut().zip(&delta.per_step) {
            *a += b;
        }
        self.total = self.per_step.iter().sum();
    }
}

/// Token log-probabilities plus the entropy term at free steps.
pub fn step_rewards(traj: &Trajectory, lambda: f64, mode: EntropyMode) -> RewardTrace {
    let per_step = (0..traj.len())
        .map(|i| {
            let mut r = traj.token_logprobs[i].unwrap_or(0.0);
            if lambda != 0.0 && traj.kinds[i] == StepKind::Free {
                r += lambda * entropy_term(traj, i, mode);
            }
            r
        })
        .collect();
    RewardTrace::from_steps(per_step)
}

fn entropy_term(traj: &Trajectory, i: usize, mode: EntropyMode) -> f64 {
    let taken = traj.action_log_prob(i);
    match mode {
        EntropyMode::Symmetric => -taken,
        EntropyMode::Literal => {
            if traj.emissions[i] {
                -taken
            } else {
                taken
            }
        }
    }
}

/// `d/dz` of [`entropy_term`] with respect to the emission logit.
fn entropy_term_grad(traj: &Trajectory, i: usize, mode: EntropyMode) -> f64 {
    let b = traj.emit_probs[i];
    // d/dz log sigmoid(z) = 1 - b; d/dz log sigmoid(-z) = -b
    let d_taken = if traj.emissions[i] { 1.0 - b } else { -b };
    match mode {
        EntropyMode::Symmetric => -d_taken,
        EntropyMode::Literal => {
            if traj.emissions[i] {
                -d_taken
            } else {
                d_taken
            }
        }
    }
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// `-weight * KL(Bern(target_rate) || Bern(b_i))` at every free step.
pub fn kl_rate_penalty(traj: &Trajectory, target_rate: f64, weight: f64) -> Result<RewardTrace> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "KL target rate {target_rate} outside (0, 1)"
        )));
    }
    let per_step = (0..traj.len())
        .map(|i| {
            if weight == 0.0 || traj.kinds[i] != StepKind::Free {
                0.0
            } else {
                -weight * bernoulli_kl(target_rate, traj.emit_probs[i])
            }
        })
        .collect();
    Ok(RewardTrace::from_steps(per_step))
}

/// Rewards under `cfg`: entropy term, or KL-rate term when a target rate is set.
pub fn rewards(traj: &Trajectory, cfg: &RewardConfig) -> Result<RewardTrace> {
    match cfg.kl_target_rate {
        None => Ok(step_rewards(traj, cfg.lambda, cfg.mode)),
        Some(rate) => {
            let mut base = step_rewards(traj, 0.0, cfg.mode);
            base.add(&kl_rate_penalty(traj, rate, cfg.lambda)?);
            Ok(base)
        }
    }
}

/// Per-step partial derivatives of the reward for a fixed emission pattern.
pub fn pathwise_signals(traj: &Trajectory, cfg: &RewardConfig) -> Vec<StepSignal> {
    (0..traj.len())
        .map(|i| {
            let mut sig = StepSignal::default();
            if let (Some(y), Some(d)) = (traj.tokens[i], &traj.out_probs[i]) {
                let mut dl: Vec<f64> = d.iter().map(|p| -p).collect();
                dl[y] += 1.0;
                sig.d_out_logits = Some(dl);
            }
            if cfg.lambda != 0.0 && traj.kinds[i] == StepKind::Free {
                sig.d_emit_logit = match cfg.kl_target_rate {
                    // d/dz KL(r || sigmoid(z)) = sigmoid(z) - r
                    Some(r) => -cfg.lambda * (traj.emit_probs[i] - r),
                    None => cfg.lambda * entropy_term_grad(traj, i, cfg.mode),
                };
            }
            sig
        })
        .collect()
}

/// `d log p(b_j taken) / dz_j` at free steps, zero at forced steps.
pub fn score_logit_grad(traj: &Trajectory, j: usize) -> f64 {
    match traj.kinds[j] {
        StepKind::Free => (traj.emissions[j] as u8 as f64) - traj.emit_probs[j],
        _ => 0.0,
    }
}

/// `W' h_j + o` at every step.
pub fn parametric_baseline(traj: &Trajectory, params: &ModelParams) -> Vec<f64> {
    let o = params.baseline_o.get(0, 0);
    (0..traj.len())
        .map(|j| dot(params.baseline_w.row(0), traj.h_top(j)) + o)
        .collect()
}

/// Leave-one-out baseline with residual correction, `K x T`.
///
/// For sample `k` at step `j`: mean over `k' != k` of the reward-to-go from
/// `j`, plus the mean over `k' != k` of `sum_{i<j} (R_i^{k'} - R_i^k)`.
pub fn loo_baseline(traces: &[RewardTrace]) -> Result<Vec<Vec<f64>>> {
    let k = traces.len();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "the leave-one-out baseline needs at least two samples".into(),
        ));
    }
    let t = traces[0].per_step.len();
    if traces.iter().any(|tr| tr.per_step.len() != t) {
        return Err(Error::InvalidArgument("reward traces differ in length".into()));
    }
    let to_go: Vec<Vec<f64>> = traces.iter().map(RewardTrace::to_go).collect();
    let past: Vec<Vec<f64>> = traces
        .iter()
        .map(|tr| {
            let mut acc = 0.0;
            tr.per_step
                .iter()
                .map(|r| {
                    let before = acc;
                    acc += r;
                    before
                })
                .collect()
        })
        .collect();
    let norm = 1.0 / (k - 1) as f64;
    let mut out = vec![vec![0.0; t]; k];
    for j in 0..t {
        let sum_go: f64 = to_go.iter().map(|g| g[j]).sum();
        let sum_past: f64 = past.iter().map(|p| p[j]).sum();
        for s in 0..k {
            let others_go = sum_go - to_go[s][j];
            let others_past = sum_past - past[s][j];
            out[s][j] = norm * others_go + norm * (others_past - (k - 1) as f64 * past[s][j]);
        }
    }
    Ok(out)
}

/// Gradient estimate with diagnostics.
#[derive(Clone, Debug)]
pub struct GradEstimate {
    /// Ascent direction, shaped like the parameters.
    pub grad: ModelParams,
    /// Mean total reward over samples (exact expectation for [`exact_gradient`]).
    pub mean_reward: f64,
    /// Across-sample variance of the per-step score term, averaged over steps.
    pub score_variance: f64,
    /// Samples drawn, or trajectories enumerated.
    pub samples: usize,
}

struct SampleResult {
    grad: ModelParams,
    total: f64,
    score_terms: Vec<f64>,
}

/// K-sample Rao-Blackwellized policy gradient with the configured baseline.
///
/// Samples run in parallel on the current rayon pool; the reduction is
/// sequential in sample order, so the result does not depend on thread count.
pub fn policy_gradient(
    params: &ModelParams,
    episode: &EpisodeInput,
    cfg: &EstimatorConfig,
    rng: &mut Rng,
) -> Result<GradEstimate> {
    cfg.validate()?;
    episode.validate()?;
    let key = rng.next_u64();
    let trajs: Vec<Trajectory> = (0..cfg.k)
        .into_par_iter()
        .map(|s| sample_trajectory(params, episode, &mut Rng::new(key, s as u64)))
        .collect::<Result<_>>()?;
    let traces: Vec<RewardTrace> = trajs
        .iter()
        .map(|t| rewards(t, &cfg.reward))
        .collect::<Result<_>>()?;
    let t1 = episode.input_len();
    let baselines: Vec<Vec<f64>> = match cfg.baseline {
        BaselineKind::None => vec![vec![0.0; t1]; cfg.k],
        BaselineKind::Parametric => trajs.iter().map(|t| parametric_baseline(t, params)).collect(),
        BaselineKind::LeaveOneOut => loo_baseline(&traces)?,
    };

    let results: Vec<SampleResult> = (0..cfg.k)
        .into_par_iter()
        .map(|s| -> Result<SampleResult> {
            let traj = &trajs[s];
            let to_go = traces[s].to_go();
            let mut signals = pathwise_signals(traj, &cfg.reward);
            let mut score_terms = vec![0.0; t1];
            let mut grad = params.zeros_like();
            for j in 0..t1 {
                if traj.kinds[j] != StepKind::Free {
                    continue;
                }
                let advantage = to_go[j] - baselines[s][j];
                let g = advantage * score_logit_grad(traj, j);
                signals[j].d_emit_logit += g;
                score_terms[j] = g;
                if cfg.baseline == BaselineKind::Parametric {
                    // least-squares fit of W' h + o to the reward-to-go; no flow into the trunk
                    grad.baseline_w.add_outer(&[advantage], traj.h_top(j), 1.0);
                    grad.baseline_o.as_mut_slice()[0] += advantage;
                }
            }
            backward_into(params, &traj.tape, &signals, &mut grad)?;
            if !grad.is_finite() {
                let worst = traj
                    .emit_logits
                    .iter()
                    .map(|z| z.abs())
                    .fold(0.0, f64::max);
                return Err(Error::NonFinite {
                    step: t1,
                    layer: params.layers.len(),
                    what: format!("gradient of sample {s} (max |emission logit| {worst:.3e})"),
                });
            }
            Ok(SampleResult {
                grad,
                total: traces[s].total,
                score_terms,
            })
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / cfg.k as f64;
    // running mean: identical samples reduce to exactly that sample
    let mut grad = results[0].grad.clone();
    for (n, r) in results.iter().enumerate().skip(1) {
        grad.mean_update(&r.grad, n + 1);
    }
    let mean_reward = results.iter().map(|r| r.total).sum::<f64>() * scale;
    let score_variance = if cfg.k > 1 {
        (0..t1)
            .map(|j| {
                let mean = results.iter().map(|r| r.score_terms[j]).sum::<f64>() * scale;
                results
                    .iter()
                    .map(|r| (r.score_terms[j] - mean).powi(2))
                    .sum::<f64>()
                    / (cfg.k - 1) as f64
            })
            .sum::<f64>()
            / t1 as f64
    } else {
        0.0
    };
    Ok(GradEstimate {
        grad,
        mean_reward,
        score_variance,
        samples: cfg.k,
    })
}

/// Exact `E[grad R + R grad log rho]` by enumerating every trajectory.
pub fn exact_gradient(
    params: &ModelParams,
    episode: &EpisodeInput,
    reward: &RewardConfig,
) -> Result<GradEstimate> {
    reward.validate()?;
    let all = enumerate_trajectories(params, episode)?;
    let mut grad = params.zeros_like();
    let mut expected = 0.0;
    for (traj, prob) in &all {
        let trace = rewards(traj, reward)?;
        let mut signals = pathwise_signals(traj, reward);
        for (j, sig) in signals.iter_mut().enumerate() {
            sig.d_emit_logit += trace.total * score_logit_grad(traj, j);
        }
        let mut g = params.zeros_like();
        backward_into(params, &traj.tape, &signals, &mut g)?;
        grad.add_scaled(&g, *prob);
        expected += prob * trace.total;
    }
    Ok(GradEstimate {
        grad,
        mean_reward: expected,
        score_variance: 0.0,
        samples: all.len(),
    })
}

/// `E[R]` by enumeration.
pub fn expected_reward(
    params: &ModelParams,
    episode: &EpisodeInput,
    reward: &RewardConfig,
) -> Result<f64> {
    enumerate_trajectories(params, episode)?
        .iter()
        .map(|(t, p)| Ok(p * rewards(t, reward)?.total))
        .sum()
}
