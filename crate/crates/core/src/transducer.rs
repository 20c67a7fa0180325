//! Episode rollout: per-step emit/no-emit decisions under the forced-emission
//! constraint, trajectory bookkeeping, exhaustive enumeration and greedy decoding.

use crate::error::{Error, Result};
use crate::network::{
    emission_logit, lstm_forward, output_logits, step_input, LstmState, ModelParams, StepTape, EOS,
};
use crate::numerics::{log_sigmoid, sample_bernoulli, sigmoid, softmax_stable, Rng};

/// Largest input length accepted by [`enumerate_trajectories`].
pub const MAX_ENUM_STEPS: usize = 12;

/// One training pair: input frames and a target sequence ending in EOS.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeInput {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

impl EpisodeInput {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self> {
        let ep = Self { features, targets };
        ep.validate()?;
        Ok(ep)
    }

    pub fn input_len(&self) -> usize {
        self.features.len()
    }

    pub fn target_len(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (t1, t2) = (self.input_len(), self.target_len());
        if t2 == 0 || self.targets.last() != Some(&EOS) {
            return Err(Error::InvalidArgument(
                "target sequence must be nonempty and end with EOS".into(),
            ));
        }
        if t2 > t1 {
            return Err(Error::InvalidArgument(format!(
                "target length {t2} exceeds input length {t1}"
            )));
        }
        let dim = self.features[0].len();
        if self.features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidArgument("feature frames differ in dimension".into()));
        }
        Ok(())
    }
}

/// How the emission decision at a step was made.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Sampled from `Bernoulli(b_i)`.
    Free,
    /// Remaining input equals remaining targets; emission is mandatory.
    ForcedEmit,
    /// Every target has already been emitted.
    ForcedSilent,
}

/// Decision rule for step `step` (0-based) given `emitted` tokens so far.
///
/// Emission is forced exactly when skipping this step would leave fewer
/// input steps than outstanding targets.
pub fn step_kind(step: usize, t1: usize, t2: usize, emitted: usize) -> StepKind {
    if emitted >= t2 {
        StepKind::ForcedSilent
    } else if t1 - step <= t2 - emitted {
        StepKind::ForcedEmit
    } else {
        StepKind::Free
    }
}

/// One sampled episode.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub emissions: Vec<bool>,
    /// Tokens emitted through each step (inclusive).
    pub positions: Vec<usize>,
    pub kinds: Vec<StepKind>,
    /// `W_b . h_i` at every step.
    pub emit_logits: Vec<f64>,
    /// `sigmoid(W_b . h_i)` at every step, forced or not.
    pub emit_probs: Vec<f64>,
    /// Target token emitted at each emitting step.
    pub tokens: Vec<Option<usize>>,
    /// `log d_i[y]` at emitting steps.
    pub token_logprobs: Vec<Option<f64>>,
    /// Output distribution `d_i` at emitting steps.
    pub out_probs: Vec<Option<Vec<f64>>>,
    pub tape: Vec<StepTape>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    pub fn num_emitted(&self) -> usize {
        self.positions.last().copied().unwrap_or(0)
    }

    pub fn h_top(&self, step: usize) -> &[f64] {
        self.tape[step].h_top()
    }

    /// Log-probability of the action taken at `step`; zero for forced steps.
    pub fn action_log_prob(&self, step: usize) -> f64 {
        match self.kinds[step] {
            StepKind::Free => {
                let z = self.emit_logits[step];
                if self.emissions[step] {
                    log_sigmoid(z)
                } else {
                    log_sigmoid(-z)
                }
            }
            _ => 0.0,
        }
    }
}

/// Sum of free-step action log-probabilities.
pub fn log_rho(traj: &Trajectory) -> f64 {
    (0..traj.len()).map(|i| traj.action_log_prob(i)).sum()
}

/// Rolls the network with teacher forcing; `decide` picks the action at free steps.
fn rollout(
    params: &ModelParams,
    episode: &EpisodeInput,
    mut decide: impl FnMut(usize, f64) -> Result<bool>,
) -> Result<Trajectory> {
    episode.validate()?;
    let t1 = episode.input_len();
    let t2 = episode.target_len();
    let mut traj = Trajectory {
        emissions: Vec::with_capacity(t1),
        positions: Vec::with_capacity(t1),
        kinds: Vec::with_capacity(t1),
        emit_logits: Vec::with_capacity(t1),
        emit_probs: Vec::with_capacity(t1),
        tokens: Vec::with_capacity(t1),
        token_logprobs: Vec::with_capacity(t1),
        out_probs: Vec::with_capacity(t1),
        tape: Vec::with_capacity(t1),
    };
    let mut state = LstmState::zeros(params);
    let mut b_prev = false;
    let mut tok_prev = params.config().bos();
    let mut pos = 0;
    for (i, x) in episode.features.iter().enumerate() {
        let u = step_input(x, b_prev, tok_prev, params)?;
        let (next, mut rec) = lstm_forward(params, &state, &u, i)?;
        rec.token_prev = Some(tok_prev);
        state = next;
        let z = emission_logit(state.top(), params);
        let b = sigmoid(z);
        let kind = step_kind(i, t1, t2, pos);
        let emit = match kind {
            StepKind::ForcedEmit => true,
            StepKind::ForcedSilent => false,
            StepKind::Free => decide(i, b)?,
        };
        if emit {
            let y = episode.targets[pos];
            let logits = output_logits(state.top(), params);
            let d = softmax_stable(&logits)?;
            traj.token_logprobs.push(Some(crate::numerics::log_softmax_at(&logits, y)));
            traj.out_probs.push(Some(d));
            traj.tokens.push(Some(y));
            pos += 1;
            tok_prev = y;
        } else {
            traj.token_logprobs.push(None);
            traj.out_probs.push(None);
            traj.tokens.push(None);
        }
        b_prev = emit;
        traj.emissions.push(emit);
        traj.positions.push(pos);
        traj.kinds.push(kind);
        traj.emit_logits.push(z);
        traj.emit_probs.push(b);
        traj.tape.push(rec);
    }
    debug_assert_eq!(pos, t2);
    Ok(traj)
}

/// Samples one trajectory; emits exactly `T2` tokens.
pub fn sample_trajectory(
    params: &ModelParams,
    episode: &EpisodeInput,
    rng: &mut Rng,
) -> Result<Trajectory> {
    rollout(params, episode, |_, b| sample_bernoulli(b, rng))
}

/// Replays a fixed emission pattern. Forced steps must agree with the pattern.
pub fn replay_trajectory(
    params: &ModelParams,
    episode: &EpisodeInput,
    pattern: &[bool],
) -> Result<Trajectory> {
    if pattern.len() != episode.input_len() {
        return Err(Error::InvalidArgument(format!(
            "pattern has {} steps, episode has {}",
            pattern.len(),
            episode.input_len()
        )));
    }
    let traj = rollout(params, episode, |i, _| Ok(pattern[i]))?;
    if traj.emissions != pattern {
        return Err(Error::InvalidArgument(
            "emission pattern violates the forcing rules".into(),
        ));
    }
    Ok(traj)
}

/// Every emission pattern reachable under the forcing rules.
pub fn feasible_patterns(t1: usize, t2: usize) -> Vec<Vec<bool>> {
    fn go(i: usize, t1: usize, t2: usize, pos: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if i == t1 {
            out.push(cur.clone());
            return;
        }
        let choices: &[bool] = match step_kind(i, t1, t2, pos) {
            StepKind::ForcedEmit => &[true],
            StepKind::ForcedSilent => &[false],
            StepKind::Free => &[true, false],
        };
        for &c in choices {
            cur.push(c);
            go(i + 1, t1, t2, pos + c as usize, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if t2 <= t1 {
        go(0, t1, t2, 0, &mut Vec::with_capacity(t1), &mut out);
    }
    out
}

/// Exhaustive list of trajectories with their exact probabilities.
pub fn enumerate_trajectories(
    params: &ModelParams,
    episode: &EpisodeInput,
) -> Result<Vec<(Trajectory, f64)>> {
    episode.validate()?;
    let t1 = episode.input_len();
    if t1 > MAX_ENUM_STEPS {
        return Err(Error::TooLarge {
            t1,
            limit: MAX_ENUM_STEPS,
        });
    }
    feasible_patterns(t1, episode.target_len())
        .iter()
        .map(|pat| {
            let traj = replay_trajectory(params, episode, pat)?;
            let p = log_rho(&traj).exp();
            Ok((traj, p))
        })
        .collect()
}

/// Greedy decoding output.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    /// Input step index (0-based) at which each token was emitted.
    pub emit_steps: Vec<usize>,
}

/// Emits when `b_i >= 0.5`, picks the argmax token (lowest id on ties) and
/// feeds its own predictions back. Stops after EOS, `max_tokens`, or the end of input.
pub fn greedy_decode(
    params: &ModelParams,
    features: &[Vec<f64>],
    max_tokens: usize,
) -> Result<Hypothesis> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("cannot decode an empty input".into()));
    }
    let mut hyp = Hypothesis::default();
    let mut state = LstmState::zeros(params);
    let mut b_prev = false;
    let mut tok_prev = params.config().bos();
    for (i, x) in features.iter().enumerate() {
        if hyp.tokens.len() >= max_tokens {
            break;
        }
        let u = step_input(x, b_prev, tok_prev, params)?;
        state = lstm_forward(params, &state, &u, i)?.0;
        let emit = sigmoid(emission_logit(state.top(), params)) >= 0.5;
        if emit {
            let logits = output_logits(state.top(), params);
            let mut best = 0;
            for (k, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = k;
                }
            }
            hyp.tokens.push(best);
            hyp.emit_steps.push(i);
            tok_prev = best;
            if best == EOS {
                break;
            }
        }
        b_prev = emit;
    }
    Ok(hyp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelConfig;
    use crate::numerics::Matrix;
    use std::collections::HashMap;

    fn model(seed: u64, scale: f64) -> ModelParams {
        let cfg = ModelConfig::new(2, vec![3, 3], 4).with_embed_dim(2);
        ModelParams::init(&cfg, scale, &mut Rng::new(seed, 0)).unwrap()
    }

    /// Emission logit pinned to zero so every free step has b = 0.5.
    fn constant_half(seed: u64) -> ModelParams {
        let mut p = model(seed, 0.5);
        p.emit_w = Matrix::zeros(1, 3);
        p
    }

    fn episode(t1: usize, targets: Vec<usize>, seed: u64) -> EpisodeInput {
        let mut rng = Rng::new(seed, 99);
        let feats = (0..t1)
            .map(|_| vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)])
            .collect();
        EpisodeInput::new(feats, targets).unwrap()
    }

    #[test]
    fn episode_validation() {
        assert!(EpisodeInput::new(vec![vec![0.0]; 2], vec![1, 2, 0]).is_err());
        assert!(EpisodeInput::new(vec![vec![0.0]; 3], vec![1, 2]).is_err());
        assert!(EpisodeInput::new(vec![vec![0.0]; 3], vec![]).is_err());
        assert!(EpisodeInput::new(vec![vec![0.0], vec![0.0, 1.0]], vec![0]).is_err());
    }

    #[test]
    fn square_episode_is_fully_forced() {
        let p = model(1, 0.5);
        let ep = episode(4, vec![1, 2, 3, 0], 1);
        let a = sample_trajectory(&p, &ep, &mut Rng::new(1, 1)).unwrap();
        let b = sample_trajectory(&p, &ep, &mut Rng::new(2, 2)).unwrap();
        assert!(a.kinds.iter().all(|k| *k == StepKind::ForcedEmit));
        assert_eq!(a.emissions, vec![true; 4]);
        assert_eq!(a.token_logprobs, b.token_logprobs);
        assert_eq!(log_rho(&a), 0.0);
    }

    #[test]
    fn three_steps_one_target_law() {
        let p = constant_half(2);
        let ep = episode(3, vec![0], 2);
        let all = enumerate_trajectories(&p, &ep).unwrap();
        let mut probs: HashMap<Vec<bool>, f64> = HashMap::new();
        for (t, pr) in &all {
            probs.insert(t.emissions.clone(), *pr);
        }
        assert_eq!(probs.len(), 3);
        assert!((probs[&vec![true, false, false]] - 0.5).abs() < 1e-15);
        assert!((probs[&vec![false, true, false]] - 0.25).abs() < 1e-15);
        assert!((probs[&vec![false, false, true]] - 0.25).abs() < 1e-15);
        let last = all.iter().find(|(t, _)| t.emissions[2]).unwrap();
        assert_eq!(last.0.kinds[2], StepKind::ForcedEmit);
        let total: f64 = all.iter().map(|(t, _)| log_rho(t).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_free_step_at_half() {
        let p = constant_half(3);
        let ep = episode(2, vec![0], 3);
        for (t, _) in enumerate_trajectories(&p, &ep).unwrap() {
            assert!((log_rho(&t) - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_counts() {
        let p = model(4, 0.5);
        assert_eq!(enumerate_trajectories(&p, &episode(3, vec![0], 4)).unwrap().len(), 3);
        assert_eq!(enumerate_trajectories(&p, &episode(4, vec![1, 0], 4)).unwrap().len(), 6);
        assert_eq!(feasible_patterns(8, 3).len(), 56);
        assert_eq!(feasible_patterns(5, 5).len(), 1);
        let err = enumerate_trajectories(&p, &episode(13, vec![0], 4)).unwrap_err();
        assert!(matches!(err, Error::TooLarge { t1: 13, .. }));
    }

    #[test]
    fn enumerated_mass_is_one() {
        for seed in 0..10 {
            let p = model(seed, 1.0);
            let ep = episode(6, vec![2, 1, 0], seed);
            let total: f64 = enumerate_trajectories(&p, &ep).unwrap().iter().map(|(_, q)| q).sum();
            assert!((total - 1.0).abs() < 1e-10, "{total}");
        }
    }

    #[test]
    fn sampled_trajectories_satisfy_postconditions() {
        let p = model(5, 1.0);
        let ep = episode(9, vec![3, 1, 0], 5);
        let all = enumerate_trajectories(&p, &ep).unwrap();
        let mut rng = Rng::new(5, 5);
        for _ in 0..500 {
            let t = sample_trajectory(&p, &ep, &mut rng).unwrap();
            assert_eq!(t.num_emitted(), 3);
            let mut pos = 0;
            for i in 0..t.len() {
                let kind = step_kind(i, 9, 3, pos);
                assert_eq!(t.kinds[i], kind);
                pos += t.emissions[i] as usize;
                assert_eq!(t.positions[i], pos);
                assert_eq!(t.tokens[i].is_some(), t.emissions[i]);
            }
            let (_, q) = all.iter().find(|(e, _)| e.emissions == t.emissions).unwrap();
            assert!((log_rho(&t) - q.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn emitted_tokens_follow_targets() {
        let p = model(6, 1.0);
        let ep = episode(7, vec![3, 2, 0], 6);
        let t = sample_trajectory(&p, &ep, &mut Rng::new(6, 0)).unwrap();
        let emitted: Vec<usize> = t.tokens.iter().flatten().copied().collect();
        assert_eq!(emitted, vec![3, 2, 0]);
        for i in 1..t.len() {
            let want = t.tokens[..i].iter().rev().flatten().next().copied();
            assert_eq!(t.tape[i].token_prev, Some(want.unwrap_or(4)));
        }
    }

    #[test]
    fn replay_rejects_infeasible_patterns() {
        let p = model(7, 1.0);
        let ep = episode(3, vec![1, 0], 7);
        assert!(replay_trajectory(&p, &ep, &[false, false, true]).is_err());
        assert!(replay_trajectory(&p, &ep, &[true, true, false]).is_ok());
    }

    #[test]
    fn greedy_never_emits_with_negative_gate() {
        let mut p = model(8, 0.5);
        p.emit_w = Matrix::from_vec(1, 3, vec![-1e3; 3]).unwrap();
        // top h entries are o*tanh(c); force them positive via a big cell bias
        for u in 0..3 {
            p.layers[1].b.set(2 * 3 + u, 0, 20.0);
            p.layers[1].b.set(3 * 3 + u, 0, 20.0);
        }
        let hyp = greedy_decode(&p, &vec![vec![0.3, 0.1]; 6], 10).unwrap();
        assert!(hyp.tokens.is_empty());
    }

    #[test]
    fn greedy_emits_every_step_at_threshold() {
        let mut p = model(9, 0.5);
        p.emit_w = Matrix::zeros(1, 3);
        for u in 0..3 {
            p.layers[1].b.set(2 * 3 + u, 0, 20.0);
            p.layers[1].b.set(3 * 3 + u, 0, 20.0);
        }
        // token 1 is the argmax whenever h > 0
        p.out_w = Matrix::zeros(4, 3);
        for c in 0..3 {
            p.out_w.set(1, c, 1.0);
        }
        let hyp = greedy_decode(&p, &vec![vec![0.3, 0.1]; 6], 4).unwrap();
        assert_eq!(hyp.emit_steps, vec![0, 1, 2, 3]);
        assert_eq!(hyp.tokens, vec![1; 4]);

        // all-equal logits pick EOS (lowest id) and stop
        p.out_w = Matrix::zeros(4, 3);
        let hyp = greedy_decode(&p, &vec![vec![0.3, 0.1]; 6], 4).unwrap();
        assert_eq!(hyp.tokens, vec![EOS]);
        assert_eq!(hyp.emit_steps, vec![0]);
    }
}
