//! Verification battery behind `nat check`: exact enumeration, Monte Carlo
//! agreement, finite differences, estimator bias and variance, and the edit
//! distance oracle, all on small random instances.

use rayon::prelude::*;

use crate::error::Result;
use crate::estimator::{
    exact_gradient, expected_reward, pathwise_signals, policy_gradient, rewards, score_logit_grad,
    BaselineKind, EntropyMode, EstimatorConfig, RewardConfig,
};
use crate::eval::levenshtein;
use crate::network::{backward, backward_into, ModelConfig, ModelParams, StepSignal, EOS};
use crate::numerics::Rng;
use crate::optimizer::Schedules;
use crate::transducer::{enumerate_trajectories, replay_trajectory, sample_trajectory, EpisodeInput, StepKind};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub seed: u64,
    /// Scales every analytic or sampled gradient by 1.25 before comparison.
    /// Exists so the harness itself can be shown to fail.
    pub inject_fault: bool,
}

impl CheckOptions {
    fn corrupt(&self, g: &mut ModelParams) {
        if self.inject_fault {
            g.scale(1.25);
        }
    }
}

/// Random small model.
pub fn random_model(hidden: Vec<usize>, vocab: usize, scale: f64, rng: &mut Rng) -> Result<ModelParams> {
    let cfg = ModelConfig::new(2, hidden, vocab).with_embed_dim(2);
    ModelParams::init(&cfg, scale, rng)
}

/// Random episode with `t2 - 1` non-EOS tokens followed by EOS.
pub fn random_episode(t1: usize, t2: usize, vocab: usize, rng: &mut Rng) -> Result<EpisodeInput> {
    let feats = (0..t1)
        .map(|_| vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)])
        .collect();
    let mut targets: Vec<usize> = (1..t2).map(|_| rng.int_inclusive(1, vocab - 1)).collect();
    targets.push(EOS);
    EpisodeInput::new(feats, targets)
}

/// `|a - b| <= rel * max(|a|, |b|)` or `|a - b| <= floor`.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    let d = (a - b).abs();
    d <= floor || d <= rel * a.abs().max(b.abs())
}

/// Central differences of `f` at every parameter.
pub fn finite_difference(params: &ModelParams, h: f64, f: impl Fn(&ModelParams) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    (0..params.num_params())
        .into_par_iter()
        .map(|i| {
            let mut p = params.clone();
            let x = p.get_flat(i);
            p.set_flat(i, x + h);
            let up = f(&p)?;
            p.set_flat(i, x - h);
            let down = f(&p)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Per-component mean and variance of the flattened policy gradient over `draws` calls.
pub fn gradient_moments(
    params: &ModelParams,
    episode: &EpisodeInput,
    cfg: &EstimatorConfig,
    draws: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let samples: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| Ok(policy_gradient(params, episode, cfg, &mut Rng::new(seed, d as u64))?.grad.flatten()))
        .collect::<Result<_>>()?;
    let n = params.num_params();
    let mut mean = vec![0.0; n];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / draws as f64;
        }
    }
    let mut var = vec![0.0; n];
    for s in &samples {
        for ((q, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *q += (v - m).powi(2) / (draws - 1) as f64;
        }
    }
    Ok((mean, var))
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn enumeration_normalization(rng: &mut Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = random_model(vec![3, 3], 4, 1.0, rng)?;
        let t1 = rng.int_inclusive(3, 6);
        let t2 = rng.int_inclusive(1, t1);
        let ep = random_episode(t1, t2, 4, rng)?;
        let total: f64 = enumerate_trajectories(&p, &ep)?.iter().map(|(_, q)| q).sum();
        worst = worst.max((total - 1.0).abs());
    }
    Ok(outcome("enumeration-normalization", worst < 1e-10, format!("max |sum - 1| = {worst:.2e}")))
}

fn trajectory_law(rng: &mut Rng) -> Result<CheckResult> {
    const N: usize = 20_000;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let p = random_model(vec![3], 3, 1.5, rng)?;
        let ep = random_episode(5, 2, 3, rng)?;
        let all = enumerate_trajectories(&p, &ep)?;
        let key = rng.next_u64();
        let patterns: Vec<Vec<bool>> = (0..N)
            .into_par_iter()
            .map(|s| Ok(sample_trajectory(&p, &ep, &mut Rng::new(key, s as u64))?.emissions))
            .collect::<Result<_>>()?;
        for (t, q) in &all {
            let hits = patterns.iter().filter(|e| **e == t.emissions).count() as f64;
            let se = (q * (1.0 - q) / N as f64).sqrt().max(1e-12);
            worst = worst.max((hits / N as f64 - q).abs() / se);
        }
    }
    Ok(outcome("trajectory-law", worst < 4.0, format!("max deviation {worst:.2} SE")))
}

fn supervised_gradient(opts: &CheckOptions, rng: &mut Rng) -> Result<CheckResult> {
    let p = random_model(vec![8, 8], 4, 0.5, rng)?;
    let ep = random_episode(5, 5, 4, rng)?;
    let pattern = vec![true; 5];
    let plain = RewardConfig::plain();
    let traj = replay_trajectory(&p, &ep, &pattern)?;
    let mut g = backward(&p, &traj.tape, &pathwise_signals(&traj, &plain))?;
    opts.corrupt(&mut g);
    let fd = finite_difference(&p, 1e-5, |q| Ok(rewards(&replay_trajectory(q, &ep, &pattern)?, &plain)?.total))?;
    let bad = g.flatten().iter().zip(&fd).filter(|(a, b)| !close(**a, **b, 1e-4, 1e-7)).count();
    Ok(outcome(
        "supervised-gradient-fd",
        bad == 0,
        format!("{bad} of {} components outside tolerance", fd.len()),
    ))
}

fn exact_gradient_fd(opts: &CheckOptions, rng: &mut Rng) -> Result<CheckResult> {
    let p = random_model(vec![3, 3], 3, 0.8, rng)?;
    let ep = random_episode(4, 2, 3, rng)?;
    let mut bad = 0;
    let mut total = 0;
    for lambda in [0.0, 0.5] {
        for mode in [EntropyMode::Symmetric, EntropyMode::Literal] {
            let reward = RewardConfig::entropy(lambda, mode);
            let mut g = exact_gradient(&p, &ep, &reward)?.grad;
            opts.corrupt(&mut g);
            let fd = finite_difference(&p, 1e-5, |q| expected_reward(q, &ep, &reward))?;
            bad += g.flatten().iter().zip(&fd).filter(|(a, b)| !close(**a, **b, 1e-4, 1e-7)).count();
            total += fd.len();
        }
    }
    Ok(outcome("exact-gradient-fd", bad == 0, format!("{bad} of {total} components outside tolerance")))
}

/// The parametric baseline's score contribution has zero expectation.
fn baseline_neutrality(rng: &mut Rng) -> Result<CheckResult> {
    let p = random_model(vec![3], 3, 1.0, rng)?;
    let mut p = p;
    for v in p.baseline_w.as_mut_slice() {
        *v = rng.uniform_range(-1.0, 1.0);
    }
    p.baseline_o.as_mut_slice()[0] = 0.7;
    let ep = random_episode(5, 2, 3, rng)?;
    let mut acc = p.zeros_like();
    for (traj, q) in enumerate_trajectories(&p, &ep)? {
        let base = crate::estimator::parametric_baseline(&traj, &p);
        let signals: Vec<StepSignal> = (0..traj.len())
            .map(|j| StepSignal {
                d_h_top: None,
                d_emit_logit: if traj.kinds[j] == StepKind::Free {
                    base[j] * score_logit_grad(&traj, j)
                } else {
                    0.0
                },
                d_out_logits: None,
            })
            .collect();
        let mut g = p.zeros_like();
        backward_into(&p, &traj.tape, &signals, &mut g)?;
        acc.add_scaled(&g, q);
    }
    let worst = acc.flatten().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(outcome("baseline-neutrality", worst < 1e-10, format!("max |E[baseline score]| = {worst:.2e}")))
}

fn unbiasedness(opts: &CheckOptions, rng: &mut Rng) -> Result<CheckResult> {
    const DRAWS: usize = 4000;
    let p = random_model(vec![3], 3, 1.0, rng)?;
    let ep = random_episode(5, 2, 3, rng)?;
    let reward = RewardConfig::entropy(0.5, EntropyMode::Symmetric);
    let exact = exact_gradient(&p, &ep, &reward)?.grad.flatten();
    // the baseline's own regression gradient is not part of grad E[R]
    let policy: Vec<bool> = (0..p.num_params())
        .map(|i| !p.locate(i).is_some_and(|(name, _)| name.starts_with("baseline")))
        .collect();
    let mut worst: f64 = 0.0;
    for baseline in [BaselineKind::None, BaselineKind::Parametric, BaselineKind::LeaveOneOut] {
        let cfg = EstimatorConfig { k: 4, baseline, reward };
        let (mut mean, var) = gradient_moments(&p, &ep, &cfg, DRAWS, rng.next_u64())?;
        if opts.inject_fault {
            mean.iter_mut().for_each(|m| *m *= 1.25);
        }
        for (((m, v), e), _) in mean.iter().zip(&var).zip(&exact).zip(&policy).filter(|x| *x.1) {
            let se = (v / DRAWS as f64).sqrt();
            if se > 1e-9 {
                worst = worst.max((m - e).abs() / se);
            } else if (m - e).abs() > 1e-9 {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(outcome("estimator-unbiasedness", worst < 4.5, format!("max deviation {worst:.2} SE")))
}

fn variance_reduction(rng: &mut Rng) -> Result<CheckResult> {
    const DRAWS: usize = 300;
    let reward = RewardConfig::entropy(0.5, EntropyMode::Symmetric);
    let mut wins = 0;
    for _ in 0..10 {
        let p = random_model(vec![3], 3, 1.0, rng)?;
        let ep = random_episode(5, 2, 3, rng)?;
        let seed = rng.next_u64();
        let total_var = |baseline| -> Result<f64> {
            let cfg = EstimatorConfig { k: 16, baseline, reward };
            Ok(gradient_moments(&p, &ep, &cfg, DRAWS, seed)?.1.iter().sum())
        };
        if total_var(BaselineKind::LeaveOneOut)? < total_var(BaselineKind::None)? {
            wins += 1;
        }
    }
    Ok(outcome("variance-reduction", wins >= 8, format!("leave-one-out lower on {wins}/10 instances")))
}

fn brute_edit_distance(h: &[usize], r: &[usize]) -> usize {
    match (h.split_first(), r.split_first()) {
        (None, _) => r.len(),
        (_, None) => h.len(),
        (Some((a, ht)), Some((b, rt))) => (brute_edit_distance(ht, rt) + usize::from(a != b))
            .min(brute_edit_distance(ht, r) + 1)
            .min(brute_edit_distance(h, rt) + 1),
    }
}

fn edit_distance_oracle(rng: &mut Rng) -> CheckResult {
    let mut mismatches = 0;
    for _ in 0..1000 {
        let h: Vec<usize> = (0..rng.int_inclusive(0, 6)).map(|_| rng.int_inclusive(0, 2)).collect();
        let r: Vec<usize> = (0..rng.int_inclusive(0, 6)).map(|_| rng.int_inclusive(0, 2)).collect();
        if levenshtein(&h, &r).distance != brute_edit_distance(&h, &r) {
            mismatches += 1;
        }
    }
    outcome("edit-distance-oracle", mismatches == 0, format!("{mismatches} mismatches in 1000 pairs"))
}

fn schedule_anchors() -> CheckResult {
    let s = Schedules::default();
    let ok = s.entropy_at(10_000) == 1.0
        && s.entropy_at(200_000) == 0.1
        && s.entropy_at(400_000) == 0.1
        && s.noise_at(10_000) == 0.0
        && s.noise_at(200_000) == 0.15;
    outcome("schedule-anchors", ok, "entropy 1.0 -> 0.1, noise 0 -> 0.15 over 10k..200k".into())
}

/// Runs every check. Errors inside a check count as failures.
pub fn run_checks(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut rng = Rng::new(opts.seed, 0xc4ec);
    let wrap = |name: &'static str, r: Result<CheckResult>| {
        r.unwrap_or_else(|e| outcome(name, false, format!("error: {e}")))
    };
    vec![
        wrap("enumeration-normalization", enumeration_normalization(&mut rng)),
        wrap("trajectory-law", trajectory_law(&mut rng)),
        wrap("supervised-gradient-fd", supervised_gradient(opts, &mut rng)),
        wrap("exact-gradient-fd", exact_gradient_fd(opts, &mut rng)),
        wrap("baseline-neutrality", baseline_neutrality(&mut rng)),
        wrap("estimator-unbiasedness", unbiasedness(opts, &mut rng)),
        wrap("variance-reduction", variance_reduction(&mut rng)),
        edit_distance_oracle(&mut rng),
        schedule_anchors(),
    ]
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{mark}  {:<28} {}\n", r.name, r.detail));
    }
    s
}
