//! Entropy regularization versus none: how strongly do emissions pile up at
//! the edges of the input?
//!
//! Trains two models on the synthetic task, one with the default entropy
//! schedule and one with the entropy weight fixed at zero, then samples one
//! rollout per dev utterance and reports the fraction of emissions that land
//! in the first or last tenth of the input.
//!
//! ```text
//! cargo run --release --example emission_clustering -- [steps] [seed]
//! ```

use nat_core::cli::train::Trainer;
use nat_core::cli::RunConfig;
use nat_core::data::{gen_split, SyntheticTaskSpec};
use nat_core::eval::{clustering_score, render_trace};
use nat_core::numerics::Rng;
use nat_core::optimizer::{Ramp, Schedules};
use nat_core::transducer::sample_trajectory;

fn main() -> nat_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map_or(5000, |s| s.parse().expect("steps"));
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().expect("seed"));

    let task = SyntheticTaskSpec {
        vocab_size: 8,
        tokens_per_utterance: (2, 4),
        frames_per_token: (6, 9),
        feature_dim: 8,
        noise_std: 0.3,
        seed,
        stack: 3,
    };
    let train = gen_split(&task, 500, 0)?;
    let dev = gen_split(&task, 200, 1)?;

    for (label, entropy) in [("entropy schedule", Schedules::default().entropy), ("no entropy", Ramp::constant(0.0))] {
        let mut cfg = RunConfig::with_seed(seed);
        cfg.model.layers = 1;
        cfg.model.units = 16;
        cfg.model.embed_dim = 4;
        cfg.estimator.k = 8;
        cfg.model.init_scale = 0.1;
        cfg.optimizer.lr = 3e-3;
        cfg.optimizer.l2 = 0.0;
        cfg.entropy = entropy;
        cfg.noise = Ramp::constant(0.0);
        let mut trainer = Trainer::new(&cfg, &train, &dev)?;
        for _ in 0..steps {
            trainer.train_step()?;
        }
        let mut rng = Rng::new(seed, 77);
        let mut scores = Vec::new();
        let mut example = String::new();
        for ep in trainer.dev_episodes() {
            let t = sample_trajectory(trainer.params(), ep, &mut rng)?;
            let steps: Vec<usize> = (0..t.len()).filter(|&i| t.emissions[i]).collect();
            scores.extend(clustering_score(&steps, t.len()));
            if example.is_empty() {
                example = render_trace(&t, 1)?;
            }
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let per = trainer.evaluate_dev()?.report.error_rate;
        println!("{label:>16}: clustering {mean:.3}  dev error {per:.3}  e.g. {example}");
    }
    Ok(())
}
