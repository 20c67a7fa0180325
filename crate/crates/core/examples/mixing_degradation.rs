//! Two-source mixing at increasing proportions of the interfering signal.
//!
//! Each primary utterance is paired once with a fixed confounder, both are
//! peak-normalized, and the confounder is added at the given proportion. The
//! model is trained on the primary transcripts; dev error should grow with
//! the proportion.
//!
//! ```text
//! cargo run --release --example mixing_degradation -- [steps] [seed]
//! ```

use nat_core::cli::train::Trainer;
use nat_core::cli::RunConfig;
use nat_core::data::{gen_split, mix_multi, SyntheticTaskSpec};
use nat_core::optimizer::Ramp;

fn main() -> nat_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map_or(4000, |s| s.parse().expect("steps"));
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().expect("seed"));

    let task = SyntheticTaskSpec {
        vocab_size: 8,
        tokens_per_utterance: (2, 4),
        frames_per_token: (6, 9),
        feature_dim: 8,
        noise_std: 0.6,
        seed,
        stack: 3,
    };
    let train = gen_split(&task, 400, 0)?;
    let dev = gen_split(&task, 300, 1)?;
    let train_other = gen_split(&task, 400, 2)?;
    let dev_other = gen_split(&task, 300, 3)?;

    for proportion in [0.1, 0.25, 0.5] {
        let train_mix = mix_multi(&train, &train_other, proportion, 1, seed)?;
        let dev_mix = mix_multi(&dev, &dev_other, proportion, 1, seed + 1)?;
        let mut cfg = RunConfig::with_seed(seed);
        cfg.model.layers = 1;
        cfg.model.units = 16;
        cfg.model.embed_dim = 4;
        cfg.model.init_scale = 0.1;
        cfg.estimator.k = 8;
        cfg.optimizer.lr = 3e-3;
        cfg.optimizer.l2 = 0.0;
        cfg.entropy = Ramp::new(1.0, 0.1, steps / 20, steps / 2)?;
        cfg.noise = Ramp::constant(0.0);
        let mut trainer = Trainer::new(&cfg, &train_mix, &dev_mix)?;
        let t0 = std::time::Instant::now();
        for _ in 0..steps {
            trainer.train_step()?;
        }
        let per = trainer.evaluate_dev()?.report.error_rate;
        println!("proportion {proportion:<4}  dev error {per:.4}  ({:.0}s)", t0.elapsed().as_secs_f64());
    }
    Ok(())
}
