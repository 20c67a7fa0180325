//! Trains a small transducer on the synthetic clean task and reports dev
//! token error as it goes.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [steps] [lr] [seed]
//! ```

use nat_core::cli::train::Trainer;
use nat_core::cli::RunConfig;
use nat_core::data::{gen_split, SyntheticTaskSpec};
use nat_core::optimizer::Ramp;

fn main() -> nat_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map_or(20_000, |s| s.parse().expect("steps"));
    let lr: f64 = args.get(1).map_or(2e-3, |s| s.parse().expect("lr"));
    let seed: u64 = args.get(2).map_or(1, |s| s.parse().expect("seed"));

    let task = SyntheticTaskSpec {
        vocab_size: 8,
        tokens_per_utterance: (3, 6),
        frames_per_token: (8, 14),
        feature_dim: 8,
        noise_std: 0.3,
        seed,
        stack: 3,
    };
    let train = gen_split(&task, 500, 0)?;
    let dev = gen_split(&task, 100, 1)?;
    let mean_t1: f64 = dev.iter().map(|u| u.frames.len().div_ceil(3) as f64).sum::<f64>() / dev.len() as f64;
    println!("train {} utterances, dev {}, mean stacked length {mean_t1:.1}", train.len(), dev.len());

    let mut cfg = RunConfig::with_seed(seed);
    cfg.model.layers = 2;
    cfg.model.units = 32;
    cfg.model.embed_dim = 8;
    cfg.model.init_scale = 0.1;
    cfg.estimator.k = 16;
    cfg.optimizer.lr = lr;
    cfg.optimizer.l2 = 0.0;
    cfg.entropy = Ramp::new(1.0, 0.1, steps / 20, steps / 2)?;
    cfg.noise = Ramp::constant(0.0);
    cfg.data.stack = 3;

    let mut trainer = Trainer::new(&cfg, &train, &dev)?;
    let t0 = std::time::Instant::now();
    for _ in 0..steps {
        let st = trainer.train_step()?;
        if st.step % 1000 == 0 {
            let per = trainer.evaluate_dev()?.report.error_rate;
            println!(
                "step {:>6}  reward {:>8.3}  lambda {:.3}  dev error {:.4}  ({:.0}s)",
                st.step,
                trainer.take_mean_reward(),
                st.entropy_weight,
                per,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
