//! Briefly trains a small model, then writes per-step emission probabilities
//! for one dev utterance to a CSV and prints its emission trace.
//!
//! ```text
//! cargo run --release --example export_emissions -- [steps] [out.csv]
//! ```

use std::fs::File;

use nat_core::cli::train::Trainer;
use nat_core::cli::RunConfig;
use nat_core::data::{gen_split, SyntheticTaskSpec};
use nat_core::eval::{export_emission_probs, render_trace, write_emission_csv};
use nat_core::numerics::Rng;

fn main() -> nat_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(1500, |s| s.parse().expect("steps"));
    let out = args.next().unwrap_or_else(|| "emissions.csv".into());

    let task = SyntheticTaskSpec {
        tokens_per_utterance: (2, 4),
        frames_per_token: (6, 9),
        ..SyntheticTaskSpec::default()
    };
    let train = gen_split(&task, 200, 0)?;
    let dev = gen_split(&task, 20, 1)?;
    let mut cfg = RunConfig::with_seed(5);
    cfg.model.layers = 1;
    cfg.model.units = 16;
    cfg.model.embed_dim = 4;
    cfg.estimator.k = 8;
    cfg.optimizer.lr = 3e-3;
    let mut trainer = Trainer::new(&cfg, &train, &dev)?;
    for _ in 0..steps {
        trainer.train_step()?;
    }

    let episode = &trainer.dev_episodes()[0];
    let (traj, rows) = export_emission_probs(trainer.params(), episode, &mut Rng::new(5, 1))?;
    println!("{}", render_trace(&traj, 1)?);
    write_emission_csv(&rows, &mut File::create(&out)?)?;
    println!("wrote {} rows to {out}", rows.len());
    Ok(())
}
