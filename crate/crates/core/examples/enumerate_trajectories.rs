//! Lists every emission pattern a small random model can produce for one
//! input, with its probability, and compares against Monte Carlo frequencies.
//!
//! ```text
//! cargo run --release --example enumerate_trajectories -- [T1] [T2] [samples]
//! ```

use nat_core::cli::check::{random_episode, random_model};
use nat_core::eval::render_emissions;
use nat_core::numerics::Rng;
use nat_core::transducer::{enumerate_trajectories, sample_trajectory};

fn main() -> nat_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let t1 = args.first().copied().unwrap_or(5);
    let t2 = args.get(1).copied().unwrap_or(2);
    let samples = args.get(2).copied().unwrap_or(20_000);

    let mut rng = Rng::new(7, 0);
    let params = random_model(vec![4], 3, 1.0, &mut rng)?;
    let episode = random_episode(t1, t2, 3, &mut rng)?;
    let all = enumerate_trajectories(&params, &episode)?;

    let mut counts = vec![0usize; all.len()];
    for _ in 0..samples {
        let t = sample_trajectory(&params, &episode, &mut rng)?;
        if let Some(k) = all.iter().position(|(e, _)| e.emissions == t.emissions) {
            counts[k] += 1;
        }
    }

    println!("{:<12} {:>10} {:>10}", "pattern", "exact", "sampled");
    for ((traj, p), c) in all.iter().zip(&counts) {
        println!("{:<12} {:>10.5} {:>10.5}", render_emissions(&traj.emissions, 1)?, p, *c as f64 / samples as f64);
    }
    let total: f64 = all.iter().map(|(_, p)| p).sum();
    println!("{} trajectories, total probability {total:.15}", all.len());
    Ok(())
}
