//! Per-component variance of the policy gradient under each baseline,
//! relative to using no baseline at all.
//!
//! ```text
//! cargo run --release --example baseline_variance -- [K] [draws]
//! ```

use nat_core::cli::check::{gradient_moments, random_episode, random_model};
use nat_core::estimator::{BaselineKind, EntropyMode, EstimatorConfig, RewardConfig};
use nat_core::numerics::Rng;

fn main() -> nat_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let k = args.first().copied().unwrap_or(16);
    let draws = args.get(1).copied().unwrap_or(2000);

    let mut rng = Rng::new(3, 0);
    let params = random_model(vec![4], 3, 1.0, &mut rng)?;
    let episode = random_episode(6, 3, 3, &mut rng)?;

    let mut reference = None;
    for baseline in [BaselineKind::None, BaselineKind::Parametric, BaselineKind::LeaveOneOut] {
        let cfg = EstimatorConfig {
            k,
            baseline,
            reward: RewardConfig::entropy(0.5, EntropyMode::Symmetric),
        };
        let (_, var) = gradient_moments(&params, &episode, &cfg, draws, 11)?;
        let total: f64 = var.iter().sum();
        let base = *reference.get_or_insert(total);
        println!("{baseline:?}: summed variance {total:.4e} ({:.3} of no baseline)", total / base);
    }
    Ok(())
}
