//! Prints the default entropy-weight and weight-noise schedules.

use nat_core::optimizer::Schedules;

fn main() {
    let s = Schedules::default();
    println!("{:>9} {:>8} {:>8}", "step", "entropy", "noise");
    for step in (0..=250_000).step_by(25_000) {
        println!("{step:>9} {:>8.4} {:>8.4}", s.entropy_at(step), s.noise_at(step));
    }
}
