//! Scores hypotheses against references with and without a collapse map.
//!
//! The map folds symbols 3 and 4 into 2, so confusions among them stop
//! counting as errors.

use nat_core::data::Vocabulary;
use nat_core::eval::{levenshtein, score, CollapseMap};

fn main() -> nat_core::Result<()> {
    let vocab = Vocabulary::synthetic(6);
    let refs = vec![vec![1, 2, 3, 0], vec![4, 4, 5, 0], vec![1, 5, 0]];
    let hyps = vec![vec![1, 3, 3, 0], vec![2, 4, 0], vec![1, 1, 5, 0]];

    for (h, r) in hyps.iter().zip(&refs) {
        let e = levenshtein(h, r);
        println!(
            "{:<12} vs {:<12} distance {} (S {} I {} D {})",
            vocab.render(h),
            vocab.render(r),
            e.distance,
            e.substitutions,
            e.insertions,
            e.deletions
        );
    }

    let plain = score(&hyps, &refs, &CollapseMap::identity(vocab.len()))?;
    let folded = CollapseMap::parse("t3 t2\nt4 t2\n", vocab.len(), Some(&vocab))?;
    let collapsed = score(&hyps, &refs, &folded)?;
    println!("error rate: {:.3} raw, {:.3} collapsed", plain.error_rate, collapsed.error_rate);
    Ok(())
}
