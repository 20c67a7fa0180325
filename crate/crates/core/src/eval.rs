//! Edit-distance scoring, token collapsing and emission diagnostics.

use std::io::Write;
use std::path::Path;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::network::{ModelParams, EOS};
use crate::numerics::Rng;
use crate::transducer::{sample_trajectory, EpisodeInput, Trajectory};

/// Edit counts of one alignment. `insertions` are extra hypothesis tokens,
/// `deletions` are reference tokens the hypothesis missed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    fn add(&mut self, o: &EditCounts) {
        self.distance += o.distance;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }
}

/// Unit-cost Levenshtein distance. The backtrace prefers a substitution or
/// match, then a deletion, then an insertion.
pub fn levenshtein(hyp: &[usize], reference: &[usize]) -> EditCounts {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            let del = d[i * w + j - 1] + 1;
            let ins = d[(i - 1) * w + j] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut out = EditCounts {
        distance: d[n * w + m],
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let differs = hyp[i - 1] != reference[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(differs) {
                out.substitutions += usize::from(differs);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == d[i * w + j - 1] + 1 {
            out.deletions += 1;
            j -= 1;
        } else {
            out.insertions += 1;
            i -= 1;
        }
    }
    out
}

/// Many-to-one token relabeling applied before scoring. Unlisted tokens map
/// to themselves; EOS always maps to EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapseMap {
    map: Vec<usize>,
}

impl CollapseMap {
    pub fn identity(vocab_size: usize) -> Self {
        Self {
            map: (0..vocab_size).collect(),
        }
    }

    pub fn from_pairs(vocab_size: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut c = Self::identity(vocab_size);
        for &(from, to) in pairs {
            if from >= vocab_size || to >= vocab_size {
                return Err(Error::InvalidArgument(format!(
                    "collapse pair {from} -> {to} outside vocabulary of size {vocab_size}"
                )));
            }
            if (from == EOS) != (to == EOS) {
                return Err(Error::InvalidArgument("EOS may only map to itself".into()));
            }
            c.map[from] = to;
        }
        Ok(c)
    }

    /// Parses `<from> <to>` lines; `#` starts a comment. Symbols are looked up
    /// in `vocab` when given, otherwise read as numeric ids.
    pub fn parse(text: &str, vocab_size: usize, vocab: Option<&Vocabulary>) -> Result<Self> {
        let lookup = |s: &str, line: usize| -> Result<usize> {
            vocab
                .and_then(|v| v.id(s))
                .or_else(|| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("collapse map line {line}: unknown token {s:?}")))
        };
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Config(format!(
                    "collapse map line {}: expected `<from> <to>`",
                    n + 1
                )));
            }
            pairs.push((lookup(fields[0], n + 1)?, lookup(fields[1], n + 1)?));
        }
        Self::from_pairs(vocab_size, &pairs)
    }

    pub fn load(path: impl AsRef<Path>, vocab_size: usize, vocab: Option<&Vocabulary>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, vocab_size, vocab)
    }

    /// Maps tokens and drops EOS. Out-of-vocabulary ids pass through unchanged.
    pub fn apply(&self, tokens: &[usize]) -> Vec<usize> {
        tokens
            .iter()
            .filter(|&&t| t != EOS)
            .map(|&t| self.map.get(t).copied().unwrap_or(t))
            .collect()
    }
}

/// Corpus-level error counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_len: usize,
    pub error_rate: f64,
    /// Per-utterance counts with each reference length, in input order.
    pub per_utterance: Vec<(EditCounts, usize)>,
}

/// Error rate of `edits` against `reference_len` tokens; an empty reference
/// scores 0 when matched and infinity otherwise.
pub fn error_rate(edits: usize, reference_len: usize) -> f64 {
    match (edits, reference_len) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (e, r) => e as f64 / r as f64,
    }
}

/// Collapses and strips EOS on both sides, then accumulates edits over the corpus.
pub fn score(hyps: &[Vec<usize>], refs: &[Vec<usize>], collapse: &CollapseMap) -> Result<EvalReport> {
    if hyps.len() != refs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = EditCounts::default();
    let mut report = EvalReport::default();
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (collapse.apply(h), collapse.apply(r));
        let c = levenshtein(&h, &r);
        total.add(&c);
        report.reference_len += r.len();
        report.per_utterance.push((c, r.len()));
    }
    report.substitutions = total.substitutions;
    report.insertions = total.insertions;
    report.deletions = total.deletions;
    report.error_rate = error_rate(total.distance, report.reference_len);
    Ok(report)
}

/// One character per `chars_per_step` input steps: `x` if any step in the
/// group emitted, `-` otherwise.
pub fn render_emissions(emissions: &[bool], chars_per_step: usize) -> Result<String> {
    if chars_per_step == 0 {
        return Err(Error::InvalidArgument("chars_per_step must be at least 1".into()));
    }
    Ok(emissions
        .chunks(chars_per_step)
        .map(|g| if g.iter().any(|&e| e) { 'x' } else { '-' })
        .collect())
}

pub fn render_trace(traj: &Trajectory, chars_per_step: usize) -> Result<String> {
    render_emissions(&traj.emissions, chars_per_step)
}

/// One row of the emission-probability export.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmissionRow {
    pub step: usize,
    pub emit_prob: f64,
    pub emitted: bool,
}

/// Emission probabilities and the realized decisions of one sampled rollout.
pub fn export_emission_probs(
    params: &ModelParams,
    episode: &EpisodeInput,
    rng: &mut Rng,
) -> Result<(Trajectory, Vec<EmissionRow>)> {
    let traj = sample_trajectory(params, episode, rng)?;
    let rows = traj
        .emit_probs
        .iter()
        .zip(&traj.emissions)
        .enumerate()
        .map(|(step, (&emit_prob, &emitted))| EmissionRow {
            step,
            emit_prob,
            emitted,
        })
        .collect();
    Ok((traj, rows))
}

pub fn write_emission_csv(rows: &[EmissionRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "step,emit_prob,emitted")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.step, r.emit_prob, u8::from(r.emitted))?;
    }
    Ok(())
}

/// Fraction of emissions falling in the first or last tenth of the input.
pub fn clustering_score(emit_steps: &[usize], input_len: usize) -> Option<f64> {
    if emit_steps.is_empty() || input_len == 0 {
        return None;
    }
    let edge = input_len as f64 * 0.1;
    let hits = emit_steps
        .iter()
        .filter(|&&s| (s as f64) < edge || (s as f64) >= input_len as f64 - edge)
        .count();
    Some(hits as f64 / emit_steps.len() as f64)
}

/// Mean input step index of the emitted tokens.
pub fn mean_emission_step(emit_steps: &[usize]) -> Option<f64> {
    if emit_steps.is_empty() {
        return None;
    }
    Some(emit_steps.iter().sum::<usize>() as f64 / emit_steps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelConfig;
    use crate::numerics::Matrix;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    /// Minimum over every edit script, enumerated without memoization.
    fn brute_force(h: &[usize], r: &[usize]) -> usize {
        match (h.split_first(), r.split_first()) {
            (None, _) => r.len(),
            (_, None) => h.len(),
            (Some((a, ht)), Some((b, rt))) => {
                let sub = brute_force(ht, rt) + usize::from(a != b);
                let ins = brute_force(ht, r) + 1;
                let del = brute_force(h, rt) + 1;
                sub.min(ins).min(del)
            }
        }
    }

    #[test]
    fn small_examples() {
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 2, 3]).distance, 0);
        let c = levenshtein(&[1, 2, 3], &[1, 4, 3]);
        assert_eq!((c.distance, c.substitutions, c.insertions, c.deletions), (1, 1, 0, 0));
        let c = levenshtein(&[], &[1, 2]);
        assert_eq!((c.distance, c.deletions), (2, 2));
        let c = levenshtein(&[1, 2], &[]);
        assert_eq!((c.distance, c.insertions), (2, 2));
        // distance 2 reachable as sub+sub or del+ins; substitutions win
        let c = levenshtein(&[1, 2], &[2, 1]);
        assert_eq!((c.substitutions, c.insertions, c.deletions), (2, 0, 0));
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = Rng::new(11, 0);
        for _ in 0..1000 {
            let h: Vec<usize> = (0..rng.int_inclusive(0, 6)).map(|_| rng.int_inclusive(0, 2)).collect();
            let r: Vec<usize> = (0..rng.int_inclusive(0, 6)).map(|_| rng.int_inclusive(0, 2)).collect();
            let c = levenshtein(&h, &r);
            assert_eq!(c.distance, brute_force(&h, &r), "{h:?} {r:?}");
            assert_eq!(c.substitutions + c.insertions + c.deletions, c.distance);
            assert_eq!(c.insertions as isize - c.deletions as isize, h.len() as isize - r.len() as isize);
        }
    }

    #[test]
    fn score_examples() {
        let id = CollapseMap::identity(5);
        let refs = vec![vec![1, 2, 3, 4, 0], vec![1, 1, 2, 2, 3, 3, 0]];
        assert_eq!(score(&refs, &refs, &id).unwrap().error_rate, 0.0);
        let hyps = vec![vec![1, 2, 3, 0], vec![1, 1, 2, 4, 3, 3, 0]];
        let rep = score(&hyps, &refs, &id).unwrap();
        assert_eq!(rep.reference_len, 10);
        assert!((rep.error_rate - 0.2).abs() < 1e-15);
        assert_eq!((rep.substitutions, rep.deletions), (1, 1));
        assert!(score(&hyps[..1], &refs, &id).is_err());

        let x_to_a = CollapseMap::from_pairs(5, &[(4, 1)]).unwrap();
        assert_eq!(score(&[vec![4, 0]], &[vec![1, 0]], &x_to_a).unwrap().error_rate, 0.0);
        assert!(CollapseMap::from_pairs(5, &[(0, 1)]).is_err());
    }

    #[test]
    fn collapse_file_parsing() {
        let vocab = Vocabulary::parse("<eos>\naa\nao\nb\n").unwrap();
        let text = "# fold vowels\nao aa  # same class\n\n3 3\n";
        let c = CollapseMap::parse(text, 4, Some(&vocab)).unwrap();
        assert_eq!(c.apply(&[2, 1, 3, 0]), vec![1, 1, 3]);
        assert!(CollapseMap::parse("ao\n", 4, Some(&vocab)).is_err());
        assert!(CollapseMap::parse("zz aa\n", 4, Some(&vocab)).is_err());
    }

    #[test]
    fn trace_rendering() {
        let mut e = vec![false; 9];
        e[0] = true;
        e[8] = true;
        assert_eq!(render_emissions(&e, 3).unwrap(), "x-x");
        assert_eq!(render_emissions(&[true; 5], 1).unwrap(), "xxxxx");
        assert_eq!(render_emissions(&[false; 7], 3).unwrap(), "---");
        assert!(render_emissions(&e, 0).is_err());
    }

    #[test]
    fn zero_emission_weights_give_half() {
        let cfg = ModelConfig::new(2, vec![4], 3).with_embed_dim(2);
        let mut p = ModelParams::init(&cfg, 0.3, &mut Rng::new(1, 0)).unwrap();
        p.emit_w = Matrix::zeros(1, 4);
        let feats = vec![vec![0.3, -0.2]; 6];
        let ep = EpisodeInput::new(feats, vec![2, 0]).unwrap();
        let (traj, rows) = export_emission_probs(&p, &ep, &mut Rng::new(2, 0)).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.emit_prob == 0.5));
        assert_eq!(rows.iter().filter(|r| r.emitted).count(), 2);
        assert_eq!(render_trace(&traj, 4).unwrap().len(), 2);
        let mut buf = Vec::new();
        write_emission_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,emit_prob,emitted\n0,0.5,"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(clustering_score(&[0, 19], 20), Some(1.0));
        assert_eq!(clustering_score(&[5, 10], 20), Some(0.0));
        assert_eq!(clustering_score(&[1, 10, 18, 12], 20), Some(0.5));
        assert_eq!(clustering_score(&[], 20), None);
        assert_eq!(mean_emission_step(&[2, 4]), Some(3.0));
    }

    fn seq() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..3, 0..=6)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in seq(), b in seq(), c in seq()) {
            let d = |x: &[usize], y: &[usize]| levenshtein(x, y).distance;
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
            let ab = levenshtein(&a, &b);
            let ba = levenshtein(&b, &a);
            prop_assert_eq!(ab.insertions + ab.deletions + ab.substitutions, ba.distance);
            prop_assert_eq!(ab.insertions as isize - ab.deletions as isize, ba.deletions as isize - ba.insertions as isize);
        }

        #[test]
        fn relabeling_preserves_rate(
            pairs in prop::collection::vec((prop::collection::vec(1usize..5, 0..6), prop::collection::vec(1usize..5, 1..6)), 1..5),
            perm_seed in 0u64..1000,
        ) {
            let mut perm: Vec<usize> = (1..5).collect();
            Rng::new(perm_seed, 0).shuffle(&mut perm);
            let relabel = |s: &[usize]| -> Vec<usize> { s.iter().map(|&t| perm[t - 1]).collect() };
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let h2: Vec<_> = h.iter().map(|s| relabel(s)).collect();
            let r2: Vec<_> = r.iter().map(|s| relabel(s)).collect();
            let id = CollapseMap::identity(5);
            prop_assert_eq!(score(&h, &r, &id).unwrap().error_rate, score(&h2, &r2, &id).unwrap().error_rate);
        }
    }
}
