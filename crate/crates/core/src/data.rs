//! Synthetic transduction tasks, two-source mixing, frame stacking and the
//! `NATD` dataset container.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::checkpoint::{take, take_u32};
use crate::network::EOS;
use crate::numerics::Rng;
use crate::transducer::EpisodeInput;

pub const DATASET_MAGIC: [u8; 4] = *b"NATD";
pub const DATASET_VERSION: u32 = 1;

/// One labeled input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub frames: Vec<Vec<f64>>,
    /// Target tokens, ending in EOS.
    pub targets: Vec<usize>,
}

impl Utterance {
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Stacks frames by `k` and wraps the result as a training episode.
    pub fn to_episode(&self, k: usize) -> Result<EpisodeInput> {
        EpisodeInput::new(stack_frames(&self.frames, k)?, self.targets.clone())
    }
}

/// Parameters of the synthetic clean task.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTaskSpec {
    /// Tokens including EOS (id 0).
    pub vocab_size: usize,
    /// Inclusive range of non-EOS tokens per utterance.
    pub tokens_per_utterance: (usize, usize),
    /// Inclusive range of raw frames rendered per token.
    pub frames_per_token: (usize, usize),
    pub feature_dim: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Stacking factor the data will be consumed with.
    pub stack: usize,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            tokens_per_utterance: (3, 6),
            frames_per_token: (6, 12),
            feature_dim: 8,
            noise_std: 0.1,
            seed: 1,
            stack: 3,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let (tmin, tmax) = self.tokens_per_utterance;
        let (fmin, fmax) = self.frames_per_token;
        if self.vocab_size < 2 {
            return Err(Error::InvalidArgument("vocab_size must be at least 2".into()));
        }
        if tmin > tmax || fmin > fmax || fmin == 0 {
            return Err(Error::InvalidArgument(
                "token and frame ranges must be nonempty with at least one frame per token".into(),
            ));
        }
        if self.stack == 0 || fmin < self.stack {
            return Err(Error::InvalidArgument(format!(
                "frames_per_token minimum {fmin} must be at least the stacking factor {}",
                self.stack
            )));
        }
        if self.feature_dim == 0 || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "feature_dim must be positive and noise_std non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Fixed per-token feature vectors, one row per token id.
    pub fn signatures(&self) -> Vec<Vec<f64>> {
        let mut rng = Rng::new(self.seed, 0);
        (0..self.vocab_size)
            .map(|_| (0..self.feature_dim).map(|_| rng.standard_normal()).collect())
            .collect()
    }
}

/// `count` utterances of split 0. See [`gen_split`].
pub fn gen_synthetic(spec: &SyntheticTaskSpec, count: usize) -> Result<Vec<Utterance>> {
    gen_split(spec, count, 0)
}

/// Random token strings rendered as runs of noisy signature frames.
///
/// Every non-EOS token and the closing EOS each occupy a run of frames; the
/// token signatures are shared across splits while utterance draws differ.
pub fn gen_split(spec: &SyntheticTaskSpec, count: usize, split: u64) -> Result<Vec<Utterance>> {
    spec.validate()?;
    let sigs = spec.signatures();
    let mut rng = Rng::new(spec.seed, 1 + split);
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let len = rng.int_inclusive(spec.tokens_per_utterance.0, spec.tokens_per_utterance.1);
        let mut targets: Vec<usize> = (0..len)
            .map(|_| rng.int_inclusive(1, spec.vocab_size - 1))
            .collect();
        targets.push(EOS);
        let mut frames = Vec::new();
        for &tok in &targets {
            let run = rng.int_inclusive(spec.frames_per_token.0, spec.frames_per_token.1);
            for _ in 0..run {
                let frame = sigs[tok]
                    .iter()
                    .map(|&s| s + spec.noise_std * rng.standard_normal())
                    .collect();
                frames.push(frame);
            }
        }
        out.push(Utterance {
            id: format!("syn{split}-{n:05}"),
            frames,
            targets,
        });
    }
    Ok(out)
}

fn peak(signal: &[f64]) -> f64 {
    signal.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Peak-normalizes both signals, then returns `primary + proportion * secondary`
/// cut or zero-padded to the primary's length.
pub fn mix_signals(primary: &[f64], secondary: &[f64], proportion: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::InvalidArgument(format!(
            "mixing proportion {proportion} outside [0, 1]"
        )));
    }
    let pp = peak(primary);
    if pp == 0.0 {
        return Err(Error::InvalidArgument(
            "primary signal is all zeros; peak normalization is undefined".into(),
        ));
    }
    let sp = peak(secondary);
    let s_scale = if sp == 0.0 { 0.0 } else { proportion / sp };
    Ok(primary
        .iter()
        .enumerate()
        .map(|(i, p)| p / pp + secondary.get(i).map_or(0.0, |s| s * s_scale))
        .collect())
}

/// Fixed one-to-one pairing between primary and secondary utterances.
#[derive(Clone, Debug, PartialEq)]
pub struct MixSpec {
    pub proportion: f64,
    /// `pairing[i]` is the secondary index mixed into primary `i`.
    pub pairing: Vec<usize>,
}

impl MixSpec {
    /// Seeded random bijection on `0..n` with no fixed points when `n > 1`,
    /// so mixing a split with itself never pairs an utterance with itself.
    pub fn fixed_pairing(proportion: f64, n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(seed, 0x6d6978).shuffle(&mut order);
        let mut pairing = vec![0; n];
        for w in 0..n {
            pairing[order[w]] = order[(w + 1) % n];
        }
        Self { proportion, pairing }
    }

    pub fn validate(&self, n_secondary: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.proportion) {
            return Err(Error::InvalidArgument(format!(
                "mixing proportion {} outside [0, 1]",
                self.proportion
            )));
        }
        let mut seen = vec![false; n_secondary];
        for &s in &self.pairing {
            if s >= n_secondary || std::mem::replace(&mut seen[s], true) {
                return Err(Error::InvalidArgument(
                    "pairing must be a bijection onto the secondary split".into(),
                ));
            }
        }
        if self.pairing.len() != n_secondary {
            return Err(Error::InvalidArgument(
                "pairing must be a bijection onto the secondary split".into(),
            ));
        }
        Ok(())
    }
}

/// Mixes every primary utterance with its paired secondary. Frames are
/// flattened row-major into one signal; the primary's transcript is kept.
pub fn mix_utterances(
    primary: &[Utterance],
    secondary: &[Utterance],
    spec: &MixSpec,
) -> Result<Vec<Utterance>> {
    if spec.pairing.len() != primary.len() {
        return Err(Error::InvalidArgument(format!(
            "pairing covers {} utterances, primary split has {}",
            spec.pairing.len(),
            primary.len()
        )));
    }
    spec.validate(secondary.len())?;
    primary
        .iter()
        .zip(&spec.pairing)
        .map(|(p, &si)| {
            let s = &secondary[si];
            if p.dim() != s.dim() {
                return Err(Error::Inconsistent(format!(
                    "cannot mix {} (dim {}) with {} (dim {})",
                    p.id,
                    p.dim(),
                    s.id,
                    s.dim()
                )));
            }
            let flat_p: Vec<f64> = p.frames.concat();
            let flat_s: Vec<f64> = s.frames.concat();
            let mixed = mix_signals(&flat_p, &flat_s, spec.proportion)?;
            Ok(Utterance {
                id: p.id.clone(),
                frames: mixed.chunks(p.dim()).map(<[f64]>::to_vec).collect(),
                targets: p.targets.clone(),
            })
        })
        .collect()
}

/// Mixes the primary split against `pairings` independent fixed pairings and
/// concatenates the results, so each primary utterance appears with several
/// different confounders. `pairings == 1` is plain fixed pairing.
pub fn mix_multi(
    primary: &[Utterance],
    secondary: &[Utterance],
    proportion: f64,
    pairings: usize,
    seed: u64,
) -> Result<Vec<Utterance>> {
    if pairings == 0 {
        return Err(Error::InvalidArgument("at least one pairing is required".into()));
    }
    if primary.len() != secondary.len() {
        return Err(Error::InvalidArgument(format!(
            "fixed pairing needs equal split sizes, got {} and {}",
            primary.len(),
            secondary.len()
        )));
    }
    let mut out = Vec::with_capacity(primary.len() * pairings);
    for r in 0..pairings {
        let spec = MixSpec::fixed_pairing(proportion, primary.len(), seed.wrapping_add(r as u64));
        let mut mixed = mix_utterances(primary, secondary, &spec)?;
        if pairings > 1 {
            for u in &mut mixed {
                u.id = format!("{}+m{r}", u.id);
            }
        }
        out.extend(mixed);
    }
    Ok(out)
}

/// Concatenates consecutive groups of `k` frames; a trailing partial group is zero-padded.
pub fn stack_frames(frames: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("cannot stack an empty frame sequence".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("stacking factor must be at least 1".into()));
    }
    let dim = frames[0].len();
    Ok(frames
        .chunks(k)
        .map(|group| {
            let mut out = Vec::with_capacity(k * dim);
            for f in group {
                out.extend_from_slice(f);
            }
            out.resize(k * dim, 0.0);
            out
        })
        .collect())
}

/// Serializes utterances into the `NATD` container.
pub fn encode_dataset(utts: &[Utterance]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(utts.len() as u32).to_le_bytes());
    let dim = utts.first().map(Utterance::dim);
    for u in utts {
        if u.frames.is_empty() || Some(u.dim()) != dim || u.frames.iter().any(|f| f.len() != u.dim()) {
            return Err(Error::Inconsistent(format!(
                "utterance {} has empty or mismatched frames",
                u.id
            )));
        }
        buf.extend_from_slice(&(u.id.len() as u32).to_le_bytes());
        buf.extend_from_slice(u.id.as_bytes());
        buf.extend_from_slice(&(u.frames.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(u.dim() as u32).to_le_bytes());
        for f in &u.frames {
            for v in f {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&(u.targets.len() as u32).to_le_bytes());
        for t in &u.targets {
            buf.extend_from_slice(&(*t as u32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<Utterance>> {
    let mut cur = bytes;
    let magic: [u8; 4] = take(&mut cur, 4, "magic")?.try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = take_u32(&mut cur, "version")?;
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = take_u32(&mut cur, "utterance count")? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut dataset_dim = None;
    for _ in 0..count {
        let id_len = take_u32(&mut cur, "id length")? as usize;
        let id = std::str::from_utf8(take(&mut cur, id_len, "id")?)
            .map_err(|e| Error::Inconsistent(format!("utterance id is not UTF-8: {e}")))?
            .to_string();
        let t1 = take_u32(&mut cur, "frame count")? as usize;
        let dim = take_u32(&mut cur, "frame dimension")? as usize;
        if t1 == 0 || dim == 0 {
            return Err(Error::Inconsistent(format!("utterance {id} has no frames")));
        }
        if *dataset_dim.get_or_insert(dim) != dim {
            return Err(Error::Inconsistent(format!(
                "utterance {id} has dimension {dim}, dataset uses {}",
                dataset_dim.unwrap()
            )));
        }
        let n = t1
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Inconsistent(format!("utterance {id} is absurdly large")))?;
        let raw = take(&mut cur, n, "frames")?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let frames = values.chunks(dim).map(<[f64]>::to_vec).collect();
        let t2 = take_u32(&mut cur, "target count")? as usize;
        let raw = take(&mut cur, t2.checked_mul(4).unwrap_or(usize::MAX), "targets")?;
        let targets = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        out.push(Utterance { id, frames, targets });
    }
    if !cur.is_empty() {
        return Err(Error::Inconsistent(format!("{} trailing bytes after dataset", cur.len())));
    }
    Ok(out)
}

pub fn write_dataset(utts: &[Utterance], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(utts)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    decode_dataset(&std::fs::read(path)?)
}

/// Token symbols indexed by id; id 0 is EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub symbols: Vec<String>,
}

pub const EOS_SYMBOL: &str = "<eos>";

impl Vocabulary {
    /// `<eos>` followed by `t1 .. t{n-1}`.
    pub fn synthetic(size: usize) -> Self {
        let mut symbols = vec![EOS_SYMBOL.to_string()];
        symbols.extend((1..size).map(|i| format!("t{i}")));
        Self { symbols }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let symbols: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if symbols.first().map(String::as_str) != Some(EOS_SYMBOL) {
            return Err(Error::Inconsistent(format!(
                "vocabulary must start with {EOS_SYMBOL} as id 0"
            )));
        }
        Ok(Self { symbols })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.symbols.join("\n");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn render(&self, tokens: &[usize]) -> String {
        tokens
            .iter()
            .map(|&t| self.symbols.get(t).map_or("?", String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn spec() -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            vocab_size: 8,
            tokens_per_utterance: (2, 5),
            frames_per_token: (3, 5),
            feature_dim: 4,
            noise_std: 0.2,
            seed: 3,
            stack: 3,
        }
    }

    #[test]
    fn noiseless_single_frames_are_signatures() {
        let s = SyntheticTaskSpec {
            noise_std: 0.0,
            frames_per_token: (1, 1),
            stack: 1,
            ..spec()
        };
        let sigs = s.signatures();
        for u in gen_synthetic(&s, 10).unwrap() {
            assert_eq!(u.frames.len(), u.targets.len());
            for (f, t) in u.frames.iter().zip(&u.targets) {
                assert_eq!(f, &sigs[*t]);
            }
            assert_eq!(*u.targets.last().unwrap(), EOS);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_synthetic(&spec(), 20).unwrap(), gen_synthetic(&spec(), 20).unwrap());
        assert_ne!(gen_split(&spec(), 5, 0).unwrap(), gen_split(&spec(), 5, 1).unwrap());
    }

    #[test]
    fn token_histogram_is_uniform() {
        let utts = gen_synthetic(&spec(), 100).unwrap();
        let mut counts = [0usize; 8];
        let mut n = 0;
        for u in &utts {
            for &t in &u.targets[..u.targets.len() - 1] {
                counts[t] += 1;
                n += 1;
            }
        }
        assert_eq!(counts[0], 0);
        let p = 1.0 / 7.0;
        let se = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn generated_episodes_fit_after_stacking() {
        for u in gen_synthetic(&spec(), 50).unwrap() {
            let ep = u.to_episode(3).unwrap();
            assert!(ep.target_len() <= ep.input_len());
        }
        let bad = SyntheticTaskSpec {
            frames_per_token: (2, 4),
            ..spec()
        };
        assert!(gen_synthetic(&bad, 1).is_err());
    }

    #[test]
    fn mixing_examples() {
        let p = vec![0.5, -2.0, 1.0, 0.0];
        let s = vec![3.0, 1.0];
        let norm: Vec<f64> = p.iter().map(|v| v / 2.0).collect();
        assert_eq!(mix_signals(&p, &s, 0.0).unwrap(), norm);
        let doubled: Vec<f64> = norm.iter().map(|v| 2.0 * v).collect();
        assert_eq!(mix_signals(&p, &p, 1.0).unwrap(), doubled);
        let m = mix_signals(&p, &s, 0.5).unwrap();
        assert_eq!(m, vec![0.25 + 0.5, -1.0 + 0.5 / 3.0, 0.5, 0.0]);
        assert!(mix_signals(&[0.0; 3], &s, 0.5).is_err());
        assert!(mix_signals(&p, &s, 1.5).is_err());
    }

    #[test]
    fn residual_energy_grows_with_proportion() {
        let mut rng = Rng::new(1, 1);
        let p: Vec<f64> = (0..200).map(|_| rng.standard_normal()).collect();
        let s: Vec<f64> = (0..150).map(|_| rng.standard_normal()).collect();
        let pn: Vec<f64> = mix_signals(&p, &s, 0.0).unwrap();
        let energy = |prop: f64| {
            let m = mix_signals(&p, &s, prop).unwrap();
            m.iter().zip(&pn).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let e: Vec<f64> = [0.1, 0.25, 0.5].iter().map(|&x| energy(x)).collect();
        assert!(e[0] < e[1] && e[1] < e[2], "{e:?}");
        // scaled secondary has peak exactly `proportion`
        let m = mix_signals(&p, &s, 0.25).unwrap();
        let sec_peak = m.iter().zip(&pn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!((sec_peak - 0.25).abs() < 1e-12);
        assert!((peak(&pn) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pairing_is_a_derangement() {
        for n in [2, 3, 10, 57] {
            let m = MixSpec::fixed_pairing(0.25, n, 9);
            m.validate(n).unwrap();
            assert!(m.pairing.iter().enumerate().all(|(i, &j)| i != j));
            assert_eq!(m, MixSpec::fixed_pairing(0.25, n, 9));
        }
        let bad = MixSpec {
            proportion: 0.1,
            pairing: vec![0, 0],
        };
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn mixing_utterances_keeps_primary_transcript() {
        let utts = gen_synthetic(&spec(), 6).unwrap();
        let mix = MixSpec::fixed_pairing(0.0, 6, 1);
        let out = mix_utterances(&utts, &utts, &mix).unwrap();
        for (o, u) in out.iter().zip(&utts) {
            assert_eq!(o.targets, u.targets);
            assert_eq!(o.frames.len(), u.frames.len());
            let pk = peak(&u.frames.concat());
            for (fo, fu) in o.frames.iter().flatten().zip(u.frames.iter().flatten()) {
                assert_eq!(*fo, fu / pk);
            }
        }
    }

    #[test]
    fn multi_pairing_replicates_the_split() {
        let utts = gen_synthetic(&spec(), 5).unwrap();
        let one = mix_multi(&utts, &utts, 0.25, 1, 4).unwrap();
        assert_eq!(one, mix_utterances(&utts, &utts, &MixSpec::fixed_pairing(0.25, 5, 4)).unwrap());
        let three = mix_multi(&utts, &utts, 0.25, 3, 4).unwrap();
        assert_eq!(three.len(), 15);
        assert_ne!(three[0].frames, three[5].frames);
        assert_eq!(three[0].targets, three[5].targets);
        assert!(mix_multi(&utts, &utts[..4], 0.25, 1, 4).is_err());
    }

    #[test]
    fn stacking_examples() {
        let frames: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64; 41]).collect();
        let st = stack_frames(&frames, 3).unwrap();
        assert_eq!(st.len(), 3);
        assert!(st.iter().all(|f| f.len() == 123));
        assert_eq!(stack_frames(&frames, 1).unwrap(), frames);
        let ten: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 + 1.0; 2]).collect();
        let st = stack_frames(&ten, 3).unwrap();
        assert_eq!(st.len(), 4);
        assert_eq!(st[3], vec![10.0, 10.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(stack_frames(&[], 3).is_err());
    }

    #[test]
    fn dataset_round_trip_and_errors() {
        let utts = gen_synthetic(&spec(), 4).unwrap();
        let bytes = encode_dataset(&utts).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(encode_dataset(&back).unwrap(), bytes);
        for (a, b) in utts.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.targets, b.targets);
            for (x, y) in a.frames.iter().flatten().zip(b.frames.iter().flatten()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_dataset(&bad), Err(Error::UnsupportedVersion(2))));

        let empty = encode_dataset(&[]).unwrap();
        assert_eq!(empty.len(), 12);
        assert!(decode_dataset(&empty).unwrap().is_empty());

        let mut mixed = utts.clone();
        mixed[1].frames = vec![vec![1.0; 3]; 4];
        assert!(matches!(encode_dataset(&mixed), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn vocabulary_file() {
        let v = Vocabulary::parse("<eos>\na\nb\n").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("b"), Some(2));
        assert_eq!(v.render(&[1, 2, 0]), "a b <eos>");
        assert!(Vocabulary::parse("a\n<eos>\n").is_err());
        assert_eq!(Vocabulary::synthetic(3).symbols, vec!["<eos>", "t1", "t2"]);
    }

    proptest! {
        #[test]
        fn stacking_preserves_values(t in 1usize..40, dim in 1usize..6, k in 1usize..5) {
            let frames: Vec<Vec<f64>> = (0..t)
                .map(|i| (0..dim).map(|d| (i * dim + d) as f64 + 1.0).collect())
                .collect();
            let st = stack_frames(&frames, k).unwrap();
            prop_assert_eq!(st.len(), t.div_ceil(k));
            let flat: Vec<f64> = st.concat();
            prop_assert_eq!(flat.len(), t.div_ceil(k) * k * dim);
            prop_assert_eq!(&flat[..t * dim], &frames.concat()[..]);
            prop_assert!(flat[t * dim..].iter().all(|&v| v == 0.0));
        }
    }
}
