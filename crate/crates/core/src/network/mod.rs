//! Stacked LSTM with emission and output heads, weight noise, and
//! hand-derived backpropagation through time.
//!
//! Gate rows in each layer's weight matrix are stacked in the order
//! input, forget, output, cell-candidate (`i, f, o, g`), each `hidden` rows
//! tall. Columns are `[layer input, previous hidden state]`.

pub mod checkpoint;

use crate::error::{shape, Error, Result};
use crate::numerics::{dot, log_softmax_at, sigmoid, softmax_stable, Matrix, Rng};

/// End-of-sequence token id. Every target sequence ends with it.
pub const EOS: usize = 0;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Dimension of one (stacked) feature frame.
    pub input_dim: usize,
    /// Size of the previous-token embedding.
    pub embed_dim: usize,
    /// Hidden units per LSTM layer, bottom to top.
    pub hidden: Vec<usize>,
    /// Number of output tokens including EOS.
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>, vocab_size: usize) -> Self {
        Self {
            input_dim,
            embed_dim: 16,
            hidden,
            vocab_size,
        }
    }

    pub fn with_embed_dim(mut self, embed_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self
    }

    /// Width of the layer-0 input: features, previous emission bit, token embedding.
    pub fn step_input_dim(&self) -> usize {
        self.input_dim + 1 + self.embed_dim
    }

    /// Row of the embedding table used for the beginning-of-sequence symbol.
    pub fn bos(&self) -> usize {
        self.vocab_size
    }

    pub fn top_hidden(&self) -> usize {
        *self.hidden.last().expect("at least one layer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "model needs at least one layer with nonzero width".into(),
            ));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "vocab_size must be at least 2 (EOS plus one token), got {}",
                self.vocab_size
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of one LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `4H x (input_size + H)`, gates stacked `i, f, o, g`.
    pub w: Matrix,
    /// `4H x 1`.
    pub b: Matrix,
}

impl LstmLayerParams {
    fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: Matrix::zeros(4 * hidden_size, input_size + hidden_size),
            b: Matrix::zeros(4 * hidden_size, 1),
        }
    }
}

/// Whether a block is a weight matrix or a bias; L2 only touches weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Weight,
    Bias,
}

/// All learnable parameters. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LstmLayerParams>,
    /// Emission projection, `1 x H`.
    pub emit_w: Matrix,
    /// Output projection, `V x H`.
    pub out_w: Matrix,
    /// Parametric baseline projection, `1 x H`.
    pub baseline_w: Matrix,
    /// Parametric baseline bias, `1 x 1`.
    pub baseline_o: Matrix,
    /// Token embeddings, `(V + 1) x E`; the last row is BOS.
    pub embed: Matrix,
    config: ModelConfig,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.hidden.len());
        let mut input = config.step_input_dim();
        for &h in &config.hidden {
            layers.push(LstmLayerParams::zeros(input, h));
            input = h;
        }
        let top = config.top_hidden();
        Ok(Self {
            layers,
            emit_w: Matrix::zeros(1, top),
            out_w: Matrix::zeros(config.vocab_size, top),
            baseline_w: Matrix::zeros(1, top),
            baseline_o: Matrix::zeros(1, 1),
            embed: Matrix::zeros(config.vocab_size + 1, config.embed_dim),
            config: config.clone(),
        })
    }

    /// Uniform `[-scale, scale]` weights, forget-gate bias 1, other biases 0.
    pub fn init(config: &ModelConfig, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        p.for_each_block_mut(|name, kind, m| {
            if kind == BlockKind::Weight && name != "baseline.w" {
                for v in m.as_mut_slice() {
                    *v = rng.uniform_range(-scale, scale);
                }
            }
        });
        for layer in &mut p.layers {
            let h = layer.hidden_size;
            for r in h..2 * h {
                layer.b.set(r, 0, 1.0);
            }
        }
        Ok(p)
    }

    /// Default initialization scale 0.05.
    pub fn init_default(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        Self::init(config, 0.05, rng)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Visits every block in a fixed order.
    pub fn for_each_block<'a>(&'a self, mut f: impl FnMut(&str, BlockKind, &'a Matrix)) {
        for (l, layer) in self.layers.iter().enumerate() {
            f(&format!("lstm.{l}.w"), BlockKind::Weight, &layer.w);
            f(&format!("lstm.{l}.b"), BlockKind::Bias, &layer.b);
        }
        f("emit.w", BlockKind::Weight, &self.emit_w);
        f("out.w", BlockKind::Weight, &self.out_w);
        f("baseline.w", BlockKind::Weight, &self.baseline_w);
        f("baseline.o", BlockKind::Bias, &self.baseline_o);
        f("embed", BlockKind::Weight, &self.embed);
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(&str, BlockKind, &mut Matrix)) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            f(&format!("lstm.{l}.w"), BlockKind::Weight, &mut layer.w);
            f(&format!("lstm.{l}.b"), BlockKind::Bias, &mut layer.b);
        }
        f("emit.w", BlockKind::Weight, &mut self.emit_w);
        f("out.w", BlockKind::Weight, &mut self.out_w);
        f("baseline.w", BlockKind::Weight, &mut self.baseline_w);
        f("baseline.o", BlockKind::Bias, &mut self.baseline_o);
        f("embed", BlockKind::Weight, &mut self.embed);
    }

    /// Visits matching blocks of `self` and `other` (same config).
    pub fn zip_blocks_mut(
        &mut self,
        other: &ModelParams,
        mut f: impl FnMut(&str, BlockKind, &mut Matrix, &Matrix),
    ) {
        let mut theirs: Vec<&Matrix> = Vec::new();
        other.for_each_block(|_, _, m| theirs.push(m));
        let mut idx = 0;
        self.for_each_block_mut(|name, kind, m| {
            f(name, kind, m, theirs[idx]);
            idx += 1;
        });
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_block(|n, _, _| names.push(n.to_string()));
        names
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_block(|_, _, m| n += m.len());
        n
    }

    /// All values in block order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_block(|_, _, m| out.extend_from_slice(m.as_slice()));
        out
    }

    /// Block name and offset within the block of flat index `idx`.
    pub fn locate(&self, idx: usize) -> Option<(String, usize)> {
        let mut base = 0;
        let mut found = None;
        self.for_each_block(|name, _, m| {
            if found.is_none() && idx < base + m.len() {
                found = Some((name.to_string(), idx - base));
            }
            base += m.len();
        });
        found
    }

    pub fn get_flat(&self, idx: usize) -> f64 {
        let mut base = 0;
        let mut out = f64::NAN;
        self.for_each_block(|_, _, m| {
            if idx >= base && idx < base + m.len() {
                out = m.as_slice()[idx - base];
            }
            base += m.len();
        });
        out
    }

    pub fn set_flat(&mut self, idx: usize, value: f64) {
        let mut base = 0;
        self.for_each_block_mut(|_, _, m| {
            if idx >= base && idx < base + m.len() {
                m.as_mut_slice()[idx - base] = value;
            }
            base += m.len();
        });
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, alpha: f64) {
        self.zip_blocks_mut(other, |_, _, a, b| a.add_scaled(b, alpha));
    }

    /// Running-mean step: `self += (sample - self) / count`.
    pub fn mean_update(&mut self, sample: &ModelParams, count: usize) {
        let inv = 1.0 / count as f64;
        self.zip_blocks_mut(sample, |_, _, a, b| {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += (y - *x) * inv;
            }
        });
    }

    pub fn scale(&mut self, alpha: f64) {
        self.for_each_block_mut(|_, _, m| {
            for v in m.as_mut_slice() {
                *v *= alpha;
            }
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_block(|_, _, m| ok &= m.is_finite());
        ok
    }

    pub fn squared_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_block(|_, _, m| s += m.as_slice().iter().map(|v| v * v).sum::<f64>());
        s
    }
}

/// Concatenates the frame, the previous emission bit and the previous-token embedding.
pub fn step_input(
    x: &[f64],
    b_prev: bool,
    token_prev: usize,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let cfg = params.config();
    if x.len() != cfg.input_dim {
        return Err(shape(
            "step_input",
            format!("frame has {} features, model expects {}", x.len(), cfg.input_dim),
        ));
    }
    if token_prev > cfg.bos() {
        return Err(Error::InvalidArgument(format!(
            "token id {token_prev} outside vocabulary of {} (+BOS)",
            cfg.vocab_size
        )));
    }
    let mut out = Vec::with_capacity(cfg.step_input_dim());
    out.extend_from_slice(x);
    out.push(if b_prev { 1.0 } else { 0.0 });
    out.extend_from_slice(params.embed.row(token_prev));
    Ok(out)
}

/// Hidden and cell state for every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(params: &ModelParams) -> Self {
        let h: Vec<Vec<f64>> = params
            .layers
            .iter()
            .map(|l| vec![0.0; l.hidden_size])
            .collect();
        Self { c: h.clone(), h }
    }

    pub fn top(&self) -> &[f64] {
        self.h.last().expect("at least one layer")
    }
}

/// Cached activations of one layer at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTape {
    /// `[layer input, previous h]`.
    pub xh: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Everything one forward step needs kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTape {
    /// Embedding row fed at this step, when the input came from [`step_input`].
    pub token_prev: Option<usize>,
    pub layers: Vec<LayerTape>,
}

impl StepTape {
    pub fn h_top(&self) -> &[f64] {
        &self.layers.last().expect("at least one layer").h
    }

    pub fn input(&self) -> &[f64] {
        let l0 = &self.layers[0];
        &l0.xh[..l0.xh.len() - l0.h.len()]
    }
}

/// One step of the stacked LSTM. `step` is only used for error reporting.
pub fn lstm_forward(
    params: &ModelParams,
    state: &LstmState,
    input: &[f64],
    step: usize,
) -> Result<(LstmState, StepTape)> {
    if state.h.len() != params.layers.len() {
        return Err(shape(
            "lstm_forward",
            format!(
                "state has {} layers, params have {}",
                state.h.len(),
                params.layers.len()
            ),
        ));
    }
    let mut next = LstmState {
        h: Vec::with_capacity(params.layers.len()),
        c: Vec::with_capacity(params.layers.len()),
    };
    let mut tapes = Vec::with_capacity(params.layers.len());
    let mut below: &[f64] = input;
    for (l, layer) in params.layers.iter().enumerate() {
        let hs = layer.hidden_size;
        if below.len() != layer.input_size || state.h[l].len() != hs || state.c[l].len() != hs {
            return Err(shape(
                "lstm_forward",
                format!(
                    "layer {l} expects input {} and hidden {hs}, got input {} and hidden {}/{}",
                    layer.input_size,
                    below.len(),
                    state.h[l].len(),
                    state.c[l].len()
                ),
            ));
        }
        let mut xh = Vec::with_capacity(layer.input_size + hs);
        xh.extend_from_slice(below);
        xh.extend_from_slice(&state.h[l]);
        let mut i = vec![0.0; hs];
        let mut f = vec![0.0; hs];
        let mut o = vec![0.0; hs];
        let mut g = vec![0.0; hs];
        for u in 0..hs {
            i[u] = sigmoid(dot(layer.w.row(u), &xh) + layer.b.get(u, 0));
            f[u] = sigmoid(dot(layer.w.row(hs + u), &xh) + layer.b.get(hs + u, 0));
            o[u] = sigmoid(dot(layer.w.row(2 * hs + u), &xh) + layer.b.get(2 * hs + u, 0));
            g[u] = (dot(layer.w.row(3 * hs + u), &xh) + layer.b.get(3 * hs + u, 0)).tanh();
        }
        let c_prev = state.c[l].clone();
        let c: Vec<f64> = (0..hs).map(|u| f[u] * c_prev[u] + i[u] * g[u]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hs).map(|u| o[u] * tanh_c[u]).collect();
        if !h.iter().chain(&c).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                layer: l,
                what: "LSTM activation".into(),
            });
        }
        next.h.push(h.clone());
        next.c.push(c.clone());
        tapes.push(LayerTape {
            xh,
            i,
            f,
            o,
            g,
            c_prev,
            c,
            tanh_c,
            h,
        });
        below = &tapes.last().unwrap().h;
    }
    Ok((
        next,
        StepTape {
            token_prev: None,
            layers: tapes,
        },
    ))
}

/// `W_b . h`.
pub fn emission_logit(h_top: &[f64], params: &ModelParams) -> f64 {
    dot(params.emit_w.row(0), h_top)
}

/// `sigmoid(W_b . h)`.
pub fn emission_prob(h_top: &[f64], params: &ModelParams) -> Result<f64> {
    if h_top.len() != params.emit_w.cols() {
        return Err(shape(
            "emission_prob",
            format!("h has {} entries, W_b has {} columns", h_top.len(), params.emit_w.cols()),
        ));
    }
    Ok(sigmoid(emission_logit(h_top, params)))
}

/// `W_o h`.
pub fn output_logits(h_top: &[f64], params: &ModelParams) -> Vec<f64> {
    params.out_w.matvec(h_top)
}

/// `softmax(W_o h)`.
pub fn output_dist(h_top: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    if h_top.len() != params.out_w.cols() {
        return Err(shape(
            "output_dist",
            format!("h has {} entries, W_o has {} columns", h_top.len(), params.out_w.cols()),
        ));
    }
    softmax_stable(&output_logits(h_top, params))
}

/// `log softmax(W_o h)[token]`.
pub fn output_log_prob(h_top: &[f64], params: &ModelParams, token: usize) -> f64 {
    log_softmax_at(&output_logits(h_top, params), token)
}

/// Copy of `params` with i.i.d. `N(0, std^2)` added to every entry.
pub fn apply_weight_noise(params: &ModelParams, std: f64, rng: &mut Rng) -> Result<ModelParams> {
    if !(std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise std {std} is negative")));
    }
    let mut noisy = params.clone();
    if std == 0.0 {
        return Ok(noisy);
    }
    noisy.for_each_block_mut(|_, _, m| {
        for v in m.as_mut_slice() {
            *v += std * rng.standard_normal();
        }
    });
    Ok(noisy)
}

/// Per-step partial derivatives of a scalar objective.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepSignal {
    /// Direct gradient on the top hidden state.
    pub d_h_top: Option<Vec<f64>>,
    /// Gradient on the emission logit `W_b . h`.
    pub d_emit_logit: f64,
    /// Gradient on the output logits `W_o h`.
    pub d_out_logits: Option<Vec<f64>>,
}

/// Exact reverse-mode gradients, accumulated over all steps.
///
/// Discrete inputs (emission bit, token id) are treated as constants; the
/// embedding row that was read at each step receives its gradient.
pub fn backward(
    params: &ModelParams,
    tape: &[StepTape],
    signals: &[StepSignal],
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    backward_into(params, tape, signals, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into `grads`.
pub fn backward_into(
    params: &ModelParams,
    tape: &[StepTape],
    signals: &[StepSignal],
    grads: &mut ModelParams,
) -> Result<()> {
    if tape.len() != signals.len() {
        return Err(shape(
            "backward",
            format!("tape has {} steps, got {} signals", tape.len(), signals.len()),
        ));
    }
    let n_layers = params.layers.len();
    let mut dh_next: Vec<Vec<f64>> = params.layers.iter().map(|l| vec![0.0; l.hidden_size]).collect();
    let mut dc_next = dh_next.clone();
    let cfg = params.config();

    for (t, (step, sig)) in tape.iter().zip(signals).enumerate().rev() {
        if step.layers.len() != n_layers {
            return Err(shape("backward", format!("tape step {t} has wrong layer count")));
        }
        let h_top = step.h_top();
        let mut d_above = match &sig.d_h_top {
            Some(d) => d.clone(),
            None => vec![0.0; h_top.len()],
        };
        if sig.d_emit_logit != 0.0 {
            grads.emit_w.add_outer(&[sig.d_emit_logit], h_top, 1.0);
            params.emit_w.add_matvec_transposed(&[sig.d_emit_logit], &mut d_above);
        }
        if let Some(dl) = &sig.d_out_logits {
            grads.out_w.add_outer(dl, h_top, 1.0);
            params.out_w.add_matvec_transposed(dl, &mut d_above);
        }

        for l in (0..n_layers).rev() {
            let lt = &step.layers[l];
            let layer = &params.layers[l];
            let hs = layer.hidden_size;
            let mut dz = vec![0.0; 4 * hs];
            let mut dc_prev = vec![0.0; hs];
            for u in 0..hs {
                let dh = d_above[u] + dh_next[l][u];
                let dc = dc_next[l][u] + dh * lt.o[u] * (1.0 - lt.tanh_c[u] * lt.tanh_c[u]);
                let d_o = dh * lt.tanh_c[u];
                let d_i = dc * lt.g[u];
                let d_g = dc * lt.i[u];
                let d_f = dc * lt.c_prev[u];
                dz[u] = d_i * lt.i[u] * (1.0 - lt.i[u]);
                dz[hs + u] = d_f * lt.f[u] * (1.0 - lt.f[u]);
                dz[2 * hs + u] = d_o * lt.o[u] * (1.0 - lt.o[u]);
                dz[3 * hs + u] = d_g * (1.0 - lt.g[u] * lt.g[u]);
                dc_prev[u] = dc * lt.f[u];
            }
            let gl = &mut grads.layers[l];
            gl.w.add_outer(&dz, &lt.xh, 1.0);
            for (r, v) in dz.iter().enumerate() {
                gl.b.as_mut_slice()[r] += v;
            }
            let mut dxh = vec![0.0; lt.xh.len()];
            layer.w.add_matvec_transposed(&dz, &mut dxh);
            dh_next[l] = dxh[layer.input_size..].to_vec();
            dc_next[l] = dc_prev;
            d_above = dxh[..layer.input_size].to_vec();
        }

        if let Some(tok) = step.token_prev {
            let off = cfg.input_dim + 1;
            let row = grads.embed.row_mut(tok);
            for (g, d) in row.iter_mut().zip(&d_above[off..off + cfg.embed_dim]) {
                *g += d;
            }
        }
    }
    Ok(())
}

/// Re-runs the forward pass from the inputs recorded on a tape.
pub fn replay_tape(params: &ModelParams, tape: &[StepTape]) -> Result<Vec<StepTape>> {
    let mut state = LstmState::zeros(params);
    let mut out = Vec::with_capacity(tape.len());
    for (t, rec) in tape.iter().enumerate() {
        let (next, mut replayed) = lstm_forward(params, &state, rec.input(), t)?;
        replayed.token_prev = rec.token_prev;
        out.push(replayed);
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(hidden: Vec<usize>, seed: u64) -> ModelParams {
        let cfg = ModelConfig::new(3, hidden, 4).with_embed_dim(2);
        let mut rng = Rng::new(seed, 0);
        ModelParams::init(&cfg, 0.5, &mut rng).unwrap()
    }

    fn run(params: &ModelParams, inputs: &[Vec<f64>]) -> Vec<StepTape> {
        let mut state = LstmState::zeros(params);
        let mut tape = Vec::new();
        for (t, x) in inputs.iter().enumerate() {
            let (s, rec) = lstm_forward(params, &state, x, t).unwrap();
            state = s;
            tape.push(rec);
        }
        tape
    }

    #[test]
    fn step_input_layout() {
        let cfg = ModelConfig::new(123, vec![8], 5);
        let mut rng = Rng::new(0, 0);
        let p = ModelParams::init_default(&cfg, &mut rng).unwrap();
        let x = vec![0.25; 123];
        let u = step_input(&x, false, cfg.bos(), &p).unwrap();
        assert_eq!(u.len(), 140);
        assert_eq!(u[123], 0.0);
        assert_eq!(&u[124..], p.embed.row(cfg.bos()));
        assert_eq!(u, step_input(&x, false, cfg.bos(), &p).unwrap());
        assert_eq!(step_input(&x, true, 2, &p).unwrap()[123], 1.0);
        assert!(step_input(&x[..100], false, 0, &p).is_err());
        assert!(step_input(&x, false, 9, &p).is_err());
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let cfg = ModelConfig::new(3, vec![4, 4], 3).with_embed_dim(2);
        let p = ModelParams::zeros(&cfg).unwrap();
        let state = LstmState::zeros(&p);
        let (next, _) = lstm_forward(&p, &state, &[1.0; 6], 0).unwrap();
        assert!(next.top().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // one layer, hidden 2, input 1 (+ bit + embed 0 -> layer input 2)
        let cfg = ModelConfig::new(1, vec![2], 2).with_embed_dim(0);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        // columns: x, bit, h0, h1
        let w = [
            [0.5, 0.0, 0.0, 0.0],  // i0
            [-0.5, 0.0, 0.0, 0.0], // i1
            [0.0, 0.0, 0.0, 0.0],  // f0
            [0.0, 0.0, 0.0, 0.0],  // f1
            [1.0, 0.0, 0.0, 0.0],  // o0
            [0.0, 1.0, 0.0, 0.0],  // o1
            [2.0, 0.0, 0.0, 0.0],  // g0
            [0.0, -1.0, 0.0, 0.0], // g1
        ];
        for (r, row) in w.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                p.layers[0].w.set(r, c, *v);
            }
        }
        p.layers[0].b.set(0, 0, 0.1);
        let state = LstmState::zeros(&p);
        let (next, _) = lstm_forward(&p, &state, &[1.0, 1.0], 0).unwrap();
        // unit 0: i = s(0.6), o = s(1), g = tanh(2); c = i*g; h = o*tanh(c)
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let c0 = s(0.6) * 2f64.tanh();
        let h0 = s(1.0) * c0.tanh();
        let c1 = s(-0.5) * (-1f64).tanh();
        let h1 = s(1.0) * c1.tanh();
        assert!((next.h[0][0] - h0).abs() < 1e-15);
        assert!((next.h[0][1] - h1).abs() < 1e-15);
        assert!((next.c[0][0] - c0).abs() < 1e-15);
        // frozen spreadsheet values
        assert!((h0 - 0.404_142_346_330_528_04).abs() < 1e-12, "{h0}");
        assert!((h1 - -0.204_595_804_215_913_85).abs() < 1e-12, "{h1}");
    }

    #[test]
    fn full_sized_stack_shapes() {
        let cfg = ModelConfig::new(123, vec![256, 256], 62);
        let mut rng = Rng::new(1, 0);
        let p = ModelParams::init_default(&cfg, &mut rng).unwrap();
        let u = step_input(&vec![0.1; 123], false, cfg.bos(), &p).unwrap();
        let (s, _) = lstm_forward(&p, &LstmState::zeros(&p), &u, 0).unwrap();
        assert_eq!(s.top().len(), 256);
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let p = tiny(vec![3, 2], 1);
        for layer in &p.layers {
            let h = layer.hidden_size;
            for r in 0..4 * h {
                let want = if (h..2 * h).contains(&r) { 1.0 } else { 0.0 };
                assert_eq!(layer.b.get(r, 0), want);
            }
        }
    }

    #[test]
    fn heads() {
        let mut p = tiny(vec![3], 2);
        let h = [0.2, -0.4, 0.7];
        p.emit_w = Matrix::zeros(1, 3);
        assert_eq!(emission_prob(&h, &p).unwrap(), 0.5);
        p.emit_w = Matrix::from_vec(1, 3, vec![5.0, 0.0, 0.0]).unwrap();
        let h1 = [0.6, 0.0, 0.0];
        assert!((emission_prob(&h1, &p).unwrap() - 0.952_574_126_822_433_4).abs() < 1e-12);
        let lo = emission_prob(&h1, &p).unwrap();
        for v in p.emit_w.as_mut_slice() {
            *v *= 2.0;
        }
        assert!(emission_prob(&h1, &p).unwrap() > lo);

        p.out_w = Matrix::zeros(4, 3);
        assert!(output_dist(&h, &p).unwrap().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        p.out_w.set(2, 0, 10.0 / 0.2);
        let top = output_dist(&h, &p).unwrap()[2];
        let e10 = 10f64.exp();
        assert!((top - e10 / (e10 + 3.0)).abs() < 1e-12 && top > 0.9998, "{top}");
        let d = output_dist(&h, &p).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let direct = softmax_stable(&p.out_w.matvec(&h)).unwrap();
        assert_eq!(d, direct);
        assert!(emission_prob(&[0.0; 2], &p).is_err());
    }

    #[test]
    fn weight_noise_statistics() {
        let cfg = ModelConfig::new(40, vec![128, 128], 10);
        let mut rng = Rng::new(3, 0);
        let p = ModelParams::init_default(&cfg, &mut rng).unwrap();
        assert!(p.num_params() >= 100_000);
        let same = apply_weight_noise(&p, 0.0, &mut rng).unwrap();
        assert_eq!(same, p);

        let mut r1 = Rng::new(8, 1);
        let noisy = apply_weight_noise(&p, 0.15, &mut r1).unwrap();
        let diffs: Vec<f64> = noisy
            .flatten()
            .iter()
            .zip(p.flatten())
            .map(|(a, b)| a - b)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.15).abs() < 0.05 * 0.15, "{std}");

        let mut r2 = Rng::new(8, 1);
        assert_eq!(apply_weight_noise(&p, 0.15, &mut r2).unwrap(), noisy);
        assert!(apply_weight_noise(&p, -0.1, &mut r2).is_err());
    }

    #[test]
    fn zero_signals_give_zero_gradients() {
        let p = tiny(vec![3, 2], 4);
        let inputs: Vec<Vec<f64>> = (0..4).map(|t| vec![0.1 * t as f64; 6]).collect();
        let tape = run(&p, &inputs);
        let g = backward(&p, &tape, &vec![StepSignal::default(); 4]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(backward(&p, &tape, &vec![StepSignal::default(); 3]).is_err());
    }

    #[test]
    fn sum_of_hidden_matches_finite_differences() {
        let p = tiny(vec![3, 2], 5);
        let mut rng = Rng::new(6, 0);
        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..6).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .collect();
        let objective = |q: &ModelParams| -> f64 {
            run(q, &inputs).iter().map(|s| s.h_top().iter().sum::<f64>()).sum()
        };
        let tape = run(&p, &inputs);
        let signals: Vec<StepSignal> = (0..5)
            .map(|_| StepSignal {
                d_h_top: Some(vec![1.0; 2]),
                ..Default::default()
            })
            .collect();
        let g = backward(&p, &tape, &signals).unwrap();
        let eps = 1e-5;
        let names = p.block_names();
        for idx in 0..p.num_params() {
            let (name, _) = p.locate(idx).unwrap();
            if !name.starts_with("lstm") {
                continue;
            }
            let mut plus = p.clone();
            plus.set_flat(idx, p.get_flat(idx) + eps);
            let mut minus = p.clone();
            minus.set_flat(idx, p.get_flat(idx) - eps);
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
            let an = g.get_flat(idx);
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            assert!(err < 1e-6 || (fd - an).abs() < 1e-9, "{name}[{idx}] fd={fd} an={an}");
        }
        assert!(names.contains(&"embed".to_string()));
    }

    #[test]
    fn replay_reproduces_tape() {
        let p = tiny(vec![3, 3], 7);
        let inputs: Vec<Vec<f64>> = (0..6).map(|t| vec![(t as f64).sin(); 6]).collect();
        let tape = run(&p, &inputs);
        assert_eq!(replay_tape(&p, &tape).unwrap(), tape);
    }

    #[test]
    fn non_finite_activation_is_reported() {
        let mut p = tiny(vec![2], 8);
        p.layers[0].w.set(0, 0, f64::NAN);
        let err = lstm_forward(&p, &LstmState::zeros(&p), &[1.0; 6], 3).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 3, layer: 0, .. }), "{err}");
    }

    #[test]
    fn flat_indexing_round_trips() {
        let mut p = tiny(vec![2, 2], 9);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.num_params());
        for idx in [0, 7, flat.len() / 2, flat.len() - 1] {
            assert_eq!(p.get_flat(idx), flat[idx]);
            p.set_flat(idx, 42.0);
            assert_eq!(p.flatten()[idx], 42.0);
        }
        assert_eq!(p.locate(0).unwrap(), ("lstm.0.w".to_string(), 0));
        assert!(p.locate(flat.len()).is_none());
    }
}
