//! Adam with L2 regularization, and the piecewise-linear training schedules.

use crate::error::{Error, Result};
use crate::network::{BlockKind, ModelParams};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 weight applied to weight matrices (not biases).
    pub l2: f64,
    /// Global-norm cap on the descent gradient; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 7e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.001,
            clip_norm: None,
        }
    }
}

/// Moment estimates and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            config,
        }
    }
}

/// One Adam update. `grad` is an ascent direction; the step descends on
/// `-(grad) + l2 * params`.
pub fn adam_step(params: &mut ModelParams, state: &mut AdamState, grad: &ModelParams) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::NonFinite {
            step: state.t as usize,
            layer: 0,
            what: "gradient passed to Adam".into(),
        });
    }
    if grad.config() != params.config() {
        return Err(Error::InvalidArgument("gradient and parameter shapes differ".into()));
    }
    let cfg = state.config.clone();

    let mut descent = grad.clone();
    descent.scale(-1.0);
    if cfg.l2 != 0.0 {
        descent.zip_blocks_mut(params, |_, kind, d, p| {
            if kind == BlockKind::Weight {
                d.add_scaled(p, cfg.l2);
            }
        });
    }
    if let Some(cap) = cfg.clip_norm {
        let norm = descent.squared_norm().sqrt();
        if norm > cap {
            descent.scale(cap / norm);
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    state.m.zip_blocks_mut(&descent, |_, _, m, g| {
        for (mi, gi) in m.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
    });
    state.v.zip_blocks_mut(&descent, |_, _, v, g| {
        for (vi, gi) in v.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
    });
    let m = &state.m;
    let v = &state.v;
    let mut vs: Vec<&[f64]> = Vec::new();
    v.for_each_block(|_, _, b| vs.push(b.as_slice()));
    let mut idx = 0;
    params.zip_blocks_mut(m, |_, _, p, mb| {
        let vb = vs[idx];
        idx += 1;
        for ((pi, mi), vi) in p.as_mut_slice().iter_mut().zip(mb.as_slice()).zip(vb) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *pi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    });
    Ok(())
}

/// Piecewise-linear ramp: `start` until `begin`, `end` from `finish` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    pub begin: u64,
    pub finish: u64,
}

impl Ramp {
    pub fn new(start: f64, end: f64, begin: u64, finish: u64) -> Result<Self> {
        let r = Self {
            start,
            end,
            begin,
            finish,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            start: value,
            end: value,
            begin: 0,
            finish: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.begin >= self.finish {
            return Err(Error::Config(format!(
                "ramp begin {} must precede ramp end {}",
                self.begin, self.finish
            )));
        }
        if !(self.start >= 0.0 && self.end >= 0.0) {
            return Err(Error::Config("schedule values must be non-negative".into()));
        }
        Ok(())
    }
}

/// Value of `ramp` at training step `step`.
pub fn schedule_value(ramp: &Ramp, step: u64) -> f64 {
    if step <= ramp.begin {
        ramp.start
    } else if step >= ramp.finish {
        ramp.end
    } else {
        let frac = (step - ramp.begin) as f64 / (ramp.finish - ramp.begin) as f64;
        ramp.start + frac * (ramp.end - ramp.start)
    }
}

/// Step-indexed hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedules {
    pub entropy: Ramp,
    pub noise_std: Ramp,
    pub l2_weight: f64,
    pub lr: f64,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            entropy: Ramp {
                start: 1.0,
                end: 0.1,
                begin: 10_000,
                finish: 200_000,
            },
            noise_std: Ramp {
                start: 0.0,
                end: 0.15,
                begin: 10_000,
                finish: 200_000,
            },
            l2_weight: 0.001,
            lr: 7e-5,
        }
    }
}

impl Schedules {
    pub fn entropy_at(&self, step: u64) -> f64 {
        schedule_value(&self.entropy, step)
    }

    pub fn noise_at(&self, step: u64) -> f64 {
        schedule_value(&self.noise_std, step)
    }
}
