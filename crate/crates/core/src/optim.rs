//! Heavy-ball momentum SGD and the epoch-indexed learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{check_dim, ParamVector};

/// Velocity buffer for `v ← μv + g; w ← w − γv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumState {
    buffer: ParamVector,
    coefficient: f64,
}

impl MomentumState {
    pub fn new(dim: usize, coefficient: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&coefficient) {
            return Err(Error::usage(format!("momentum {coefficient} outside [0, 1)")));
        }
        Ok(MomentumState {
            buffer: ParamVector::zeros(dim),
            coefficient,
        })
    }

    pub fn with_buffer(buffer: ParamVector, coefficient: f64) -> Result<Self> {
        let mut s = MomentumState::new(buffer.len(), coefficient)?;
        s.buffer = buffer;
        Ok(s)
    }

    pub fn buffer(&self) -> &ParamVector {
        &self.buffer
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }
}

/// One momentum step applied in place to `w` and `state`.
pub fn sgd_step(w: &mut ParamVector, g: &ParamVector, state: &mut MomentumState, lr: f64) -> Result<()> {
    check_dim(w.len(), g.len())?;
    check_dim(w.len(), state.buffer.len())?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::usage(format!("learning rate {lr} must be positive")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient".into(),
            iteration: None,
        });
    }
    let mu = state.coefficient;
    let v = state.buffer.as_mut_slice();
    let params = w.as_mut_slice();
    for ((wi, vi), gi) in params.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
        *vi = mu * *vi + gi;
        *wi -= lr * *vi;
    }
    if params.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "parameter update".into(),
            iteration: None,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupMode {
    #[default]
    None,
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub decay_factor: f64,
    pub warmup_epochs: usize,
    pub warmup_mode: WarmupMode,
}

impl LrSchedule {
    pub fn constant(base_lr: f64) -> Self {
        LrSchedule {
            base_lr,
            milestones: Vec::new(),
            decay_factor: 0.1,
            warmup_epochs: 0,
            warmup_mode: WarmupMode::None,
        }
    }

    pub fn step_decay(base_lr: f64, milestones: Vec<usize>, decay_factor: f64) -> Self {
        LrSchedule {
            base_lr,
            milestones,
            decay_factor,
            warmup_epochs: 0,
            warmup_mode: WarmupMode::None,
        }
    }

    pub fn with_linear_warmup(mut self, epochs: usize) -> Self {
        self.warmup_epochs = epochs;
        self.warmup_mode = WarmupMode::Linear;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("lr.base", "must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::config("lr.decay", "must lie in (0, 1)"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("lr.milestones", "must be strictly ascending"));
        }
        Ok(())
    }

    /// Learning rate for `epoch`. Linear warmup ramps from `γ₀/warmup` to `γ₀`
    /// over the warmup epochs; afterwards `γ₀` decays once per milestone reached.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.warmup_mode == WarmupMode::Linear && epoch < self.warmup_epochs {
            return self.base_lr * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.base_lr * self.decay_factor.powi(passed as i32)
    }
}
