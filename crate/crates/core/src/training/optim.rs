use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelParams, ParamSpec};
use crate::numcore::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>, config: AdamWConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.dims())).collect();
        OptimizerState { config, step: 0, m: zeros(), v: zeros() }
    }
}

/// One AdamW update at learning rate `lr`.
///
/// Moments follow Adam with bias correction; decay is applied to the
/// parameter directly, `p ← p·(1 − lr·λ) − lr·m̂/(√v̂ + ε)`, and only to
/// tensors of kind weight. Frozen tensors are left untouched.
pub fn adamw_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Config(format!(
            "adamw: {n} parameters, {} gradients, {} moments",
            grads.len(),
            state.m.len()
        )));
    }
    let specs: Vec<ParamSpec> = params.specs().to_vec();
    for (spec, g) in specs.iter().zip(grads) {
        if g.dims() != spec.dims.as_slice() {
            return Err(Error::shape("adamw gradient", g.dims(), &spec.dims));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(spec.name.clone()));
        }
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = T::of(c.beta1);
    let b2 = T::of(c.beta2);
    let one = T::one();
    let bc1 = T::of(1.0 - c.beta1.powi(t));
    let bc2 = T::of(1.0 - c.beta2.powi(t));
    let lr_t = T::of(lr);
    let eps = T::of(c.eps);

    for (i, spec) in specs.iter().enumerate() {
        if !spec.trainable {
            continue;
        }
        let shrink = if spec.kind.decays() { T::of(1.0 - lr * c.weight_decay) } else { one };
        let p = params.tensors_mut()[i].values_mut();
        let m = state.m[i].values_mut();
        let v = state.v[i].values_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grads[i].values()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p * shrink - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.squared_norm().as_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = T::of(max_norm / norm);
        for g in grads {
            g.scale_assign(k);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    LinearDecayWithWarmup,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn constant(total_steps: u64) -> Self {
        Schedule { kind: ScheduleKind::Constant, warmup_steps: 0, total_steps }
    }

    /// Warmup over `warmup_fraction` of the steps, rounded down.
    pub fn linear(total_steps: u64, warmup_fraction: f64) -> Result<Self> {
        let warmup_steps = (total_steps as f64 * warmup_fraction).floor() as u64;
        let s = Schedule { kind: ScheduleKind::LinearDecayWithWarmup, warmup_steps, total_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ScheduleKind::LinearDecayWithWarmup && self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "warmup {} must be below total steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

pub fn lr_at(step: u64, schedule: &Schedule, base_lr: f64) -> f64 {
    if step > schedule.total_steps {
        log::warn!("step {step} beyond schedule end {}, learning rate clamped to 0", schedule.total_steps);
        return 0.0;
    }
    match schedule.kind {
        ScheduleKind::Constant => base_lr,
        ScheduleKind::LinearDecayWithWarmup => {
            let (w, t) = (schedule.warmup_steps, schedule.total_steps);
            if step < w {
                base_lr * step as f64 / w as f64
            } else {
                base_lr * (t - step) as f64 / (t - w) as f64
            }
        }
    }
}
