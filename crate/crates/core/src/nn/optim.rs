//! AdamW with decoupled weight decay, and the cosine learning-rate schedule.

use super::mat::Matrix;
use super::params::ParamTensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Per-parameter first and second moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamWState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
    pub config: AdamWConfig,
}

impl AdamWState {
    pub fn new(params: &[ParamTensor], config: AdamWConfig) -> Self {
        let m = params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        let v = params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        AdamWState { m, v, t: 0, config }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One decoupled update:
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)`
/// with bias-corrected moments. Element math runs in `f64`; storage stays
/// 32-bit.
pub fn adamw_step(params: &mut [ParamTensor], state: &mut AdamWState, lr: f64) {
    assert_eq!(params.len(), state.m.len(), "optimizer/params mismatch");
    state.t += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);
    for (p, (m, v)) in params.iter_mut().zip(state.m.iter_mut().zip(&mut state.v)) {
        let theta = p.value.data_mut();
        let grad = p.grad.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..theta.len() {
            let g = grad[i] as f64;
            let mi = c.beta1 * md[i] as f64 + (1.0 - c.beta1) * g;
            let vi = c.beta2 * vd[i] as f64 + (1.0 - c.beta2) * g * g;
            md[i] = mi as f32;
            vd[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let th = theta[i] as f64;
            theta[i] = (th - lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * th)) as f32;
        }
    }
}

/// Cosine decay from `peak_lr` at step 0 to zero at step `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, total_steps: usize) -> Result<Self> {
        if peak_lr <= 0.0 {
            return Err(Error::Config(format!("peak_lr must be > 0, got {peak_lr}")));
        }
        if total_steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        Ok(LrSchedule {
            peak_lr,
            total_steps,
        })
    }
}

/// `lr = peak * 0.5 * (1 + cos(pi * t / T))`, no warmup; `t > T` clamps to `T`.
pub fn cosine_lr(step: usize, schedule: &LrSchedule) -> f64 {
    let t = step.min(schedule.total_steps) as f64;
    let frac = t / schedule.total_steps as f64;
    schedule.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f32, grad: f32) -> ParamTensor {
        let mut p = ParamTensor::new("w", Matrix::from_vec(1, 1, vec![value]).unwrap());
        p.grad = Matrix::from_vec(1, 1, vec![grad]).unwrap();
        p
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // one-step hand evaluation: m_hat = v_hat = 1 exactly after bias
        // correction, so the update is -lr / (1 + eps)
        let mut params = vec![scalar_param(0.0, 1.0)];
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = AdamWState::new(&params, cfg);
        adamw_step(&mut params, &mut state, 0.1);
        let got = params[0].value.get(0, 0) as f64;
        let expected = -0.1 * (1.0 / (1.0 + 1e-8));
        // storage is f32, so compare at f32 resolution
        assert!((got - expected).abs() < 1e-7, "{got} vs {expected}");
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut params = vec![scalar_param(0.75, 0.0)];
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = AdamWState::new(&params, cfg);
        for _ in 0..10 {
            adamw_step(&mut params, &mut state, 0.1);
        }
        assert_eq!(params[0].value.get(0, 0), 0.75);
    }

    #[test]
    fn decoupled_decay_acts_alone_on_zero_gradient() {
        // theta = 1, wd = 0.01, lr = 0.1 -> theta - 0.1 * 0.01 * 1 = 0.999
        let mut params = vec![scalar_param(1.0, 0.0)];
        let mut state = AdamWState::new(&params, AdamWConfig::default());
        adamw_step(&mut params, &mut state, 0.1);
        let got = params[0].value.get(0, 0);
        assert!((got - 0.999).abs() < 1e-7, "{got}");
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let s = LrSchedule::new(1e-4, 100).unwrap();
        assert_eq!(cosine_lr(0, &s), 1e-4);
        assert!(cosine_lr(100, &s).abs() < 1e-20);
        let mid = cosine_lr(50, &s);
        assert!((mid - 5e-5).abs() < 1e-12, "{mid}");
        // clamp beyond T
        assert_eq!(cosine_lr(150, &s), cosine_lr(100, &s));
    }

    #[test]
    fn cosine_is_non_increasing() {
        let s = LrSchedule::new(3e-3, 333).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..=333 {
            let lr = cosine_lr(t, &s);
            assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }
}
