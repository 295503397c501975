use serde::{Deserialize, Serialize};

use super::network::NetworkParams;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon.is_finite()
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::param(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Moment accumulators shaped like the parameters, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: NetworkParams<f32>,
    pub v: NetworkParams<f32>,
}

impl AdamState {
    pub fn new(params: &NetworkParams<f32>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        })
    }
}

fn same_layout(a: &NetworkParams<f32>, b: &NetworkParams<f32>) -> bool {
    a.param_slices()
        .iter()
        .zip(b.param_slices())
        .all(|(x, y)| x.len() == y.len())
        && a.param_count() == b.param_count()
}

/// One bias-corrected Adam update in place. Moments and the update are
/// computed in f64 and stored in f32.
pub fn adam_step(
    params: &mut NetworkParams<f32>,
    grads: &NetworkParams<f32>,
    state: &mut AdamState,
) -> Result<()> {
    if !same_layout(params, grads)
        || !same_layout(params, &state.m)
        || !same_layout(params, &state.v)
    {
        return Err(Error::shape(
            "Adam: parameter, gradient and moment shapes differ",
        ));
    }
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut ms = state.m.param_slices_mut();
    let mut vs = state.v.param_slices_mut();
    for (((p, g), m), v) in params
        .param_slices_mut()
        .into_iter()
        .zip(grads.param_slices())
        .zip(ms.iter_mut())
        .zip(vs.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i] as f64;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let mhat = mi / c1;
            let vhat = vi / c2;
            p[i] = (p[i] as f64 - lr * mhat / (vhat.sqrt() + eps)) as f32;
        }
    }
    Ok(())
}
