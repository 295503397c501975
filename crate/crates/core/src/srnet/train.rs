use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::save_checkpoint;
use super::loss::l2_loss;
use super::network::{backward, forward, NetworkParams, DEFAULT_WIDTH};
use super::tensor::Tensor4;
use crate::acquisition::TrainingPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of provenance groups held out for validation, in `[0, 0.5]`.
    pub validation_fraction: f64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 10,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 4,
            seed: 0,
            validation_fraction: 0.2,
            checkpoint_every: 0,
            hidden_width: DEFAULT_WIDTH,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning rate must be finite and >= 0"));
        }
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be >= 1"));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(Error::param("validation fraction must lie in [0, 0.5]"));
        }
        if self.hidden_width == 0 {
            return Err(Error::param("hidden width must be >= 1"));
        }
        Ok(())
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss (training
    /// loss when nothing is held out).
    pub params: NetworkParams<f32>,
    pub best_epoch: usize,
    /// Optimizer state after the final epoch.
    pub state: AdamState,
    pub log: Vec<EpochRecord>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

type Sample = (Tensor4<f32>, Tensor4<f32>);

/// Mean loss and mean gradient over a batch. Samples run in parallel and are
/// reduced in order, so the result does not depend on the thread count.
pub fn batch_gradient(
    params: &NetworkParams<f32>,
    batch: &[(&Tensor4<f32>, &Tensor4<f32>)],
) -> Result<(f64, NetworkParams<f32>)> {
    if batch.is_empty() {
        return Err(Error::param("empty batch"));
    }
    let parts: Vec<Result<(f64, NetworkParams<f32>)>> = batch
        .par_iter()
        .map(|(x, y)| backward(params, x, y))
        .collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (t, s) in total.param_slices_mut().into_iter().zip(g.param_slices()) {
            for (a, b) in t.iter_mut().zip(s.iter()) {
                *a += *b;
            }
        }
    }
    let inv = 1.0 / batch.len() as f32;
    for t in total.param_slices_mut() {
        for a in t {
            *a *= inv;
        }
    }
    Ok((loss / batch.len() as f64, total))
}

fn infer_factor(pairs: &[TrainingPair]) -> Result<usize> {
    let l = pairs[0].lr.dims();
    let h = pairs[0].hr.dims();
    let factor = h[0] / l[0].max(1);
    if !matches!(factor, 2 | 4) {
        return Err(Error::param(format!(
            "pair dims lr {l:?} / hr {h:?} do not give a factor of 2 or 4"
        )));
    }
    for p in pairs {
        p.validate(factor)?;
    }
    Ok(factor)
}

/// Hold out whole provenance groups so no subject contributes to both sides.
fn split_by_group(pairs: &[TrainingPair], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: Vec<&str> = Vec::new();
    for p in pairs {
        if !groups.contains(&p.provenance.as_str()) {
            groups.push(&p.provenance);
        }
    }
    let mut n_val = (fraction * groups.len() as f64).round() as usize;
    if fraction > 0.0 && groups.len() >= 2 {
        n_val = n_val.max(1);
    }
    n_val = n_val.min(groups.len().saturating_sub(1));
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5711));
    let val_groups: Vec<&str> = order[..n_val].iter().map(|&g| groups[g]).collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, p) in pairs.iter().enumerate() {
        if val_groups.contains(&p.provenance.as_str()) {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

fn mean_loss(params: &NetworkParams<f32>, samples: &[&Sample]) -> Result<f64> {
    let losses: Vec<Result<f64>> = samples
        .par_iter()
        .map(|(x, y)| Ok(l2_loss(&forward(params, x)?, y)?.0))
        .collect();
    let mut s = 0.0;
    for l in losses {
        s += l?;
    }
    Ok(s / samples.len() as f64)
}

pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(pairs, cfg, None, |_| {})
}

/// Train from He-uniform initialization with shuffled mini-batches.
/// Checkpoints go to `checkpoint_dir/epoch{N}.vnet` at the configured
/// cadence; `on_epoch` sees every log record as it is produced.
pub fn train_with(
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::param("training corpus is empty"));
    }
    let factor = infer_factor(pairs)?;
    let samples: Vec<Sample> = pairs
        .iter()
        .map(|p| (Tensor4::from_volume(&p.lr), Tensor4::from_volume(&p.hr)))
        .collect();
    let (train_idx, val_idx) = split_by_group(pairs, cfg.validation_fraction, cfg.seed);
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();

    let mut params = NetworkParams::<f32>::init_for_training(factor, cfg.hidden_width, cfg.seed)?;
    let mut state = AdamState::new(&params, cfg.adam())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order = train_idx.clone();
    let mut best: Option<(f64, usize, NetworkParams<f32>)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Tensor4<f32>, &Tensor4<f32>)> = chunk
                .iter()
                .map(|&i| (&samples[i].0, &samples[i].1))
                .collect();
            let (loss, grads) = batch_gradient(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            sum += loss * chunk.len() as f64;
            adam_step(&mut params, &grads, &mut state)?;
        }
        let train_loss = sum / order.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            let v = mean_loss(&params, &val)?;
            if !v.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            Some(v)
        };
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, params.clone()));
        }
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(
                    &params,
                    Some(&state),
                    &dir.join(format!("epoch{epoch}.vnet")),
                )?;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_epoch(&record);
        log.push(record);
    }
    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        state,
        log,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{degrade, DegradeConfig};
    use crate::volume::{generate_phantom, PhantomKind, PhantomSpec};

    fn pair(seed: u64) -> TrainingPair {
        let hr =
            generate_phantom(&PhantomSpec::new(PhantomKind::Mixed, [16, 16, 16], seed)).unwrap();
        let hr = crate::volume::crop(&hr, [0, 0, 6], [16, 16, 3]).unwrap();
        let cfg = DegradeConfig {
            seed,
            ..DegradeConfig::new(2)
        };
        let lr = degrade(&hr, &cfg).unwrap();
        TrainingPair {
            lr,
            provenance: hr.provenance().to_string(),
            hr,
        }
    }

    #[test]
    fn split_is_group_disjoint() {
        let mut pairs: Vec<TrainingPair> = (0..5).map(pair).collect();
        pairs.push(pair(0));
        let (t, v) = split_by_group(&pairs, 0.4, 3);
        assert_eq!(t.len() + v.len(), 6);
        assert!(!v.is_empty());
        for &i in &v {
            for &j in &t {
                assert_ne!(pairs[i].provenance, pairs[j].provenance);
            }
        }
        let (t0, v0) = split_by_group(&pairs, 0.0, 3);
        assert_eq!((t0.len(), v0.len()), (6, 0));
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let pairs = vec![pair(1), pair(2)];
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            hidden_width: 3,
            validation_fraction: 0.0,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let out = train(&pairs, &cfg).unwrap();
        let init = NetworkParams::<f32>::init_for_training(2, 3, cfg.seed).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.log.len(), 2);
        assert!(train(&[], &cfg).is_err());
    }

    #[test]
    fn deterministic_runs() {
        let pairs = vec![pair(1), pair(2), pair(3)];
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 1e-3,
            hidden_width: 3,
            validation_fraction: 0.34,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let a = train(&pairs, &cfg).unwrap();
        let b = train(&pairs, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.state, b.state);
        assert!(a.log.iter().all(|r| r.val_loss.is_some()));
    }
}
