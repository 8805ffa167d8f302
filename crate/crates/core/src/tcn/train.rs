use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::TcnModel;
use super::{cast, check_dropout_rate, Scalar, Signal};
use crate::channel::{RngStream, StreamPurpose};
use crate::error::{Error, Result};

const SHUFFLE: StreamPurpose = StreamPurpose::Other(0x5348_5546);
const DROPOUT: StreamPurpose = StreamPurpose::Other(0x4452_4f50);

/// Samples per gradient work unit. Fixed so the reduction order (and hence
/// the trained weights) does not depend on the thread count.
const CHUNK: usize = 8;

/// `lr(e) = lr0 * gamma^floor(e / step)` for zero-based epoch `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLr {
    pub lr0: f64,
    pub step: usize,
    pub gamma: f64,
}

impl StepLr {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.gamma.powi((epoch / self.step) as i32)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &TcnModel<T>) -> Self {
        let zeros: Vec<Vec<T>> = model.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, model: &mut TcnModel<T>, grad: &TcnModel<T>, lr: f64) {
        self.steps += 1;
        let b1 = cast::<T>(self.beta1);
        let b2 = cast::<T>(self.beta2);
        let one = T::one();
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        let step = cast::<T>(lr / c1);
        let c2 = cast::<T>(c2);
        let eps = cast::<T>(self.eps);
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grad.params())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] = p[i] - step * m[i] / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub step_size: usize,
    pub gamma: f64,
    pub batch_size: usize,
    /// Overrides the model's dropout rate for the run.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            epochs: 100,
            step_size: 17,
            gamma: 0.8,
            batch_size: 128,
            dropout: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted (weights stay frozen); negative or
    /// non-finite rates are not.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.epochs == 0 || self.step_size == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs, step size and batch size must be positive".into()));
        }
        check_dropout_rate(self.dropout)
    }

    pub fn schedule(&self) -> StepLr {
        StepLr {
            lr0: self.learning_rate,
            step: self.step_size,
            gamma: self.gamma,
        }
    }
}

/// Input/target pairs. Targets cover the output positions listed in
/// `positions` (all positions when `None`), so a target is
/// `output_channels x positions.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    pub inputs: Vec<Signal<T>>,
    pub targets: Vec<Signal<T>>,
    pub positions: Option<Vec<usize>>,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(inputs: Vec<Signal<T>>, targets: Vec<Signal<T>>, positions: Option<Vec<usize>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let (Some(pos), Some(t)) = (&positions, targets.first()) {
            if t.len() != pos.len() {
                return Err(Error::Shape(format!(
                    "targets have {} positions, mask has {}",
                    t.len(),
                    pos.len()
                )));
            }
        }
        Ok(Self { inputs, targets, positions })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Mean squared error over masked positions, averaged over samples.
    pub fn loss(&self, model: &TcnModel<T>) -> Result<f64> {
        let per: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let y = model.forward(&self.inputs[i])?;
                Ok(sample_loss(&y, &self.targets[i], self.positions.as_deref())?.0)
            })
            .collect::<Result<_>>()?;
        Ok(per.iter().sum::<f64>() / self.len().max(1) as f64)
    }
}

/// Masked MSE of one sample and its gradient with respect to the output
/// (scaled by `1 / count` by the caller's choice of `scale`).
pub(crate) fn sample_loss<T: Scalar>(
    y: &Signal<T>,
    target: &Signal<T>,
    positions: Option<&[usize]>,
) -> Result<(f64, Signal<T>)> {
    let n_pos = positions.map_or(y.len(), |p| p.len());
    if target.channels() != y.channels() || target.len() != n_pos {
        return Err(Error::Shape(format!(
            "target is {}x{}, output gives {}x{}",
            target.channels(),
            target.len(),
            y.channels(),
            n_pos
        )));
    }
    let count = (y.channels() * n_pos) as f64;
    let scale = cast::<T>(2.0 / count);
    let mut grad = Signal::zeros(y.channels(), y.len());
    let mut sum = 0.0f64;
    for c in 0..y.channels() {
        let out = y.channel(c);
        let tgt = target.channel(c);
        let g = grad.channel_mut(c);
        for (k, t) in tgt.iter().enumerate() {
            let pos = positions.map_or(k, |p| p[k]);
            let e = out[pos] - *t;
            let ef = e.to_f64().unwrap_or(f64::NAN);
            sum += ef * ef;
            g[pos] = scale * e;
        }
    }
    Ok((sum / count, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Weights from the epoch with the lowest validation loss.
    pub model: TcnModel<T>,
    pub history: Vec<EpochRecord>,
    /// One-based epoch the returned weights come from.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Loss and summed gradient of one mini-batch.
fn batch_gradient<T: Scalar>(
    model: &TcnModel<T>,
    set: &SampleSet<T>,
    batch: &[usize],
    seed: u64,
    epoch: usize,
) -> Result<(f64, TcnModel<T>)> {
    let partials: Vec<(f64, TcnModel<T>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = model.zeros_like();
            let mut loss = 0.0;
            for &i in chunk {
                let stream = RngStream::new(seed, ((epoch as u64) << 32) | i as u64);
                let mut rng = stream.rng(DROPOUT);
                let trace = model.forward_traced(&set.inputs[i], Some(&mut rng as &mut dyn rand::RngCore))?;
                let (l, dy) = sample_loss(&trace.output, &set.targets[i], set.positions.as_deref())?;
                loss += l;
                model.backward(&trace, &dy, &mut grad);
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grad.accumulate(&g);
    }
    let inv = cast::<T>(1.0 / batch.len() as f64);
    for p in grad.params_mut() {
        for v in p {
            *v = *v * inv;
        }
    }
    Ok((loss / batch.len() as f64, grad))
}

/// Mini-batch Adam with a step-decay learning rate. Samples are reshuffled
/// every epoch from `(seed, epoch)`; dropout masks are drawn from
/// `(seed, epoch, sample index)`, so runs are reproducible bit for bit.
pub fn train<T: Scalar>(
    mut model: TcnModel<T>,
    train_set: &SampleSet<T>,
    val_set: &SampleSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    model.config.dropout = cfg.dropout;
    let schedule = cfg.schedule();
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, TcnModel<T>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        let mut rng = RngStream::new(cfg.seed, epoch as u64).rng(SHUFFLE);
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(&model, train_set, batch, cfg.seed, epoch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, loss });
            }
            train_sum += loss * batch.len() as f64;
            adam.step(&mut model, &grad, lr);
        }
        let train_loss = train_sum / train_set.len() as f64;
        let val_loss = val_set.loss(&model)?;
        if !val_loss.is_finite() || !model.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, loss: val_loss });
        }
        log::info!("epoch {:>3}  lr {lr:.3e}  train {train_loss:.4e}  val {val_loss:.4e}", epoch + 1);
        history.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch + 1, val_loss, model.clone()));
        }
    }
    let (best_epoch, best_val_loss, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_loss,
    })
}
