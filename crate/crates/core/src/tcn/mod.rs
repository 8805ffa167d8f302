//! Temporal convolutional network built from causal dilated 1-D
//! convolutions, with hand-written reverse-mode gradients and a mini-batch
//! trainer.
//!
//! A sample is a [`Signal`]: `channels x len` reals. For channel estimation
//! the sequence axis runs over the 52 active subcarriers and the channels
//! carry the 50 OFDM symbols as interleaved real/imaginary pairs.

mod checkpoint;
mod conv;
mod model;
mod train;


use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::ConvLayer;
pub use model::{ResidualBlock, TcnConfig, TcnModel, Trace};
pub use train::{train, Adam, EpochRecord, SampleSet, StepLr, TrainConfig, TrainOutcome};

/// Real number type the network runs in: `f32` for training and inference,
/// `f64` for gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("value representable in scalar type")
}

/// `channels x len` real values, row-major by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    channels: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Scalar> Signal<T> {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![T::zero(); channels * len],
        }
    }

    pub fn from_vec(channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::Shape(format!(
                "{} values cannot fill {channels}x{len}",
                data.len()
            )));
        }
        Ok(Self { channels, len, data })
    }

    pub fn from_fn(channels: usize, len: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(channels * len);
        for c in 0..channels {
            for t in 0..len {
                data.push(f(c, t));
            }
        }
        Self { channels, len, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, channel: usize, t: usize) -> T {
        self.data[channel * self.len + t]
    }

    pub fn set(&mut self, channel: usize, t: usize, v: T) {
        self.data[channel * self.len + t] = v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Signal<U> {
        Signal {
            channels: self.channels,
            len: self.len,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

/// Elementwise `max(0, x)`.
pub fn relu<T: Scalar>(x: &Signal<T>) -> Signal<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Per-element multipliers for inverted dropout: 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar>(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<T> {
    let keep = cast::<T>(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout. Identity when `training` is false or `rate` is zero.
pub fn dropout<T: Scalar>(x: &Signal<T>, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Signal<T>> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask::<T>(x.data.len(), rate, rng);
    let mut out = x.clone();
    for (v, m) in out.data.iter_mut().zip(mask) {
        *v = *v * m;
    }
    Ok(out)
}
