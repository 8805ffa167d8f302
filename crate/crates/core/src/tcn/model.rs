use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_dropout_rate, dropout_mask, Scalar, Signal};
use super::conv::ConvLayer;
use crate::channel::{RngStream, StreamPurpose};
use crate::error::{Error, Result};

/// Network shape. Each entry of `dilations` is one residual block whose two
/// convolutions share that dilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub input_channels: usize,
    pub hidden_channels: usize,
    pub output_channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
}

impl Default for TcnConfig {
    /// 50 symbols as real/imaginary pairs in and out, two blocks with
    /// dilations 1 and 2, kernel 2.
    fn default() -> Self {
        Self {
            input_channels: 100,
            hidden_channels: 100,
            output_channels: 100,
            kernel_size: 2,
            dilations: vec![1, 2],
            dropout: 0.01,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.hidden_channels == 0 || self.output_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.kernel_size == 0 {
            return Err(Error::Config("kernel size must be positive".into()));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::Config("need at least one block and positive dilations".into()));
        }
        check_dropout_rate(self.dropout)
    }

    /// Number of past positions (including the current one) an output can see.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }
}

/// `out = ReLU(skip(x) + F(x))` with `F = [conv -> ReLU -> dropout] x 2`;
/// `skip` is a 1x1 convolution when the channel count changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
    pub proj: Option<ConvLayer<T>>,
}

/// Intermediates of one block kept for the backward pass.
#[derive(Debug, Clone)]
struct BlockTrace<T> {
    input: Signal<T>,
    pre1: Signal<T>,
    mask1: Option<Vec<T>>,
    drop1: Signal<T>,
    pre2: Signal<T>,
    mask2: Option<Vec<T>>,
    sum: Signal<T>,
}

/// Forward pass record.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    blocks: Vec<BlockTrace<T>>,
    hidden: Signal<T>,
    pub output: Signal<T>,
}

fn relu_dropout<T: Scalar>(pre: &Signal<T>, mask: Option<&[T]>) -> Signal<T> {
    let mut out = pre.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let r = if *v > T::zero() { *v } else { T::zero() };
        *v = match mask {
            Some(m) => r * m[i],
            None => r,
        };
    }
    out
}

/// Gradient through `mask * ReLU(pre)` in place.
fn relu_dropout_back<T: Scalar>(grad: &mut Signal<T>, pre: &Signal<T>, mask: Option<&[T]>) {
    for (i, (g, p)) in grad.data_mut().iter_mut().zip(pre.data()).enumerate() {
        if *p <= T::zero() {
            *g = T::zero();
        } else if let Some(m) = mask {
            *g = *g * m[i];
        }
    }
}

impl<T: Scalar> ResidualBlock<T> {
    fn init(inp: usize, out: usize, k: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        let conv1 = ConvLayer::init(inp, out, k, dilation, 2.0, rng);
        let conv2 = ConvLayer::init(out, out, k, dilation, 2.0, rng);
        let proj = (inp != out).then(|| ConvLayer::init(inp, out, 1, 1, 1.0, rng));
        Self { conv1, conv2, proj }
    }

    fn zeros_like(&self) -> Self {
        let z = |l: &ConvLayer<T>| ConvLayer::zeros(l.in_channels, l.out_channels, l.kernel_size, l.dilation);
        Self {
            conv1: z(&self.conv1),
            conv2: z(&self.conv2),
            proj: self.proj.as_ref().map(z),
        }
    }

    fn layers(&self) -> Vec<&ConvLayer<T>> {
        let mut v = vec![&self.conv1, &self.conv2];
        v.extend(self.proj.as_ref());
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer<T>> {
        let mut v = vec![&mut self.conv1, &mut self.conv2];
        v.extend(self.proj.as_mut());
        v
    }

    fn forward<R: rand::RngCore + ?Sized>(&self, x: &Signal<T>, rate: f64, rng: Option<&mut R>) -> Result<BlockTrace<T>> {
        let pre1 = self.conv1.forward(x)?;
        let n = pre1.data().len();
        let (mask1, mask2) = match rng {
            Some(mut r) if rate > 0.0 => (
                Some(dropout_mask::<T>(n, rate, &mut r)),
                Some(dropout_mask::<T>(n, rate, &mut r)),
            ),
            _ => (None, None),
        };
        let drop1 = relu_dropout(&pre1, mask1.as_deref());
        let pre2 = self.conv2.forward(&drop1)?;
        let mut sum = relu_dropout(&pre2, mask2.as_deref());
        let skip = match &self.proj {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        for (s, k) in sum.data_mut().iter_mut().zip(skip.data()) {
            *s += *k;
        }
        Ok(BlockTrace {
            input: x.clone(),
            pre1,
            mask1,
            drop1,
            pre2,
            mask2,
            sum,
        })
    }

    fn backward(&self, tr: &BlockTrace<T>, dout: &Signal<T>, grad: &mut ResidualBlock<T>) -> Signal<T> {
        let mut ds = dout.clone();
        for (g, s) in ds.data_mut().iter_mut().zip(tr.sum.data()) {
            if *s <= T::zero() {
                *g = T::zero();
            }
        }
        let mut da2 = ds.clone();
        relu_dropout_back(&mut da2, &tr.pre2, tr.mask2.as_deref());
        let mut da1 = self.conv2.backward(&tr.drop1, &da2, &mut grad.conv2);
        relu_dropout_back(&mut da1, &tr.pre1, tr.mask1.as_deref());
        let mut dx = self.conv1.backward(&tr.input, &da1, &mut grad.conv1);
        let dskip = match (&self.proj, grad.proj.as_mut()) {
            (Some(p), Some(gp)) => p.backward(&tr.input, &ds, gp),
            _ => ds,
        };
        for (d, s) in dx.data_mut().iter_mut().zip(dskip.data()) {
            *d += *s;
        }
        dx
    }
}

/// Residual blocks followed by a 1x1 linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnModel<T> {
    pub config: TcnConfig,
    pub blocks: Vec<ResidualBlock<T>>,
    pub head: ConvLayer<T>,
}

impl<T: Scalar> TcnModel<T> {
    /// Fan-in Gaussian initialisation (variance 2/fan_in before ReLUs,
    /// 1/fan_in for the skip projections and head), zero biases.
    pub fn new(config: TcnConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.dilations.len());
        let mut inp = config.input_channels;
        for &d in &config.dilations {
            blocks.push(ResidualBlock::init(inp, config.hidden_channels, config.kernel_size, d, rng));
            inp = config.hidden_channels;
        }
        let head = ConvLayer::init(config.hidden_channels, config.output_channels, 1, 1, 1.0, rng);
        Ok(Self { config, blocks, head })
    }

    /// [`TcnModel::new`] with weights drawn from a stream keyed by `seed`.
    pub fn from_seed(config: TcnConfig, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed, 0).rng(StreamPurpose::Other(0x494e_4954));
        Self::new(config, &mut rng)
    }

    /// Same shape, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            blocks: self.blocks.iter().map(ResidualBlock::zeros_like).collect(),
            head: ConvLayer::zeros(self.head.in_channels, self.head.out_channels, 1, 1),
        }
    }

    /// All layers in declaration order: per block conv1, conv2, [proj]; head.
    pub fn layers(&self) -> Vec<&ConvLayer<T>> {
        let mut v: Vec<_> = self.blocks.iter().flat_map(|b| b.layers()).collect();
        v.push(&self.head);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvLayer<T>> {
        let mut v: Vec<_> = self.blocks.iter_mut().flat_map(|b| b.layers_mut()).collect();
        v.push(&mut self.head);
        v
    }

    /// Parameter slices in declaration order (weight then bias per layer).
    pub fn params(&self) -> Vec<&[T]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// `self += other`, parameter by parameter.
    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Inference pass (dropout disabled).
    pub fn forward(&self, x: &Signal<T>) -> Result<Signal<T>> {
        Ok(self.forward_traced(x, None)?.output)
    }

    /// Forward pass keeping intermediates. Passing an RNG enables dropout.
    pub fn forward_traced(&self, x: &Signal<T>, mut rng: Option<&mut dyn rand::RngCore>) -> Result<Trace<T>> {
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &self.blocks {
            let tr = block.forward(&h, self.config.dropout, rng.as_deref_mut())?;
            h = tr.sum.map(|v| if v > T::zero() { v } else { T::zero() });
            traces.push(tr);
        }
        let output = self.head.forward(&h)?;
        Ok(Trace {
            blocks: traces,
            hidden: h,
            output,
        })
    }

    /// Accumulates parameter gradients for upstream gradient `dy` (same shape
    /// as the output) into `grad` and returns the input gradient.
    pub fn backward(&self, trace: &Trace<T>, dy: &Signal<T>, grad: &mut TcnModel<T>) -> Signal<T> {
        let mut g = self.head.backward(&trace.hidden, dy, &mut grad.head);
        for ((block, tr), gb) in self
            .blocks
            .iter()
            .zip(&trace.blocks)
            .zip(grad.blocks.iter_mut())
            .rev()
        {
            g = block.backward(tr, &g, gb);
        }
        g
    }

    pub fn cast<U: Scalar>(&self) -> TcnModel<U> {
        TcnModel {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResidualBlock {
                    conv1: b.conv1.cast(),
                    conv2: b.conv2.cast(),
                    proj: b.proj.as_ref().map(|p| p.cast()),
                })
                .collect(),
            head: self.head.cast(),
        }
    }
}
