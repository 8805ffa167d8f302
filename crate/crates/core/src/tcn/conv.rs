use rand::Rng;
use rand_distr::StandardNormal;

use super::{cast, Scalar, Signal};
use crate::error::{Error, Result};

/// Causal dilated 1-D convolution:
/// `y[o, t] = b[o] + sum_c sum_j w[o, c, j] * x[c, t - (K - 1 - j) * d]`,
/// with `x` taken as zero before position 0. Output length equals input
/// length and `y[., t]` never depends on `x[., > t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    /// `out x in x kernel`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize, dilation: usize) -> Self {
        assert!(kernel_size >= 1 && dilation >= 1, "kernel size and dilation must be >= 1");
        Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weight: vec![T::zero(); out_channels * in_channels * kernel_size],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Gaussian weights with variance `gain / fan_in`, zero biases.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel_size, dilation);
        let std = (gain / (in_channels * kernel_size) as f64).sqrt();
        for w in &mut layer.weight {
            let z: f64 = rng.sample(StandardNormal);
            *w = cast(z * std);
        }
        layer
    }

    /// Left zero-padding implied by causality.
    pub fn padding(&self) -> usize {
        (self.kernel_size - 1) * self.dilation
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    #[inline]
    fn w_index(&self, o: usize, c: usize, j: usize) -> usize {
        (o * self.in_channels + c) * self.kernel_size + j
    }

    /// Delay applied to tap `j`.
    #[inline]
    fn shift(&self, j: usize) -> usize {
        (self.kernel_size - 1 - j) * self.dilation
    }

    pub fn forward(&self, x: &Signal<T>) -> Result<Signal<T>> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let len = x.len();
        let mut y = Signal::zeros(self.out_channels, len);
        for o in 0..self.out_channels {
            let out = y.channel_mut(o);
            out.fill(self.bias[o]);
            for c in 0..self.in_channels {
                let input = x.channel(c);
                for j in 0..self.kernel_size {
                    let s = self.shift(j);
                    if s >= len {
                        continue;
                    }
                    let w = self.weight[self.w_index(o, c, j)];
                    for (yo, xi) in out[s..].iter_mut().zip(&input[..len - s]) {
                        *yo += w * *xi;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input `x`.
    pub fn backward(&self, x: &Signal<T>, dy: &Signal<T>, grad: &mut ConvLayer<T>) -> Signal<T> {
        let len = x.len();
        let mut dx = Signal::zeros(self.in_channels, len);
        for o in 0..self.out_channels {
            let g = dy.channel(o);
            grad.bias[o] += g.iter().copied().sum();
            for c in 0..self.in_channels {
                let input = x.channel(c);
                for j in 0..self.kernel_size {
                    let s = self.shift(j);
                    if s >= len {
                        continue;
                    }
                    let idx = self.w_index(o, c, j);
                    let mut acc = T::zero();
                    for (gi, xi) in g[s..].iter().zip(&input[..len - s]) {
                        acc += *gi * *xi;
                    }
                    grad.weight[idx] += acc;
                    let w = self.weight[idx];
                    for (d, gi) in dx.channel_mut(c)[..len - s].iter_mut().zip(&g[s..]) {
                        *d += w * *gi;
                    }
                }
            }
        }
        dx
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect();
        ConvLayer {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel_size: self.kernel_size,
            dilation: self.dilation,
            weight: conv(&self.weight),
            bias: conv(&self.bias),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: [f64; 2]) -> ConvLayer<f64> {
        let mut l = ConvLayer::zeros(1, 1, 2, 1);
        l.weight.copy_from_slice(&w);
        l
    }

    #[test]
    fn identity_kernel() {
        let mut l = ConvLayer::<f64>::zeros(3, 3, 1, 1);
        for c in 0..3 {
            l.weight[c * 3 + c] = 1.0;
        }
        let x = Signal::from_fn(3, 5, |c, t| (c as f64) - (t as f64) * 0.5);
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_unrolled_two_tap() {
        let x = Signal::from_vec(1, 3, vec![5.0, 7.0, 9.0]).unwrap();
        assert_eq!(single([0.0, 1.0]).forward(&x).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(single([1.0, 0.0]).forward(&x).unwrap().data(), &[0.0, 5.0, 7.0]);
        let mut dilated = single([1.0, 0.0]);
        dilated.dilation = 2;
        assert_eq!(dilated.forward(&x).unwrap().data(), &[0.0, 0.0, 5.0]);
        assert_eq!(dilated.padding(), 2);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let l = ConvLayer::<f32>::zeros(2, 2, 2, 1);
        assert!(matches!(l.forward(&Signal::zeros(3, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn future_inputs_do_not_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = ConvLayer::<f64>::init(3, 4, 3, 2, 2.0, &mut rng);
        let x = Signal::from_fn(3, 12, |_, _| rng.random_range(-1.0..1.0));
        let y = l.forward(&x).unwrap();
        for t in 0..11 {
            let mut xp = x.clone();
            for c in 0..3 {
                for u in t + 1..12 {
                    xp.set(c, u, xp.get(c, u) + 10.0);
                }
            }
            let yp = l.forward(&xp).unwrap();
            for o in 0..4 {
                assert_eq!(&y.channel(o)[..=t], &yp.channel(o)[..=t]);
            }
        }
    }
}
