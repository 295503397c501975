use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv3d_backward, conv3d_forward, tconv3d_backward, tconv3d_forward, ConvSpec, TConvSpec,
};
use super::loss::l2_loss;
use super::tensor::{relu_in_place, relu_mask_in_place, residual_add, Tensor4};
use crate::baselines::linear_upsample;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::volume::Axis;

pub const DEFAULT_WIDTH: usize = 32;

/// Layer names in declaration (and serialization) order.
pub const LAYER_NAMES: [&str; 9] = [
    "conv1", "conv2", "conv3", "conv4", "conv5", "conv6", "tconv7", "tconv8", "conv9",
];

/// Parameters of the nine-layer network: six 3x3x3 convolutions, transposed
/// convolutions along x then y, and a final single-channel convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub factor: usize,
    pub width: usize,
    pub convs: Vec<ConvSpec<T>>,
    pub up_x: TConvSpec<T>,
    pub up_y: TConvSpec<T>,
    pub out: ConvSpec<T>,
}

impl<T: Real> NetworkParams<T> {
    pub fn zeros(factor: usize, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::param("hidden width must be >= 1"));
        }
        let k3 = [3, 3, 3];
        let mut convs = vec![ConvSpec::zeros(1, width, k3)?];
        for _ in 1..6 {
            convs.push(ConvSpec::zeros(width, width, k3)?);
        }
        Ok(NetworkParams {
            factor,
            width,
            convs,
            up_x: TConvSpec::zeros(Axis::X, factor, width, width)?,
            up_y: TConvSpec::zeros(Axis::Y, factor, width, width)?,
            out: ConvSpec::zeros(width, 1, k3)?,
        })
    }

    /// He-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform(factor: usize, width: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(factor, width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in p.layers_mut() {
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(p)
    }

    /// Training initialization: He-uniform everywhere except the output
    /// layer, which starts at zero so the untrained network reproduces the
    /// trilinear path.
    pub fn init_for_training(factor: usize, width: usize, seed: u64) -> Result<Self> {
        let mut p = Self::he_uniform(factor, width, seed)?;
        p.out = p.out.zeros_like();
        Ok(p)
    }

    pub fn layers(&self) -> [&ConvSpec<T>; 9] {
        let c = &self.convs;
        [
            &c[0],
            &c[1],
            &c[2],
            &c[3],
            &c[4],
            &c[5],
            &self.up_x.conv,
            &self.up_y.conv,
            &self.out,
        ]
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvSpec<T>> {
        let mut v: Vec<&mut ConvSpec<T>> = self.convs.iter_mut().collect();
        v.push(&mut self.up_x.conv);
        v.push(&mut self.up_y.conv);
        v.push(&mut self.out);
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Weights then biases of every layer, in declaration order.
    pub fn param_slices(&self) -> Vec<&[T]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            factor: self.factor,
            width: self.width,
            convs: self.convs.iter().map(ConvSpec::zeros_like).collect(),
            up_x: self.up_x.zeros_like(),
            up_y: self.up_y.zeros_like(),
            out: self.out.zeros_like(),
        }
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            factor: self.factor,
            width: self.width,
            convs: self.convs.iter().map(ConvSpec::cast).collect(),
            up_x: self.up_x.cast(),
            up_y: self.up_y.cast(),
            out: self.out.cast(),
        }
    }

    /// Check the fixed architecture: channel chaining, kernel shapes, axes.
    pub fn validate(&self) -> Result<()> {
        let reference = Self::zeros(self.factor, self.width)?;
        if self.convs.len() != 6 {
            return Err(Error::shape(format!(
                "expected 6 conv layers, got {}",
                self.convs.len()
            )));
        }
        for (i, (a, b)) in self.layers().iter().zip(reference.layers()).enumerate() {
            if a.in_channels != b.in_channels
                || a.out_channels != b.out_channels
                || a.kernel != b.kernel
            {
                return Err(Error::shape(format!(
                    "layer {} is {}->{} {:?}, expected {}->{} {:?}",
                    LAYER_NAMES[i],
                    a.in_channels,
                    a.out_channels,
                    a.kernel,
                    b.in_channels,
                    b.out_channels,
                    b.kernel
                )));
            }
            a.validate()?;
        }
        if self.up_x.axis != Axis::X || self.up_y.axis != Axis::Y {
            return Err(Error::shape("transposed convs must run along x then y"));
        }
        self.up_x.validate()?;
        self.up_y.validate()
    }

    /// Largest absolute difference over all parameters.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.param_slices()
            .iter()
            .zip(other.param_slices())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Intermediate activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub input: Tensor4<T>,
    a1: Tensor4<T>,
    b2: Tensor4<T>,
    a3: Tensor4<T>,
    b4: Tensor4<T>,
    a5: Tensor4<T>,
    a6: Tensor4<T>,
    a7: Tensor4<T>,
    a8: Tensor4<T>,
    pub output: Tensor4<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Bitset of which ReLU units are active, over every rectified layer.
    pub fn relu_pattern(&self) -> Vec<u64> {
        let layers = [
            &self.a1, &self.b2, &self.a3, &self.b4, &self.a5, &self.a6, &self.a7, &self.a8,
        ];
        let n: usize = layers.iter().map(|t| t.data().len()).sum();
        let mut bits = vec![0u64; n.div_ceil(64)];
        let mut i = 0;
        for t in layers {
            for &v in t.data() {
                if v > T::ZERO {
                    bits[i / 64] |= 1 << (i % 64);
                }
                i += 1;
            }
        }
        bits
    }
}

fn check_input<T: Real>(params: &NetworkParams<T>, x: &Tensor4<T>) -> Result<()> {
    let [c, nx, ny, _] = x.shape();
    if c != 1 {
        return Err(Error::shape(format!(
            "network input must be single-channel, got {c}"
        )));
    }
    if nx < 8 || ny < 8 {
        return Err(Error::shape(format!(
            "network input needs in-plane dims >= 8, got {nx}x{ny}"
        )));
    }
    if !matches!(params.factor, 2 | 4) {
        return Err(Error::param(format!(
            "factor must be 2 or 4, got {}",
            params.factor
        )));
    }
    Ok(())
}

/// Upsample the (single-channel) input along x and y by `factor`.
pub fn global_residual<T: Real>(x: &Tensor4<T>, factor: usize) -> Result<Tensor4<T>> {
    let (data, d) = linear_upsample(x.channel(0), x.spatial(), [factor, factor, 1]);
    Tensor4::new([1, d[0], d[1], d[2]], data)
}

fn conv_relu<T: Real>(x: &Tensor4<T>, spec: &ConvSpec<T>) -> Result<Tensor4<T>> {
    let mut y = conv3d_forward(x, spec)?;
    relu_in_place(&mut y);
    Ok(y)
}

pub fn forward_cached<T: Real>(
    params: &NetworkParams<T>,
    x: &Tensor4<T>,
) -> Result<ForwardCache<T>> {
    check_input(params, x)?;
    let c = &params.convs;
    let a1 = conv_relu(x, &c[0])?;
    let b2 = conv_relu(&a1, &c[1])?;
    let mut a3 = residual_add(&conv3d_forward(&b2, &c[2])?, &a1)?;
    relu_in_place(&mut a3);
    let b4 = conv_relu(&a3, &c[3])?;
    let mut a5 = residual_add(&conv3d_forward(&b4, &c[4])?, &a3)?;
    relu_in_place(&mut a5);
    let a6 = conv_relu(&a5, &c[5])?;
    let mut a7 = tconv3d_forward(&a6, &params.up_x)?;
    relu_in_place(&mut a7);
    let mut a8 = tconv3d_forward(&a7, &params.up_y)?;
    relu_in_place(&mut a8);
    let output = residual_add(
        &conv3d_forward(&a8, &params.out)?,
        &global_residual(x, params.factor)?,
    )?;
    Ok(ForwardCache {
        input: x.clone(),
        a1,
        b2,
        a3,
        b4,
        a5,
        a6,
        a7,
        a8,
        output,
    })
}

/// Network output for a single-channel low-resolution block; in-plane dims
/// grow by `factor`, z is preserved.
pub fn forward<T: Real>(params: &NetworkParams<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
    Ok(forward_cached(params, x)?.output)
}

fn masked<T: Real>(mut g: Tensor4<T>, a: &Tensor4<T>) -> Tensor4<T> {
    relu_mask_in_place(&mut g, a);
    g
}

fn need<T>(g: Option<Tensor4<T>>) -> Tensor4<T> {
    g.expect("input gradient requested")
}

/// Parameter gradients given the gradient of the loss w.r.t. the output.
pub fn backward_from_output<T: Real>(
    params: &NetworkParams<T>,
    cache: &ForwardCache<T>,
    d_out: &Tensor4<T>,
) -> Result<NetworkParams<T>> {
    cache.output.check_same_shape(d_out)?;
    let mut g = params.zeros_like();
    let c = &params.convs;
    let d8 = need(conv3d_backward(
        &cache.a8,
        &params.out,
        d_out,
        &mut g.out,
        true,
    )?);
    let d8 = masked(d8, &cache.a8);
    let d7 = need(tconv3d_backward(
        &cache.a7,
        &params.up_y,
        &d8,
        &mut g.up_y,
        true,
    )?);
    let d7 = masked(d7, &cache.a7);
    let d6 = need(tconv3d_backward(
        &cache.a6,
        &params.up_x,
        &d7,
        &mut g.up_x,
        true,
    )?);
    let d6 = masked(d6, &cache.a6);
    let d5 = need(conv3d_backward(
        &cache.a5,
        &c[5],
        &d6,
        &mut g.convs[5],
        true,
    )?);
    // Second residual block.
    let dz5 = masked(d5, &cache.a5);
    let db4 = need(conv3d_backward(
        &cache.b4,
        &c[4],
        &dz5,
        &mut g.convs[4],
        true,
    )?);
    let db4 = masked(db4, &cache.b4);
    let d3 = need(conv3d_backward(
        &cache.a3,
        &c[3],
        &db4,
        &mut g.convs[3],
        true,
    )?);
    let d3 = residual_add(&d3, &dz5)?;
    // First residual block.
    let dz3 = masked(d3, &cache.a3);
    let db2 = need(conv3d_backward(
        &cache.b2,
        &c[2],
        &dz3,
        &mut g.convs[2],
        true,
    )?);
    let db2 = masked(db2, &cache.b2);
    let d1 = need(conv3d_backward(
        &cache.a1,
        &c[1],
        &db2,
        &mut g.convs[1],
        true,
    )?);
    let d1 = residual_add(&d1, &dz3)?;
    let d1 = masked(d1, &cache.a1);
    conv3d_backward(&cache.input, &c[0], &d1, &mut g.convs[0], false)?;
    Ok(g)
}

/// l2 loss of the network on one pair and its exact parameter gradients.
pub fn backward<T: Real>(
    params: &NetworkParams<T>,
    lr_block: &Tensor4<T>,
    target: &Tensor4<T>,
) -> Result<(f64, NetworkParams<T>)> {
    let cache = forward_cached(params, lr_block)?;
    let (loss, d_out) = l2_loss(&cache.output, target)?;
    let grads = backward_from_output(params, &cache, &d_out)?;
    Ok((loss, grads))
}
