//! Stateful layers: parameters plus accumulated gradients, with training
//! forward passes that return the values their backward passes need.

use super::activation::{relu, relu_backward};
use super::conv::{conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvParams};
use super::norm::{batchnorm_backward, batchnorm_infer, batchnorm_train, BatchNormCache, BatchNormParams};
use super::Tensor4;
use crate::error::Result;
use rand::Rng;

/// A mutable view of one learnable tensor and its gradient.
pub struct ParamSlot<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub params: ConvParams,
    pub grads: ConvParams,
    pub stride: usize,
    pub pad: usize,
    pub transposed: bool,
}

impl ConvLayer {
    fn build(dim0: usize, dim1: usize, k: usize, stride: usize, pad: usize, transposed: bool) -> Self {
        let params = if transposed {
            ConvParams { kernel: Tensor4::zeros([dim0, dim1, k, k]), bias: vec![0.0; dim1] }
        } else {
            ConvParams::zeros(dim0, dim1, k)
        };
        let grads = params.clone();
        Self { params, grads, stride, pad, transposed }
    }

    /// Convolution mapping `inp` channels to `out` channels.
    pub fn conv(inp: usize, out: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self::build(out, inp, k, stride, pad, false)
    }

    /// Transposed convolution mapping `inp` channels to `out` channels.
    pub fn transposed(inp: usize, out: usize, k: usize, stride: usize) -> Self {
        Self::build(inp, out, k, stride, 0, true)
    }

    /// He-uniform initialization over the fan-in; zero bias.
    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let [d0, d1, k, _] = self.params.kernel.dims();
        let fan_in = if self.transposed {
            (d0 * k * k / (self.stride * self.stride)).max(1)
        } else {
            d1 * k * k
        };
        let bound = (6.0 / fan_in as f64).sqrt();
        self.params.kernel = Tensor4::uniform(self.params.kernel.dims(), bound, rng);
        self.params.bias.fill(0.0);
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        if self.transposed {
            transposed_conv2d(x, &self.params, self.stride, self.pad)
        } else {
            conv2d(x, &self.params, self.stride, self.pad)
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
        let (gx, gp) = if self.transposed {
            transposed_conv2d_backward(x, &self.params, grad_out, self.stride, self.pad)?
        } else {
            conv2d_backward(x, &self.params, grad_out, self.stride, self.pad)?
        };
        self.grads.kernel.add_assign(&gp.kernel);
        for (a, b) in self.grads.bias.iter_mut().zip(&gp.bias) {
            *a += b;
        }
        Ok(gx)
    }

    pub fn zero_grad(&mut self) {
        self.grads.kernel.data.fill(0.0);
        self.grads.bias.fill(0.0);
    }

    pub(crate) fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a>>) {
        out.push(ParamSlot {
            name: format!("{prefix}.kernel"),
            value: &mut self.params.kernel.data,
            grad: &self.grads.kernel.data,
        });
        out.push(ParamSlot { name: format!("{prefix}.bias"), value: &mut self.params.bias, grad: &self.grads.bias });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub params: BatchNormParams,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(channels: usize) -> Self {
        Self { params: BatchNormParams::new(channels), grad_gamma: vec![0.0; channels], grad_beta: vec![0.0; channels] }
    }

    fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }
}

/// Convolution, batch normalization and ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub conv: ConvLayer,
    pub bn: BatchNormLayer,
}

pub struct StageCache {
    input: Tensor4,
    bn: BatchNormCache,
    output: Tensor4,
}

impl Stage {
    pub fn new(conv: ConvLayer) -> Self {
        let channels = conv.params.bias.len();
        Self { conv, bn: BatchNormLayer::new(channels) }
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<(Tensor4, StageCache)> {
        let c = self.conv.forward(x)?;
        let (n, bn) = batchnorm_train(&c, &mut self.bn.params);
        let y = relu(&n);
        Ok((y.clone(), StageCache { input: x.clone(), bn, output: y }))
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(relu(&batchnorm_infer(&self.conv.forward(x)?, &self.bn.params)))
    }

    pub fn backward(&mut self, cache: &StageCache, grad_out: &Tensor4) -> Result<Tensor4> {
        let g = relu_backward(&cache.output, grad_out);
        let (g, gg, gb) = batchnorm_backward(&cache.bn, &self.bn.params, &g);
        for (a, b) in self.bn.grad_gamma.iter_mut().zip(&gg) {
            *a += b;
        }
        for (a, b) in self.bn.grad_beta.iter_mut().zip(&gb) {
            *a += b;
        }
        self.conv.backward(&cache.input, &g)
    }

    pub fn zero_grad(&mut self) {
        self.conv.zero_grad();
        self.bn.zero_grad();
    }

    pub(crate) fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a>>) {
        self.conv.slots(&format!("{prefix}.conv"), out);
        out.push(ParamSlot {
            name: format!("{prefix}.bn.gamma"),
            value: &mut self.bn.params.gamma,
            grad: &self.bn.grad_gamma,
        });
        out.push(ParamSlot {
            name: format!("{prefix}.bn.beta"),
            value: &mut self.bn.params.beta,
            grad: &self.bn.grad_beta,
        });
    }

    pub(crate) fn state<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.extend([
            &self.conv.params.kernel.data[..],
            &self.conv.params.bias,
            &self.bn.params.gamma,
            &self.bn.params.beta,
            &self.bn.params.running_mean,
            &self.bn.params.running_var,
        ]);
    }

    pub(crate) fn state_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Vec<f64>>) {
        out.extend([
            &mut self.conv.params.kernel.data,
            &mut self.conv.params.bias,
            &mut self.bn.params.gamma,
            &mut self.bn.params.beta,
            &mut self.bn.params.running_mean,
            &mut self.bn.params.running_var,
        ]);
    }
}

/// `n` consecutive 3x3 convolution stages with a residual connection from the
/// block input to its output. The residual is the identity when channel counts
/// match and a 1x1 convolution otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct NConvBlock {
    pub stages: Vec<Stage>,
    pub projection: Option<ConvLayer>,
}

pub struct NConvCache {
    input: Tensor4,
    stages: Vec<StageCache>,
}

impl NConvBlock {
    pub fn new(inp: usize, out: usize, n: usize) -> Self {
        assert!(n >= 1, "an n-conv block needs at least one convolution");
        let stages = (0..n)
            .map(|i| Stage::new(ConvLayer::conv(if i == 0 { inp } else { out }, out, 3, 1, 1)))
            .collect();
        let projection = (inp != out).then(|| ConvLayer::conv(inp, out, 1, 1, 0));
        Self { stages, projection }
    }

    pub fn init_he(&mut self, rng: &mut impl Rng) {
        for s in &mut self.stages {
            s.conv.init_he(rng);
        }
        if let Some(p) = &mut self.projection {
            p.init_he(rng);
        }
    }

    fn residual(&self, x: &Tensor4) -> Result<Tensor4> {
        match &self.projection {
            Some(p) => p.forward(x),
            None => Ok(x.clone()),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<(Tensor4, NConvCache)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.stages.len());
        for s in &mut self.stages {
            let (y, c) = s.forward_train(&h)?;
            caches.push(c);
            h = y;
        }
        h.add_assign(&self.residual(x)?);
        Ok((h, NConvCache { input: x.clone(), stages: caches }))
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        let mut h = x.clone();
        for s in &self.stages {
            h = s.infer(&h)?;
        }
        h.add_assign(&self.residual(x)?);
        Ok(h)
    }

    pub fn backward(&mut self, cache: &NConvCache, grad_out: &Tensor4) -> Result<Tensor4> {
        let mut g = grad_out.clone();
        for (s, c) in self.stages.iter_mut().zip(&cache.stages).rev() {
            g = s.backward(c, &g)?;
        }
        let gr = match &mut self.projection {
            Some(p) => p.backward(&cache.input, grad_out)?,
            None => grad_out.clone(),
        };
        g.add_assign(&gr);
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        self.stages.iter_mut().for_each(Stage::zero_grad);
        if let Some(p) = &mut self.projection {
            p.zero_grad();
        }
    }

    pub(crate) fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a>>) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.slots(&format!("{prefix}.stage{i}"), out);
        }
        if let Some(p) = &mut self.projection {
            p.slots(&format!("{prefix}.proj"), out);
        }
    }

    pub(crate) fn state<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        for s in &self.stages {
            s.state(out);
        }
        if let Some(p) = &self.projection {
            out.push(&p.params.kernel.data);
            out.push(&p.params.bias);
        }
    }

    pub(crate) fn state_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Vec<f64>>) {
        for s in &mut self.stages {
            s.state_mut(out);
        }
        if let Some(p) = &mut self.projection {
            out.push(&mut p.params.kernel.data);
            out.push(&mut p.params.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_block_is_pure_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = NConvBlock::new(3, 3, 2);
        for s in &mut block.stages {
            s.bn.params.gamma.fill(0.0);
        }
        let x = Tensor4::uniform([2, 3, 5, 5], 1.0, &mut rng);
        let (y, _) = block.forward_train(&x).unwrap();
        assert_eq!(y, x);
        assert_eq!(block.infer(&x).unwrap(), x);
    }

    #[test]
    fn single_stage_block_is_manual_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut block = NConvBlock::new(2, 2, 1);
        block.init_he(&mut rng);
        let x = Tensor4::uniform([2, 2, 6, 6], 1.0, &mut rng);
        let mut bn = block.stages[0].bn.params.clone();
        let conv = conv2d(&x, &block.stages[0].conv.params, 1, 1).unwrap();
        let (n, _) = batchnorm_train(&conv, &mut bn);
        let mut manual = relu(&n);
        manual.add_assign(&x);
        let (y, _) = block.forward_train(&x).unwrap();
        assert_eq!(y, manual);
    }

    #[test]
    fn projection_only_when_channels_change() {
        assert!(NConvBlock::new(4, 8, 2).projection.is_some());
        assert!(NConvBlock::new(8, 8, 2).projection.is_none());
    }
}
