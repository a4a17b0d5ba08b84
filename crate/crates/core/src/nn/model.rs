//! The residual encoder-decoder.
//!
//! Each resolution level holds one n-conv block. Between levels the encoder
//! halves the resolution with a learned stride-2 convolution and the decoder
//! doubles it with a stride-2 transposed convolution; both are followed by
//! batch normalization and ReLU. Decoder blocks see the upsampled features
//! concatenated with the encoder features of the same level. A final 1x1
//! convolution and sigmoid produce the catheter probability.

use super::activation::{dropout, dropout_backward, sigmoid};
use super::layers::{ConvLayer, NConvBlock, NConvCache, ParamSlot, Stage, StageCache};
use super::{Mode, Tensor4};
use crate::error::{Error, Result};
use crate::imagecore::{Image, ProbabilityMap};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Network topology. When read from JSON without `dropout_blocks`, dropout
/// goes on the two deepest encoder blocks of the given `levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelConfigFile")]
pub struct ModelConfig {
    /// Input channels: the current frame and its predecessors.
    pub input_frames: usize,
    /// Number of resolution levels, including the bottom one.
    pub levels: usize,
    /// Filters at full resolution; doubled at every level.
    pub base_filters: usize,
    /// Convolutions per n-conv block.
    pub convs_per_block: usize,
    pub dropout_rate: f64,
    /// Encoder levels whose block output goes through dropout.
    pub dropout_blocks: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_levels(4, 16)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfigFile {
    input_frames: Option<usize>,
    levels: Option<usize>,
    base_filters: Option<usize>,
    convs_per_block: Option<usize>,
    dropout_rate: Option<f64>,
    dropout_blocks: Option<Vec<usize>>,
}

impl From<ModelConfigFile> for ModelConfig {
    fn from(f: ModelConfigFile) -> Self {
        let d = ModelConfig::default();
        let mut c = ModelConfig::with_levels(f.levels.unwrap_or(d.levels), f.base_filters.unwrap_or(d.base_filters));
        c.input_frames = f.input_frames.unwrap_or(d.input_frames);
        c.convs_per_block = f.convs_per_block.unwrap_or(d.convs_per_block);
        c.dropout_rate = f.dropout_rate.unwrap_or(d.dropout_rate);
        if let Some(b) = f.dropout_blocks {
            c.dropout_blocks = b;
        }
        c
    }
}

impl ModelConfig {
    /// Default topology with dropout on the two deepest encoder blocks.
    pub fn with_levels(levels: usize, base_filters: usize) -> Self {
        Self {
            input_frames: 4,
            levels,
            base_filters,
            convs_per_block: 2,
            dropout_rate: 0.5,
            dropout_blocks: (levels.saturating_sub(2)..levels).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.levels < 2 {
            return bad("model needs at least 2 levels");
        }
        if self.convs_per_block < 1 {
            return bad("n-conv blocks need at least one convolution");
        }
        if self.input_frames < 1 || self.base_filters < 1 {
            return bad("input_frames and base_filters must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.dropout_blocks.iter().any(|&b| b >= self.levels) {
            return bad("dropout_blocks refers to a level that does not exist");
        }
        Ok(())
    }

    pub fn filters(&self, level: usize) -> usize {
        self.base_filters << level
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    encoders: Vec<NConvBlock>,
    downs: Vec<Stage>,
    ups: Vec<Stage>,
    decoders: Vec<NConvBlock>,
    head: ConvLayer,
}

/// Intermediate values of a training forward pass.
pub struct ModelTape {
    encoders: Vec<NConvCache>,
    dropout: Vec<Option<Vec<f64>>>,
    downs: Vec<StageCache>,
    ups: Vec<StageCache>,
    decoders: Vec<NConvCache>,
    up_channels: Vec<usize>,
    head_input: Tensor4,
    probs: Tensor4,
}

impl Model {
    /// Builds the network with He-uniform kernels, zero biases and identity
    /// batch normalization.
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let l = config.levels;
        let n = config.convs_per_block;
        let f = |i| config.filters(i);
        let mut encoders = vec![NConvBlock::new(config.input_frames, f(0), n)];
        let mut downs = Vec::new();
        for i in 1..l {
            downs.push(Stage::new(ConvLayer::conv(f(i - 1), f(i), 2, 2, 0)));
            encoders.push(NConvBlock::new(f(i), f(i), n));
        }
        let ups = (0..l - 1).map(|i| Stage::new(ConvLayer::transposed(f(i + 1), f(i), 2, 2))).collect();
        let decoders = (0..l - 1).map(|i| NConvBlock::new(2 * f(i), f(i), n)).collect();
        let head = ConvLayer::conv(f(0), 1, 1, 1, 0);
        let mut model = Self { config, encoders, downs, ups, decoders, head };
        model.init(rng);
        Ok(model)
    }

    // declaration order: enc0, (down_i, enc_i) for i = 1.., (up_i, dec_i) for i = L-2..0, head
    fn init(&mut self, rng: &mut impl Rng) {
        self.encoders[0].init_he(rng);
        for i in 1..self.config.levels {
            self.downs[i - 1].conv.init_he(rng);
            self.encoders[i].init_he(rng);
        }
        for i in (0..self.config.levels - 1).rev() {
            self.ups[i].conv.init_he(rng);
            self.decoders[i].init_he(rng);
        }
        self.head.init_he(rng);
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.channels() != self.config.input_frames {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {}",
                self.config.input_frames,
                x.channels()
            )));
        }
        let d = self.config.divisor();
        let (h, w) = (x.height(), x.width());
        if h % d != 0 || w % d != 0 || h == 0 || w == 0 {
            let up = |v: usize| v.div_ceil(d).max(1) * d;
            return Err(Error::IndivisibleInput {
                width: w,
                height: h,
                divisor: d,
                padded_width: up(w),
                padded_height: up(h),
            });
        }
        Ok(())
    }

    fn dropped(&self, level: usize) -> bool {
        self.config.dropout_blocks.contains(&level) && self.config.dropout_rate > 0.0
    }

    /// Training-mode forward pass: batch statistics, dropout active, running
    /// statistics updated. Returns probabilities and the tape for [`Model::backward`].
    pub fn forward_train(&mut self, x: &Tensor4, rng: &mut impl Rng) -> Result<(Tensor4, ModelTape)> {
        self.check_input(x)?;
        let levels = self.config.levels;
        let rate = self.config.dropout_rate;
        let mut enc_caches = Vec::with_capacity(levels);
        let mut drop_masks = Vec::with_capacity(levels);
        let mut down_caches = Vec::with_capacity(levels - 1);
        let mut skips: Vec<Tensor4> = Vec::with_capacity(levels);
        let mut h = x.clone();
        for i in 0..levels {
            if i > 0 {
                let (d, c) = self.downs[i - 1].forward_train(&h)?;
                down_caches.push(c);
                h = d;
            }
            let (e, c) = self.encoders[i].forward_train(&h)?;
            enc_caches.push(c);
            let (e, m) = if self.dropped(i) { dropout(&e, rate, rng, Mode::Train) } else { (e, None) };
            drop_masks.push(m);
            skips.push(e.clone());
            h = e;
        }
        let mut up_caches: Vec<Option<StageCache>> = (0..levels - 1).map(|_| None).collect();
        let mut dec_caches: Vec<Option<NConvCache>> = (0..levels - 1).map(|_| None).collect();
        let mut up_channels = vec![0; levels - 1];
        for i in (0..levels - 1).rev() {
            let (u, c) = self.ups[i].forward_train(&h)?;
            up_caches[i] = Some(c);
            up_channels[i] = u.channels();
            let cat = Tensor4::concat_channels(&u, &skips[i])?;
            let (d, c) = self.decoders[i].forward_train(&cat)?;
            dec_caches[i] = Some(c);
            h = d;
        }
        let mut probs = self.head.forward(&h)?;
        probs.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        let tape = ModelTape {
            encoders: enc_caches,
            dropout: drop_masks,
            downs: down_caches,
            ups: up_caches.into_iter().map(Option::unwrap).collect(),
            decoders: dec_caches.into_iter().map(Option::unwrap).collect(),
            up_channels,
            head_input: h,
            probs: probs.clone(),
        };
        Ok((probs, tape))
    }

    /// Backpropagates `grad_probs` (gradient of the loss with respect to the
    /// output probabilities), accumulating parameter gradients.
    pub fn backward(&mut self, tape: &ModelTape, grad_probs: &Tensor4) -> Result<()> {
        let levels = self.config.levels;
        let mut g = grad_probs.clone();
        for (gv, &p) in g.data.iter_mut().zip(&tape.probs.data) {
            *gv *= p * (1.0 - p);
        }
        let mut gh = self.head.backward(&tape.head_input, &g)?;
        let mut skip_grads: Vec<Option<Tensor4>> = (0..levels).map(|_| None).collect();
        for i in 0..levels - 1 {
            let gcat = self.decoders[i].backward(&tape.decoders[i], &gh)?;
            let (gu, gskip) = gcat.split_channels(tape.up_channels[i]);
            skip_grads[i] = Some(gskip);
            gh = self.ups[i].backward(&tape.ups[i], &gu)?;
        }
        // gh is now the gradient w.r.t. the bottom encoder output
        for i in (0..levels).rev() {
            if let Some(s) = skip_grads[i].take() {
                gh.add_assign(&s);
            }
            let g_enc = dropout_backward(tape.dropout[i].as_deref(), &gh);
            let g_in = self.encoders[i].backward(&tape.encoders[i], &g_enc)?;
            gh = if i > 0 { self.downs[i - 1].backward(&tape.downs[i - 1], &g_in)? } else { g_in };
        }
        Ok(())
    }

    /// Inference forward pass with running statistics and no dropout. Safe to
    /// call concurrently.
    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        self.infer_traced(x, &mut |_, _| {})
    }

    /// Like [`Model::infer`], reporting every intermediate shape to `trace`.
    pub fn infer_traced(&self, x: &Tensor4, trace: &mut dyn FnMut(&str, [usize; 4])) -> Result<Tensor4> {
        self.check_input(x)?;
        let levels = self.config.levels;
        let mut skips = Vec::with_capacity(levels);
        let mut h = x.clone();
        for i in 0..levels {
            if i > 0 {
                h = self.downs[i - 1].infer(&h)?;
                trace(&format!("down{i}"), h.dims());
            }
            h = self.encoders[i].infer(&h)?;
            trace(&format!("enc{i}"), h.dims());
            skips.push(h.clone());
        }
        for i in (0..levels - 1).rev() {
            let u = self.ups[i].infer(&h)?;
            trace(&format!("up{i}"), u.dims());
            h = self.decoders[i].infer(&Tensor4::concat_channels(&u, &skips[i])?)?;
            trace(&format!("dec{i}"), h.dims());
        }
        let mut probs = self.head.forward(&h)?;
        probs.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        trace("out", probs.dims());
        Ok(probs)
    }

    /// Generic forward pass; in [`Mode::Infer`] the rng is unused.
    pub fn forward(&mut self, x: &Tensor4, mode: Mode, rng: &mut impl Rng) -> Result<Tensor4> {
        match mode {
            Mode::Train => Ok(self.forward_train(x, rng)?.0),
            Mode::Infer => self.infer(x),
        }
    }

    /// Segments the newest frame of `stack` (newest first).
    pub fn predict(&self, stack: &[&Image]) -> Result<ProbabilityMap> {
        let x = stack_frames(&[stack.to_vec()])?;
        let p = self.infer(&x)?;
        ProbabilityMap::new(x.width(), x.height(), p.data)
    }

    pub fn zero_grad(&mut self) {
        self.encoders.iter_mut().for_each(NConvBlock::zero_grad);
        self.decoders.iter_mut().for_each(NConvBlock::zero_grad);
        self.downs.iter_mut().for_each(Stage::zero_grad);
        self.ups.iter_mut().for_each(Stage::zero_grad);
        self.head.zero_grad();
    }

    /// Learnable tensors with their gradients, in declaration order.
    pub fn params_mut(&mut self) -> Vec<ParamSlot<'_>> {
        let levels = self.config.levels;
        let mut out = Vec::new();
        let (first, rest) = self.encoders.split_at_mut(1);
        first[0].slots("enc0", &mut out);
        for ((i, down), enc) in (1..levels).zip(self.downs.iter_mut()).zip(rest.iter_mut()) {
            down.slots(&format!("down{i}"), &mut out);
            enc.slots(&format!("enc{i}"), &mut out);
        }
        for (i, (up, dec)) in self.ups.iter_mut().zip(self.decoders.iter_mut()).enumerate().rev() {
            up.slots(&format!("up{i}"), &mut out);
            dec.slots(&format!("dec{i}"), &mut out);
        }
        self.head.slots("head", &mut out);
        out
    }

    /// Every stored tensor (learnable values and running statistics) in
    /// declaration order.
    pub fn state(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        self.encoders[0].state(&mut out);
        for i in 1..self.config.levels {
            self.downs[i - 1].state(&mut out);
            self.encoders[i].state(&mut out);
        }
        for i in (0..self.config.levels - 1).rev() {
            self.ups[i].state(&mut out);
            self.decoders[i].state(&mut out);
        }
        out.push(&self.head.params.kernel.data);
        out.push(&self.head.params.bias);
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let levels = self.config.levels;
        let mut out = Vec::new();
        let (first, rest) = self.encoders.split_at_mut(1);
        first[0].state_mut(&mut out);
        for (down, enc) in self.downs.iter_mut().zip(rest.iter_mut()).take(levels - 1) {
            down.state_mut(&mut out);
            enc.state_mut(&mut out);
        }
        for (up, dec) in self.ups.iter_mut().zip(self.decoders.iter_mut()).rev() {
            up.state_mut(&mut out);
            dec.state_mut(&mut out);
        }
        out.push(&mut self.head.params.kernel.data);
        out.push(&mut self.head.params.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.state().iter().map(|s| s.len()).sum()
    }
}

/// Packs per-sample frame stacks (newest first) into a `(batch, frames, h, w)` tensor.
pub fn stack_frames(samples: &[Vec<&Image>]) -> Result<Tensor4> {
    let Some(first) = samples.first().and_then(|s| s.first()) else {
        return Err(Error::InvalidArgument("no frames to stack".into()));
    };
    let (w, h) = (first.width, first.height);
    let c = samples[0].len();
    let mut data = Vec::with_capacity(samples.len() * c * w * h);
    for s in samples {
        if s.len() != c {
            return Err(Error::Shape("samples have different frame counts".into()));
        }
        for img in s {
            if (img.width, img.height) != (w, h) {
                return Err(Error::Shape("frames have different dimensions".into()));
            }
            data.extend_from_slice(&img.data);
        }
    }
    Tensor4::new([samples.len(), c, h, w], data)
}
