use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, Result};
use crate::tensor::{
    batchnorm_infer, channel_shuffle, conv2d, global_avg_pool, linear, max_pool2d, relu_in_place,
    ConvSpec, PoolSpec, Tensor, TensorError,
};

const BN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

impl BatchNorm {
    /// Identity normalisation up to `eps`: unit scale, zero shift, unit variance.
    pub fn neutral(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        Ok(batchnorm_infer(
            x,
            &self.running_mean,
            &self.running_var,
            &self.gamma,
            &self.beta,
            self.eps,
        )?)
    }
}

/// Convolution followed by batch norm and an optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bn: BatchNorm,
    pub relu: bool,
}

impl ConvBn {
    fn new(name: String, spec: ConvSpec, relu: bool) -> Self {
        Self {
            name,
            weight: Tensor::zeros(spec.weight_shape()),
            bn: BatchNorm::neutral(spec.out_channels),
            spec,
            relu,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d(x, &self.weight, &self.spec)?;
        let mut y = self.bn.apply(&y)?;
        if self.relu {
            relu_in_place(&mut y);
        }
        Ok(y)
    }

    fn fan_in(&self) -> usize {
        let [_, i, kh, kw] = self.spec.weight_shape();
        i * kh * kw
    }

    fn params<'a>(&'a self, out: &mut Vec<ParamRef<'a>>) {
        let p = &self.name;
        let c = self.bn.channels();
        out.push(ParamRef::new(format!("{p}.conv.weight"), self.weight.shape().to_vec(), self.weight.data(), ParamKind::Weight));
        out.push(ParamRef::new(format!("{p}.bn.weight"), vec![c], &self.bn.gamma, ParamKind::Affine));
        out.push(ParamRef::new(format!("{p}.bn.bias"), vec![c], &self.bn.beta, ParamKind::Affine));
        out.push(ParamRef::new(format!("{p}.bn.running_mean"), vec![c], &self.bn.running_mean, ParamKind::Buffer));
        out.push(ParamRef::new(format!("{p}.bn.running_var"), vec![c], &self.bn.running_var, ParamKind::Buffer));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<ParamMut<'a>>) {
        let p = &self.name;
        let c = self.bn.channels();
        let shape = self.weight.shape().to_vec();
        out.push(ParamMut::new(format!("{p}.conv.weight"), shape, self.weight.data_mut(), ParamKind::Weight));
        out.push(ParamMut::new(format!("{p}.bn.weight"), vec![c], &mut self.bn.gamma, ParamKind::Affine));
        out.push(ParamMut::new(format!("{p}.bn.bias"), vec![c], &mut self.bn.beta, ParamKind::Affine));
        out.push(ParamMut::new(format!("{p}.bn.running_mean"), vec![c], &mut self.bn.running_mean, ParamKind::Buffer));
        out.push(ParamMut::new(format!("{p}.bn.running_var"), vec![c], &mut self.bn.running_var, ParamKind::Buffer));
    }

    fn check(&self) -> Result<()> {
        self.spec.validate()?;
        if self.weight.shape() != self.spec.weight_shape() {
            return Err(ModelError::Config(format!(
                "{}: weight shape {:?} does not match {:?}",
                self.name,
                self.weight.shape(),
                self.spec.weight_shape()
            )));
        }
        let c = self.spec.out_channels;
        let bn = &self.bn;
        if [bn.gamma.len(), bn.beta.len(), bn.running_mean.len(), bn.running_var.len()]
            .iter()
            .any(|&l| l != c)
        {
            return Err(ModelError::Config(format!(
                "{}: batch norm vectors must have length {c}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Channel-split shuffle unit.
///
/// A regular block keeps the left half of the channels untouched and runs the
/// right half through 1×1 → 3×3 depthwise → 1×1. A downsampling block feeds the
/// whole input to both branches (the left one is depthwise stride 2 → 1×1),
/// halving the spatial extent. Both end with concat and a 2-group shuffle.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleBlock {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub downsample: bool,
    /// 1×1 (ReLU) → depthwise 3×3 → 1×1 (ReLU).
    pub main: [ConvBn; 3],
    /// Depthwise 3×3 stride 2 → 1×1 (ReLU); downsampling blocks only.
    pub proj: Option<[ConvBn; 2]>,
}

impl ShuffleBlock {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, downsample: bool) -> Self {
        let name = name.into();
        let half = out_channels / 2;
        let (main_in, stride) = if downsample { (in_channels, 2) } else { (half, 1) };
        let main = [
            ConvBn::new(format!("{name}.main.pw1"), ConvSpec::pointwise(main_in, half), true),
            ConvBn::new(format!("{name}.main.dw"), ConvSpec::depthwise(half, stride), false),
            ConvBn::new(format!("{name}.main.pw2"), ConvSpec::pointwise(half, half), true),
        ];
        let proj = downsample.then(|| {
            [
                ConvBn::new(format!("{name}.proj.dw"), ConvSpec::depthwise(in_channels, 2), false),
                ConvBn::new(format!("{name}.proj.pw"), ConvSpec::pointwise(in_channels, half), true),
            ]
        });
        Self {
            name,
            in_channels,
            out_channels,
            downsample,
            main,
            proj,
        }
    }

    pub(crate) fn units(&self) -> impl Iterator<Item = &ConvBn> {
        self.proj.iter().flatten().chain(self.main.iter())
    }

    fn units_mut(&mut self) -> impl Iterator<Item = &mut ConvBn> {
        self.proj.iter_mut().flatten().chain(self.main.iter_mut())
    }

    fn check(&self) -> Result<()> {
        let err = |msg: String| Err(ModelError::Config(format!("{}: {msg}", self.name)));
        if self.out_channels % 2 != 0 {
            return err(format!("odd output channel count {}", self.out_channels));
        }
        if !self.downsample && self.in_channels != self.out_channels {
            return err(format!(
                "regular block must preserve channels ({} -> {})",
                self.in_channels, self.out_channels
            ));
        }
        if self.downsample != self.proj.is_some() {
            return err("projection branch present iff downsampling".into());
        }
        let half = self.out_channels / 2;
        let main_in = if self.downsample { self.in_channels } else { half };
        if self.main[0].spec.in_channels != main_in
            || self.main[0].spec.out_channels != self.main[1].spec.in_channels
            || self.main[1].spec.out_channels != self.main[2].spec.in_channels
            || self.main[2].spec.out_channels != half
        {
            return err("main branch channel chain is inconsistent".into());
        }
        if let Some([dw, pw]) = &self.proj {
            if dw.spec.in_channels != self.in_channels
                || dw.spec.out_channels != pw.spec.in_channels
                || pw.spec.out_channels != half
            {
                return err("projection branch channel chain is inconsistent".into());
            }
        }
        self.units().try_for_each(ConvBn::check)
    }
}

/// Runs one shuffle block on `x`.
pub fn shuffle_block_forward(x: &Tensor, block: &ShuffleBlock) -> Result<Tensor> {
    let c = x.channels();
    if c != block.in_channels {
        return Err(TensorError::Dimension {
            op: "shuffle_block",
            axis: "input channels",
            expected: block.in_channels,
            actual: c,
        }
        .into());
    }
    let run = |units: &[ConvBn], input: &Tensor| -> Result<Tensor> {
        let mut y = units[0].forward(input)?;
        for u in &units[1..] {
            y = u.forward(&y)?;
        }
        Ok(y)
    };
    let joined = match &block.proj {
        None => {
            if c % 2 != 0 {
                return Err(ModelError::Config(format!(
                    "{}: cannot split odd channel count {c}",
                    block.name
                )));
            }
            let left = x.slice_channels(0, c / 2)?;
            let right = x.slice_channels(c / 2, c)?;
            Tensor::concat_channels(&left, &run(&block.main, &right)?)?
        }
        Some(proj) => Tensor::concat_channels(&run(proj, x)?, &run(&block.main, x)?)?,
    };
    Ok(channel_shuffle(&joined, 2)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    /// Row-major `(out_features, in_features)`.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub relu: bool,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_features: usize, out_features: usize, relu: bool) -> Self {
        Self {
            name: name.into(),
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
            relu,
        }
    }

    pub fn row(&self, o: usize) -> &[f32] {
        &self.weight[o * self.in_features..(o + 1) * self.in_features]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = linear(x, &self.weight, self.out_features, &self.bias)?;
        if self.relu {
            relu_in_place(&mut y);
        }
        Ok(y)
    }

    fn check(&self) -> Result<()> {
        if self.weight.len() != self.in_features * self.out_features || self.bias.len() != self.out_features {
            return Err(ModelError::Config(format!(
                "{}: parameter lengths do not match {}x{}",
                self.name, self.out_features, self.in_features
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Stem(ConvBn),
    MaxPool(PoolSpec),
    Block(ShuffleBlock),
    FinalConv(ConvBn),
    GlobalPool,
    Linear(Linear),
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Stem(u) | Layer::FinalConv(u) => &u.name,
            Layer::MaxPool(_) => "maxpool",
            Layer::Block(b) => &b.name,
            Layer::GlobalPool => "gap",
            Layer::Linear(l) => &l.name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution or linear weight.
    Weight,
    /// Linear bias.
    Bias,
    /// Batch-norm scale or shift.
    Affine,
    /// Batch-norm running statistics: stored, but not trainable.
    Buffer,
}

impl ParamKind {
    pub fn is_trainable(self) -> bool {
        self != ParamKind::Buffer
    }
}

#[derive(Debug)]
pub struct ParamRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
    pub kind: ParamKind,
}

impl<'a> ParamRef<'a> {
    fn new(name: String, shape: Vec<usize>, data: &'a [f32], kind: ParamKind) -> Self {
        Self { name, shape, data, kind }
    }
}

#[derive(Debug)]
pub struct ParamMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f32],
    pub kind: ParamKind,
}

impl<'a> ParamMut<'a> {
    fn new(name: String, shape: Vec<usize>, data: &'a mut [f32], kind: ParamKind) -> Self {
        Self { name, shape, data, kind }
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Post-ReLU output of the final 1×1 convolution, `(N, C, H', W')`.
    pub features: Tensor,
    /// Global-average-pooled features, `(N, C, 1, 1)`: the embedding.
    pub pooled: Tensor,
    /// Hidden head pre-activation, `(N, hidden, 1, 1)`.
    pub hidden_pre: Tensor,
    /// `(N, num_classes, 1, 1)`.
    pub logits: Tensor,
}

impl ForwardTrace {
    pub fn logits_row(&self, n: usize) -> &[f32] {
        let k = self.logits.channels();
        &self.logits.data()[n * k..(n + 1) * k]
    }
}

/// Borrowed view of the two-layer classification head.
#[derive(Debug, Clone, Copy)]
pub struct HeadView<'a> {
    pub hidden: &'a Linear,
    pub output: &'a Linear,
}

/// The classifier: an ordered layer list owning its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    config: ModelConfig,
    layers: Vec<Layer>,
}

/// Builds the classifier with seeded uniform `±1/sqrt(fan_in)` weights and
/// neutral batch norm. Same config and seed give bitwise-identical parameters.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ModelGraph> {
    let mut model = ModelGraph::skeleton(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |data: &mut [f32], fan_in: usize| {
        let bound = 1.0 / (fan_in as f32).sqrt();
        for v in data {
            *v = (rng.random::<f32>() * 2.0 - 1.0) * bound;
        }
    };
    for layer in &mut model.layers {
        match layer {
            Layer::Stem(u) | Layer::FinalConv(u) => {
                let fan_in = u.fan_in();
                uniform(u.weight.data_mut(), fan_in);
            }
            Layer::Block(b) => {
                for u in b.units_mut() {
                    let fan_in = u.fan_in();
                    uniform(u.weight.data_mut(), fan_in);
                }
            }
            Layer::Linear(l) => {
                uniform(&mut l.weight, l.in_features);
                uniform(&mut l.bias, l.in_features);
            }
            Layer::MaxPool(_) | Layer::GlobalPool => {}
        }
    }
    Ok(model)
}

impl ModelGraph {
    /// All-zero weights, neutral batch norm.
    pub fn skeleton(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        layers.push(Layer::Stem(ConvBn::new(
            "stem".into(),
            ConvSpec::new(3, config.stem_channels, 3).with_stride(2).with_padding(1),
            true,
        )));
        layers.push(Layer::MaxPool(PoolSpec::STEM));
        let mut channels = config.stem_channels;
        for (s, (&blocks, &width)) in config
            .stage_blocks
            .iter()
            .zip(&config.stage_channels)
            .enumerate()
        {
            for i in 0..blocks {
                let name = format!("stage{}.{i}", s + 2);
                layers.push(Layer::Block(ShuffleBlock::new(name, channels, width, i == 0)));
                channels = width;
            }
        }
        layers.push(Layer::FinalConv(ConvBn::new(
            "conv5".into(),
            ConvSpec::pointwise(channels, config.final_conv_channels),
            true,
        )));
        layers.push(Layer::GlobalPool);
        layers.push(Layer::Linear(Linear::new(
            "head.fc1",
            config.final_conv_channels,
            config.head_hidden,
            true,
        )));
        layers.push(Layer::Linear(Linear::new(
            "head.fc2",
            config.head_hidden,
            config.num_classes,
            false,
        )));
        let model = Self {
            config: config.clone(),
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Checks the channel chain, parameter shapes and name uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut channels = 3;
        let mut pooled = false;
        let chain = |name: &str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(ModelError::Config(format!(
                    "{name}: expects {actual} input channels but predecessor produces {expected}"
                )))
            }
        };
        let mut linears = 0;
        for layer in &self.layers {
            match layer {
                Layer::Stem(u) | Layer::FinalConv(u) => {
                    u.check()?;
                    chain(&u.name, channels, u.spec.in_channels)?;
                    channels = u.spec.out_channels;
                }
                Layer::MaxPool(_) => {}
                Layer::Block(b) => {
                    b.check()?;
                    chain(&b.name, channels, b.in_channels)?;
                    channels = b.out_channels;
                }
                Layer::GlobalPool => pooled = true,
                Layer::Linear(l) => {
                    l.check()?;
                    if !pooled {
                        return Err(ModelError::Config(format!("{}: linear layer before pooling", l.name)));
                    }
                    chain(&l.name, channels, l.in_features)?;
                    channels = l.out_features;
                    linears += 1;
                }
            }
        }
        if linears != 2 || !matches!(self.layers.last(), Some(Layer::Linear(_))) {
            return Err(ModelError::Config("graph must end with a two-layer head".into()));
        }
        if channels != self.config.num_classes {
            return Err(ModelError::Config(format!(
                "head produces {channels} outputs, config expects {}",
                self.config.num_classes
            )));
        }
        let mut seen = HashSet::new();
        for p in self.params() {
            if !seen.insert(p.name.clone()) {
                return Err(ModelError::Config(format!("duplicate parameter name {}", p.name)));
            }
        }
        Ok(())
    }

    /// Every stored tensor in graph order.
    pub fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Stem(u) | Layer::FinalConv(u) => u.params(&mut out),
                Layer::Block(b) => b.units().for_each(|u| u.params(&mut out)),
                Layer::Linear(l) => {
                    out.push(ParamRef::new(
                        format!("{}.weight", l.name),
                        vec![l.out_features, l.in_features],
                        &l.weight,
                        ParamKind::Weight,
                    ));
                    out.push(ParamRef::new(format!("{}.bias", l.name), vec![l.out_features], &l.bias, ParamKind::Bias));
                }
                Layer::MaxPool(_) | Layer::GlobalPool => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Stem(u) | Layer::FinalConv(u) => u.params_mut(&mut out),
                Layer::Block(b) => b.units_mut().for_each(|u| u.params_mut(&mut out)),
                Layer::Linear(l) => {
                    let shape = vec![l.out_features, l.in_features];
                    out.push(ParamMut::new(format!("{}.weight", l.name), shape, &mut l.weight, ParamKind::Weight));
                    out.push(ParamMut::new(format!("{}.bias", l.name), vec![l.out_features], &mut l.bias, ParamKind::Bias));
                }
                Layer::MaxPool(_) | Layer::GlobalPool => {}
            }
        }
        out
    }

    pub fn head(&self) -> HeadView<'_> {
        let mut linears = self.layers.iter().rev().filter_map(|l| match l {
            Layer::Linear(l) => Some(l),
            _ => None,
        });
        let output = linears.next().expect("validated graph has a head");
        let hidden = linears.next().expect("validated graph has a head");
        HeadView { hidden, output }
    }

    pub fn head_mut(&mut self) -> (&mut Linear, &mut Linear) {
        let mut linears = self.layers.iter_mut().rev().filter_map(|l| match l {
            Layer::Linear(l) => Some(l),
            _ => None,
        });
        let output = linears.next().expect("validated graph has a head");
        let hidden = linears.next().expect("validated graph has a head");
        (hidden, output)
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let [_, c, h, w] = batch.shape();
        let size = self.config.input_size;
        for (axis, expected, actual) in [("channels", 3, c), ("height", size, h), ("width", size, w)] {
            if expected != actual {
                return Err(TensorError::Dimension {
                    op: "forward",
                    axis,
                    expected,
                    actual,
                }
                .into());
            }
        }
        Ok(())
    }

    /// Full forward pass keeping the activations Grad-CAM and embedding export need.
    pub fn forward_trace(&self, batch: &Tensor) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        let mut features = None;
        let mut pooled = None;
        let mut hidden_pre = None;
        for layer in &self.layers {
            x = match layer {
                Layer::Stem(u) | Layer::FinalConv(u) => u.forward(&x)?,
                Layer::MaxPool(spec) => max_pool2d(&x, *spec)?,
                Layer::Block(b) => shuffle_block_forward(&x, b)?,
                Layer::GlobalPool => {
                    let p = global_avg_pool(&x)?;
                    features = Some(x);
                    pooled = Some(p.clone());
                    p
                }
                Layer::Linear(l) if hidden_pre.is_none() => {
                    let z = linear(&x, &l.weight, l.out_features, &l.bias)?;
                    let mut a = z.clone();
                    if l.relu {
                        relu_in_place(&mut a);
                    }
                    hidden_pre = Some(z);
                    a
                }
                Layer::Linear(l) => l.forward(&x)?,
            };
        }
        Ok(ForwardTrace {
            features: features.expect("validated graph pools"),
            pooled: pooled.expect("validated graph pools"),
            hidden_pre: hidden_pre.expect("validated graph has a head"),
            logits: x,
        })
    }

    /// Logits `(N, num_classes, 1, 1)`. Dropout is identity at inference.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.logits)
    }

    /// Penultimate (pooled) features `(N, final_conv_channels, 1, 1)`.
    pub fn embed(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.pooled)
    }
}
