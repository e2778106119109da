//! Four-stage SPANet backbones built from MetaFormer blocks with SPAM token
//! mixers, plus deterministic initialization and parameter/FLOP accounting.
//!
//! Stage and block numbers are 1-based everywhere (weight names, ResScale
//! stage sets, context capture).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::init::TruncatedNormal;
use crate::mixer::{spam_forward_traced, SpamConfig, SpamWeights, SpgConfig};
use crate::tensor::{
    conv1x1, conv2d, gelu, global_avg_pool, linear, mln_normalize, ConvKernel, NormParams, Tensor,
};

pub const STEM_KERNEL: usize = 7;
pub const STEM_STRIDE: usize = 4;
pub const STEM_PAD: usize = 2;
pub const DOWN_KERNEL: usize = 3;
pub const DOWN_STRIDE: usize = 2;
pub const DOWN_PAD: usize = 1;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Small,
    Medium,
    Base,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(Self::Small),
            "M" | "m" => Ok(Self::Medium),
            "B" | "b" => Ok(Self::Base),
            other => Err(Error::UnknownVariant(other.to_string())),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Small => "S",
            Self::Medium => "M",
            Self::Base => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaNetConfig {
    pub dims: [usize; 4],
    pub depths: [usize; 4],
    /// Low-band radius per stage, in centered-spectrum bins at that stage's
    /// own resolution.
    pub radii: [f64; 4],
    pub n_spg: usize,
    pub lambdas: Vec<f64>,
    pub kernel: usize,
    pub mlp_ratio: f64,
    pub num_classes: usize,
    /// 1-based stages whose residual branches carry ResScale vectors.
    pub res_scale_stages: Vec<usize>,
}

impl SpaNetConfig {
    pub fn preset(variant: Variant) -> Self {
        let (dims, depths) = match variant {
            Variant::Small => ([64, 128, 320, 512], [4, 4, 12, 4]),
            Variant::Medium => ([64, 128, 320, 512], [6, 6, 18, 6]),
            Variant::Base => ([96, 192, 384, 768], [6, 6, 18, 6]),
        };
        Self {
            dims,
            depths,
            radii: [2.0, 2.0, 1.0, 1.0],
            n_spg: 3,
            lambdas: vec![0.7, 0.8, 0.9],
            kernel: 7,
            mlp_ratio: 4.0,
            num_classes: 1000,
            res_scale_stages: vec![3, 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.len() != self.n_spg {
            return Err(Error::InvalidParameter {
                name: "lambdas",
                reason: format!("need {} values, got {}", self.n_spg, self.lambdas.len()),
            });
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidParameter {
                name: "num_classes",
                reason: "must be positive".into(),
            });
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mlp_ratio",
                reason: "must be positive".into(),
            });
        }
        if let Some(&s) = self.res_scale_stages.iter().find(|&&s| !(1..=4).contains(&s)) {
            return Err(Error::InvalidParameter {
                name: "res_scale_stages",
                reason: format!("stage {s} is outside 1..=4"),
            });
        }
        (1..=4).try_for_each(|s| self.spam_config(s).map(drop))
    }

    pub fn hidden_dim(&self, dim: usize) -> usize {
        (dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn has_res_scale(&self, stage: usize) -> bool {
        self.res_scale_stages.contains(&stage)
    }

    /// Mixer configuration used by every block of a 1-based stage.
    pub fn spam_config(&self, stage: usize) -> Result<SpamConfig> {
        let radius = self.radii[stage - 1];
        let spgs = self
            .lambdas
            .iter()
            .map(|&l| SpgConfig::new(l, radius))
            .collect::<Result<_>>()?;
        SpamConfig::new(self.dims[stage - 1], self.kernel, spgs)
    }

    /// Spatial size after the stem and each downsampling step.
    pub fn stage_resolutions(&self, h: usize, w: usize) -> [(usize, usize); 4] {
        let stem = |v: usize| (v + 2 * STEM_PAD).saturating_sub(STEM_KERNEL) / STEM_STRIDE + 1;
        let down = |v: usize| (v + 2 * DOWN_PAD).saturating_sub(DOWN_KERNEL) / DOWN_STRIDE + 1;
        let mut out = [(stem(h), stem(w)); 4];
        for s in 1..4 {
            out[s] = (down(out[s - 1].0), down(out[s - 1].1));
        }
        out
    }
}

/// `build_config` for a variant name `"S"`, `"M"` or `"B"`.
pub fn build_config(variant: &str) -> Result<SpaNetConfig> {
    Ok(SpaNetConfig::preset(variant.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    TruncNormal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

impl ParamSpec {
    fn new(name: String, shape: &[usize], init: InitKind) -> Self {
        Self {
            name,
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn block_prefix(stage: usize, block: usize) -> String {
    format!("stage{stage}.block{block}")
}

/// Names, shapes and initializers of every learnable tensor, in store order.
pub fn param_layout(cfg: &SpaNetConfig) -> Result<Vec<ParamSpec>> {
    use InitKind::*;
    cfg.validate()?;
    let mut specs = Vec::new();
    let mut push = |name: String, shape: &[usize], init| specs.push(ParamSpec::new(name, shape, init));
    let c1 = cfg.dims[0];
    push("patch_embed.weight".into(), &[c1, INPUT_CHANNELS, STEM_KERNEL, STEM_KERNEL], TruncNormal);
    push("patch_embed.bias".into(), &[c1], Zeros);
    for stage in 1..=4 {
        let d = cfg.dims[stage - 1];
        if stage > 1 {
            let prev = cfg.dims[stage - 2];
            push(format!("stage{stage}.downsample.weight"), &[d, prev, DOWN_KERNEL, DOWN_KERNEL], TruncNormal);
            push(format!("stage{stage}.downsample.bias"), &[d], Zeros);
        }
        let spam = cfg.spam_config(stage)?;
        let hidden = cfg.hidden_dim(d);
        let k = cfg.kernel;
        for block in 1..=cfg.depths[stage - 1] {
            let p = block_prefix(stage, block);
            push(format!("{p}.norm1.gamma"), &[d], Ones);
            push(format!("{p}.norm1.beta"), &[d], Zeros);
            push(format!("{p}.mixer.in_proj.weight"), &[2 * d, d, 1, 1], TruncNormal);
            push(format!("{p}.mixer.in_proj.bias"), &[2 * d], Zeros);
            push(format!("{p}.mixer.query_dw_h.weight"), &[d, 1, 1, k], TruncNormal);
            push(format!("{p}.mixer.query_dw_v.weight"), &[d, 1, k, 1], TruncNormal);
            for (i, g) in spam.split_sizes().into_iter().enumerate() {
                push(format!("{p}.mixer.spg{}.weight", i + 1), &[d, g, 1, 1], TruncNormal);
                push(format!("{p}.mixer.spg{}.bias", i + 1), &[d], Zeros);
            }
            push(format!("{p}.mixer.out_proj.weight"), &[d, d, 1, 1], TruncNormal);
            push(format!("{p}.mixer.out_proj.bias"), &[d], Zeros);
            if cfg.has_res_scale(stage) {
                push(format!("{p}.res_scale1"), &[d], Ones);
            }
            push(format!("{p}.norm2.gamma"), &[d], Ones);
            push(format!("{p}.norm2.beta"), &[d], Zeros);
            push(format!("{p}.mlp.fc1.weight"), &[hidden, d, 1, 1], TruncNormal);
            push(format!("{p}.mlp.fc1.bias"), &[hidden], Zeros);
            push(format!("{p}.mlp.fc2.weight"), &[d, hidden, 1, 1], TruncNormal);
            push(format!("{p}.mlp.fc2.bias"), &[d], Zeros);
            if cfg.has_res_scale(stage) {
                push(format!("{p}.res_scale2"), &[d], Ones);
            }
        }
    }
    let c4 = cfg.dims[3];
    push("norm.gamma".into(), &[c4], Ones);
    push("norm.beta".into(), &[c4], Zeros);
    push("head.weight".into(), &[cfg.num_classes, c4], TruncNormal);
    push("head.bias".into(), &[cfg.num_classes], Zeros);
    Ok(specs)
}

/// Ordered map from parameter names to tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an entry; replacement keeps the original position.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = tensor,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, tensor));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// SHA-256 over names, shapes and little-endian payloads, as hex.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.entries {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            for &e in t.shape() {
                h.update((e as u32).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    /// Checks that the store holds exactly the tensors `cfg` needs.
    pub fn validate(&self, cfg: &SpaNetConfig) -> Result<()> {
        for spec in param_layout(cfg)? {
            let t = self.require(&spec.name)?;
            if t.shape() != spec.shape {
                return Err(Error::ShapeMismatch {
                    op: "weight store",
                    expected: spec.shape,
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Deterministic initialization: truncated normal (std 0.02, ±2σ) for weights,
/// zero biases, unit norm scales and ResScale vectors.
pub fn init_weights(cfg: &SpaNetConfig, seed: u64) -> Result<WeightStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = TruncatedNormal::default();
    let mut store = WeightStore::new();
    for spec in param_layout(cfg)? {
        let tensor = match spec.init {
            InitKind::Zeros => Tensor::zeros(&spec.shape)?,
            InitKind::Ones => Tensor::full(&spec.shape, 1.0)?,
            InitKind::TruncNormal => Tensor::from_fn(&spec.shape, |_| sampler.sample(&mut rng))?,
        };
        store.insert(spec.name, tensor);
    }
    Ok(store)
}

/// Exact number of learnable scalars for `cfg`.
pub fn count_params(cfg: &SpaNetConfig) -> Result<u64> {
    Ok(param_layout(cfg)?.iter().map(|s| s.numel() as u64).sum())
}

/// Multiply-accumulate count of every convolution and linear layer for an
/// `h × w` input, one FLOP per MAC. Spectral transforms, elementwise
/// products, normalization and activations are not counted.
pub fn count_flops(cfg: &SpaNetConfig, h: usize, w: usize) -> Result<u64> {
    cfg.validate()?;
    let res = cfg.stage_resolutions(h, w);
    let k = cfg.kernel as u64;
    let area = |s: usize| (res[s].0 * res[s].1) as u64;
    let mut macs = area(0) * (cfg.dims[0] * INPUT_CHANNELS * STEM_KERNEL * STEM_KERNEL) as u64;
    for stage in 1..=4 {
        let d = cfg.dims[stage - 1] as u64;
        let hw = area(stage - 1);
        if stage > 1 {
            let prev = cfg.dims[stage - 2] as u64;
            macs += hw * d * prev * (DOWN_KERNEL * DOWN_KERNEL) as u64;
        }
        let hidden = cfg.hidden_dim(d as usize) as u64;
        let per_block = hw
            * (2 * d * d // in_proj
                + 2 * k * d // separable depthwise pair
                + d * d // gate interactions, Σ g_i·D
                + d * d // out_proj
                + 2 * d * hidden); // mlp
        macs += cfg.depths[stage - 1] as u64 * per_block;
    }
    macs += (cfg.dims[3] * cfg.num_classes) as u64;
    Ok(macs)
}

fn norm_from(store: &WeightStore, prefix: &str) -> Result<NormParams> {
    NormParams::new(
        store.require(&format!("{prefix}.gamma"))?.data().to_vec(),
        store.require(&format!("{prefix}.beta"))?.data().to_vec(),
        NormParams::DEFAULT_EPSILON,
    )
}

fn kernel_from(store: &WeightStore, prefix: &str, with_bias: bool) -> Result<ConvKernel> {
    let weight = store.require(&format!("{prefix}.weight"))?;
    let bias = if with_bias {
        Some(store.require(&format!("{prefix}.bias"))?)
    } else {
        None
    };
    ConvKernel::from_tensors(weight, bias)
}

/// Weights of one MetaFormer block.
#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub norm1: NormParams,
    pub mixer: SpamWeights,
    pub res_scale1: Option<Vec<f32>>,
    pub norm2: NormParams,
    pub fc1: ConvKernel,
    pub fc2: ConvKernel,
    pub res_scale2: Option<Vec<f32>>,
}

impl BlockWeights {
    pub fn from_store(store: &WeightStore, stage: usize, block: usize, n_spg: usize) -> Result<Self> {
        let p = block_prefix(stage, block);
        let m = format!("{p}.mixer");
        let mixer = SpamWeights {
            in_proj: kernel_from(store, &format!("{m}.in_proj"), true)?,
            query_dw_h: kernel_from(store, &format!("{m}.query_dw_h"), false)?,
            query_dw_v: kernel_from(store, &format!("{m}.query_dw_v"), false)?,
            spg_interactions: (1..=n_spg)
                .map(|i| kernel_from(store, &format!("{m}.spg{i}"), true))
                .collect::<Result<_>>()?,
            out_proj: kernel_from(store, &format!("{m}.out_proj"), true)?,
        };
        let scale = |name: &str| store.get(&format!("{p}.{name}")).map(|t| t.data().to_vec());
        Ok(Self {
            norm1: norm_from(store, &format!("{p}.norm1"))?,
            mixer,
            res_scale1: scale("res_scale1"),
            norm2: norm_from(store, &format!("{p}.norm2"))?,
            fc1: kernel_from(store, &format!("{p}.mlp.fc1"), true)?,
            fc2: kernel_from(store, &format!("{p}.mlp.fc2"), true)?,
            res_scale2: scale("res_scale2"),
        })
    }
}

/// `x + s·branch`, with `s` a per-channel vector or 1.
fn residual_add(x: &Tensor, branch: &Tensor, scale: Option<&[f32]>) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if branch.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "residual",
            expected: x.shape().to_vec(),
            found: branch.shape().to_vec(),
        });
    }
    if let Some(s) = scale {
        if s.len() != c {
            return Err(Error::ChannelMismatch {
                op: "res_scale",
                expected: c,
                found: s.len(),
            });
        }
    }
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let s = scale.map_or(1.0, |s| s[ch]);
            let src = branch.plane(b, ch);
            for (o, &v) in out.plane_mut(b, ch).iter_mut().zip(src) {
                *o += s * v;
            }
        }
    }
    debug_assert_eq!(out.len(), n * c * h * w);
    Ok(out)
}

pub fn mlp_forward(x: &Tensor, fc1: &ConvKernel, fc2: &ConvKernel) -> Result<Tensor> {
    conv1x1(&gelu(&conv1x1(x, fc1)?), fc2)
}

/// Output of a block together with its mixer's aggregated context.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub output: Tensor,
    pub context: Tensor,
}

pub fn block_forward_traced(x: &Tensor, w: &BlockWeights, cfg: &SpamConfig) -> Result<BlockTrace> {
    let mixed = spam_forward_traced(&mln_normalize(x, &w.norm1)?, cfg, &w.mixer)?;
    let y = residual_add(x, &mixed.output, w.res_scale1.as_deref())?;
    let mlp = mlp_forward(&mln_normalize(&y, &w.norm2)?, &w.fc1, &w.fc2)?;
    let output = residual_add(&y, &mlp, w.res_scale2.as_deref())?;
    Ok(BlockTrace {
        output,
        context: mixed.context,
    })
}

/// `y = x + s₁·SPAM(MLN(x))`, then `y + s₂·MLP(MLN(y))`.
pub fn block_forward(x: &Tensor, w: &BlockWeights, cfg: &SpamConfig) -> Result<Tensor> {
    Ok(block_forward_traced(x, w, cfg)?.output)
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub downsample: Option<ConvKernel>,
    pub spam: SpamConfig,
    pub blocks: Vec<BlockWeights>,
}

/// A SPANet with weights unpacked from a [`WeightStore`].
#[derive(Debug, Clone)]
pub struct SpaNet {
    pub config: SpaNetConfig,
    pub stem: ConvKernel,
    pub stages: Vec<Stage>,
    pub norm: NormParams,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[batch, num_classes]`
    pub logits: Tensor,
    /// Output shape of each stage.
    pub stage_shapes: Vec<Vec<usize>>,
    /// Aggregated context of the requested block, if any.
    pub context: Option<Tensor>,
}

impl SpaNet {
    pub fn from_store(config: &SpaNetConfig, store: &WeightStore) -> Result<Self> {
        store.validate(config)?;
        let mut stages = Vec::with_capacity(4);
        for stage in 1..=4 {
            let downsample = if stage > 1 {
                Some(kernel_from(store, &format!("stage{stage}.downsample"), true)?)
            } else {
                None
            };
            let blocks = (1..=config.depths[stage - 1])
                .map(|b| BlockWeights::from_store(store, stage, b, config.n_spg))
                .collect::<Result<_>>()?;
            stages.push(Stage {
                downsample,
                spam: config.spam_config(stage)?,
                blocks,
            });
        }
        Ok(Self {
            config: config.clone(),
            stem: kernel_from(store, "patch_embed", true)?,
            stages,
            norm: norm_from(store, "norm")?,
            head_weight: store.require("head.weight")?.clone(),
            head_bias: store.require("head.bias")?.clone(),
        })
    }

    pub fn init(config: &SpaNetConfig, seed: u64) -> Result<Self> {
        Self::from_store(config, &init_weights(config, seed)?)
    }

    /// Runs the network; `capture` selects a 1-based `(stage, block)` whose
    /// aggregated context is returned.
    pub fn forward_with(&self, image: &Tensor, capture: Option<(usize, usize)>) -> Result<ForwardOutput> {
        let (_, c, h, w) = image.dims4()?;
        if c != INPUT_CHANNELS || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::InvalidShape {
                shape: image.shape().to_vec(),
                reason: "expected [batch, 3, H, W] with H and W divisible by 32".into(),
            });
        }
        if let Some((s, b)) = capture {
            if !(1..=4).contains(&s) || b == 0 || b > self.config.depths[s - 1] {
                return Err(Error::InvalidParameter {
                    name: "capture",
                    reason: format!("no block {b} in stage {s}"),
                });
            }
        }
        let mut x = conv2d(image, &self.stem, STEM_STRIDE, STEM_PAD)?;
        let mut stage_shapes = Vec::with_capacity(4);
        let mut context = None;
        for (si, stage) in self.stages.iter().enumerate() {
            if let Some(down) = &stage.downsample {
                x = conv2d(&x, down, DOWN_STRIDE, DOWN_PAD)?;
            }
            for (bi, block) in stage.blocks.iter().enumerate() {
                let trace = block_forward_traced(&x, block, &stage.spam)?;
                if capture == Some((si + 1, bi + 1)) {
                    context = Some(trace.context);
                }
                x = trace.output;
            }
            stage_shapes.push(x.shape().to_vec());
        }
        let pooled = global_avg_pool(&mln_normalize(&x, &self.norm)?)?;
        let logits = linear(&pooled, &self.head_weight, Some(&self.head_bias))?;
        Ok(ForwardOutput {
            logits,
            stage_shapes,
            context,
        })
    }

    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with(image, None)?.logits)
    }
}

/// Full forward pass; returns `[batch, num_classes]` logits.
pub fn model_forward(image: &Tensor, cfg: &SpaNetConfig, store: &WeightStore) -> Result<Tensor> {
    SpaNet::from_store(cfg, store)?.forward(image)
}
