//! Spectral Pooling Gate (SPG) and the SPAM token mixer.
//!
//! Data flow for one SPAM call on a `D`-channel input:
//!
//! ```text
//! x ─ in_proj (1×1, D→2D) ─┬─ channels [0, D)  ─ dw 1×K ─ dw K×1 ───────────── q ─┐
//!                          └─ channels [D, 2D) ─ split into N groups                ⊙ ─ out_proj ─ y
//!                                                 └ SPG_i: SPF(λ_i, r) → 1×1 (g_i→D) ┘
//!                                                   summed over i ──────────────── m
//! ```

use std::collections::hash_map::{Entry, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::fft::Fft2Plan;
use crate::init::TruncatedNormal;
use crate::spectral::{check_lambda, spf_apply_with, spf_mask, FilterMask};
use crate::tensor::{
    add, balanced_split_sizes, conv1x1, conv2d_depthwise, hadamard, split_channels_sizes, ConvKernel, Tensor,
};

/// Balancing parameter and low-band radius of one gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpgConfig {
    pub lambda_b: f64,
    pub radius: f64,
}

impl SpgConfig {
    pub fn new(lambda_b: f64, radius: f64) -> Result<Self> {
        let cfg = Self { lambda_b, radius };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda_b)?;
        if !(self.radius >= 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("must be finite and non-negative, got {}", self.radius),
            });
        }
        Ok(())
    }

    pub fn mask(&self, h: usize, w: usize) -> Result<FilterMask> {
        spf_mask(h, w, self.lambda_b, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpamConfig {
    pub dim: usize,
    pub n_spg: usize,
    /// Extent of the separable query kernel pair `1×K` / `K×1`.
    pub kernel: usize,
    pub spgs: Vec<SpgConfig>,
}

impl SpamConfig {
    pub fn new(dim: usize, kernel: usize, spgs: Vec<SpgConfig>) -> Result<Self> {
        let cfg = Self {
            dim,
            n_spg: spgs.len(),
            kernel,
            spgs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spg == 0 || self.spgs.len() != self.n_spg {
            return Err(Error::InvalidParameter {
                name: "spgs",
                reason: format!("need exactly n_spg = {} gate configs, got {}", self.n_spg, self.spgs.len()),
            });
        }
        if self.dim < self.n_spg {
            return Err(Error::Indivisible {
                channels: self.dim,
                groups: self.n_spg,
            });
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "kernel",
                reason: format!("must be odd, got {}", self.kernel),
            });
        }
        self.spgs.iter().try_for_each(SpgConfig::validate)
    }

    /// Channel counts of the context groups fed to each gate. Equal when
    /// `dim` is divisible by `n_spg`, otherwise the first groups are one
    /// channel larger.
    pub fn split_sizes(&self) -> Vec<usize> {
        balanced_split_sizes(self.dim, self.n_spg).expect("validated config")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpamWeights {
    /// `D → 2D`; output channels `[0, D)` feed the query, `[D, 2D)` the context.
    pub in_proj: ConvKernel,
    pub query_dw_h: ConvKernel,
    pub query_dw_v: ConvKernel,
    /// One `g_i → D` pointwise kernel per gate.
    pub spg_interactions: Vec<ConvKernel>,
    pub out_proj: ConvKernel,
}

impl SpamWeights {
    /// Truncated-normal weights (std 0.02) with zero biases.
    pub fn init<R: Rng>(cfg: &SpamConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let k = cfg.kernel;
        let mut sampler = TruncatedNormal::default();
        let mut sample = |n: usize| -> Vec<f32> { (0..n).map(|_| sampler.sample(rng)).collect() };
        let in_proj = ConvKernel::new(2 * d, d, 1, 1, sample(2 * d * d), Some(vec![0.0; 2 * d]))?;
        let query_dw_h = ConvKernel::new(d, 1, 1, k, sample(d * k), None)?;
        let query_dw_v = ConvKernel::new(d, 1, k, 1, sample(d * k), None)?;
        let spg_interactions = cfg
            .split_sizes()
            .into_iter()
            .map(|g| ConvKernel::new(d, g, 1, 1, sample(d * g), Some(vec![0.0; d])))
            .collect::<Result<_>>()?;
        let out_proj = ConvKernel::new(d, d, 1, 1, sample(d * d), Some(vec![0.0; d]))?;
        Ok(Self {
            in_proj,
            query_dw_h,
            query_dw_v,
            spg_interactions,
            out_proj,
        })
    }

    pub fn validate(&self, cfg: &SpamConfig) -> Result<()> {
        let d = cfg.dim;
        let k = cfg.kernel;
        let expect = |name: &'static str, kern: &ConvKernel, shape: [usize; 4]| -> Result<()> {
            let found = [kern.out_channels, kern.in_channels_per_group, kern.kh, kern.kw];
            if found != shape {
                return Err(Error::ShapeMismatch {
                    op: name,
                    expected: shape.to_vec(),
                    found: found.to_vec(),
                });
            }
            Ok(())
        };
        expect("spam.in_proj", &self.in_proj, [2 * d, d, 1, 1])?;
        expect("spam.query_dw_h", &self.query_dw_h, [d, 1, 1, k])?;
        expect("spam.query_dw_v", &self.query_dw_v, [d, 1, k, 1])?;
        expect("spam.out_proj", &self.out_proj, [d, d, 1, 1])?;
        if self.spg_interactions.len() != cfg.n_spg {
            return Err(Error::InvalidParameter {
                name: "spg_interactions",
                reason: format!("expected {} kernels, got {}", cfg.n_spg, self.spg_interactions.len()),
            });
        }
        for (kern, g) in self.spg_interactions.iter().zip(cfg.split_sizes()) {
            expect("spam.spg_interaction", kern, [d, g, 1, 1])?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.in_proj.param_count()
            + self.query_dw_h.param_count()
            + self.query_dw_v.param_count()
            + self.spg_interactions.iter().map(ConvKernel::param_count).sum::<usize>()
            + self.out_proj.param_count()
    }
}

/// Rows `[start, start + len)` of a pointwise kernel.
fn pointwise_rows(k: &ConvKernel, start: usize, len: usize) -> ConvKernel {
    let inp = k.in_channels_per_group;
    ConvKernel {
        out_channels: len,
        in_channels_per_group: inp,
        kh: 1,
        kw: 1,
        weights: k.weights[start * inp..(start + len) * inp].to_vec(),
        bias: k.bias.as_ref().map(|b| b[start..start + len].to_vec()),
    }
}

/// Applies one spectral pooling filter to every channel plane of `x`.
pub fn spf_channels(x: &Tensor, cfg: &SpgConfig) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let plan = Fft2Plan::new(h, w);
    let mask = cfg.mask(h, w)?;
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let filtered = spf_apply_with(&plan, x.plane(b, ch), &mask)?;
            out.plane_mut(b, ch).copy_from_slice(&filtered);
        }
    }
    Ok(out)
}

/// One gate: per-channel spectral pooling filter followed by a pointwise
/// interaction `x_i = Σ_c φ[i,c]·x̃_c`.
pub fn spg_forward(x_split: &Tensor, cfg: &SpgConfig, interaction: &ConvKernel) -> Result<Tensor> {
    let (_, c, _, _) = x_split.dims4()?;
    if interaction.in_channels_per_group != c {
        return Err(Error::ChannelMismatch {
            op: "spg_forward",
            expected: interaction.in_channels_per_group,
            found: c,
        });
    }
    conv1x1(&spf_channels(x_split, cfg)?, interaction)
}

fn query_from_projection(q: &Tensor, w: &SpamWeights) -> Result<Tensor> {
    let q = conv2d_depthwise(q, &w.query_dw_h, true)?;
    conv2d_depthwise(&q, &w.query_dw_v, true)
}

/// Query path: the first half of `in_proj`, then the separable depthwise
/// `1×K` and `K×1` convolutions.
pub fn query_project(x: &Tensor, w: &SpamWeights) -> Result<Tensor> {
    let (_, c, _, _) = x.dims4()?;
    let d = w.query_dw_h.out_channels;
    if c != d {
        return Err(Error::ChannelMismatch {
            op: "query_project",
            expected: d,
            found: c,
        });
    }
    let proj = conv1x1(x, &pointwise_rows(&w.in_proj, 0, d))?;
    query_from_projection(&proj, w)
}

/// Elementwise sum of the gate outputs.
pub fn aggregate_contexts(outputs: &[Tensor]) -> Result<Tensor> {
    let (first, rest) = outputs.split_first().ok_or(Error::InvalidParameter {
        name: "outputs",
        reason: "need at least one context map".into(),
    })?;
    rest.iter().try_fold(first.clone(), |acc, t| add(&acc, t))
}

/// Intermediate maps of one SPAM call.
#[derive(Debug, Clone)]
pub struct SpamTrace {
    pub query: Tensor,
    /// Aggregated context `m`.
    pub context: Tensor,
    pub output: Tensor,
}

pub fn spam_forward_traced(x: &Tensor, cfg: &SpamConfig, w: &SpamWeights) -> Result<SpamTrace> {
    cfg.validate()?;
    w.validate(cfg)?;
    let (_, c, h, wd) = x.dims4()?;
    if c != cfg.dim {
        return Err(Error::ChannelMismatch {
            op: "spam_forward",
            expected: cfg.dim,
            found: c,
        });
    }
    let d = cfg.dim;
    let projected = conv1x1(x, &w.in_proj)?;
    let mut halves = split_channels_sizes(&projected, &[d, d])?.into_iter();
    let (q, ctx) = (halves.next().unwrap(), halves.next().unwrap());
    let query = query_from_projection(&q, w)?;

    let groups = split_channels_sizes(&ctx, &cfg.split_sizes())?;
    // masks depend only on (h, w, λ, r); gates sharing a config share a mask
    let plan = Fft2Plan::new(h, wd);
    let mut masks: HashMap<(u64, u64), FilterMask> = HashMap::new();
    let mut outputs = Vec::with_capacity(cfg.n_spg);
    for ((group, spg), interaction) in groups.iter().zip(&cfg.spgs).zip(&w.spg_interactions) {
        let key = (spg.lambda_b.to_bits(), spg.radius.to_bits());
        let mask = match masks.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(spg.mask(h, wd)?),
        };
        let (n, gc, _, _) = group.dims4()?;
        let mut filtered = group.clone();
        for b in 0..n {
            for ch in 0..gc {
                let plane = spf_apply_with(&plan, group.plane(b, ch), mask)?;
                filtered.plane_mut(b, ch).copy_from_slice(&plane);
            }
        }
        outputs.push(conv1x1(&filtered, interaction)?);
    }
    let context = aggregate_contexts(&outputs)?;
    let modulated = hadamard(&query, &context)?;
    let output = conv1x1(&modulated, &w.out_proj)?;
    Ok(SpamTrace { query, context, output })
}

/// SPAM token mixer: `out_proj(q(x) ⊙ m(x))`.
pub fn spam_forward(x: &Tensor, cfg: &SpamConfig, w: &SpamWeights) -> Result<Tensor> {
    Ok(spam_forward_traced(x, cfg, w)?.output)
}
