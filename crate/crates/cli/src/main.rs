use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use spanet::analysis::{context_map, log_amplitude_profile, spectrum_map, to_display_range};
use spanet::io::{load_image, read_tensor, read_weights, save_pgm, save_ppm, to_byte_range, write_weights};
use spanet::mixer::{spf_channels, SpgConfig};
use spanet::model::{count_flops, count_params, init_weights, SpaNet, SpaNetConfig, Variant};
use spanet::Tensor;

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Parser)]
#[command(name = "spanet", version, about = "Spectral pooling filters, SPANet forward passes and spectral diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the spectral pooling filter to every channel of a PPM image.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectrum map and relative log-amplitude profile of a tensor file.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Deterministic forward pass over a PPM image.
    Forward {
        #[arg(long, default_value = "S")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Load weights from an SPWT file instead of initializing from the seed.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        logits: PathBuf,
        /// `stage:block:path.pgm`, 1-based stage and block.
        #[arg(long = "dump-context")]
        dump_context: Option<String>,
        /// Subtract the ImageNet channel mean and divide by its std.
        #[arg(long)]
        normalize: bool,
    },
    /// Number of learnable parameters.
    Params {
        #[arg(long, default_value = "S")]
        variant: Variant,
    },
    /// Multiply-accumulate count for a square input.
    Flops {
        #[arg(long, default_value = "S")]
        variant: Variant,
        #[arg(long, default_value_t = 224)]
        size: usize,
    },
    /// Write a deterministically initialized weight store.
    Init {
        #[arg(long, default_value = "S")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dump(spec: &str) -> Result<(usize, usize, PathBuf)> {
    let mut parts = spec.splitn(3, ':');
    let (Some(s), Some(b), Some(p)) = (parts.next(), parts.next(), parts.next()) else {
        bail!("--dump-context expects stage:block:path, got `{spec}`");
    };
    let stage = s.parse().with_context(|| format!("bad stage `{s}`"))?;
    let block = b.parse().with_context(|| format!("bad block `{b}`"))?;
    Ok((stage, block, PathBuf::from(p)))
}

/// Accepts `[H, W]`, `[C, H, W]` or `[1, C, H, W]` tensors.
fn as_feature(t: Tensor) -> Result<Tensor> {
    let shape = t.shape().to_vec();
    Ok(match shape[..] {
        [h, w] => t.reshape(&[1, 1, h, w])?,
        [c, h, w] => t.reshape(&[1, c, h, w])?,
        [1, _, _, _] => t,
        _ => bail!("expected a rank 2-4 tensor with batch 1, got shape {shape:?}"),
    })
}

fn giga(v: u64) -> f64 {
    v as f64 / 1e9
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Filter {
            input,
            lambda,
            radius,
            out,
        } => {
            let image = load_image(&input).with_context(|| format!("reading {}", input.display()))?;
            let filtered = spf_channels(&image, &SpgConfig::new(lambda, radius)?)?;
            save_ppm(&to_byte_range(&filtered), &out)?;
        }
        Command::Spectrum { input, profile, map } => {
            if profile.is_none() && map.is_none() {
                bail!("nothing to do: pass --profile and/or --map");
            }
            let feature = as_feature(read_tensor(&input).with_context(|| format!("reading {}", input.display()))?)?;
            if let Some(path) = profile {
                fs::write(&path, log_amplitude_profile(&feature)?.to_csv())?;
            }
            if let Some(path) = map {
                save_pgm(&to_display_range(&spectrum_map(&feature)?), &path)?;
            }
        }
        Command::Forward {
            variant,
            seed,
            weights,
            input,
            logits,
            dump_context,
            normalize,
        } => {
            let cfg = SpaNetConfig::preset(variant);
            let store = match &weights {
                Some(path) => read_weights(path).with_context(|| format!("reading {}", path.display()))?,
                None => init_weights(&cfg, seed)?,
            };
            let net = SpaNet::from_store(&cfg, &store)?;
            let mut image = load_image(&input).with_context(|| format!("reading {}", input.display()))?;
            if normalize {
                for c in 0..3 {
                    image
                        .plane_mut(0, c)
                        .iter_mut()
                        .for_each(|v| *v = (*v - IMAGENET_MEAN[c]) / IMAGENET_STD[c]);
                }
            }
            let dump = dump_context.as_deref().map(parse_dump).transpose()?;
            let out = net.forward_with(&image, dump.as_ref().map(|(s, b, _)| (*s, *b)))?;
            if !out.logits.all_finite() {
                bail!("forward pass produced non-finite logits");
            }
            let mut csv = String::from("class,logit\n");
            for (i, v) in out.logits.data().iter().enumerate() {
                csv.push_str(&format!("{i},{v:e}\n"));
            }
            fs::write(&logits, csv)?;
            if let (Some((_, _, path)), Some(ctx)) = (dump, out.context) {
                save_pgm(&context_map(&ctx)?, &path)?;
            }
            let shapes: Vec<String> = out
                .stage_shapes
                .iter()
                .map(|s| format!("{}x{}x{}", s[1], s[2], s[3]))
                .collect();
            println!("SPANet-{variant}: {} logits, stages {}", out.logits.len(), shapes.join(" "));
        }
        Command::Params { variant } => {
            let n = count_params(&SpaNetConfig::preset(variant))?;
            println!("SPANet-{variant} params: {n} ({:.1}M)", n as f64 / 1e6);
        }
        Command::Flops { variant, size } => {
            let n = count_flops(&SpaNetConfig::preset(variant), size, size)?;
            println!("SPANet-{variant} flops@{size}: {n} ({:.1}G)", giga(n));
        }
        Command::Init { variant, seed, out } => {
            let store = init_weights(&SpaNetConfig::preset(variant), seed)?;
            write_weights(&store, &out)?;
            println!("{} entries, {} params, sha256 {}", store.len(), store.total_elements(), store.checksum());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
