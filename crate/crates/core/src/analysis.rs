//! Spectral diagnostics for feature maps: channel-averaged spectrum maps,
//! relative log-amplitude profiles and normalized context maps.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fft::Fft2Plan;
use crate::spectral::{center_shift, dft2_with, Plane};
use crate::tensor::Tensor;

/// Floor added to amplitudes before taking logs.
pub const AMPLITUDE_EPSILON: f64 = 1e-8;

fn single_sample(feature: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = feature.dims4()?;
    if n != 1 {
        return Err(Error::InvalidShape {
            shape: feature.shape().to_vec(),
            reason: "diagnostics expect a single sample (batch 1)".into(),
        });
    }
    Ok((c, h, w))
}

/// Centered spectral magnitude averaged over channels (mean of magnitudes).
pub fn mean_centered_amplitude(feature: &Tensor) -> Result<Vec<f64>> {
    let (c, h, w) = single_sample(feature)?;
    let plan = Fft2Plan::new(h, w);
    let mut acc = vec![0.0f64; h * w];
    for ch in 0..c {
        let centered = center_shift(&dft2_with(&plan, feature.plane(0, ch)));
        for (a, v) in acc.iter_mut().zip(&centered.data) {
            *a += v.norm();
        }
    }
    for a in &mut acc {
        *a /= c as f64;
    }
    Ok(acc)
}

/// `log1p` of the channel-averaged centered amplitude.
pub fn spectrum_map(feature: &Tensor) -> Result<Plane> {
    let (_, h, w) = single_sample(feature)?;
    let amp = mean_centered_amplitude(feature)?;
    Plane::new(h, w, amp.iter().map(|&a| a.ln_1p() as f32).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeProfile {
    /// Normalized radial frequency, 0 at DC and 1 at the spectrum corner.
    pub frequencies: Vec<f64>,
    /// `log(A(f) + ε) − log(A(0) + ε)`.
    pub values: Vec<f64>,
}

impl AmplitudeProfile {
    /// Value at the highest sampled frequency.
    pub fn highest(&self) -> f64 {
        *self.values.last().expect("profile has at least one sample")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency,delta_log_amplitude\n");
        for (f, v) in self.frequencies.iter().zip(&self.values) {
            writeln!(s, "{f},{v}").unwrap();
        }
        s
    }
}

/// Relative log amplitude sampled along the half-diagonal of the centered
/// spectrum, from the origin `(c, c)` to the corner `(0, 0)`.
pub fn log_amplitude_profile(feature: &Tensor) -> Result<AmplitudeProfile> {
    let (_, h, w) = single_sample(feature)?;
    if h != w {
        return Err(Error::InvalidShape {
            shape: feature.shape().to_vec(),
            reason: "amplitude profile needs a square feature map".into(),
        });
    }
    let amp = mean_centered_amplitude(feature)?;
    let center = h / 2;
    let log_at = |k: usize| {
        let u = center - k;
        (amp[u * w + u] + AMPLITUDE_EPSILON).ln()
    };
    let dc = log_at(0);
    let steps = center.max(1) as f64;
    let frequencies = (0..=center).map(|k| k as f64 / steps).collect();
    let values = (0..=center).map(|k| log_at(k) - dc).collect();
    Ok(AmplitudeProfile { frequencies, values })
}

/// Channel mean of `|ctx|`, min-max scaled to `[0, 255]`. A constant map
/// becomes all zeros.
pub fn context_map(ctx: &Tensor) -> Result<Plane> {
    let (c, h, w) = single_sample(ctx)?;
    let mut mean = vec![0.0f64; h * w];
    for ch in 0..c {
        for (m, &v) in mean.iter_mut().zip(ctx.plane(0, ch)) {
            *m += (v as f64).abs();
        }
    }
    for m in &mut mean {
        *m /= c as f64;
    }
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let data = mean
        .iter()
        .map(|&m| if range > 0.0 { ((m - lo) / range * 255.0) as f32 } else { 0.0 })
        .collect();
    Plane::new(h, w, data)
}

/// Min-max scales any plane into `[0, 255]` for PGM export.
pub fn to_display_range(p: &Plane) -> Plane {
    let lo = p.data.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = p.data.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let range = hi - lo;
    Plane {
        h: p.h,
        w: p.w,
        data: p
            .data
            .iter()
            .map(|&v| if range > 0.0 { ((v as f64 - lo) / range * 255.0) as f32 } else { 0.0 })
            .collect(),
    }
}
