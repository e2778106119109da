//! 2D spectra, centered low-frequency masks and the spectral pooling filter.
//!
//! Conventions: the forward transform is unnormalized and the inverse carries
//! `1/(H·W)`. Centering rolls the spectrum by `(⌊H/2⌋, ⌊W/2⌋)`, so the DC bin
//! of a centered spectrum sits at that origin for both odd and even extents.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{Direction, Fft2Plan};

/// Tolerance factor for the imaginary part left over by [`idft2`].
pub const IMAG_RESIDUAL_TOLERANCE: f64 = 1e-5;

/// Real-valued `h × w` plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::InvalidShape {
                shape: vec![h, w],
                reason: format!("plane needs h·w = {} values, got {}", h * w, data.len()),
            });
        }
        Ok(Self { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.w + x]
    }

    pub fn max_abs_diff(&self, other: &Plane) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Complex `h × w` spectrum, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub h: usize,
    pub w: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(h: usize, w: usize, data: Vec<Complex64>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::InvalidShape {
                shape: vec![h, w],
                reason: format!("spectrum needs h·w = {} bins, got {}", h * w, data.len()),
            });
        }
        Ok(Self { h, w, data })
    }

    pub fn at(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.w + v]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        if (self.h, self.w) != (h, w) {
            return Err(Error::ShapeMismatch {
                op: "spectrum",
                expected: vec![h, w],
                found: vec![self.h, self.w],
            });
        }
        Ok(())
    }
}

/// Real `h × w` weighting mask applied to a centered spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FilterMask {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.w + v]
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&m| m == 0.0 || m == 1.0)
    }

    /// Ones where `self` is zero and zeros where it is one.
    pub fn complement(&self) -> Result<FilterMask> {
        if !self.is_binary() {
            return Err(Error::InvalidParameter {
                name: "mask",
                reason: "only binary masks have a complement".into(),
            });
        }
        Ok(FilterMask {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&m| 1.0 - m).collect(),
        })
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&m| m == 1.0).count()
    }
}

pub fn dft2_with(plan: &Fft2Plan, x: &[f32]) -> Spectrum {
    let (h, w) = plan.dims();
    let mut data: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
    plan.process(&mut data, Direction::Forward);
    Spectrum { h, w, data }
}

/// Unnormalized forward 2D DFT of a real plane.
pub fn dft2(x: &Plane) -> Spectrum {
    dft2_with(&Fft2Plan::new(x.h, x.w), &x.data)
}

/// Inverse transform returning the complex result, normalized by `1/(H·W)`.
pub fn idft2_complex_with(plan: &Fft2Plan, s: &Spectrum) -> Result<Vec<Complex64>> {
    let (h, w) = plan.dims();
    s.check_dims(h, w)?;
    let mut data = s.data.clone();
    plan.process(&mut data, Direction::Inverse);
    let scale = 1.0 / (h * w) as f64;
    for c in &mut data {
        *c *= scale;
    }
    Ok(data)
}

/// Largest `|Im|` relative to `max(1, max |Re|)`.
pub fn imaginary_residual(values: &[Complex64]) -> f64 {
    let max_re = values.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let max_im = values.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    max_im / max_re.max(1.0)
}

pub fn idft2_with(plan: &Fft2Plan, s: &Spectrum) -> Result<Plane> {
    let values = idft2_complex_with(plan, s)?;
    let residual = imaginary_residual(&values);
    if residual >= IMAG_RESIDUAL_TOLERANCE {
        return Err(Error::ImaginaryResidual {
            residual,
            bound: IMAG_RESIDUAL_TOLERANCE,
        });
    }
    Ok(Plane {
        h: s.h,
        w: s.w,
        data: values.iter().map(|c| c.re as f32).collect(),
    })
}

/// Inverse 2D DFT. Fails if the result is not real to within
/// [`IMAG_RESIDUAL_TOLERANCE`], which indicates a spectrum without conjugate
/// symmetry.
pub fn idft2(s: &Spectrum) -> Result<Plane> {
    idft2_with(&Fft2Plan::new(s.h, s.w), s)
}

fn roll(s: &Spectrum, dy: usize, dx: usize) -> Spectrum {
    let (h, w) = (s.h, s.w);
    let mut data = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        let nu = (u + dy) % h;
        for v in 0..w {
            data[nu * w + (v + dx) % w] = s.data[u * w + v];
        }
    }
    Spectrum { h, w, data }
}

/// Moves the DC bin to `(⌊H/2⌋, ⌊W/2⌋)`.
pub fn center_shift(s: &Spectrum) -> Spectrum {
    roll(s, s.h / 2, s.w / 2)
}

/// Exact inverse of [`center_shift`] for odd and even extents.
pub fn center_unshift(s: &Spectrum) -> Spectrum {
    roll(s, s.h - s.h / 2, s.w - s.w / 2)
}

/// The centered spectrum origin `(⌊h/2⌋, ⌊w/2⌋)`.
pub fn spectrum_origin(h: usize, w: usize) -> (usize, usize) {
    (h / 2, w / 2)
}

/// Binary low-frequency region: 1 where the distance to the centered origin
/// is strictly below `radius`.
pub fn circular_region(h: usize, w: usize, radius: f64) -> Result<FilterMask> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: format!("must be finite and non-negative, got {radius}"),
        });
    }
    let (u0, v0) = spectrum_origin(h, w);
    let r2 = radius * radius;
    let mut data = Vec::with_capacity(h * w);
    for u in 0..h {
        let du = u as f64 - u0 as f64;
        for v in 0..w {
            let dv = v as f64 - v0 as f64;
            data.push(if du * du + dv * dv < r2 { 1.0 } else { 0.0 });
        }
    }
    Ok(FilterMask { h, w, data })
}

pub fn check_lambda(lambda_b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda_b) {
        return Err(Error::InvalidParameter {
            name: "lambda_b",
            reason: format!("must lie in [0, 1], got {lambda_b}"),
        });
    }
    Ok(())
}

/// Combined balancing mask: `λ_b` inside the region, `1 − λ_b` outside.
pub fn balance_mask(region: &FilterMask, lambda_b: f64) -> Result<FilterMask> {
    check_lambda(lambda_b)?;
    if !region.is_binary() {
        return Err(Error::InvalidParameter {
            name: "region",
            reason: "balance mask needs a binary region".into(),
        });
    }
    let high = 1.0 - lambda_b;
    Ok(FilterMask {
        h: region.h,
        w: region.w,
        data: region
            .data
            .iter()
            .map(|&m| if m == 1.0 { lambda_b } else { high })
            .collect(),
    })
}

/// Circular region plus balance mask in one step.
pub fn spf_mask(h: usize, w: usize, lambda_b: f64, radius: f64) -> Result<FilterMask> {
    balance_mask(&circular_region(h, w, radius)?, lambda_b)
}

fn check_mask(op: &'static str, mask: &FilterMask, h: usize, w: usize) -> Result<()> {
    if (mask.h, mask.w) != (h, w) {
        return Err(Error::ShapeMismatch {
            op,
            expected: vec![h, w],
            found: vec![mask.h, mask.w],
        });
    }
    Ok(())
}

/// Multiplies a centered spectrum by a mask.
pub fn apply_mask(centered: &Spectrum, mask: &FilterMask) -> Result<Spectrum> {
    check_mask("apply_mask", mask, centered.h, centered.w)?;
    Ok(Spectrum {
        h: centered.h,
        w: centered.w,
        data: centered.data.iter().zip(&mask.data).map(|(c, &m)| c * m).collect(),
    })
}

/// Spectral pooling filter on one channel, using a precomputed plan.
pub fn spf_apply_with(plan: &Fft2Plan, x: &[f32], mask: &FilterMask) -> Result<Vec<f32>> {
    let (h, w) = plan.dims();
    check_mask("spf_apply", mask, h, w)?;
    let centered = center_shift(&dft2_with(plan, x));
    let filtered = apply_mask(&centered, mask)?;
    Ok(idft2_with(plan, &center_unshift(&filtered))?.data)
}

/// Spectral pooling filter in its single-mask form:
/// `F⁻¹(G⁻¹(M ⊙ G(F(x))))`.
pub fn spf_apply(x: &Plane, mask: &FilterMask) -> Result<Plane> {
    let data = spf_apply_with(&Fft2Plan::new(x.h, x.w), &x.data, mask)?;
    Ok(Plane { h: x.h, w: x.w, data })
}

/// Complex spatial result of the single-mask filter before the real part is
/// taken, for inspecting the imaginary residual.
pub fn spf_apply_complex(x: &Plane, mask: &FilterMask) -> Result<Vec<Complex64>> {
    check_mask("spf_apply", mask, x.h, x.w)?;
    let plan = Fft2Plan::new(x.h, x.w);
    let centered = center_shift(&dft2_with(&plan, &x.data));
    idft2_complex_with(&plan, &center_unshift(&apply_mask(&centered, mask)?))
}

/// Low-pass and high-pass bands of one plane: the centered spectrum is
/// cropped to the circular region for the low band, and the high band is the
/// remainder obtained by subtracting that crop from the full spectrum.
#[derive(Debug, Clone)]
pub struct BandSplit {
    pub low: Plane,
    pub high: Plane,
}

pub fn band_split(x: &Plane, radius: f64) -> Result<BandSplit> {
    let plan = Fft2Plan::new(x.h, x.w);
    let region = circular_region(x.h, x.w, radius)?;
    let centered = center_shift(&dft2_with(&plan, &x.data));
    let low_subset = Spectrum {
        h: x.h,
        w: x.w,
        data: centered
            .data
            .iter()
            .zip(&region.data)
            .map(|(&c, &m)| if m == 1.0 { c } else { Complex64::new(0.0, 0.0) })
            .collect(),
    };
    let high_subset = Spectrum {
        h: x.h,
        w: x.w,
        data: centered.data.iter().zip(&low_subset.data).map(|(a, b)| a - b).collect(),
    };
    Ok(BandSplit {
        low: idft2_with(&plan, &center_unshift(&low_subset))?,
        high: idft2_with(&plan, &center_unshift(&high_subset))?,
    })
}

/// Ideal circular low-pass filter.
pub fn low_pass(x: &Plane, radius: f64) -> Result<Plane> {
    Ok(band_split(x, radius)?.low)
}

/// Ideal high-pass filter, the complement of [`low_pass`].
pub fn high_pass(x: &Plane, radius: f64) -> Result<Plane> {
    Ok(band_split(x, radius)?.high)
}

/// Spectral pooling filter computed as the blend
/// `λ_b·low_pass(x) + (1 − λ_b)·high_pass(x)` in the spatial domain.
pub fn spf_apply_decomposed(x: &Plane, lambda_b: f64, radius: f64) -> Result<Plane> {
    check_lambda(lambda_b)?;
    let bands = band_split(x, radius)?;
    let data = bands
        .low
        .data
        .iter()
        .zip(&bands.high.data)
        .map(|(&l, &h)| (lambda_b * l as f64 + (1.0 - lambda_b) * h as f64) as f32)
        .collect();
    Ok(Plane { h: x.h, w: x.w, data })
}

/// Fraction of spectral energy that falls inside `region` (centered layout).
pub fn band_energy_fraction(x: &Plane, region: &FilterMask) -> Result<f64> {
    check_mask("band_energy_fraction", region, x.h, x.w)?;
    let centered = center_shift(&dft2(x));
    let total = centered.energy();
    if total == 0.0 {
        return Ok(0.0);
    }
    let inside: f64 = centered
        .data
        .iter()
        .zip(&region.data)
        .filter(|(_, &m)| m == 1.0)
        .map(|(c, _)| c.norm_sqr())
        .sum();
    Ok(inside / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(h: usize, w: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::new(h, w, (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_dft(x: &Plane) -> Vec<Complex64> {
        let (h, w) = (x.h, x.w);
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..h {
                    for n in 0..w {
                        let a = -2.0
                            * std::f64::consts::PI
                            * (((u * m) % h) as f64 / h as f64 + ((v * n) % w) as f64 / w as f64);
                        acc += x.at(m, n) as f64 * Complex64::new(a.cos(), a.sin());
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    #[test]
    fn dft_of_constant_is_dc_only() {
        let x = Plane::new(4, 4, vec![1.0; 16]).unwrap();
        let s = dft2(&x);
        assert!((s.at(0, 0) - Complex64::new(16.0, 0.0)).norm() < 1e-6);
        assert!(s.data[1..].iter().all(|c| c.norm() < 1e-6));
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let mut x = Plane::zeros(5, 6);
        x.data[0] = 1.0;
        assert!(dft2(&x).data.iter().all(|c| (c - 1.0).norm() < 1e-12));
    }

    #[test]
    fn dft_matches_naive_8x8() {
        let x = random_plane(8, 8, 1);
        let got = dft2(&x);
        let want = naive_dft(&x);
        let err = got.data.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-4);
    }

    #[test]
    fn idft_roundtrip_and_dc() {
        let x = random_plane(7, 7, 2);
        assert!(idft2(&dft2(&x)).unwrap().max_abs_diff(&x) < 1e-5);
        let mut data = vec![Complex64::new(0.0, 0.0); 12];
        data[0] = Complex64::new(6.0, 0.0);
        let p = idft2(&Spectrum::new(3, 4, data).unwrap()).unwrap();
        assert!(p.data.iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn idft_rejects_asymmetric_spectrum() {
        let mut data = vec![Complex64::new(0.0, 0.0); 16];
        data[1] = Complex64::new(1.0, 0.0);
        let err = idft2(&Spectrum::new(4, 4, data).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ImaginaryResidual { .. }));
    }

    #[test]
    fn shift_moves_origin() {
        let mut data = vec![Complex64::new(0.0, 0.0); 16];
        data[0] = Complex64::new(1.0, 0.0);
        let s = center_shift(&Spectrum::new(4, 4, data).unwrap());
        assert_eq!(s.at(2, 2), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn shift_index_arithmetic_6x8() {
        let data = (0..48).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let s = Spectrum::new(6, 8, data).unwrap();
        let shifted = center_shift(&s);
        for u in 0..6 {
            for v in 0..8 {
                assert_eq!(shifted.at((u + 3) % 6, (v + 4) % 8), s.at(u, v));
            }
        }
    }

    #[test]
    fn region_counts() {
        assert_eq!(circular_region(8, 8, 0.0).unwrap().count_ones(), 0);
        assert_eq!(circular_region(8, 8, 16.0).unwrap().count_ones(), 64);
        let r2 = circular_region(8, 8, 2.0).unwrap();
        assert_eq!(r2.count_ones(), 9);
        for u in 3..=5 {
            for v in 3..=5 {
                assert_eq!(r2.at(u, v), 1.0);
            }
        }
        assert!(circular_region(4, 4, -1.0).is_err());
    }

    #[test]
    fn balance_mask_values() {
        let region = circular_region(8, 8, 2.0).unwrap();
        let half = balance_mask(&region, 0.5).unwrap();
        assert!(half.data.iter().all(|&m| m == 0.5));
        let full = balance_mask(&circular_region(8, 8, 16.0).unwrap(), 1.0).unwrap();
        assert!(full.data.iter().all(|&m| m == 1.0));
        let m = balance_mask(&region, 0.7).unwrap();
        assert_eq!(m.data.iter().filter(|&&v| v == 0.7).count(), 9);
        assert_eq!(m.data.iter().filter(|&&v| v == 1.0 - 0.7).count(), 55);
        assert!(balance_mask(&region, 1.2).is_err());
        assert!(balance_mask(&region, -0.1).is_err());
    }

    #[test]
    fn balance_mask_is_weighted_sum_of_binary_masks() {
        let lf = circular_region(9, 6, 2.5).unwrap();
        let hf = lf.complement().unwrap();
        let m = balance_mask(&lf, 0.8).unwrap();
        for i in 0..m.data.len() {
            assert_eq!(m.data[i], 0.8 * lf.data[i] + (1.0 - 0.8) * hf.data[i]);
        }
    }

    #[test]
    fn spf_trivial_masks() {
        let x = random_plane(10, 12, 3);
        let ones = spf_mask(10, 12, 1.0, 100.0).unwrap();
        assert!(spf_apply(&x, &ones).unwrap().max_abs_diff(&x) < 1e-5);
        let half = spf_mask(10, 12, 0.5, 2.0).unwrap();
        let y = spf_apply(&x, &half).unwrap();
        for (a, b) in y.data.iter().zip(&x.data) {
            assert!((a - 0.5 * b).abs() < 1e-6);
        }
    }

    #[test]
    fn decomposed_constant_and_nyquist() {
        let c = Plane::new(6, 6, vec![2.0; 36]).unwrap();
        let y = spf_apply_decomposed(&c, 0.7, 1.0).unwrap();
        assert!(y.data.iter().all(|&v| (v - 1.4).abs() < 1e-5));
        let checker = Plane::new(6, 6, (0..36).map(|i| if (i / 6 + i % 6) % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        let y = spf_apply_decomposed(&checker, 0.7, 1.0).unwrap();
        for (a, b) in y.data.iter().zip(&checker.data) {
            assert!((a - 0.3 * b).abs() < 1e-5);
        }
    }

    #[test]
    fn bands_sum_to_input() {
        let x = random_plane(8, 8, 4);
        let b = band_split(&x, 2.0).unwrap();
        for i in 0..64 {
            assert!((b.low.data[i] + b.high.data[i] - x.data[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn low_pass_is_idempotent() {
        let x = random_plane(14, 14, 5);
        let once = low_pass(&x, 3.0).unwrap();
        let twice = low_pass(&once, 3.0).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-5);
    }

    #[test]
    fn mask_shape_mismatch() {
        let x = random_plane(4, 4, 6);
        let m = spf_mask(4, 5, 0.7, 1.0).unwrap();
        assert!(matches!(spf_apply(&x, &m), Err(Error::ShapeMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn parseval(seed in any::<u64>(), h in 1usize..65, w in 1usize..65) {
            let x = random_plane(h, w, seed);
            let spatial: f64 = x.data.iter().map(|&v| (v as f64).powi(2)).sum();
            let spectral = dft2(&x).energy() / (h * w) as f64;
            prop_assert!((spatial - spectral).abs() <= 1e-4 * spatial.max(1e-12));
        }

        #[test]
        fn dft_linear(seed in any::<u64>(), a in -3.0f32..3.0, b in -3.0f32..3.0) {
            let x = random_plane(7, 9, seed);
            let y = random_plane(7, 9, seed ^ 1);
            let mix = Plane::new(7, 9, x.data.iter().zip(&y.data).map(|(p, q)| a * p + b * q).collect()).unwrap();
            let lhs = dft2(&mix);
            let (dx, dy) = (dft2(&x), dft2(&y));
            let scale = lhs.data.iter().map(|c| c.norm()).fold(1.0, f64::max);
            for i in 0..lhs.data.len() {
                let rhs = dx.data[i] * a as f64 + dy.data[i] * b as f64;
                prop_assert!((lhs.data[i] - rhs).norm() <= 1e-5 * scale);
            }
        }

        #[test]
        fn shift_roundtrip(h in 1usize..12, w in 1usize..12) {
            let data = (0..h * w).map(|i| Complex64::new(i as f64, 1.0)).collect();
            let s = Spectrum::new(h, w, data).unwrap();
            prop_assert_eq!(center_unshift(&center_shift(&s)), s);
        }

        #[test]
        fn masks_are_complementary(h in 1usize..20, w in 1usize..20, r in 0.0f64..12.0) {
            let lf = circular_region(h, w, r).unwrap();
            let hf = lf.complement().unwrap();
            prop_assert!(lf.data.iter().zip(&hf.data).all(|(a, b)| a + b == 1.0));
        }

        #[test]
        fn radial_masks_keep_output_real(seed in any::<u64>(), h in 1usize..20, w in 1usize..20, r in 0.0f64..6.0, lambda in 0.0f64..=1.0) {
            let x = random_plane(h, w, seed);
            let values = spf_apply_complex(&x, &spf_mask(h, w, lambda, r).unwrap()).unwrap();
            prop_assert!(imaginary_residual(&values) < 1e-5);
        }

        #[test]
        fn low_band_gains_energy(seed in any::<u64>(), lambda in 0.51f64..=1.0, r in 1.0f64..4.0) {
            let x = random_plane(12, 12, seed);
            let region = circular_region(12, 12, r).unwrap();
            let before = band_energy_fraction(&x, &region).unwrap();
            let y = spf_apply(&x, &balance_mask(&region, lambda).unwrap()).unwrap();
            let after = band_energy_fraction(&y, &region).unwrap();
            prop_assert!(after > before, "before {before} after {after}");
        }
    }
}
