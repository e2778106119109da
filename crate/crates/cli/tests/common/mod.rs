//! Independent reference implementations used by the integration tests.
//! Everything here is written with direct loops in f64.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, amp: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

fn roots(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let a = sign * 2.0 * PI * j as f64 / n as f64;
            Complex64::new(a.cos(), a.sin())
        })
        .collect()
}

fn double_sum(s: &[Complex64], h: usize, w: usize, sign: f64) -> Vec<Complex64> {
    let (ru, rv) = (roots(h, sign), roots(w, sign));
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for k in 0..h {
        for l in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..h {
                let eu = ru[(k * m) % h];
                for n in 0..w {
                    acc += s[m * w + n] * eu * rv[(l * n) % w];
                }
            }
            out[k * w + l] = acc;
        }
    }
    out
}

/// Direct double-sum forward DFT, unnormalized.
pub fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let s: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    double_sum(&s, h, w, -1.0)
}

/// Direct double-sum inverse DFT with the 1/(HW) factor.
pub fn naive_idft(s: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let norm = (h * w) as f64;
    double_sum(s, h, w, 1.0).into_iter().map(|c| c / norm).collect()
}

/// Signed frequency of DFT bin `k` once the spectrum is centered, i.e. its
/// offset from the centered origin `⌊n/2⌋`.
pub fn centered_offset(k: usize, n: usize) -> i64 {
    ((k + n / 2) % n) as i64 - (n / 2) as i64
}

/// Filter gain of unshifted bin `(k, l)`: `lambda` inside the open disc of
/// radius `r`, `1 - lambda` outside.
pub fn oracle_gain(k: usize, l: usize, h: usize, w: usize, lambda: f64, r: f64) -> f64 {
    let du = centered_offset(k, h) as f64;
    let dv = centered_offset(l, w) as f64;
    if du * du + dv * dv < r * r {
        lambda
    } else {
        1.0 - lambda
    }
}

/// Frequency-balanced filtering of one plane via the naive transforms.
pub fn oracle_spf(x: &[f64], h: usize, w: usize, lambda: f64, r: f64) -> Vec<f64> {
    let mut s = naive_dft(x, h, w);
    for k in 0..h {
        for l in 0..w {
            s[k * w + l] *= oracle_gain(k, l, h, w, lambda, r);
        }
    }
    naive_idft(&s, h, w).iter().map(|c| c.re).collect()
}

/// Dense pointwise weights `[out][in]` and bias `[out]`.
pub struct Pointwise {
    pub out: usize,
    pub inp: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl Pointwise {
    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let hw = x[0].len();
        (0..self.out)
            .map(|o| {
                (0..hw)
                    .map(|p| {
                        let mut acc = self.b[o] as f64;
                        for i in 0..self.inp {
                            acc += self.w[o * self.inp + i] as f64 * x[i][p];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }
}

/// Parameters of a SPAM instance in plain arrays.
pub struct SpamOracle {
    pub dim: usize,
    pub kernel: usize,
    pub groups: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub radii: Vec<f64>,
    pub in_proj: Pointwise,
    /// `[dim][kernel]` taps of the horizontal depthwise pass.
    pub dw_h: Vec<f32>,
    /// `[dim][kernel]` taps of the vertical depthwise pass.
    pub dw_v: Vec<f32>,
    pub interactions: Vec<Pointwise>,
    pub out_proj: Pointwise,
}

impl SpamOracle {
    /// Runs the mixer on a `[dim][h*w]` feature map, one stage at a time.
    pub fn forward(&self, x: &[Vec<f64>], h: usize, w: usize) -> Vec<Vec<f64>> {
        let d = self.dim;
        let k = self.kernel as i64;
        let half = k / 2;

        // 1. projection, split into query and context streams
        let proj = self.in_proj.apply(x);
        let (q0, ctx) = proj.split_at(d);

        // 2. query: 1×K then K×1 depthwise, zero padding
        let mut query = vec![vec![0.0; h * w]; d];
        for c in 0..d {
            let mut horiz = vec![0.0; h * w];
            for y in 0..h as i64 {
                for xx in 0..w as i64 {
                    let mut acc = 0.0;
                    for j in 0..k {
                        let sx = xx + j - half;
                        if (0..w as i64).contains(&sx) {
                            acc += self.dw_h[c * self.kernel + j as usize] as f64 * q0[c][(y * w as i64 + sx) as usize];
                        }
                    }
                    horiz[(y * w as i64 + xx) as usize] = acc;
                }
            }
            for y in 0..h as i64 {
                for xx in 0..w as i64 {
                    let mut acc = 0.0;
                    for i in 0..k {
                        let sy = y + i - half;
                        if (0..h as i64).contains(&sy) {
                            acc += self.dw_v[c * self.kernel + i as usize] as f64 * horiz[(sy * w as i64 + xx) as usize];
                        }
                    }
                    query[c][(y * w as i64 + xx) as usize] = acc;
                }
            }
        }

        // 3. per-group filtering and interaction, 4. summed context
        let mut context = vec![vec![0.0; h * w]; d];
        let mut start = 0;
        for (g, &size) in self.groups.iter().enumerate() {
            let filtered: Vec<Vec<f64>> = ctx[start..start + size]
                .iter()
                .map(|plane| oracle_spf(plane, h, w, self.lambdas[g], self.radii[g]))
                .collect();
            start += size;
            let out = self.interactions[g].apply(&filtered);
            for c in 0..d {
                for p in 0..h * w {
                    context[c][p] += out[c][p];
                }
            }
        }

        // 5. modulation and output projection
        let modulated: Vec<Vec<f64>> = (0..d)
            .map(|c| (0..h * w).map(|p| query[c][p] * context[c][p]).collect())
            .collect();
        self.out_proj.apply(&modulated)
    }
}

/// A binary P6 image with a smooth deterministic pattern.
pub fn test_ppm(h: usize, w: usize) -> Vec<u8> {
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.push(((x * 255) / (w - 1)) as u8);
            bytes.push(((y * 255) / (h - 1)) as u8);
            bytes.push((((x + y) * 37) % 256) as u8);
        }
    }
    bytes
}
