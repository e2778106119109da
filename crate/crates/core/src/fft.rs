//! One-dimensional complex FFTs of arbitrary length.
//!
//! Powers of two go through an iterative radix-2 kernel. Lengths whose prime
//! factors are all small use a recursive mixed-radix decimation in time, and
//! anything with a large prime factor falls back to Bluestein's chirp-z
//! algorithm on a padded power-of-two transform. All transforms are
//! unnormalized. Twiddles come from `libm` so results are identical across
//! platforms.

use num_complex::Complex64;

/// Largest prime factor handled by a direct radix-p butterfly.
const MAX_DIRECT_RADIX: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone)]
enum Algorithm {
    Identity,
    Radix2 { bitrev: Vec<usize> },
    MixedRadix { factors: Vec<usize> },
    Bluestein {
        /// `exp(-iπk²/n)` for `k < n`
        chirp: Vec<Complex64>,
        /// Forward transform of the padded conjugate chirp.
        kernel: Vec<Complex64>,
        inner: Box<FftPlan>,
    },
}

/// A reusable transform plan for one length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    /// `exp(-2πik/len)` for `k < len`
    twiddles: Vec<Complex64>,
    algorithm: Algorithm,
}

fn unit(angle: f64) -> Complex64 {
    Complex64::new(libm::cos(angle), libm::sin(angle))
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    // radix 4 first keeps the recursion shallow for 2^k·q lengths
    while n.is_multiple_of(4) && n > 4 {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let twiddles = (0..len)
            .map(|k| unit(-2.0 * std::f64::consts::PI * k as f64 / len as f64))
            .collect();
        let algorithm = if len == 1 {
            Algorithm::Identity
        } else if len.is_power_of_two() {
            let bits = len.trailing_zeros();
            let bitrev = (0..len)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            Algorithm::Radix2 { bitrev }
        } else {
            let factors = factorize(len);
            if factors.iter().all(|&f| f <= MAX_DIRECT_RADIX) {
                Algorithm::MixedRadix { factors }
            } else {
                Self::bluestein(len)
            }
        };
        Self {
            len,
            twiddles,
            algorithm,
        }
    }

    fn bluestein(len: usize) -> Algorithm {
        let padded = (2 * len - 1).next_power_of_two();
        let inner = FftPlan::new(padded);
        let two_n = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                // k² mod 2n keeps the angle small for large k
                let k2 = (k as u128 * k as u128 % two_n) as f64;
                unit(-std::f64::consts::PI * k2 / len as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); padded];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[padded - k] = chirp[k].conj();
        }
        inner.process(&mut kernel, Direction::Forward);
        Algorithm::Bluestein {
            chirp,
            kernel,
            inner: Box::new(inner),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `buf` in place. Neither direction is normalized.
    pub fn process(&self, buf: &mut [Complex64], dir: Direction) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        match &self.algorithm {
            Algorithm::Identity => {}
            Algorithm::Radix2 { bitrev } => self.radix2(buf, bitrev, dir),
            Algorithm::MixedRadix { factors } => {
                let input = buf.to_vec();
                let mut scratch = Vec::new();
                self.mixed(buf, &input, 1, factors, 1, dir, &mut scratch);
            }
            Algorithm::Bluestein { chirp, kernel, inner } => {
                Self::chirp_z(buf, chirp, kernel, inner, dir)
            }
        }
    }

    fn twiddle(&self, index: usize, dir: Direction) -> Complex64 {
        let t = self.twiddles[index % self.len];
        match dir {
            Direction::Forward => t,
            Direction::Inverse => t.conj(),
        }
    }

    fn radix2(&self, buf: &mut [Complex64], bitrev: &[usize], dir: Direction) {
        let n = self.len;
        for (i, &j) in bitrev.iter().enumerate() {
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let t = self.twiddle(k * step, dir) * buf[start + k + half];
                    let u = buf[start + k];
                    buf[start + k] = u + t;
                    buf[start + k + half] = u - t;
                }
            }
            size *= 2;
        }
    }

    /// Decimation in time: `out` receives the DFT of
    /// `input[0], input[stride], …` whose length is the product of `factors`.
    #[allow(clippy::too_many_arguments)]
    fn mixed(
        &self,
        out: &mut [Complex64],
        input: &[Complex64],
        stride: usize,
        factors: &[usize],
        tw_step: usize,
        dir: Direction,
        scratch: &mut Vec<Complex64>,
    ) {
        let n = out.len();
        let p = factors[0];
        let m = n / p;
        if m == 1 {
            for (j, o) in out.iter_mut().enumerate() {
                *o = input[j * stride];
            }
        } else {
            for r in 0..p {
                self.mixed(
                    &mut out[r * m..(r + 1) * m],
                    &input[r * stride..],
                    stride * p,
                    &factors[1..],
                    tw_step * p,
                    dir,
                    scratch,
                );
            }
        }
        // out[r*m + k] now holds sub-transform r at bin k
        scratch.resize(p, Complex64::new(0.0, 0.0));
        for k in 0..m {
            for r in 0..p {
                scratch[r] = out[r * m + k] * self.twiddle(r * k * tw_step, dir);
            }
            for q in 0..p {
                let mut acc = scratch[0];
                for (r, s) in scratch.iter().enumerate().skip(1) {
                    acc += s * self.twiddle(r * q * m * tw_step, dir);
                }
                out[q * m + k] = acc;
            }
        }
    }

    fn chirp_z(
        buf: &mut [Complex64],
        chirp: &[Complex64],
        kernel: &[Complex64],
        inner: &FftPlan,
        dir: Direction,
    ) {
        // inverse(x) = conj(forward(conj(x)))
        let conj = dir == Direction::Inverse;
        let padded = inner.len();
        let mut work = vec![Complex64::new(0.0, 0.0); padded];
        for (k, (w, &x)) in work.iter_mut().zip(buf.iter()).enumerate() {
            let x = if conj { x.conj() } else { x };
            *w = x * chirp[k];
        }
        inner.process(&mut work, Direction::Forward);
        for (w, k) in work.iter_mut().zip(kernel) {
            *w *= k;
        }
        inner.process(&mut work, Direction::Inverse);
        let scale = 1.0 / padded as f64;
        for (k, x) in buf.iter_mut().enumerate() {
            let y = work[k] * chirp[k] * scale;
            *x = if conj { y.conj() } else { y };
        }
    }
}

/// Row/column plans for 2D transforms of a fixed `h × w` plane.
#[derive(Debug, Clone)]
pub struct Fft2Plan {
    h: usize,
    w: usize,
    rows: FftPlan,
    cols: FftPlan,
}

impl Fft2Plan {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            rows: FftPlan::new(w),
            cols: FftPlan::new(h),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// In-place unnormalized 2D transform of a row-major `h × w` buffer.
    pub fn process(&self, data: &mut [Complex64], dir: Direction) {
        assert_eq!(data.len(), self.h * self.w);
        for row in data.chunks_exact_mut(self.w) {
            self.rows.process(row, dir);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.h];
        for x in 0..self.w {
            for (y, c) in col.iter_mut().enumerate() {
                *c = data[y * self.w + x];
            }
            self.cols.process(&mut col, dir);
            for (y, c) in col.iter().enumerate() {
                data[y * self.w + x] = *c;
            }
        }
    }
}
