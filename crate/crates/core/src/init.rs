//! Platform-independent weight sampling.

use rand::Rng;

/// Normal samples with the given standard deviation, rejected outside
/// `±bound·std`.
///
/// Uses the Box–Muller transform with `libm` so that a given RNG stream maps
/// to the same `f32` values on every platform.
#[derive(Debug, Clone)]
pub struct TruncatedNormal {
    pub std: f64,
    pub bound: f64,
    spare: Option<f64>,
}

impl Default for TruncatedNormal {
    fn default() -> Self {
        Self::new(0.02, 2.0)
    }
}

impl TruncatedNormal {
    pub fn new(std: f64, bound: f64) -> Self {
        Self {
            std,
            bound,
            spare: None,
        }
    }

    fn standard<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f32 {
        loop {
            let z = self.standard(rng);
            if z.abs() <= self.bound {
                return (z * self.std) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moments_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tn = TruncatedNormal::new(1.0, 2.0);
        let xs: Vec<f64> = (0..200_000).map(|_| tn.sample(&mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(xs.iter().all(|x| x.abs() <= 2.0));
        assert!(mean.abs() < 0.01);
        // variance of a standard normal truncated to ±2 is about 0.774
        assert!((var - 0.774).abs() < 0.01, "var {var}");
    }

    #[test]
    fn same_seed_same_stream() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tn = TruncatedNormal::default();
            (0..64).map(|_| tn.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }
}
