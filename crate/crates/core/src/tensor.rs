//! Dense real-valued N-dimensional arrays and the deterministic random
//! number generator used everywhere a seed is involved.
//!
//! Tensors are plain row-major `f64` buffers (outermost axis first). All
//! heavier machinery (transforms, layers, attacks) is built on top of them.

use crate::error::{Error, Result};

/// Dense N-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and a flat row-major buffer.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    /// One-dimensional tensor over the given values.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// I.i.d. N(0, sigma^2) entries drawn from `rng`.
    pub fn gaussian(shape: Vec<usize>, sigma: f64, rng: &mut Rng) -> Result<Self> {
        if sigma < 0.0 {
            return Err(Error::NegativeSigma { sigma });
        }
        let len = shape.iter().product();
        let data = (0..len).map(|_| sigma * rng.next_normal()).collect();
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same data under a new shape of identical total length.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Elementwise sum. Shapes must match exactly.
    pub fn add(&self, rhs: &Tensor) -> Result<Self> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Elementwise difference. Shapes must match exactly.
    pub fn sub(&self, rhs: &Tensor) -> Result<Self> {
        self.add(&rhs.scale(-1.0))
    }

    /// Elementwise multiplication by a scalar.
    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Euclidean norm over all entries, summed in flat index order.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise clamp to `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    /// Bit-exact equality (distinguishes -0.0 from 0.0, NaN-safe).
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic splitmix64 generator; normal deviates via Box-Muller.
///
/// The full algorithm is pinned so that identical seeds reproduce identical
/// streams on any platform, which makes every sweep and training run in the
/// toolkit replayable from its recorded seed.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    cached_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            cached_normal: None,
        }
    }

    /// Independent stream seed for worker/task `index` under a base seed.
    pub fn derive(seed: u64, index: u64) -> u64 {
        splitmix_mix(seed.wrapping_add(index).wrapping_mul(SPLITMIX_GAMMA))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX_GAMMA);
        splitmix_mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal deviate (Box-Muller; the sine mate is cached).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the logarithm stays finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(radius * theta.sin());
        radius * theta.cos()
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_elementwise() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn add_zeros_is_identity() {
        let x = Tensor::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let z = Tensor::zeros(vec![2, 3]);
        assert_eq!(x.add(&z).unwrap(), x);
    }

    #[test]
    fn add_rejects_shape_mismatch_reporting_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![3, 2]);
        let err = a.add(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn scale_examples() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        assert_eq!(x.scale(2.0).data(), &[2.0, 4.0]);
        assert_eq!(x.scale(0.0).data(), &[0.0, 0.0]);
        let neg = x.scale(-1.0);
        assert_eq!(x.add(&neg).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(Tensor::from_vec(vec![3.0, 4.0]).l2_norm(), 5.0);
        assert_eq!(Tensor::zeros(vec![4]).l2_norm(), 0.0);
        assert_eq!(Tensor::filled(vec![16], 1.0).l2_norm(), 4.0);
    }

    #[test]
    fn new_rejects_wrong_length() {
        let err = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                expected: 4,
                actual: 3,
                ..
            }
        ));
    }

    #[test]
    fn gaussian_sigma_zero_is_all_zeros() {
        let mut rng = Rng::new(9);
        let t = Tensor::gaussian(vec![32], 0.0, &mut rng).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_rejects_negative_sigma() {
        let mut rng = Rng::new(9);
        assert!(matches!(
            Tensor::gaussian(vec![4], -1.0, &mut rng),
            Err(Error::NegativeSigma { .. })
        ));
    }

    #[test]
    fn gaussian_fixed_seed_is_bit_identical() {
        let a = Tensor::gaussian(vec![257], 1.5, &mut Rng::new(42)).unwrap();
        let b = Tensor::gaussian(vec![257], 1.5, &mut Rng::new(42)).unwrap();
        assert!(a.bits_eq(&b));
    }

    #[test]
    fn gaussian_moments_over_a_million_samples() {
        let n = 1_000_000usize;
        let t = Tensor::gaussian(vec![n], 1.0, &mut Rng::new(7)).unwrap();
        let mean = t.data().iter().sum::<f64>() / n as f64;
        let var = t
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((std - 1.0).abs() < 0.01, "std {std}");
    }

    #[test]
    fn gaussian_rarely_exceeds_four_sigma() {
        // At sigma = 1 fewer than 0.01% of draws land outside +-4.
        let n = 1_000_000usize;
        let t = Tensor::gaussian(vec![n], 1.0, &mut Rng::new(11)).unwrap();
        let outliers = t.data().iter().filter(|v| v.abs() > 4.0).count();
        assert!(outliers < n / 10_000, "outliers {outliers}");
    }

    #[test]
    fn derive_differs_per_index_and_is_stable() {
        let a = Rng::derive(1, 0);
        let b = Rng::derive(1, 1);
        assert_ne!(a, b);
        assert_eq!(a, Rng::derive(1, 0));
    }

    #[test]
    fn add_is_commutative_and_associative_exactly() {
        let mut rng = Rng::new(3);
        let a = Tensor::gaussian(vec![64], 1.0, &mut rng).unwrap();
        let b = Tensor::gaussian(vec![64], 1.0, &mut rng).unwrap();
        let c = Tensor::gaussian(vec![64], 1.0, &mut rng).unwrap();
        assert!(a.add(&b).unwrap().bits_eq(&b.add(&a).unwrap()));
        let left = a.add(&b).unwrap().add(&c).unwrap();
        let right = a.add(&b.add(&c).unwrap()).unwrap();
        // Same summation order (left-to-right per flat index) keeps this exact
        // only when grouping does not change rounding; check value equality.
        for (l, r) in left.data().iter().zip(right.data()) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    mod properties {
        use crate::tensor::Tensor;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn norm_scales_with_alpha(values in proptest::collection::vec(-100.0f64..100.0, 1..64),
                                      alpha in -10.0f64..10.0) {
                let x = Tensor::from_vec(values);
                let lhs = x.scale(alpha).l2_norm();
                let rhs = alpha.abs() * x.l2_norm();
                let tol = 1e-12 * rhs.max(1e-300);
                prop_assert!((lhs - rhs).abs() <= tol.max(1e-12));
            }

            #[test]
            fn clamp_bounds_hold(values in proptest::collection::vec(-500.0f64..500.0, 1..64)) {
                let x = Tensor::from_vec(values);
                let c = x.clamp(0.0, 255.0);
                prop_assert!(c.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
            }
        }
    }
}
