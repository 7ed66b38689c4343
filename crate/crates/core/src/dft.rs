//! Zero-padded discrete Fourier transforms of kernels, feature maps and
//! noise, plus magnitude extraction and center-shifting for display.
//!
//! The forward transform is unnormalized direct summation over the signal
//! support: the signal sits at the origin of a zero grid, so the padded
//! zeros never enter the sum. Plenty fast at kernel/image scale, and easy
//! to audit against the per-term trig oracle kept in the test suite.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A complex spectral value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn magnitude(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn scale(self, alpha: f64) -> Self {
        Self::new(alpha * self.re, alpha * self.im)
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;

    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl std::ops::Mul for Complex {
    type Output = Complex;

    fn mul(self, rhs: Complex) -> Complex {
        Complex::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

/// Complex DFT grid with centering metadata.
///
/// `centered == false` means the DC bin sits at index 0 on every axis;
/// after [`Spectrum::center_shift`] it sits at `floor(extent / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    extents: Vec<usize>,
    values: Vec<Complex>,
    centered: bool,
}

impl Spectrum {
    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn values(&self) -> &[Complex] {
        &self.values
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn at(&self, index: &[usize]) -> Complex {
        debug_assert_eq!(index.len(), self.extents.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.extents[i]);
            off = off * self.extents[i] + ix;
        }
        self.values[off]
    }

    /// Per-bin magnitude as a tensor with the same extents.
    pub fn magnitude(&self) -> Tensor {
        let data = self.values.iter().map(|v| v.magnitude()).collect();
        Tensor::new(self.extents.clone(), data).expect("extents match value count")
    }

    /// Cyclic shift placing DC at `floor(extent / 2)` on every axis.
    pub fn center_shift(&self) -> Result<Spectrum> {
        if self.centered {
            return Err(Error::AlreadyCentered);
        }
        Ok(Spectrum {
            extents: self.extents.clone(),
            values: cyclic_shift(&self.extents, &self.values, true),
            centered: true,
        })
    }

    /// Inverse of [`Spectrum::center_shift`].
    pub fn center_unshift(&self) -> Result<Spectrum> {
        if !self.centered {
            return Err(Error::NotCentered);
        }
        Ok(Spectrum {
            extents: self.extents.clone(),
            values: cyclic_shift(&self.extents, &self.values, false),
            centered: false,
        })
    }
}

fn cyclic_shift(extents: &[usize], values: &[Complex], forward: bool) -> Vec<Complex> {
    let mut out = vec![Complex::default(); values.len()];
    let mut index = vec![0usize; extents.len()];
    for (dst, slot) in out.iter_mut().enumerate() {
        // Decompose dst into a multi-index.
        let mut rem = dst;
        for axis in (0..extents.len()).rev() {
            index[axis] = rem % extents[axis];
            rem /= extents[axis];
        }
        let mut src = 0;
        for (axis, &n) in extents.iter().enumerate() {
            let half = n / 2;
            let shift = if forward { n - half } else { half };
            let s = (index[axis] + shift) % n;
            src = src * n + s;
        }
        *slot = values[src];
    }
    out
}

/// Table of the pad-th roots of unity, `w[t] = exp(-2 pi i t / n)`.
fn twiddle_table(n: usize) -> Vec<Complex> {
    (0..n)
        .map(|t| {
            let angle = -2.0 * std::f64::consts::PI * t as f64 / n as f64;
            Complex::new(angle.cos(), angle.sin())
        })
        .collect()
}

/// 2D DFT of a signal embedded at the origin of a `pad x pad` zero grid.
pub fn dft2(signal: &Tensor, pad: usize) -> Result<Spectrum> {
    if signal.rank() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            shape: signal.shape().to_vec(),
        });
    }
    let (h, w) = (signal.shape()[0], signal.shape()[1]);
    let largest = h.max(w);
    if pad < largest {
        return Err(Error::PadTooSmall {
            pad,
            extent: largest,
        });
    }
    let table = twiddle_table(pad);
    let data = signal.data();
    let mut values = Vec::with_capacity(pad * pad);
    for ey in 0..pad {
        for ex in 0..pad {
            let mut acc = Complex::default();
            for y in 0..h {
                for x in 0..w {
                    let t = (y * ey + x * ex) % pad;
                    acc = acc + table[t].scale(data[y * w + x]);
                }
            }
            values.push(acc);
        }
    }
    Ok(Spectrum {
        extents: vec![pad, pad],
        values,
        centered: false,
    })
}

/// 3D DFT over (channel, y, x) with zero-padding on the spatial axes only.
///
/// The channel axis keeps its natural length: it indexes input channels,
/// not a spatial dimension, so padding it has no meaning here.
pub fn dft3(kernel: &Tensor, pad_spatial: usize) -> Result<Spectrum> {
    if kernel.rank() != 3 {
        return Err(Error::RankMismatch {
            expected: 3,
            shape: kernel.shape().to_vec(),
        });
    }
    let (d, h, w) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    let largest = h.max(w);
    if pad_spatial < largest {
        return Err(Error::PadTooSmall {
            pad: pad_spatial,
            extent: largest,
        });
    }
    let spatial = twiddle_table(pad_spatial);
    let depth = twiddle_table(d);
    let data = kernel.data();
    let mut values = Vec::with_capacity(d * pad_spatial * pad_spatial);
    for e1 in 0..d {
        for e2 in 0..pad_spatial {
            for e3 in 0..pad_spatial {
                let mut acc = Complex::default();
                for c in 0..d {
                    let wc = depth[(c * e1) % d];
                    for y in 0..h {
                        let wy = spatial[(y * e2) % pad_spatial];
                        let wcy = wc * wy;
                        for x in 0..w {
                            let wx = spatial[(x * e3) % pad_spatial];
                            acc = acc + wcy * wx.scale(data[(c * h + y) * w + x]);
                        }
                    }
                }
                values.push(acc);
            }
        }
    }
    Ok(Spectrum {
        extents: vec![d, pad_spatial, pad_spatial],
        values,
        centered: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    /// Independent O(N^4) oracle: per-term trig, no twiddle tables.
    fn naive_dft2(signal: &Tensor, pad: usize) -> Vec<Complex> {
        let (h, w) = (signal.shape()[0], signal.shape()[1]);
        let mut out = Vec::with_capacity(pad * pad);
        for ey in 0..pad {
            for ex in 0..pad {
                let mut re = 0.0;
                let mut im = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let angle = -2.0
                            * std::f64::consts::PI
                            * (y as f64 * ey as f64 / pad as f64
                                + x as f64 * ex as f64 / pad as f64);
                        let v = signal.at(&[y, x]);
                        re += v * angle.cos();
                        im += v * angle.sin();
                    }
                }
                out.push(Complex::new(re, im));
            }
        }
        out
    }

    fn sobel_x() -> Tensor {
        Tensor::new(
            vec![3, 3],
            vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut signal = Tensor::zeros(vec![1, 1]);
        signal.set(&[0, 0], 1.0);
        let spec = dft2(&signal, 8).unwrap();
        for v in spec.values() {
            assert!((v.magnitude() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_maps_to_dc_only() {
        let signal = Tensor::filled(vec![4, 4], 1.0);
        let spec = dft2(&signal, 4).unwrap();
        assert!((spec.at(&[0, 0]).magnitude() - 16.0).abs() < 1e-9);
        for ey in 0..4 {
            for ex in 0..4 {
                if (ey, ex) != (0, 0) {
                    assert!(spec.at(&[ey, ex]).magnitude() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sobel_kills_the_nyquist_vertical_row() {
        let spec = dft2(&sobel_x(), 64).unwrap();
        let mag = spec.magnitude();
        // Highest vertical frequency: the (2 + 2 cos w_y) factor vanishes.
        for ex in 0..64 {
            assert!(mag.at(&[32, ex]) <= 1e-12, "bin (32, {ex})");
        }
        // Global maximum 8.0 at quarter-band horizontal frequency.
        let peak = mag.data().iter().cloned().fold(0.0f64, f64::max);
        assert!((peak - 8.0).abs() < 1e-9);
        assert!((mag.at(&[0, 16]) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn dft2_rejects_small_pad() {
        assert!(matches!(
            dft2(&Tensor::zeros(vec![5, 3]), 4),
            Err(Error::PadTooSmall { pad: 4, extent: 5 })
        ));
    }

    #[test]
    fn matches_naive_oracle_on_random_inputs() {
        let mut rng = Rng::new(21);
        for _ in 0..5 {
            let signal = Tensor::gaussian(vec![8, 8], 1.0, &mut rng).unwrap();
            let fast = dft2(&signal, 8).unwrap();
            let naive = naive_dft2(&signal, 8);
            for (a, b) in fast.values().iter().zip(&naive) {
                assert!((a.re - b.re).abs() < 1e-9 && (a.im - b.im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dft_of_sum_is_sum_of_dfts() {
        // Both sides through the brute-force oracle on a 4x4 signal.
        let mut rng = Rng::new(5);
        let f = Tensor::gaussian(vec![4, 4], 1.0, &mut rng).unwrap();
        let r = Tensor::gaussian(vec![4, 4], 1.0, &mut rng).unwrap();
        let sum = f.add(&r).unwrap();
        let lhs = naive_dft2(&sum, 8);
        let f_spec = naive_dft2(&f, 8);
        let r_spec = naive_dft2(&r, 8);
        for (i, v) in lhs.iter().enumerate() {
            let expect = f_spec[i] + r_spec[i];
            assert!((v.re - expect.re).abs() < 1e-9 && (v.im - expect.im).abs() < 1e-9);
        }
        // And the production path agrees with the oracle on the sum.
        let prod = dft2(&sum, 8).unwrap();
        for (a, b) in prod.values().iter().zip(&lhs) {
            assert!((a.re - b.re).abs() < 1e-9 && (a.im - b.im).abs() < 1e-9);
        }
    }

    #[test]
    fn linearity_over_random_pairs() {
        let mut rng = Rng::new(17);
        for _ in 0..10 {
            let f = Tensor::gaussian(vec![6, 6], 1.0, &mut rng).unwrap();
            let r = Tensor::gaussian(vec![6, 6], 1.0, &mut rng).unwrap();
            let alpha = rng.next_range(-2.0, 2.0);
            let beta = rng.next_range(-2.0, 2.0);
            let combo = f.scale(alpha).add(&r.scale(beta)).unwrap();
            let lhs = dft2(&combo, 12).unwrap();
            let ff = dft2(&f, 12).unwrap();
            let rr = dft2(&r, 12).unwrap();
            for ((l, a), b) in lhs.values().iter().zip(ff.values()).zip(rr.values()) {
                let expect = a.scale(alpha) + b.scale(beta);
                assert!((l.re - expect.re).abs() < 1e-9);
                assert!((l.im - expect.im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn real_input_has_conjugate_symmetry() {
        let mut rng = Rng::new(8);
        let signal = Tensor::gaussian(vec![5, 7], 1.0, &mut rng).unwrap();
        let spec = dft2(&signal, 9).unwrap();
        let n = 9;
        for ey in 0..n {
            for ex in 0..n {
                let a = spec.at(&[ey, ex]);
                let b = spec.at(&[(n - ey) % n, (n - ex) % n]).conj();
                assert!((a.re - b.re).abs() < 1e-9 && (a.im - b.im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parseval_identity_2d() {
        let mut rng = Rng::new(13);
        let signal = Tensor::gaussian(vec![16, 16], 1.0, &mut rng).unwrap();
        let spec = dft2(&signal, 16).unwrap();
        let spatial: f64 = signal.data().iter().map(|v| v * v).sum();
        let spectral: f64 = spec
            .values()
            .iter()
            .map(|v| v.re * v.re + v.im * v.im)
            .sum();
        let n = (16 * 16) as f64;
        assert!((spatial - spectral / n).abs() <= 1e-9 * spatial.abs().max(1.0));
    }

    #[test]
    fn dft3_single_channel_matches_dft2() {
        let mut rng = Rng::new(2);
        let kernel = Tensor::gaussian(vec![1, 3, 3], 1.0, &mut rng).unwrap();
        let slice = kernel.reshape(vec![3, 3]).unwrap();
        let s3 = dft3(&kernel, 8).unwrap();
        let s2 = dft2(&slice, 8).unwrap();
        for (a, b) in s3.values().iter().zip(s2.values()) {
            assert!((a.re - b.re).abs() < 1e-9 && (a.im - b.im).abs() < 1e-9);
        }
    }

    #[test]
    fn dft3_replicated_channels_concentrate_on_dc_plane() {
        let mut rng = Rng::new(4);
        let slice = Tensor::gaussian(vec![3, 3], 1.0, &mut rng).unwrap();
        let mut data = slice.data().to_vec();
        data.extend_from_slice(slice.data());
        let kernel = Tensor::new(vec![2, 3, 3], data).unwrap();
        let s3 = dft3(&kernel, 8).unwrap();
        let s2 = dft2(&slice, 8).unwrap();
        for ey in 0..8 {
            for ex in 0..8 {
                let plane0 = s3.at(&[0, ey, ex]);
                let single = s2.at(&[ey, ex]).scale(2.0);
                assert!((plane0.re - single.re).abs() < 1e-9);
                assert!((plane0.im - single.im).abs() < 1e-9);
                // Nyquist channel frequency of a constant depth sequence is zero.
                assert!(s3.at(&[1, ey, ex]).magnitude() < 1e-9);
            }
        }
    }

    #[test]
    fn parseval_identity_3d() {
        let mut rng = Rng::new(6);
        let kernel = Tensor::gaussian(vec![3, 5, 5], 1.0, &mut rng).unwrap();
        let spec = dft3(&kernel, 8).unwrap();
        let spatial: f64 = kernel.data().iter().map(|v| v * v).sum();
        let spectral: f64 = spec
            .values()
            .iter()
            .map(|v| v.re * v.re + v.im * v.im)
            .sum();
        let n = (3 * 8 * 8) as f64;
        assert!((spatial - spectral / n).abs() <= 1e-9 * spatial.abs().max(1.0));
    }

    #[test]
    fn center_shift_moves_dc_to_grid_center() {
        let signal = Tensor::filled(vec![4, 4], 1.0);
        let spec = dft2(&signal, 4).unwrap();
        let centered = spec.center_shift().unwrap();
        assert!(centered.centered());
        assert!((centered.at(&[2, 2]).magnitude() - 16.0).abs() < 1e-9);
        let off_center: f64 = centered.values().iter().map(|v| v.magnitude()).sum::<f64>()
            - centered.at(&[2, 2]).magnitude();
        assert!(off_center < 1e-9);
    }

    #[test]
    fn center_shift_odd_grid_lands_on_floor_half() {
        // A constant 5x5 signal is DC-only; after centering it sits at (2, 2).
        let constant = Tensor::filled(vec![5, 5], 1.0);
        let dc = dft2(&constant, 5).unwrap().center_shift().unwrap();
        assert!((dc.at(&[2, 2]).magnitude() - 25.0).abs() < 1e-9);
        for ey in 0..5 {
            for ex in 0..5 {
                if (ey, ex) != (2, 2) {
                    assert!(dc.at(&[ey, ex]).magnitude() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn center_shift_rejects_double_centering_and_inverts() {
        let mut rng = Rng::new(1);
        let signal = Tensor::gaussian(vec![3, 3], 1.0, &mut rng).unwrap();
        let spec = dft2(&signal, 5).unwrap();
        let centered = spec.center_shift().unwrap();
        assert!(matches!(
            centered.center_shift(),
            Err(Error::AlreadyCentered)
        ));
        let back = centered.center_unshift().unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn magnitude_is_shift_invariant_as_multiset() {
        let mut rng = Rng::new(3);
        let signal = Tensor::gaussian(vec![4, 4], 1.0, &mut rng).unwrap();
        let spec = dft2(&signal, 6).unwrap();
        let mut a: Vec<f64> = spec.magnitude().data().to_vec();
        let mut b: Vec<f64> = spec.center_shift().unwrap().magnitude().data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn complex_magnitude_examples() {
        assert_eq!(Complex::new(3.0, 4.0).magnitude(), 5.0);
        assert_eq!(Complex::new(0.0, 0.0).magnitude(), 0.0);
    }
}
