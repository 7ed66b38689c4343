//! Frequency-domain analysis products: per-filter and mean magnitude
//! spectra, reference filters, spectral-concentration metrics, and the
//! 4D point-cloud export for 3D kernels.

use crate::dft::{dft2, dft3};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default zero-padded grid size for kernel spectra. The padding gives a
/// densely sampled frequency response for 3x3 to 11x11 kernels at trivial
/// cost.
pub const DEFAULT_PAD: usize = 64;

/// Fraction of the Nyquist half-width that counts as the low band for the
/// concentration metric.
pub const DEFAULT_BAND_FRACTION: f64 = 0.5;

/// Centered magnitude grid of one filter (or a mean of filters) plus its
/// summary statistics.
#[derive(Debug, Clone)]
pub struct SpectrumSummary {
    pub filter_id: String,
    /// Centered magnitude grid, `pad x pad`.
    pub grid: Tensor,
    pub peak: f64,
    /// Low-band energy fraction in [0, 1].
    pub concentration: f64,
    /// Shannon entropy (nats) of the energy-normalized bins.
    pub entropy: f64,
}

impl SpectrumSummary {
    fn from_grid(filter_id: impl Into<String>, grid: Tensor) -> Result<Self> {
        let peak = grid.data().iter().cloned().fold(0.0f64, f64::max);
        let concentration = concentration(&grid, DEFAULT_BAND_FRACTION)?;
        let entropy = spectral_entropy(&grid)?;
        Ok(Self {
            filter_id: filter_id.into(),
            grid,
            peak,
            concentration,
            entropy,
        })
    }
}

/// The well-known 3x3 kernels used as analysis references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceFilter {
    SobelX,
    SobelY,
    PrewittX,
    PrewittY,
    Gaussian3HalfSigma,
}

impl ReferenceFilter {
    pub const ALL: [ReferenceFilter; 5] = [
        ReferenceFilter::SobelX,
        ReferenceFilter::SobelY,
        ReferenceFilter::PrewittX,
        ReferenceFilter::PrewittY,
        ReferenceFilter::Gaussian3HalfSigma,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceFilter::SobelX => "sobel_x",
            ReferenceFilter::SobelY => "sobel_y",
            ReferenceFilter::PrewittX => "prewitt_x",
            ReferenceFilter::PrewittY => "prewitt_y",
            ReferenceFilter::Gaussian3HalfSigma => "gaussian3_halfsigma",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownFilter(name.to_string()))
    }
}

/// Standard kernel values for a reference filter.
pub fn reference_filter(filter: ReferenceFilter) -> Tensor {
    let data = match filter {
        ReferenceFilter::SobelX => vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        ReferenceFilter::SobelY => vec![-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
        ReferenceFilter::PrewittX => vec![-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0],
        ReferenceFilter::PrewittY => vec![-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        ReferenceFilter::Gaussian3HalfSigma => {
            let mut values = Vec::with_capacity(9);
            let two_sigma_sq = 2.0 * 0.5 * 0.5;
            for y in -1i32..=1 {
                for x in -1i32..=1 {
                    values.push((-f64::from(x * x + y * y) / two_sigma_sq).exp());
                }
            }
            let sum: f64 = values.iter().sum();
            for v in &mut values {
                *v /= sum;
            }
            values
        }
    };
    Tensor::new(vec![3, 3], data).expect("3x3 kernel")
}

/// Centered magnitude spectrum and summary metrics of a 2D kernel; a 3D
/// kernel is reduced to the mean of its channel-frequency planes.
pub fn filter_spectrum(id: &str, kernel: &Tensor, pad: usize) -> Result<SpectrumSummary> {
    match kernel.rank() {
        2 => {
            let grid = dft2(kernel, pad)?.center_shift()?.magnitude();
            SpectrumSummary::from_grid(id, grid)
        }
        3 => {
            let planes = filter_spectrum_planes(id, kernel, pad)?;
            let mut mean = Tensor::zeros(vec![pad, pad]);
            for plane in &planes {
                mean = mean.add(&plane.grid)?;
            }
            SpectrumSummary::from_grid(id, mean.scale(1.0 / planes.len() as f64))
        }
        _ => Err(Error::RankMismatch {
            expected: 2,
            shape: kernel.shape().to_vec(),
        }),
    }
}

/// One summary per channel-frequency plane of a 3D kernel's spectrum.
pub fn filter_spectrum_planes(
    id: &str,
    kernel: &Tensor,
    pad: usize,
) -> Result<Vec<SpectrumSummary>> {
    if kernel.rank() != 3 {
        return Err(Error::RankMismatch {
            expected: 3,
            shape: kernel.shape().to_vec(),
        });
    }
    let magnitude = dft3(kernel, pad)?.center_shift()?.magnitude();
    let depth = magnitude.shape()[0];
    let plane_len = pad * pad;
    (0..depth)
        .map(|p| {
            let data = magnitude.data()[p * plane_len..(p + 1) * plane_len].to_vec();
            SpectrumSummary::from_grid(format!("{id}/plane{p}"), Tensor::new(vec![pad, pad], data)?)
        })
        .collect()
}

/// Arithmetic mean of the centered 2D magnitude spectra over all filters
/// and all of their input channels of one layer.
pub fn mean_spectrum(layer_kernels: &[Tensor], pad: usize) -> Result<SpectrumSummary> {
    if layer_kernels.is_empty() {
        return Err(Error::BadKernelList("no kernels given".into()));
    }
    let spatial = {
        let first = layer_kernels[0].shape();
        [first[first.len() - 2], first[first.len() - 1]]
    };
    let mut mean = Tensor::zeros(vec![pad, pad]);
    let mut count = 0usize;
    for kernel in layer_kernels {
        let shape = kernel.shape();
        let (channels, kh, kw) = match kernel.rank() {
            2 => (1, shape[0], shape[1]),
            3 => (shape[0], shape[1], shape[2]),
            _ => {
                return Err(Error::BadKernelList(format!(
                    "kernel of rank {} is not 2D or 3D",
                    kernel.rank()
                )))
            }
        };
        if [kh, kw] != spatial {
            return Err(Error::BadKernelList(format!(
                "ragged spatial extents: {:?} vs {:?}",
                [kh, kw],
                spatial
            )));
        }
        for ch in 0..channels {
            let data = kernel.data()[ch * kh * kw..(ch + 1) * kh * kw].to_vec();
            let slice = Tensor::new(vec![kh, kw], data)?;
            mean = mean.add(&dft2(&slice, pad)?.center_shift()?.magnitude())?;
            count += 1;
        }
    }
    SpectrumSummary::from_grid("mean", mean.scale(1.0 / count as f64))
}

/// Fraction of spectral energy (squared magnitude) inside the centered
/// square whose half-width is `band_fraction` of the Nyquist half-width.
pub fn concentration(magnitude_grid: &Tensor, band_fraction: f64) -> Result<f64> {
    if magnitude_grid.rank() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            shape: magnitude_grid.shape().to_vec(),
        });
    }
    if magnitude_grid.data().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeGrid);
    }
    let total: f64 = magnitude_grid.data().iter().map(|m| m * m).sum();
    if total == 0.0 {
        return Err(Error::ZeroGrid);
    }
    let (rows, cols) = (magnitude_grid.shape()[0], magnitude_grid.shape()[1]);
    let in_band = |index: usize, extent: usize| {
        let center = (extent / 2) as f64;
        let half_width = band_fraction * extent as f64 / 2.0;
        let i = index as f64;
        center - half_width <= i && i < center + half_width
    };
    let mut band = 0.0;
    for y in 0..rows {
        for x in 0..cols {
            if in_band(y, rows) && in_band(x, cols) {
                let m = magnitude_grid.at(&[y, x]);
                band += m * m;
            }
        }
    }
    Ok(band / total)
}

/// Shannon entropy (nats) of the energy-normalized spectrum.
pub fn spectral_entropy(magnitude_grid: &Tensor) -> Result<f64> {
    if magnitude_grid.data().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeGrid);
    }
    let total: f64 = magnitude_grid.data().iter().map(|m| m * m).sum();
    if total == 0.0 {
        return Err(Error::ZeroGrid);
    }
    let mut entropy = 0.0;
    for m in magnitude_grid.data() {
        let p = m * m / total;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    Ok(entropy)
}

/// One spectral bin of a 3D kernel, frequencies in cycles/sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub freq_channel: f64,
    pub freq_y: f64,
    pub freq_x: f64,
    pub magnitude: f64,
}

/// Centered 3D magnitude bins with magnitude at least `threshold_fraction`
/// of the peak, one row per bin, frequencies normalized to [-0.5, 0.5).
pub fn export_pointcloud(
    kernel: &Tensor,
    pad: usize,
    threshold_fraction: f64,
) -> Result<Vec<SpectralPoint>> {
    let magnitude = dft3(kernel, pad)?.center_shift()?.magnitude();
    let shape = magnitude.shape().to_vec();
    let peak = magnitude.data().iter().cloned().fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let cutoff = threshold_fraction * peak;
    let normalized =
        |index: usize, extent: usize| (index as f64 - (extent / 2) as f64) / extent as f64;
    let mut points = Vec::new();
    for e1 in 0..shape[0] {
        for e2 in 0..shape[1] {
            for e3 in 0..shape[2] {
                let m = magnitude.at(&[e1, e2, e3]);
                if m >= cutoff {
                    points.push(SpectralPoint {
                        freq_channel: normalized(e1, shape[0]),
                        freq_y: normalized(e2, shape[1]),
                        freq_x: normalized(e3, shape[2]),
                        magnitude: m,
                    });
                }
            }
        }
    }
    Ok(points)
}
