//! The three experimental protocols at desk scale: accuracy sweeps over
//! Gaussian-degraded test images, Gaussian pre-smoothing, and noisy-data
//! augmentation with conv-only fine-tuning.

use crate::convnet::{Dataset, FreezeSelector, Model};
use crate::error::{Error, Result};
use crate::spectrum::{reference_filter, ReferenceFilter};
use crate::tensor::{Rng, Tensor};

/// The noise grid used throughout: sigma values in intensity levels.
pub const DEFAULT_SIGMA_GRID: [f64; 11] =
    [1.0, 2.0, 4.0, 8.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0];

/// Sigma values used for noisy-data augmentation.
pub const AUGMENT_SIGMAS: [f64; 4] = [1.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Strictly increasing noise levels.
    pub sigmas: Vec<f64>,
    pub trials_per_sigma: usize,
    /// Smooth each degraded image before classifying it.
    pub smooth_first: bool,
    /// Round degraded pixels to whole intensity levels.
    pub quantize: bool,
    /// Bound on how many clean-correct images enter the sweep.
    pub max_images: Option<usize>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigmas: DEFAULT_SIGMA_GRID.to_vec(),
            trials_per_sigma: 100,
            smooth_first: false,
            quantize: false,
            max_images: None,
            seed: 1,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::InvalidConfig("sigma grid is empty".into()));
        }
        for pair in self.sigmas.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidConfig(format!(
                    "sigmas must be strictly increasing, got {} after {}",
                    pair[1], pair[0]
                )));
            }
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidConfig(
                "sigmas must be finite and non-negative".into(),
            ));
        }
        if self.trials_per_sigma == 0 {
            return Err(Error::InvalidConfig(
                "trials_per_sigma must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub images_evaluated: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Per-sigma accuracy table plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Fingerprint of the evaluated model.
    pub model_id: String,
    pub seed: u64,
    pub trials_per_sigma: usize,
    pub smooth_first: bool,
    pub quantize: bool,
}

impl SweepReport {
    pub fn accuracy_at(&self, sigma: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.sigma == sigma)
            .map(|r| r.accuracy)
    }
}

/// Adds i.i.d. Gaussian noise in intensity levels and clamps to [0, 255].
/// Pixels stay real-valued; see [`quantize_intensities`].
pub fn degrade(image: &Tensor, sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    let noise = Tensor::gaussian(image.shape().to_vec(), sigma, rng)?;
    Ok(image.add(&noise)?.clamp(0.0, 255.0))
}

/// Round-to-nearest whole intensity level.
pub fn quantize_intensities(image: &Tensor) -> Tensor {
    let data = image.data().iter().map(|v| v.round()).collect();
    Tensor::new(image.shape().to_vec(), data).expect("same shape")
}

/// Per-channel convolution with the normalized 3x3 sigma=0.5 Gaussian;
/// replicate-border padding keeps the image shape.
pub fn smooth(image: &Tensor) -> Result<Tensor> {
    let (channels, height, width) = match *image.shape() {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::RankMismatch {
                expected: 3,
                shape: image.shape().to_vec(),
            })
        }
    };
    if height < 3 || width < 3 {
        return Err(Error::ImageTooSmall {
            min: 3,
            height,
            width,
        });
    }
    let kernel = reference_filter(ReferenceFilter::Gaussian3HalfSigma);
    let k = kernel.data();
    let source = image.data();
    let mut out = vec![0.0; source.len()];
    for ch in 0..channels {
        let base = ch * height * width;
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
                        let tap = k[((dy + 1) * 3 + (dx + 1)) as usize];
                        acc += tap * source[base + yy * width + xx];
                    }
                }
                out[base + y * width + x] = acc;
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// Seed for one (image, sigma, trial) cell, independent of which subset of
/// images or sigmas a run evaluates.
fn trial_seed(seed: u64, image_index: usize, sigma_index: usize, trial: usize) -> u64 {
    let a = Rng::derive(seed, image_index as u64);
    let b = Rng::derive(a, sigma_index as u64);
    Rng::derive(b, trial as u64)
}

/// Evaluates accuracy over noisy variants of the clean-correct test
/// images, one row per sigma.
pub fn run_sweep(model: &Model, test: &Dataset, cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut clean_correct = Vec::new();
    for i in 0..test.len() {
        if model.predict(&test.image(i))? == test.label(i) {
            clean_correct.push(i);
        }
    }
    if let Some(limit) = cfg.max_images {
        clean_correct.truncate(limit);
    }
    if clean_correct.is_empty() {
        return Err(Error::NoCorrectImages);
    }
    let mut rows = Vec::with_capacity(cfg.sigmas.len());
    for (sigma_index, &sigma) in cfg.sigmas.iter().enumerate() {
        let mut correct = 0usize;
        for &image_index in &clean_correct {
            let image = test.image(image_index);
            let label = test.label(image_index);
            for trial in 0..cfg.trials_per_sigma {
                let mut rng = Rng::new(trial_seed(cfg.seed, image_index, sigma_index, trial));
                let mut noisy = degrade(&image, sigma, &mut rng)?;
                if cfg.quantize {
                    noisy = quantize_intensities(&noisy);
                }
                if cfg.smooth_first {
                    noisy = smooth(&noisy)?;
                }
                if model.predict(&noisy)? == label {
                    correct += 1;
                }
            }
        }
        let evaluated = clean_correct.len() * cfg.trials_per_sigma;
        rows.push(SweepRow {
            sigma,
            images_evaluated: evaluated,
            correct,
            accuracy: correct as f64 / evaluated as f64,
        });
    }
    Ok(SweepReport {
        rows,
        model_id: format!("{:016x}", model.fingerprint()),
        seed: cfg.seed,
        trials_per_sigma: cfg.trials_per_sigma,
        smooth_first: cfg.smooth_first,
        quantize: cfg.quantize,
    })
}

/// Originals plus `copies` noisy variants per image, sigma drawn uniformly
/// from `sigmas` per variant. The first `n` entries are the originals,
/// bit-identical; variants follow in per-image blocks.
pub fn augment_dataset(
    train: &Dataset,
    sigmas: &[f64],
    copies: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if sigmas.is_empty() {
        return Err(Error::InvalidConfig(
            "augmentation sigma set is empty".into(),
        ));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidConfig(
            "augmentation sigmas must be finite and non-negative".into(),
        ));
    }
    let n = train.len();
    let per_image = train.images().len() / n;
    let mut data = Vec::with_capacity(train.images().len() * (1 + copies));
    data.extend_from_slice(train.images().data());
    let mut labels = train.labels().to_vec();
    for i in 0..n {
        let image = train.image(i);
        for _ in 0..copies {
            let sigma = sigmas[rng.next_below(sigmas.len())];
            let variant = degrade(&image, sigma, rng)?;
            data.extend_from_slice(variant.data());
            labels.push(train.label(i));
        }
    }
    let [c, h, w] = train.image_shape();
    debug_assert_eq!(data.len(), (1 + copies) * n * per_image);
    Dataset::new(Tensor::new(vec![n * (1 + copies), c, h, w], data)?, labels)
}

/// Freezes the fully connected layers and retrains the convolution layers
/// on the noisy dataset. Returns the tuned model and per-epoch losses.
pub fn finetune_on_noise(
    model: &Model,
    noisy: &Dataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<(Model, Vec<f64>)> {
    let mut tuned = model.clone();
    tuned.set_frozen(FreezeSelector::FcLayers);
    let losses = tuned.sgd_train(noisy, epochs, learning_rate, batch_size, rng)?;
    Ok((tuned, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{Activation, LayerSpec, LossKind};
    use crate::dft::dft2;
    use crate::io::synth_dataset;

    /// A model whose prediction ignores its input: zero weights, biased
    /// fully connected output.
    fn oracle_model(class: usize) -> Model {
        let mut model = Model::new(
            [1, 8, 8],
            vec![LayerSpec::FullyConnected { out_units: 3 }],
            LossKind::SoftmaxCrossEntropy,
            3,
            &mut Rng::new(1),
        )
        .unwrap();
        let zero = Tensor::zeros(model.params()[0].shape().to_vec());
        *model.param_mut(0) = zero;
        let mut bias = Tensor::zeros(vec![3]);
        bias.set(&[class], 1.0);
        *model.param_mut(1) = bias;
        model
    }

    fn tiny_test_set(n: usize) -> Dataset {
        let images = Tensor::gaussian(vec![n, 1, 8, 8], 30.0, &mut Rng::new(5))
            .unwrap()
            .clamp(0.0, 255.0);
        Dataset::new(images, vec![1; n]).unwrap()
    }

    #[test]
    fn degrade_sigma_zero_is_identity() {
        let image = Tensor::filled(vec![1, 4, 4], 77.0);
        let out = degrade(&image, 0.0, &mut Rng::new(2)).unwrap();
        assert!(out.bits_eq(&image));
    }

    #[test]
    fn quantize_rounds_to_whole_levels_in_range() {
        let image = Tensor::new(vec![1, 1, 4], vec![0.2, 11.5, 254.7, 255.0]).unwrap();
        let out = quantize_intensities(&image);
        assert_eq!(out.data(), &[0.0, 12.0, 255.0, 255.0]);
        let noisy = degrade(
            &Tensor::filled(vec![1, 8, 8], 128.0),
            7.0,
            &mut Rng::new(21),
        )
        .unwrap();
        let rounded = quantize_intensities(&noisy);
        assert!(rounded
            .data()
            .iter()
            .all(|&v| v == v.round() && (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn degrade_clamps_saturated_pixels() {
        let image = Tensor::filled(vec![1, 8, 8], 255.0);
        let sigma = 10.0;
        let noisy = degrade(&image, sigma, &mut Rng::new(3)).unwrap();
        let noise = Tensor::gaussian(vec![1, 8, 8], sigma, &mut Rng::new(3)).unwrap();
        for (&out, &n) in noisy.data().iter().zip(noise.data()) {
            assert!(out <= 255.0);
            if n >= 0.0 {
                assert_eq!(out, 255.0);
            }
        }
    }

    #[test]
    fn degrade_rejects_negative_sigma() {
        let image = Tensor::zeros(vec![1, 4, 4]);
        assert!(matches!(
            degrade(&image, -1.0, &mut Rng::new(4)),
            Err(Error::NegativeSigma { .. })
        ));
    }

    #[test]
    fn sigma_one_rarely_moves_a_pixel_more_than_four_levels() {
        let image = Tensor::filled(vec![1_000_000], 128.0);
        let noisy = degrade(&image, 1.0, &mut Rng::new(5)).unwrap();
        let outliers = noisy
            .data()
            .iter()
            .filter(|&&v| (v - 128.0).abs() > 4.0)
            .count();
        assert!(outliers < 100, "outliers {outliers}");
    }

    #[test]
    fn smooth_keeps_constant_images_and_shape() {
        let image = Tensor::filled(vec![2, 5, 7], 42.0);
        let out = smooth(&image).unwrap();
        assert_eq!(out.shape(), image.shape());
        for &v in out.data() {
            assert!((v - 42.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_rejects_tiny_images() {
        assert!(matches!(
            smooth(&Tensor::zeros(vec![1, 2, 5])),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn smooth_stays_in_intensity_range() {
        let mut rng = Rng::new(6);
        let image = Tensor::gaussian(vec![1, 8, 8], 80.0, &mut rng)
            .unwrap()
            .clamp(0.0, 255.0);
        let out = smooth(&image).unwrap();
        assert!(out.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn smoothing_kernel_response_is_monotone_lowpass() {
        let kernel = reference_filter(ReferenceFilter::Gaussian3HalfSigma);
        let magnitude = dft2(&kernel, 64).unwrap().magnitude();
        assert!((magnitude.at(&[0, 0]) - 1.0).abs() < 1e-9);
        for axis in 0..2 {
            let mut previous = f64::INFINITY;
            for e in 0..=32usize {
                let index = if axis == 0 { [e, 0] } else { [0, e] };
                let m = magnitude.at(&index);
                assert!(m <= previous + 1e-12, "axis {axis} bin {e}");
                previous = m;
            }
        }
    }

    #[test]
    fn input_ignoring_oracle_sweeps_at_full_accuracy() {
        let model = oracle_model(1);
        let test = tiny_test_set(4);
        let cfg = SweepConfig {
            trials_per_sigma: 3,
            ..SweepConfig::default()
        };
        let report = run_sweep(&model, &test, &cfg).unwrap();
        for row in &report.rows {
            assert_eq!(row.accuracy, 1.0);
            assert_eq!(row.images_evaluated, 4 * 3);
        }
    }

    #[test]
    fn sigma_zero_sweep_is_exact_by_construction() {
        let model = oracle_model(1);
        let test = tiny_test_set(3);
        let cfg = SweepConfig {
            sigmas: vec![0.0],
            trials_per_sigma: 2,
            ..SweepConfig::default()
        };
        let report = run_sweep(&model, &test, &cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].accuracy, 1.0);
    }

    #[test]
    fn sweep_rejects_models_with_no_clean_correct_images() {
        let model = oracle_model(0);
        let test = tiny_test_set(3); // labels are all 1
        assert!(matches!(
            run_sweep(&model, &test, &SweepConfig::default()),
            Err(Error::NoCorrectImages)
        ));
    }

    #[test]
    fn sweep_is_bit_deterministic() {
        let mut model = Model::desk_cnn(
            [1, 16, 16],
            3,
            Activation::Relu,
            LossKind::SoftmaxCrossEntropy,
            &mut Rng::new(7),
        )
        .unwrap();
        let train = synth_dataset(10, 16, &mut Rng::new(9)).unwrap();
        model
            .sgd_train(&train, 5, 0.3, 16, &mut Rng::new(8))
            .unwrap();
        let test = synth_dataset(4, 16, &mut Rng::new(10)).unwrap();
        let cfg = SweepConfig {
            sigmas: vec![5.0, 20.0],
            trials_per_sigma: 4,
            ..SweepConfig::default()
        };
        let a = run_sweep(&model, &test, &cfg).unwrap();
        let b = run_sweep(&model, &test, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_config_validation() {
        let not_increasing = SweepConfig {
            sigmas: vec![1.0, 1.0],
            ..SweepConfig::default()
        };
        assert!(not_increasing.validate().is_err());
        let zero_trials = SweepConfig {
            trials_per_sigma: 0,
            ..SweepConfig::default()
        };
        assert!(zero_trials.validate().is_err());
    }

    #[test]
    fn augment_counts_and_originals() {
        let train = synth_dataset(4, 12, &mut Rng::new(11)).unwrap(); // 12 images
        let augmented = augment_dataset(&train, &AUGMENT_SIGMAS, 10, &mut Rng::new(12)).unwrap();
        assert_eq!(augmented.len(), 12 * 11);
        for i in 0..train.len() {
            assert!(augmented.image(i).bits_eq(&train.image(i)));
            assert_eq!(augmented.label(i), train.label(i));
        }
        let mut original_hist = [0usize; 3];
        for &l in train.labels() {
            original_hist[l] += 1;
        }
        let mut augmented_hist = [0usize; 3];
        for &l in augmented.labels() {
            augmented_hist[l] += 1;
        }
        for class in 0..3 {
            assert_eq!(augmented_hist[class], 11 * original_hist[class]);
        }
    }

    #[test]
    fn augment_with_zero_copies_is_identity() {
        let train = synth_dataset(2, 10, &mut Rng::new(13)).unwrap();
        let augmented = augment_dataset(&train, &AUGMENT_SIGMAS, 0, &mut Rng::new(14)).unwrap();
        assert_eq!(augmented.len(), train.len());
        assert!(augmented.images().bits_eq(train.images()));
    }

    #[test]
    fn finetune_freezes_fully_connected_parameters() {
        let mut model = Model::desk_cnn(
            [1, 16, 16],
            3,
            Activation::Relu,
            LossKind::SoftmaxCrossEntropy,
            &mut Rng::new(15),
        )
        .unwrap();
        let train = synth_dataset(5, 16, &mut Rng::new(16)).unwrap();
        model
            .sgd_train(&train, 3, 0.3, 16, &mut Rng::new(17))
            .unwrap();
        let noisy = augment_dataset(&train, &AUGMENT_SIGMAS, 2, &mut Rng::new(18)).unwrap();
        let (tuned, losses) =
            finetune_on_noise(&model, &noisy, 2, 0.1, 16, &mut Rng::new(19)).unwrap();
        assert_eq!(losses.len(), 2);
        let mut conv_changed = false;
        for i in 0..model.params().len() {
            let layer = &model.layers()[model.param_layer(i)];
            let same = model.params()[i].bits_eq(&tuned.params()[i]);
            match layer {
                LayerSpec::FullyConnected { .. } => assert!(same, "fc tensor {i} changed"),
                LayerSpec::Conv { .. } => conv_changed |= !same,
                _ => {}
            }
        }
        assert!(conv_changed);
    }
}
