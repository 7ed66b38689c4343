//! Dataset ingestion: CIFAR-10 binary batches, a deterministic synthetic
//! shape generator for CI-scale runs, and a simple persisted dataset format
//! so augmented sets can be handed between CLI invocations.

use std::path::Path;

use crate::convnet::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// CIFAR-10 record: 1 label byte + 3 channels of 32x32 pixels.
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Parses a CIFAR-10 binary batch file into a `[n, 3, 32, 32]` dataset
/// with intensities in `[0, 255]`.
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    parse_cifar10(&bytes)
}

pub(crate) fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::RecordSize {
            size: bytes.len(),
            record: CIFAR_RECORD,
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3 * 32 * 32);
    for record in 0..n {
        let base = record * CIFAR_RECORD;
        let label = bytes[base] as usize;
        if label > 9 {
            return Err(Error::LabelOutOfRange {
                index: record,
                label,
                num_classes: 10,
            });
        }
        labels.push(label);
        data.extend(
            bytes[base + 1..base + CIFAR_RECORD]
                .iter()
                .map(|&b| b as f64),
        );
    }
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], data)?, labels)
}

/// The three synthetic classes, in label order.
pub const SYNTH_CLASS_NAMES: [&str; 3] = ["square", "cross", "circle"];

/// Deterministic grayscale shapes (square / cross / circle) with seeded
/// random position and scale over a noisy background. Labels interleave
/// 0,1,2,0,1,2,... so unshuffled batches stay balanced.
pub fn synth_dataset(n_per_class: usize, size: usize, rng: &mut Rng) -> Result<Dataset> {
    if size < 8 {
        return Err(Error::InvalidConfig(format!(
            "synthetic image size must be at least 8, got {size}"
        )));
    }
    let n = 3 * n_per_class;
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n_per_class {
        for class in 0..3 {
            draw_shape(class, size, rng, &mut data);
            labels.push(class);
        }
    }
    Dataset::new(Tensor::new(vec![n, 1, size, size], data)?, labels)
}

fn draw_shape(class: usize, size: usize, rng: &mut Rng, out: &mut Vec<f64>) {
    let lo = (size / 5).max(2);
    let hi = size / 3;
    let half = lo + rng.next_below(hi - lo + 1);
    let cy = half + rng.next_below(size - 2 * half);
    let cx = half + rng.next_below(size - 2 * half);
    // Contrast varies per image so trained margins stay moderate.
    let background = rng.next_range(40.0, 90.0);
    let foreground = rng.next_range(110.0, 200.0);
    let start = out.len();
    for _ in 0..size * size {
        out.push((background + 2.0 * rng.next_normal()).clamp(0.0, 255.0));
    }
    let h = half as isize;
    for y in 0..size {
        for x in 0..size {
            let dy = y as isize - cy as isize;
            let dx = x as isize - cx as isize;
            let inside = match class {
                0 => dy.abs() <= h && dx.abs() <= h,
                1 => (dy.abs() <= 1 && dx.abs() <= h) || (dx.abs() <= 1 && dy.abs() <= h),
                _ => dy * dy + dx * dx <= h * h,
            };
            if inside {
                out[start + y * size + x] = foreground;
            }
        }
    }
}

/// Fixed train/test pair used by the reference pipelines: independent
/// streams derived from one seed.
pub fn synth_split(
    n_train_per_class: usize,
    n_test_per_class: usize,
    size: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let train = synth_dataset(n_train_per_class, size, &mut Rng::new(Rng::derive(seed, 1)))?;
    let test = synth_dataset(n_test_per_class, size, &mut Rng::new(Rng::derive(seed, 2)))?;
    Ok((train, test))
}

const DATASET_MAGIC: &[u8] = b"SCND1\n";

/// Writes a dataset as `SCND1` (text header, then labels and f32 pixels).
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let [c, h, w] = dataset.image_shape();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(DATASET_MAGIC);
    bytes.extend_from_slice(
        format!(
            "count={} channels={c} height={h} width={w}\nDATA\n",
            dataset.len()
        )
        .as_bytes(),
    );
    for &label in dataset.labels() {
        bytes.push(label as u8);
    }
    for &v in dataset.images().data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    parse_dataset(&bytes)
}

pub(crate) fn parse_dataset(bytes: &[u8]) -> Result<Dataset> {
    let rest = bytes
        .strip_prefix(DATASET_MAGIC)
        .ok_or_else(|| Error::BadMagic {
            expected: String::from_utf8_lossy(DATASET_MAGIC).trim().to_string(),
        })?;
    let header_end = rest
        .windows(6)
        .position(|w| w == b"\nDATA\n")
        .ok_or_else(|| Error::MalformedHeader("missing DATA marker".into()))?;
    let header = std::str::from_utf8(&rest[..header_end])
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    let fields = parse_key_values(header)?;
    let count = field(&fields, "count")?;
    let channels = field(&fields, "channels")?;
    let height = field(&fields, "height")?;
    let width = field(&fields, "width")?;
    let payload = &rest[header_end + 6..];
    let pixel_values = count * channels * height * width;
    let expected = count + pixel_values * 4;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len(),
        });
    }
    let labels: Vec<usize> = payload[..count].iter().map(|&b| b as usize).collect();
    let mut data = Vec::with_capacity(pixel_values);
    for chunk in payload[count..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().expect("chunk of 4")) as f64);
    }
    Dataset::new(
        Tensor::new(vec![count, channels, height, width], data)?,
        labels,
    )
}

pub(crate) fn parse_key_values(line: &str) -> Result<Vec<(String, String)>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::MalformedHeader(format!("expected key=value, got `{tok}`")))
        })
        .collect()
}

pub(crate) fn field(fields: &[(String, String)], key: &str) -> Result<usize> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::MalformedHeader(format!("missing field `{key}`")))?
        .1
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("field `{key}` is not a count")))
}
