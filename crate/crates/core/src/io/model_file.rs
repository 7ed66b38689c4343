//! Model persistence: a text header describing the architecture followed
//! by the parameters as little-endian `f32`, weights-then-bias in layer
//! order. A small sibling format stores single tensors (e.g. found noise).

use std::path::Path;

use super::dataset::{field, parse_key_values};
use crate::convnet::{LayerSpec, LossKind, Model};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

const MODEL_MAGIC: &[u8] = b"SCNL1\n";
const TENSOR_MAGIC: &[u8] = b"SCNT1\n";

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(&path, model_bytes(model)).map_err(|e| Error::io(&path, e))
}

pub fn model_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    let [c, h, w] = model.input_shape();
    out.extend_from_slice(format!("input channels={c} height={h} width={w}\n").as_bytes());
    for layer in model.layers() {
        let line = match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
            } => format!(
                "conv out_channels={out_channels} kernel_h={kernel_h} kernel_w={kernel_w} stride={stride}"
            ),
            LayerSpec::MaxPool { window, stride } => {
                format!("maxpool window={window} stride={stride}")
            }
            LayerSpec::Relu => "relu".to_string(),
            LayerSpec::Tanh => "tanh".to_string(),
            LayerSpec::FullyConnected { out_units } => {
                format!("fully_connected out_units={out_units}")
            }
        };
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(format!("loss {}\n", model.loss_kind().name()).as_bytes());
    out.extend_from_slice(format!("num_classes {}\n", model.num_classes()).as_bytes());
    out.extend_from_slice(b"DATA\n");
    for param in model.params() {
        for &v in param.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    parse_model(&bytes)
}

pub fn parse_model(bytes: &[u8]) -> Result<Model> {
    let rest = bytes
        .strip_prefix(MODEL_MAGIC)
        .ok_or_else(|| Error::BadMagic {
            expected: String::from_utf8_lossy(MODEL_MAGIC).trim().to_string(),
        })?;
    let marker = rest
        .windows(6)
        .position(|w| w == b"\nDATA\n")
        .ok_or_else(|| Error::MalformedHeader("missing DATA marker".into()))?;
    let header = std::str::from_utf8(&rest[..marker])
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    let payload = &rest[marker + 6..];

    let mut input_shape = None;
    let mut layers = Vec::new();
    let mut loss_kind = None;
    let mut num_classes = None;
    for line in header.lines() {
        let (kind, args) = line.split_once(' ').unwrap_or((line, ""));
        match kind {
            "input" => {
                let fields = parse_key_values(args)?;
                input_shape = Some([
                    field(&fields, "channels")?,
                    field(&fields, "height")?,
                    field(&fields, "width")?,
                ]);
            }
            "conv" => {
                let fields = parse_key_values(args)?;
                layers.push(LayerSpec::Conv {
                    out_channels: field(&fields, "out_channels")?,
                    kernel_h: field(&fields, "kernel_h")?,
                    kernel_w: field(&fields, "kernel_w")?,
                    stride: field(&fields, "stride")?,
                });
            }
            "maxpool" => {
                let fields = parse_key_values(args)?;
                layers.push(LayerSpec::MaxPool {
                    window: field(&fields, "window")?,
                    stride: field(&fields, "stride")?,
                });
            }
            "relu" => layers.push(LayerSpec::Relu),
            "tanh" => layers.push(LayerSpec::Tanh),
            "fully_connected" => {
                let fields = parse_key_values(args)?;
                layers.push(LayerSpec::FullyConnected {
                    out_units: field(&fields, "out_units")?,
                });
            }
            "loss" => loss_kind = Some(LossKind::from_name(args)?),
            "num_classes" => {
                num_classes = Some(args.parse().map_err(|_| {
                    Error::MalformedHeader(format!("num_classes `{args}` is not a count"))
                })?)
            }
            other => {
                return Err(Error::MalformedHeader(format!(
                    "unknown line kind `{other}`"
                )));
            }
        }
    }
    let input_shape =
        input_shape.ok_or_else(|| Error::MalformedHeader("missing input line".into()))?;
    let loss_kind = loss_kind.ok_or_else(|| Error::MalformedHeader("missing loss line".into()))?;
    let num_classes =
        num_classes.ok_or_else(|| Error::MalformedHeader("missing num_classes line".into()))?;

    let mut model = Model::new(
        input_shape,
        layers,
        loss_kind,
        num_classes,
        &mut Rng::new(0),
    )?;
    let expected: usize = model.params().iter().map(Tensor::len).sum();
    if payload.len() != expected * 4 {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len() / 4,
        });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|chunk| f32::from_le_bytes(chunk.try_into().expect("chunk of 4")) as f64);
    let params = model
        .params()
        .iter()
        .map(|p| {
            let data: Vec<f64> = values.by_ref().take(p.len()).collect();
            Tensor::new(p.shape().to_vec(), data).expect("sizes verified above")
        })
        .collect();
    model.set_params(params);
    Ok(model)
}

/// Writes one tensor as `SCNT1` (shape line + f32 little-endian payload).
pub fn save_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
    out.extend_from_slice(format!("shape {}\nDATA\n", dims.join(" ")).as_bytes());
    for &v in tensor.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    parse_tensor(&bytes)
}

pub fn parse_tensor(bytes: &[u8]) -> Result<Tensor> {
    let rest = bytes
        .strip_prefix(TENSOR_MAGIC)
        .ok_or_else(|| Error::BadMagic {
            expected: String::from_utf8_lossy(TENSOR_MAGIC).trim().to_string(),
        })?;
    let marker = rest
        .windows(6)
        .position(|w| w == b"\nDATA\n")
        .ok_or_else(|| Error::MalformedHeader("missing DATA marker".into()))?;
    let header = std::str::from_utf8(&rest[..marker])
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    let dims = header
        .strip_prefix("shape ")
        .ok_or_else(|| Error::MalformedHeader("missing shape line".into()))?;
    let shape: Vec<usize> = dims
        .split_whitespace()
        .map(|d| {
            d.parse()
                .map_err(|_| Error::MalformedHeader(format!("bad extent `{d}`")))
        })
        .collect::<Result<_>>()?;
    let payload = &rest[marker + 6..];
    let expected: usize = shape.iter().product();
    if payload.len() != expected * 4 {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len() / 4,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|chunk| f32::from_le_bytes(chunk.try_into().expect("chunk of 4")) as f64)
        .collect();
    Tensor::new(shape, data)
}
