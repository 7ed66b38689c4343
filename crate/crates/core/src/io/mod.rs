//! Persistence: dataset ingestion and model/tensor files.

mod dataset;
mod model_file;

pub use dataset::{
    load_cifar10, load_dataset, save_dataset, synth_dataset, synth_split, SYNTH_CLASS_NAMES,
};
pub use model_file::{
    load_model, load_tensor, model_bytes, parse_model, parse_tensor, save_model, save_tensor,
};
