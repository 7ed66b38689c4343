//! Training-from-scratch ConvNets and analyzing their noise stability in
//! the frequency domain: kernel spectra, minimal adversarial additive
//! noise, Gaussian-noise robustness sweeps, smoothing preprocessing, and
//! noisy-data augmentation with mean-spectrum comparison.

pub mod attack;
pub mod convnet;
pub mod dft;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;
pub mod spectrum;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
