//! Speech forensics: higher-order spectral and cepstral features, classical
//! classifiers and a convolutional-recurrent network for separating human
//! from synthesized speech and attributing synthetic speech to its engine.

pub mod audio_io;
pub mod classical_ml;
pub mod crnn;
pub mod bispectral;
pub mod cepstral;
pub mod features;
pub mod spectral;
pub mod synth;
