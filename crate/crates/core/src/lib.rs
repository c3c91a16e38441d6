//! Acoustic authentication of bullion coins.
//!
//! A strike recording is reduced to a normalized magnitude spectrum, passed
//! through an autoencoder trained only on genuine coins, and judged by how
//! far the resonance peaks of the reconstruction drift from those of the
//! input. Coins within the calibrated threshold are then labelled by a small
//! classifier on the autoencoder's latent code.

pub mod audio_io;
pub mod analysis;
pub mod augment;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod error;
pub mod models;
pub mod nn;
pub mod peaks;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
