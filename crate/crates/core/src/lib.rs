//! Unsupervised superpixel masks for mask-conditioned CT synthesis, with the
//! preprocessing, mask editing and evaluation tooling around them.

pub mod cli;
pub mod components;
pub mod config;
pub mod edit;
pub mod error;
pub mod image;
pub mod imaging;
pub mod io;
pub mod metrics;
pub mod umask;

pub use error::{Error, Result};
pub use image::{GrayImage, SegMask, ValueSpace};
