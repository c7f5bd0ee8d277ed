//! Automated sickle-cell screening from low-contrast, unstained microscope images.
//!
//! The pipeline has two stages:
//!
//! 1. **Segmentation.** A random forest classifies every pixel as background,
//!    cell boundary or cell interior from the raw intensities of the
//!    surrounding 21×21 patch ([`segmenter`], built on [`forest`]).
//! 2. **Classification.** Connected interior regions are measured
//!    ([`geometry`]): form factor, roundness and solidity. Low-solidity cells
//!    are excluded and the roundness (or form-factor) histogram of the
//!    remaining cells is fed to a random forest or an RBF-kernel SVM
//!    ([`svm`]) that labels the sample as sickled, trait or normal
//!    ([`classifier`]). Two samples of one subject, treated at 0.1 % and
//!    0.3 % scavenger concentration, are fused into a subject diagnosis.
//!
//! [`synthgen`] produces a seeded synthetic blood-smear corpus with exact
//! ground-truth masks, and [`pipeline`] runs the whole experiment on it.

pub mod classifier;
pub mod config;
pub mod error;
pub mod forest;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod seed;
pub mod segmenter;
pub mod svm;
pub mod synthgen;

pub use error::{Error, Result};
