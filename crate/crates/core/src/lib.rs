//! Overhead-line defect recognition on device regions of interest.
//!
//! The pipeline runs SLIC superpixels over a cropped ROI, trains a small
//! convolutional network on that ROI alone to obtain a coarse label map,
//! folds the map into nested 2..5-region layers, aligns a standard device
//! region against every layer region and applies per-class rules to the
//! resulting similarity scores.

pub mod config;
pub mod defects;
pub mod evaluation;
pub mod hierarchy;
pub mod histogram;
pub mod imaging;
pub mod mask;
pub mod muis;
pub mod similarity;
pub mod slic;
pub mod synthgen;
