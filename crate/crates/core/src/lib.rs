//! Temporal-inconsistency deepfake detector: data, augmentation, model, training and evaluation.
// `!(x > 0.0)` also rejects NaN; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attention;
pub mod augment;
pub mod checkpoint;
pub mod clips;
pub mod config;
pub mod contrastive;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod mve;
pub mod optim;
pub mod parallel;
pub mod params;
pub mod seed;
pub mod selfcheck;
pub mod trainer;

pub use error::{Error, Result};
