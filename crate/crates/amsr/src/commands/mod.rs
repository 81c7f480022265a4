//! Command implementations. Each returns a structured result; printing
//! and exit codes are left to the binary.

mod ablate;
mod degrade;
mod eval;
mod gradcheck;
mod infer;
mod mean;
mod train;

pub use ablate::{ablate, ABLATION_VARIANTS};
pub use degrade::{degrade, DegradeOutcome};
pub use eval::{eval, EvalOptions, Method};
pub use gradcheck::gradcheck;
pub use infer::{infer, super_resolve};
pub use mean::{format_mean, mean};
pub use train::{train, train_warnings, TrainOutcome};

use std::path::Path;

use amsr_core::data::ImagePair;
use amsr_core::imaging::ImageU8;
use rayon::prelude::*;

use crate::error::Result;
use crate::manifest::{stem, Manifest};
use crate::png;

/// Decodes every manifest entry in parallel, keeping manifest order.
pub fn load_images(manifest: &Manifest) -> Result<Vec<ImageU8>> {
    manifest.entries.par_iter().map(|p| png::load(p)).collect()
}

/// HR/LR pairs for every manifest entry, keyed by file stem.
pub fn load_pairs(manifest: &Manifest, scale: usize) -> Result<Vec<ImagePair>> {
    manifest
        .entries
        .par_iter()
        .map(|p| Ok(ImagePair::from_hr(&stem(p), &png::load(p)?, scale)?))
        .collect()
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::AppError::io(dir, e))
}
