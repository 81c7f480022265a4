use std::path::Path;

use amsr_core::data::{image_to_tensor, tensor_to_image};
use amsr_core::imaging::ImageU8;
use amsr_core::model::infer_tiled;

use crate::checkpoint::{self, Checkpoint};
use crate::error::Result;
use crate::png;

/// LR → mean-subtract → network → mean re-add → clamp and round.
pub fn super_resolve(ck: &Checkpoint, lr: &ImageU8, tile: usize) -> Result<ImageU8> {
    let x = ck.stats.normalize(&image_to_tensor::<f32>(lr));
    let y = infer_tiled(&ck.config, &ck.params, &x, tile)?;
    Ok(tensor_to_image(&ck.stats.denormalize(&y), 0)?)
}

pub fn infer(checkpoint: &Path, input: &Path, output: &Path, tile: usize) -> Result<ImageU8> {
    let ck = checkpoint::load(checkpoint)?;
    let lr = png::load(input)?;
    let sr = super_resolve(&ck, &lr, tile)?;
    png::save(output, &sr)?;
    Ok(sr)
}
