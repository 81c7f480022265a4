use std::path::Path;

use amsr_core::data::{MeanAccumulator, NormStats};

use crate::error::Result;
use crate::manifest::Manifest;
use crate::png;

/// Per-channel mean over every pixel of every manifest image.
pub fn mean(manifest: &Path) -> Result<NormStats> {
    let m = Manifest::load(manifest)?;
    let mut acc = MeanAccumulator::default();
    for p in &m.entries {
        acc.add(&png::load(p)?);
    }
    Ok(acc.finish()?)
}

pub fn format_mean(stats: &NormStats) -> String {
    let [r, g, b] = stats.mean_rgb;
    format!("{r:.4} {g:.4} {b:.4}")
}
