use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use amsr_core::data::{check_scale, make_lr};
use rayon::prelude::*;

use super::create_dir;
use crate::error::{AppError, Result};
use crate::manifest::{stem, Manifest};
use crate::png;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DegradeOutcome {
    /// `(hr copy, lr)` per successful entry, in manifest order.
    pub written: Vec<(PathBuf, PathBuf)>,
    pub failures: Vec<(PathBuf, String)>,
}

/// Writes `<stem>.png` (modcropped HR) and `<stem>_x<scale>.png` (LR) for
/// every entry. A failing entry does not stop the others.
pub fn degrade(manifest: &Path, scale: usize, out_dir: &Path) -> Result<DegradeOutcome> {
    check_scale(scale)?;
    let m = Manifest::load(manifest)?;
    let mut stems = BTreeSet::new();
    for p in &m.entries {
        if !stems.insert(stem(p)) {
            return Err(AppError::integrity(
                manifest,
                format!("two entries share the file name `{}`", stem(p)),
            ));
        }
    }
    create_dir(out_dir)?;
    let results: Vec<Result<(PathBuf, PathBuf)>> = m
        .entries
        .par_iter()
        .map(|p| {
            let hr = png::load(p)?.modcrop(scale)?;
            let lr = make_lr(&hr, scale)?;
            let s = stem(p);
            let hr_out = out_dir.join(format!("{s}.png"));
            let lr_out = out_dir.join(format!("{s}_x{scale}.png"));
            png::save(&hr_out, &hr)?;
            png::save(&lr_out, &lr)?;
            Ok((hr_out, lr_out))
        })
        .collect();
    let mut out = DegradeOutcome::default();
    for (p, r) in m.entries.iter().zip(results) {
        match r {
            Ok(w) => out.written.push(w),
            Err(e) => out.failures.push((p.clone(), e.to_string())),
        }
    }
    Ok(out)
}
