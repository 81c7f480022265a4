//! Dataset manifests: one HR image path per line, `#` starts a comment,
//! relative paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    /// File stem of the manifest, used as the dataset name in reports.
    pub name: String,
    pub entries: Vec<PathBuf>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path, name: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let path = base.join(line);
            if !seen.insert(path.clone()) {
                return Err(AppError::integrity(
                    origin,
                    format!("line {}: duplicate entry `{line}`", lineno + 1),
                ));
            }
            entries.push(path);
        }
        if entries.is_empty() {
            return Err(AppError::integrity(origin, "manifest lists no images"));
        }
        Ok(Manifest {
            name: name.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        Self::parse(&text, base, name, path)
    }

    /// Display ids (file stems) in manifest order.
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|p| stem(p)).collect()
    }
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
