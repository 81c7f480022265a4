//! Machine-readable reports. Each report is written as JSON; the aligned
//! text table is rendered from the parsed JSON so the two always agree.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};
use crate::published;

pub const REPORT_VERSION: u32 = 1;
pub const TOOL: &str = "amsr";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn config_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub image_id: String,
    /// `None` when the images are identical (infinite PSNR).
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub scale: usize,
    pub shave: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub count: usize,
    pub excluded: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub method: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedBlock {
    pub label: String,
    pub rows: Vec<PublishedRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub kind: String,
    pub method: String,
    pub dataset: String,
    pub scale: usize,
    pub config_hash: String,
    pub records: Vec<RecordEntry>,
    pub aggregate: AggregateEntry,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub published: Option<PublishedBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub nonlocal: bool,
    pub second_order: bool,
    pub multiscale: bool,
    pub psnr_db: Option<f64>,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedAblationRow {
    pub nonlocal: bool,
    pub second_order: bool,
    pub multiscale: bool,
    pub psnr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub report_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub kind: String,
    pub dataset: String,
    pub scale: usize,
    pub config_hash: String,
    pub rows: Vec<AblationRow>,
    pub published_label: String,
    pub published: Vec<PublishedAblationRow>,
}

pub fn published_benchmark(dataset: &str, scale: usize) -> Option<PublishedBlock> {
    published::benchmark(dataset, scale).map(|rows| PublishedBlock {
        label: format!("{} ({dataset} x{scale})", published::LABEL),
        rows: rows
            .into_iter()
            .map(|(m, p, s)| PublishedRow {
                method: m.to_string(),
                psnr_db: p,
                ssim: s,
            })
            .collect(),
    })
}

pub fn published_ablation() -> Vec<PublishedAblationRow> {
    published::ABLATION
        .iter()
        .map(|&(nonlocal, second_order, multiscale, psnr_db)| PublishedAblationRow {
            nonlocal,
            second_order,
            multiscale,
            psnr_db,
        })
        .collect()
}

fn num(v: &Value, digits: usize) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.digits$}"),
        None => "inf".to_string(),
    }
}

fn mark(v: &Value) -> &'static str {
    if v.as_bool() == Some(true) {
        "yes"
    } else {
        "no"
    }
}

fn field<'a>(v: &'a Value, key: &str) -> &'a Value {
    &v[key]
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn header(out: &mut String, v: &Value) {
    let _ = writeln!(
        out,
        "{} {} report v{} ({} {})",
        text(field(v, "tool")),
        text(field(v, "kind")),
        text(field(v, "report_version")),
        text(field(v, "tool")),
        text(field(v, "tool_version")),
    );
}

pub fn render_eval(v: &Value) -> String {
    let mut out = String::new();
    header(&mut out, v);
    for key in ["method", "dataset", "scale", "config_hash"] {
        let _ = writeln!(out, "{key:<12} {}", text(field(v, key)));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<24} {:>10} {:>8}", "image", "PSNR (dB)", "SSIM");
    for r in field(v, "records").as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>8}",
            text(field(r, "image_id")),
            num(field(r, "psnr_db"), 4),
            num(field(r, "ssim"), 4)
        );
    }
    let agg = field(v, "aggregate");
    let _ = writeln!(
        out,
        "{:<24} {:>10} {:>8}",
        format!("mean ({} images)", text(field(agg, "count"))),
        num(field(agg, "psnr_db"), 4),
        num(field(agg, "ssim"), 4)
    );
    for id in field(agg, "excluded").as_array().into_iter().flatten() {
        let _ = writeln!(out, "excluded from PSNR mean (identical): {}", text(id));
    }
    let published = field(v, "published");
    if !published.is_null() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", text(field(published, "label")));
        let _ = writeln!(out, "{:<24} {:>10} {:>8}", "method", "PSNR (dB)", "SSIM");
        for r in field(published, "rows").as_array().into_iter().flatten() {
            let _ = writeln!(
                out,
                "{:<24} {:>10} {:>8}",
                text(field(r, "method")),
                num(field(r, "psnr_db"), 2),
                num(field(r, "ssim"), 4)
            );
        }
    }
    out
}

pub fn render_ablation(v: &Value) -> String {
    let mut out = String::new();
    header(&mut out, v);
    for key in ["dataset", "scale", "config_hash"] {
        let _ = writeln!(out, "{key:<12} {}", text(field(v, key)));
    }
    let _ = writeln!(out);
    let row = |out: &mut String, r: &Value, digits: usize| {
        let _ = writeln!(
            out,
            "{:<10} {:<13} {:<12} {:>10}",
            mark(field(r, "nonlocal")),
            mark(field(r, "second_order")),
            mark(field(r, "multiscale")),
            num(field(r, "psnr_db"), digits)
        );
    };
    let head = format!("{:<10} {:<13} {:<12} {:>10}", "Non-local", "Second-order", "Multi-scale", "PSNR (dB)");
    let _ = writeln!(out, "{head}");
    for r in field(v, "rows").as_array().into_iter().flatten() {
        row(&mut out, r, 4);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{}", text(field(v, "published_label")));
    let _ = writeln!(out, "{head}");
    for r in field(v, "published").as_array().into_iter().flatten() {
        row(&mut out, r, 2);
    }
    out
}

/// Text companion of a JSON report: same path with a `.txt` extension.
pub fn text_path(json: &Path) -> PathBuf {
    json.with_extension("txt")
}

/// Serializes `report`, writes the JSON to `path` and the rendered table
/// next to it; returns the rendered table.
pub fn write<T: Serialize>(path: &Path, report: &T, render: fn(&Value) -> String) -> Result<String> {
    let json = to_json(report)?;
    let value: Value = serde_json::from_str(&json).map_err(|e| AppError::Failed(e.to_string()))?;
    let table = render(&value);
    std::fs::write(path, &json).map_err(|e| AppError::io(path, e))?;
    let tp = text_path(path);
    std::fs::write(&tp, &table).map_err(|e| AppError::io(&tp, e))?;
    Ok(table)
}

pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| AppError::Failed(e.to_string()))?;
    json.push('\n');
    Ok(json)
}
