use std::path::{Path, PathBuf};

use amsr_core::data::{check_scale, make_lr, upscale_bicubic};
use amsr_core::metrics::{aggregate, evaluate_pair, MetricRecord};
use amsr_core::model::ModelConfig;
use rayon::prelude::*;

use super::super_resolve;
use crate::checkpoint::{self, Checkpoint};
use crate::error::{AppError, Result};
use crate::manifest::{stem, Manifest};
use crate::png;
use crate::report::{self, AggregateEntry, EvalReport, RecordEntry};

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Bicubic,
    Model { checkpoint: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub manifest: PathBuf,
    pub scale: usize,
    pub method: Method,
    /// LR tile side for model inference.
    pub tile: usize,
    pub report: Option<PathBuf>,
}

fn load_model(path: &Path, scale: usize) -> Result<(Checkpoint, String)> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let ck = checkpoint::decode(&bytes, path)?;
    if ck.config.scale != scale {
        let expected = ModelConfig { scale, ..ck.config.clone() };
        let reason = match ck.params.check_against(&expected) {
            Err(e) => e.to_string(),
            Ok(()) => String::new(),
        };
        return Err(AppError::integrity(
            path,
            format!("checkpoint is for x{} but x{scale} was requested: {reason}", ck.config.scale),
        ));
    }
    Ok((ck, report::file_digest(&bytes)))
}

/// Scores every manifest image: modcrop, degrade, upscale, then luma
/// PSNR/SSIM with `shave = scale`. Records keep manifest order.
pub fn eval(opts: &EvalOptions) -> Result<EvalReport> {
    check_scale(opts.scale)?;
    let m = Manifest::load(&opts.manifest)?;
    let (model, method_name, digest) = match &opts.method {
        Method::Bicubic => (None, "bicubic", String::new()),
        Method::Model { checkpoint } => {
            let (ck, digest) = load_model(checkpoint, opts.scale)?;
            (Some(ck), "model", digest)
        }
    };
    let records: Vec<MetricRecord> = m
        .entries
        .par_iter()
        .map(|p| {
            let hr = png::load(p)?.modcrop(opts.scale)?;
            let lr = make_lr(&hr, opts.scale)?;
            let sr = match &model {
                None => upscale_bicubic(&lr, opts.scale)?,
                Some(ck) => super_resolve(ck, &lr, opts.tile)?,
            };
            Ok(evaluate_pair(&stem(p), &hr, &sr, opts.scale)?)
        })
        .collect::<Result<_>>()?;
    let agg = aggregate(&records);
    let mut canonical = format!(
        "kind=eval\nmethod={method_name}\nscale={}\ndataset={}\n",
        opts.scale, m.name
    );
    if model.is_some() {
        canonical += &format!("tile={}\ncheckpoint_sha256={digest}\n", opts.tile);
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let report = EvalReport {
        report_version: report::REPORT_VERSION,
        tool: report::TOOL.into(),
        tool_version: report::TOOL_VERSION.into(),
        kind: "eval".into(),
        method: method_name.into(),
        dataset: m.name.clone(),
        scale: opts.scale,
        config_hash: report::config_hash(&canonical),
        records: records
            .iter()
            .map(|r| RecordEntry {
                image_id: r.image_id.clone(),
                psnr_db: finite(r.psnr_db),
                ssim: r.ssim,
                scale: r.scale,
                shave: r.shave,
            })
            .collect(),
        aggregate: AggregateEntry {
            psnr_db: finite(agg.psnr_db),
            ssim: finite(agg.ssim),
            count: agg.count,
            excluded: agg.excluded,
        },
        published: report::published_benchmark(&m.name, opts.scale),
    };
    if let Some(path) = &opts.report {
        report::write(path, &report, report::render_eval)?;
    }
    Ok(report)
}
