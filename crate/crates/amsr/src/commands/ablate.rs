use std::path::PathBuf;

use amsr_core::data::{compute_mean, ImagePair, NormStats};
use amsr_core::metrics::{aggregate, evaluate_pair};
use amsr_core::model::build_model;
use amsr_core::model::ModelParams;
use amsr_core::train::{EpochSummary, OptimState, TrainHooks, Trainer};

use super::{create_dir, load_images, load_pairs, super_resolve};
use crate::checkpoint::Checkpoint;
use crate::error::{AppError, Result};
use crate::manifest::Manifest;
use crate::report::{self, AblationReport, AblationRow};
use crate::runconfig::RunConfig;

/// Branch flags (non-local, second-order, multi-scale) of the four rows.
pub const ABLATION_VARIANTS: [(bool, bool, bool); 4] = [
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, true),
];

#[derive(Default)]
struct LastEpoch(f64);

impl TrainHooks for LastEpoch {
    fn on_epoch_end(
        &mut self,
        summary: &EpochSummary,
        _params: &ModelParams<f32>,
        _optim: &OptimState,
    ) -> std::result::Result<(), String> {
        self.0 = summary.mean_loss;
        Ok(())
    }
}

/// Trains the four branch variants from the same seed and sample stream,
/// scores each on the validation manifest and writes
/// `<out_dir>/ablation.json` plus its text table.
pub fn ablate(cfg: &RunConfig) -> Result<(AblationReport, String, PathBuf)> {
    let val_path = cfg
        .val_manifest
        .as_ref()
        .ok_or_else(|| AppError::config("val_manifest", "required by ablate"))?;
    let train_m = Manifest::load(&cfg.train_manifest)?;
    let val_m = Manifest::load(val_path)?;
    let scale = cfg.model.scale;
    let pairs = load_pairs(&train_m, scale)?;
    let val: Vec<ImagePair> = load_pairs(&val_m, scale)?;
    let stats = match cfg.mean.fixed() {
        Some(rgb) => NormStats::new(rgb)?,
        None => compute_mean(&load_images(&train_m)?)?,
    };
    let mut rows = Vec::new();
    for (nl, so, ms) in ABLATION_VARIANTS {
        let model = cfg.model.clone().with_branches(nl, so, ms);
        let params = build_model(&model, cfg.init_seed)?;
        let mut trainer = Trainer::new(model.clone(), cfg.train.clone(), stats, &pairs, params)?;
        let mut last = LastEpoch::default();
        trainer.fit(&mut last)?;
        let ck = Checkpoint {
            config: model,
            stats,
            params: trainer.into_params(),
        };
        let records = val
            .iter()
            .map(|p| Ok(evaluate_pair(&p.id, &p.hr, &super_resolve(&ck, &p.lr, cfg.tile)?, scale)?))
            .collect::<Result<Vec<_>>>()?;
        let psnr = aggregate(&records).psnr_db;
        rows.push(AblationRow {
            nonlocal: nl,
            second_order: so,
            multiscale: ms,
            psnr_db: psnr.is_finite().then_some(psnr),
            final_loss: last.0,
        });
    }
    let report = AblationReport {
        report_version: report::REPORT_VERSION,
        tool: report::TOOL.into(),
        tool_version: report::TOOL_VERSION.into(),
        kind: "ablation".into(),
        dataset: val_m.name.clone(),
        scale,
        config_hash: report::config_hash(&format!("kind=ablation\n{}", cfg.canonical)),
        rows,
        published_label: format!("{} (Set5 x2)", crate::published::LABEL),
        published: report::published_ablation(),
    };
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("ablation.json");
    let table = report::write(&path, &report, report::render_ablation)?;
    Ok((report, table, path))
}
