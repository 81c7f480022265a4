use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use amsr_core::data::{compute_mean, ImagePair, NormStats};
use amsr_core::model::{build_model, ModelConfig, ModelParams};
use amsr_core::train::{EpochSummary, LossRecord, OptimState, TrainHooks, Trainer};

use super::{create_dir, load_images, load_pairs};
use crate::checkpoint::{self, Checkpoint, TrainState};
use crate::error::{AppError, Result};
use crate::manifest::Manifest;
use crate::runconfig::{RunConfig, LONG_RUN_STEPS};

pub const LOSS_LOG: &str = "loss.csv";
pub const LOSS_HEADER: &str = "epoch,iter,lr,loss";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Loss of every step, in order.
    pub steps: Vec<LossRecord>,
    /// Checkpoints written, in order; `best.ckpt` is not listed.
    pub checkpoints: Vec<PathBuf>,
    pub loss_log: PathBuf,
    pub params: ModelParams<f32>,
    pub stats: NormStats,
}

pub fn train_warnings(cfg: &RunConfig) -> Vec<String> {
    let steps = cfg.total_steps();
    let mut out = Vec::new();
    if steps >= LONG_RUN_STEPS {
        out.push(format!(
            "warning: {steps} training steps of batch {} at {}x{}; a run of this size takes days even on a GPU",
            cfg.train.batch, cfg.train.patch, cfg.train.patch
        ));
    }
    out
}

pub fn epoch_checkpoint(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join(format!("epoch_{:04}.ckpt", epoch + 1))
}

struct FileHooks<'a> {
    out_dir: &'a Path,
    model: &'a ModelConfig,
    stats: NormStats,
    log: File,
    log_path: PathBuf,
    steps: Vec<LossRecord>,
    checkpoints: Vec<PathBuf>,
}

impl FileHooks<'_> {
    fn write_checkpoint(&self, path: &Path, params: &ModelParams<f32>, state: Option<TrainState>) -> Result<()> {
        let ck = Checkpoint {
            config: self.model.clone(),
            stats: self.stats,
            params: params.clone(),
        };
        checkpoint::save(path, &ck)?;
        if let Some(state) = state {
            checkpoint::save_state(path, &state)?;
        }
        Ok(())
    }
}

impl TrainHooks for FileHooks<'_> {
    fn on_step(&mut self, record: &LossRecord, logged: bool) -> std::result::Result<(), String> {
        self.steps.push(*record);
        if logged {
            writeln!(self.log, "{},{},{},{}", record.epoch + 1, record.iter, record.lr, record.loss)
                .map_err(|e| format!("{}: {e}", self.log_path.display()))?;
        }
        Ok(())
    }

    fn on_epoch_end(
        &mut self,
        summary: &EpochSummary,
        params: &ModelParams<f32>,
        optim: &OptimState,
    ) -> std::result::Result<(), String> {
        let state = || TrainState {
            optim: optim.clone(),
            next_epoch: summary.epoch + 1,
        };
        if summary.checkpoint_due {
            let path = epoch_checkpoint(self.out_dir, summary.epoch);
            self.write_checkpoint(&path, params, Some(state())).map_err(|e| e.to_string())?;
            self.checkpoints.push(path);
        }
        if summary.best {
            self.write_checkpoint(&self.out_dir.join("best.ckpt"), params, None)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

fn open_log(path: &Path, append: bool) -> Result<File> {
    let fresh = !append || !path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| AppError::io(path, e))?;
    if fresh {
        writeln!(file, "{LOSS_HEADER}").map_err(|e| AppError::io(path, e))?;
    }
    Ok(file)
}

/// Trains per `cfg`, or continues from `resume` and its `.state` file.
pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    let manifest = Manifest::load(&cfg.train_manifest)?;
    let pairs: Vec<ImagePair> = load_pairs(&manifest, cfg.model.scale)?;
    let (params, optim, next_epoch, stats) = match resume {
        Some(path) => {
            let ck = checkpoint::load_expecting(path, &cfg.model)?;
            let state = checkpoint::load_state(path, &cfg.model)?;
            (ck.params, state.optim, state.next_epoch, ck.stats)
        }
        None => {
            let stats = match cfg.mean.fixed() {
                Some(rgb) => NormStats::new(rgb)?,
                None => compute_mean(&load_images(&manifest)?)?,
            };
            let params = build_model(&cfg.model, cfg.init_seed)?;
            (params, OptimState::new(&cfg.model), 0, stats)
        }
    };
    create_dir(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join(LOSS_LOG);
    let log = open_log(&log_path, resume.is_some())?;
    let mut hooks = FileHooks {
        out_dir: &cfg.out_dir,
        model: &cfg.model,
        stats,
        log,
        log_path: log_path.clone(),
        steps: Vec::new(),
        checkpoints: Vec::new(),
    };
    let mut trainer = Trainer::resume(
        cfg.model.clone(),
        cfg.train.clone(),
        stats,
        &pairs,
        params,
        optim,
        next_epoch,
    )?;
    trainer.fit(&mut hooks)?;
    Ok(TrainOutcome {
        steps: hooks.steps,
        checkpoints: hooks.checkpoints,
        loss_log: log_path,
        params: trainer.into_params(),
        stats,
    })
}
